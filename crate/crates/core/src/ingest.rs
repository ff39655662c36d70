//! Interaction logs: parsing, validation, filtering and summary counts.
//!
//! The canonical input is a CSV file with the exact header
//! `user_id,page_id,post_id,action,timestamp`, optionally accompanied by a
//! pages table `page_id,page_name,country`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INTERACTION_HEADER: [&str; 5] = ["user_id", "page_id", "post_id", "action", "timestamp"];
pub const PAGES_HEADER: [&str; 3] = ["page_id", "page_name", "country"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Like,
    Comment,
    Share,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Like => "like",
            Action::Comment => "comment",
            Action::Share => "share",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "like" => Ok(Action::Like),
            "comment" => Ok(Action::Comment),
            "share" => Ok(Action::Share),
            other => Err(format!("unknown action `{other}`")),
        }
    }
}

/// One user action on a post of a page.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: String,
    pub page_id: String,
    pub post_id: String,
    pub action: Action,
    /// Seconds since the Unix epoch (UTC).
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageInfo {
    pub name: String,
    pub country: Option<String>,
}

/// An ordered corpus of interaction records plus optional page metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub records: Vec<InteractionRecord>,
    pub pages: Option<BTreeMap<String, PageInfo>>,
    pub country: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first malformed row.
    #[default]
    Strict,
    /// Skip malformed rows and count them.
    Lenient,
}

#[derive(Debug)]
pub struct Parsed {
    pub dataset: Dataset,
    /// Rows dropped in lenient mode, with their errors.
    pub skipped: Vec<Error>,
}

fn is_country_code(code: &str) -> bool {
    code.len() == 2 && code.bytes().all(|b| b.is_ascii_uppercase())
}

fn check_header(headers: &csv::StringRecord, expected: &[&str], what: &str) -> Result<()> {
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::Format(format!(
            "{what}: expected header `{}`, found `{}`",
            expected.join(","),
            found.join(",")
        )));
    }
    Ok(())
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source)
}

/// Parses a pages table with header `page_id,page_name,country`.
pub fn parse_pages<R: Read>(source: R) -> Result<BTreeMap<String, PageInfo>> {
    let mut reader = csv_reader(source);
    check_header(reader.headers()?, &PAGES_HEADER, "pages table")?;
    let mut pages = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != PAGES_HEADER.len() {
            return Err(Error::Row {
                line,
                message: format!("expected {} fields, found {}", PAGES_HEADER.len(), row.len()),
            });
        }
        let page_id = row[0].to_string();
        if page_id.is_empty() {
            return Err(Error::Row { line, message: "empty page_id".into() });
        }
        let country = match &row[2] {
            "" => None,
            code if is_country_code(code) => Some(code.to_string()),
            code => {
                return Err(Error::Row {
                    line,
                    message: format!("`{code}` is not a two-letter country code"),
                })
            }
        };
        let info = PageInfo { name: row[1].to_string(), country };
        if pages.insert(page_id.clone(), info).is_some() {
            return Err(Error::Row { line, message: format!("duplicate page_id `{page_id}`") });
        }
    }
    Ok(pages)
}

fn parse_row(
    row: &csv::StringRecord,
    pages: Option<&BTreeMap<String, PageInfo>>,
) -> std::result::Result<InteractionRecord, String> {
    if row.len() != INTERACTION_HEADER.len() {
        return Err(format!("expected {} fields, found {}", INTERACTION_HEADER.len(), row.len()));
    }
    for (value, name) in row.iter().zip(INTERACTION_HEADER).take(3) {
        if value.is_empty() {
            return Err(format!("empty {name}"));
        }
    }
    let action = row[3].parse::<Action>()?;
    let timestamp = match row[4].parse::<i64>() {
        Ok(t) if t >= 0 => t as u64,
        Ok(t) => return Err(format!("negative timestamp {t}")),
        Err(_) => return Err(format!("timestamp `{}` is not an integer", &row[4])),
    };
    if let Some(pages) = pages {
        if !pages.contains_key(&row[1]) {
            return Err(format!("page_id `{}` missing from pages table", &row[1]));
        }
    }
    Ok(InteractionRecord {
        user_id: row[0].to_string(),
        page_id: row[1].to_string(),
        post_id: row[2].to_string(),
        action,
        timestamp,
    })
}

/// Reads an interaction log, preserving row order.
pub fn parse_interactions<R: Read, P: Read>(
    source: R,
    pages_table: Option<P>,
    mode: ParseMode,
) -> Result<Parsed> {
    let pages = pages_table.map(parse_pages).transpose()?;
    let mut reader = csv_reader(source);
    check_header(reader.headers()?, &INTERACTION_HEADER, "interactions")?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, pages.as_ref()) {
            Ok(record) => records.push(record),
            Err(message) => {
                let err = Error::Row { line, message };
                match mode {
                    ParseMode::Strict => return Err(err),
                    ParseMode::Lenient => skipped.push(err),
                }
            }
        }
    }
    Ok(Parsed { dataset: Dataset { records, pages, country: None }, skipped })
}

impl Dataset {
    pub fn new(records: Vec<InteractionRecord>) -> Self {
        Dataset { records, pages: None, country: None }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Writes the records in the canonical interaction format.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(INTERACTION_HEADER)?;
        for r in &self.records {
            writer.write_record([
                r.user_id.as_str(),
                r.page_id.as_str(),
                r.post_id.as_str(),
                r.action.as_str(),
                &r.timestamp.to_string(),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn write_pages_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(PAGES_HEADER)?;
        for (id, info) in self.pages.iter().flatten() {
            writer.write_record([id.as_str(), info.name.as_str(), info.country.as_deref().unwrap_or("")])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Country codes declared in the pages table, sorted.
    pub fn countries(&self) -> Vec<String> {
        let mut codes: Vec<String> = self
            .pages
            .iter()
            .flatten()
            .filter_map(|(_, info)| info.country.clone())
            .collect();
        codes.sort();
        codes.dedup();
        codes
    }

    pub fn page_name(&self, page_id: &str) -> Option<&str> {
        self.pages.as_ref()?.get(page_id).map(|p| p.name.as_str())
    }

    fn page_country(&self, page_id: &str) -> Option<&str> {
        match &self.pages {
            Some(pages) => pages.get(page_id).and_then(|p| p.country.as_deref()),
            None => self.country.as_deref(),
        }
    }

    pub fn filter(&self, filter: &Filter) -> Result<Dataset> {
        filter.validate()?;
        let records = self
            .records
            .iter()
            .filter(|r| filter.matches(self, r))
            .cloned()
            .collect();
        let country = filter.country.clone().or_else(|| self.country.clone());
        Ok(Dataset { records, pages: self.pages.clone(), country })
    }

    pub fn summarize(&self) -> SummaryStats {
        summarize(self)
    }
}

/// Record predicates; every `Some` field must hold for a record to be kept.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Filter {
    pub action: Option<Action>,
    /// Half-open interval `[start, end)` of timestamps.
    pub window: Option<(u64, u64)>,
    pub country: Option<String>,
}

impl Filter {
    pub fn action(action: Action) -> Self {
        Filter { action: Some(action), ..Filter::default() }
    }

    pub fn window(start: u64, end: u64) -> Self {
        Filter { window: Some((start, end)), ..Filter::default() }
    }

    pub fn country(code: impl Into<String>) -> Self {
        Filter { country: Some(code.into()), ..Filter::default() }
    }

    fn validate(&self) -> Result<()> {
        if let Some((start, end)) = self.window {
            if start >= end {
                return Err(Error::Argument(format!("window [{start}, {end}) is empty or inverted")));
            }
        }
        Ok(())
    }

    fn matches(&self, d: &Dataset, r: &InteractionRecord) -> bool {
        if self.action.is_some_and(|a| a != r.action) {
            return false;
        }
        if let Some((start, end)) = self.window {
            if r.timestamp < start || r.timestamp >= end {
                return false;
            }
        }
        if let Some(code) = &self.country {
            if d.page_country(&r.page_id) != Some(code.as_str()) {
                return false;
            }
        }
        true
    }
}

/// Dataset breakdown counts. `users` counts people with at least one like
/// or comment; share-only users are excluded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub pages: usize,
    pub posts: usize,
    pub likes: usize,
    pub likers: usize,
    pub comments: usize,
    pub commenters: usize,
    pub shares: usize,
    pub users: usize,
}

pub fn summarize(d: &Dataset) -> SummaryStats {
    let mut pages = HashSet::new();
    let mut posts = HashSet::new();
    let mut likers = HashSet::new();
    let mut commenters = HashSet::new();
    let mut stats = SummaryStats::default();
    for r in &d.records {
        pages.insert(r.page_id.as_str());
        posts.insert(r.post_id.as_str());
        match r.action {
            Action::Like => {
                stats.likes += 1;
                likers.insert(r.user_id.as_str());
            }
            Action::Comment => {
                stats.comments += 1;
                commenters.insert(r.user_id.as_str());
            }
            Action::Share => stats.shares += 1,
        }
    }
    stats.pages = pages.len();
    stats.posts = posts.len();
    stats.likers = likers.len();
    stats.commenters = commenters.len();
    stats.users = likers.union(&commenters).count();
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_ROWS: &str = "user_id,page_id,post_id,action,timestamp\n\
        u1,p1,x1,like,100\n\
        u1,p2,x2,comment,200\n\
        u2,p1,x3,like,150\n";

    fn parse(text: &str) -> Result<Parsed> {
        parse_interactions(text.as_bytes(), None::<&[u8]>, ParseMode::Strict)
    }

    #[test]
    fn header_only_is_empty() {
        let parsed = parse("user_id,page_id,post_id,action,timestamp\n").unwrap();
        assert!(parsed.dataset.is_empty());
        assert_eq!(summarize(&parsed.dataset), SummaryStats::default());
    }

    #[test]
    fn three_row_counts() {
        let d = parse(THREE_ROWS).unwrap().dataset;
        assert_eq!(d.len(), 3);
        let s = summarize(&d);
        assert_eq!(
            s,
            SummaryStats { pages: 2, posts: 3, likes: 2, likers: 2, comments: 1, commenters: 1, shares: 0, users: 2 }
        );
    }

    #[test]
    fn misordered_header_is_format_error() {
        let err = parse("page_id,user_id,post_id,action,timestamp\n").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn unknown_action_names_line() {
        let text = "user_id,page_id,post_id,action,timestamp\nu1,p1,x1,loves,1\n";
        match parse(text).unwrap_err() {
            Error::Row { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("loves"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_and_lenient_skip() {
        let text = "user_id,page_id,post_id,action,timestamp\n\
            u1,p1,x1,like,abc\n\
            u1,p1,x1,like,-3\n\
            u1,p1,x1,like,7\n\
            ,p1,x1,like,7\n";
        assert!(matches!(parse(text).unwrap_err(), Error::Row { line: 2, .. }));
        let parsed = parse_interactions(text.as_bytes(), None::<&[u8]>, ParseMode::Lenient).unwrap();
        assert_eq!(parsed.dataset.len(), 1);
        assert_eq!(parsed.skipped.len(), 3);
    }

    #[test]
    fn pages_table_checks_membership() {
        let pages = "page_id,page_name,country\np1,Le Monde,FR\n";
        let err = parse_interactions(THREE_ROWS.as_bytes(), Some(pages.as_bytes()), ParseMode::Strict).unwrap_err();
        assert!(matches!(err, Error::Row { line: 3, .. }));
        let bad = "page_id,page_name,country\np1,Le Monde,france\n";
        assert!(parse_pages(bad.as_bytes()).is_err());
    }

    #[test]
    fn filters() {
        let d = parse(THREE_ROWS).unwrap().dataset;
        assert_eq!(d.filter(&Filter::action(Action::Like)).unwrap().len(), 2);
        assert_eq!(d.filter(&Filter::window(0, 100)).unwrap().len(), 0);
        assert_eq!(d.filter(&Filter::window(100, 151)).unwrap().len(), 2);
        assert!(matches!(d.filter(&Filter::window(5, 5)), Err(Error::Argument(_))));
        let once = d.filter(&Filter::action(Action::Like)).unwrap();
        assert_eq!(once.filter(&Filter::action(Action::Like)).unwrap(), once);
        assert_eq!(d.filter(&Filter::default()).unwrap(), d);
    }

    #[test]
    fn country_filter_uses_pages_table() {
        let pages = "page_id,page_name,country\np1,A,FR\np2,B,IT\n";
        let d = parse_interactions(THREE_ROWS.as_bytes(), Some(pages.as_bytes()), ParseMode::Strict)
            .unwrap()
            .dataset;
        let fr = d.filter(&Filter::country("FR")).unwrap();
        assert_eq!(fr.len(), 2);
        assert_eq!(fr.country.as_deref(), Some("FR"));
        assert_eq!(d.countries(), vec!["FR".to_string(), "IT".to_string()]);
    }

    #[test]
    fn duplicates_are_kept() {
        let text = "user_id,page_id,post_id,action,timestamp\nu1,p1,x1,like,1\nu1,p1,x1,like,1\n";
        let d = parse(text).unwrap().dataset;
        assert_eq!(summarize(&d).likes, 2);
    }
}
