#!/usr/bin/env python3
"""Builds the toy corpus and its expected outputs.

Everything under goldens/ is computed here with plain Python, without the
Rust code: summary counts, page projections, the power-law fit of per-post
like counts, the planted page partitions, per-user localization and the
resulting rank. Run from this directory; output is deterministic.
"""

import csv
import json
import math
import random
from collections import defaultdict
from itertools import combinations

SEED = 20160101
ROWS = 1000
START = 1451606400  # 2016-01-01
SPAN = 180 * 86400

# country -> list of clusters, each a list of (page_id, name)
CLUSTERS = {
    "IT": [
        [("it01", "Cronaca Uno"), ("it02", "Gazzetta Due"), ("it03", "Notizie Tre"), ("it04", "Corriere Quattro")],
        [("it05", "Giornale Cinque"), ("it06", "Stampa Sei"), ("it07", "Tribuna Sette"), ("it08", "Eco Otto")],
    ],
    "FR": [
        [("fr01", "Journal Un"), ("fr02", "Monde Deux"), ("fr03", "Presse Trois")],
        [("fr04", "Echo Quatre"), ("fr05", "Depeche Cinq"), ("fr06", "Courrier Six")],
        [("fr07", "Gazette Sept"), ("fr08", "Tribune Huit"), ("fr09", "Matin Neuf")],
    ],
}
USERS = {"IT": 70, "FR": 80}
POSTS_PER_PAGE = 6
CROSS = 0.08
ACTIONS = [("like", 0.8), ("comment", 0.15), ("share", 0.05)]


def build(rng):
    pages = {}
    posts = {}
    for country, clusters in CLUSTERS.items():
        for cluster in clusters:
            for page_id, name in cluster:
                pages[page_id] = (name, country)
                posts[page_id] = [f"{page_id}_{k}" for k in range(POSTS_PER_PAGE)]

    users = []
    for country, count in USERS.items():
        for i in range(count):
            home = rng.randrange(len(CLUSTERS[country]))
            weight = 1.0 / (i + 1) ** 0.8
            users.append((f"{country.lower()}u{i:03d}", country, home, weight))

    total = sum(u[3] for u in users)
    rows = []
    for user_id, country, home, weight in users:
        n = max(1, round(ROWS * weight / total))
        for _ in range(n):
            if rng.random() < CROSS:
                cluster = rng.choice(CLUSTERS[country])
            else:
                cluster = CLUSTERS[country][home]
            page_id = rng.choice(cluster)[0]
            # popular posts: rank k drawn with weight 1/(k+1)^1.5
            k = rng.choices(range(POSTS_PER_PAGE), weights=[1 / (j + 1) ** 1.5 for j in range(POSTS_PER_PAGE)])[0]
            action = rng.choices([a for a, _ in ACTIONS], weights=[w for _, w in ACTIONS])[0]
            rows.append([user_id, page_id, posts[page_id][k], action, START + rng.randrange(SPAN)])
    rng.shuffle(rows)
    rows = rows[:ROWS]
    while len(rows) < ROWS:
        user_id, country, home, _ = users[0]
        page_id = rng.choice(CLUSTERS[country][home])[0]
        rows.append([user_id, page_id, f"{page_id}_0", "like", START + rng.randrange(SPAN)])
    return pages, rows


def summary(rows):
    pages = {r[1] for r in rows}
    posts = {r[2] for r in rows}
    likers = {r[0] for r in rows if r[3] == "like"}
    commenters = {r[0] for r in rows if r[3] == "comment"}
    return {
        "pages": len(pages),
        "posts": len(posts),
        "likes": sum(r[3] == "like" for r in rows),
        "likers": len(likers),
        "comments": sum(r[3] == "comment" for r in rows),
        "commenters": len(commenters),
        "shares": sum(r[3] == "share" for r in rows),
        "users": len(likers | commenters),
    }


def projection(rows, page_ids):
    fans = defaultdict(set)
    for user, page, _, action, _ in rows:
        if action == "like":
            fans[page].add(user)
    edges = []
    for a, b in combinations(sorted(page_ids), 2):
        w = len(fans[a] & fans[b])
        if w:
            edges.append((a, b, w))
    return edges


def powerlaw(values):
    xs = sorted(values)
    n = len(xs)
    distinct = sorted(set(xs))
    best = None
    for x_min in distinct[:-1]:
        tail = [x for x in xs if x >= x_min]
        m = len(tail)
        base = x_min - 0.5
        alpha = 1 + m / sum(math.log(x / base) for x in tail)
        d = 0.0
        for x in sorted(set(tail)):
            below = sum(t < x for t in tail) / m
            upto = sum(t <= x for t in tail) / m
            d = max(d, abs(below - (1 - ((x - 0.5) / base) ** (1 - alpha))))
            d = max(d, abs(upto - (1 - ((x + 0.5) / base) ** (1 - alpha))))
        if best is None or d < best[0]:
            ll = m * (math.log(alpha - 1) - math.log(base)) - alpha * sum(math.log(x / base) for x in tail)
            best = (d, x_min, alpha, m, ll)
    d, x_min, alpha, m, ll = best
    return {"alpha": alpha, "x_min": x_min, "n_tail": m, "ks_distance": d, "log_likelihood": ll, "n": n}


def first_appearance(labels):
    seen = {}
    return [seen.setdefault(l, len(seen)) for l in labels]


def localization(counts):
    k = sum(counts)
    phi = [c / k for c in counts]
    return sum(p * p for p in phi) ** 2 / sum(p ** 4 for p in phi)


def median(v):
    v = sorted(v)
    m = len(v) // 2
    return v[m] if len(v) % 2 else (v[m - 1] + v[m]) / 2


def main():
    rng = random.Random(SEED)
    pages, rows = build(rng)

    with open("pages.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["page_id", "page_name", "country"])
        for page_id in sorted(pages):
            w.writerow([page_id, *pages[page_id]])
    with open("interactions.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["user_id", "page_id", "post_id", "action", "timestamp"])
        w.writerows(rows)

    golden = {"total": summary(rows), "countries": {}}
    for country in sorted(CLUSTERS):
        golden["countries"][country] = summary([r for r in rows if pages[r[1]][1] == country])
    with open("goldens/summary.json", "w") as f:
        json.dump(golden, f, indent=2, sort_keys=True)

    likes_per_post = defaultdict(int)
    for r in rows:
        likes_per_post[r[2]] += r[3] == "like"
    with open("goldens/fit_powerlaw.json", "w") as f:
        json.dump(powerlaw([c for c in likes_per_post.values() if c > 0]), f, indent=2, sort_keys=True)

    medians = {}
    for country, clusters in sorted(CLUSTERS.items()):
        local = [r for r in rows if pages[r[1]][1] == country]
        page_ids = sorted(p for p in pages if pages[p][1] == country)
        with open(f"goldens/{country}_nodes.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["node_id", "label"])
            w.writerows([p, pages[p][0]] for p in page_ids)
        with open(f"goldens/{country}_edges.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["src", "dst", "weight"])
            w.writerows(projection(local, page_ids))

        planted = {p: c for c, cluster in enumerate(clusters) for p, _ in cluster}
        labels = first_appearance([planted[p] for p in page_ids])
        with open(f"goldens/{country}_partition.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["node_id", "community"])
            w.writerows(zip(page_ids, labels))

        community = dict(zip(page_ids, labels))
        per_user = defaultdict(lambda: [0] * len(clusters))
        for user, page, _, action, _ in local:
            if action == "like":
                per_user[user][community[page]] += 1
        values = {u: localization(c) for u, c in sorted(per_user.items()) if sum(c) >= 10}
        with open(f"goldens/{country}_localization.csv", "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["user_id", "L"])
            w.writerows([u, repr(l)] for u, l in values.items())
        ls = list(values.values())
        medians[country] = median(ls)
        with open(f"goldens/{country}_summary.json", "w") as f:
            json.dump(
                {
                    "label": country,
                    "median": medians[country],
                    "n_users": len(ls),
                    "polarized_fraction": sum(l < 1.05 for l in ls) / len(ls),
                    "threshold": 1.05,
                },
                f,
                indent=2,
            )

    order = sorted(medians, key=lambda c: (medians[c], c))
    with open("goldens/rank.json", "w") as f:
        json.dump([{"label": c, "median": medians[c]} for c in order], f, indent=2)


if __name__ == "__main__":
    main()
