"""Builds the 50-line filter fixture and its expected output.

The expected files come from a direct re-statement of the filtering rules
in Python, independent of the C++ pipeline. Settings used by the test:
ratio (0.6, 1.7) strict, similarity >= 0.80, per-corpus cap 6, target
size 1000 (sampling inactive).
"""

import pathlib

RATIO_LOW, RATIO_HIGH, SIM, CAP, TARGET = 0.6, 1.7, 0.80, 6, 1000


def words(prefix, n):
    return " ".join(f"{prefix}{i}" for i in range(n))


def build_lines():
    rows = []
    # 20 clean pairs across three corpora, lengths varied but ratio inside.
    for i in range(20):
        corpus = "ABC"[i % 3]
        n = 3 + i % 5
        m = n + (i % 3) - 1
        rows.append((words(f"s{i}_", n), words(f"t{i}_", m), corpus, 0.81 + (i % 10) / 100))
    # Exact duplicates, one with stray spaces that vanish on trimming.
    rows.append(rows[0])
    rows.append(rows[4])
    rows.append(("  " + rows[7][0] + " ", rows[7][1] + "  ", rows[7][2], rows[7][3]))
    # Same source, different target: not a duplicate.
    rows.append((rows[1][0], words("alt", 4), "A", 0.9))
    # Ratio violations, including the boundaries 0.6 and 1.7.
    rows.append((words("r0_", 3), words("q0_", 5), "B", 0.95))     # 0.6
    rows.append((words("r1_", 6), words("q1_", 10), "B", 0.95))    # 0.6
    rows.append((words("r2_", 17), words("q2_", 10), "C", 0.95))   # 1.7
    rows.append((words("r3_", 10), words("q3_", 4), "C", 0.95))    # 2.5
    rows.append((words("r4_", 1), words("q4_", 3), "A", 0.95))     # 0.333
    rows.append((words("r5_", 7), words("q5_", 4), "A", 0.95))     # 1.75
    rows.append((words("r6_", 16), words("q6_", 10), "B", 0.95))   # 1.6, kept
    rows.append((words("r7_", 7), words("q7_", 11), "B", 0.95))    # 0.636, kept
    # Sub-threshold similarities.
    for i, s in enumerate([0.79, 0.5, -0.2, 0.7999, 0.0]):
        rows.append((words(f"u{i}_", 4), words(f"v{i}_", 4), "ABC"[i % 3], s))
    rows.append((words("edge", 4), words("egde", 4), "C", 0.80))   # at threshold, kept
    # Extra clean pairs in corpus A so the cap bites.
    for i in range(12):
        rows.append((words(f"x{i}_", 5), words(f"y{i}_", 5), "A", 0.88))
    assert len(rows) == 50, len(rows)
    return rows


def run_filter(rows):
    stats = dict(input=len(rows), duplicates=0, ratio_rejected=0, similarity_rejected=0,
                 cap_removed=0, sampling_removed=0)
    seen, stage = set(), []
    for src, tgt, corpus, sim in rows:
        key = (src.strip(), tgt.strip())
        if key in seen:
            stats["duplicates"] += 1
            continue
        seen.add(key)
        stage.append((key[0], key[1], corpus, sim))
    kept = []
    for row in stage:
        ratio = len(row[0].split()) / len(row[1].split())
        if RATIO_LOW < ratio < RATIO_HIGH:
            kept.append(row)
        else:
            stats["ratio_rejected"] += 1
    stage, kept = kept, []
    for row in stage:
        if row[3] >= SIM:
            kept.append(row)
        else:
            stats["similarity_rejected"] += 1
    stage, kept, per_corpus = kept, [], {}
    for row in stage:
        per_corpus[row[2]] = per_corpus.get(row[2], 0) + 1
        if per_corpus[row[2]] <= CAP:
            kept.append(row)
        else:
            stats["cap_removed"] += 1
    assert len(kept) <= TARGET
    stats["output"] = len(kept)
    return kept, stats


def main():
    root = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures"
    rows = build_lines()
    with open(root / "filter_golden.tsv", "w") as f:
        for src, tgt, corpus, sim in rows:
            f.write(f"{src}\t{tgt}\t{corpus}\t{sim!r}\n")
    kept, stats = run_filter(rows)
    with open(root / "filter_golden_expected.tsv", "w") as f:
        for src, tgt, corpus, sim in kept:
            f.write(f"{src}\t{tgt}\t{corpus}\t{sim:.17g}\n")
    with open(root / "filter_golden_stats.csv", "w") as f:
        f.write("stage,count\n")
        for k in ["input", "duplicates", "ratio_rejected", "similarity_rejected", "cap_removed",
                  "sampling_removed", "output"]:
            f.write(f"{k},{stats[k]}\n")
    print(stats)


if __name__ == "__main__":
    main()
