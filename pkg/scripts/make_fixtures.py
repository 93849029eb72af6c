#!/usr/bin/env python3
"""Regenerate the small CSV fixtures under tests/fixtures/.

Deterministic output: safe to re-run, fixtures are checked in.
"""

from pathlib import Path

from fedids.data import CIC_COLUMNS, HEADER_ALIASES

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

# Canonical -> 2017-style long header (leading space like real exports).
REVERSE_ALIASES = {v: k for k, v in HEADER_ALIASES.items()}


def cell(row: int, col: int) -> str:
    return str(((row + 1) * (col + 3)) % 97 + 0.5)


def write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)] + [",".join(r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path} ({len(rows)} rows x {len(header)} cols)")


def numeric_row(i: int, n: int) -> list[str]:
    return [cell(i, j) for j in range(n)]


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    feature_cols = [c for c in CIC_COLUMNS if c != "Label"]

    # 1. canonical 2018-style header, mixed labels
    header = list(CIC_COLUMNS)
    labels = ["Benign", "DoS Hulk", "Benign", "Bot", "BENIGN", "Benign"]
    rows = [numeric_row(i, len(feature_cols)) + [labels[i]] for i in range(6)]
    write_csv(FIXTURES / "cic2018_small.csv", header, rows)

    # 2. 2017-style long names with leading spaces, plus an ignorable extra
    header_2017 = [" " + REVERSE_ALIASES.get(c, c) for c in feature_cols]
    header_2017.append(" Fwd Header Length.1")  # duplicate-ish extra, ignored
    header_2017.append(" Label")
    labels = ["BENIGN", "DoS Hulk", "BENIGN"]
    rows = [
        numeric_row(i, len(feature_cols)) + [cell(i, 99), labels[i]] for i in range(3)
    ]
    write_csv(FIXTURES / "cic2017_alias.csv", header_2017, rows)

    # 3. sanitization: one Infinity cell, one unparseable cell
    flow_duration = CIC_COLUMNS.index("Flow Duration")
    fwd_pkts = CIC_COLUMNS.index("Tot Fwd Pkts")
    rows = []
    for i in range(4):
        r = numeric_row(i, len(feature_cols))
        if i == 1:
            r[flow_duration] = "Infinity"
        if i == 2:
            r[fwd_pkts] = "oops"
        rows.append(r + ["Benign" if i % 2 == 0 else "PortScan"])
    write_csv(FIXTURES / "cic_dirty.csv", header, rows)

    # 4. unlabeled benign-only capture (no Label column at all)
    write_csv(
        FIXTURES / "mawi_unlabeled.csv",
        feature_cols,
        [numeric_row(i, len(feature_cols)) for i in range(5)],
    )


if __name__ == "__main__":
    main()
