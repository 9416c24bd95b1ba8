#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Produce a concise Markdown summary from a sweep/compare CSV."""

import argparse
import csv
import logging
from collections import defaultdict
from pathlib import Path

from nlevel_core.logging_utils import setup_logging

setup_logging()
log = logging.getLogger(__name__)


def _num(cell: str) -> float | None:
    try:
        return float(cell)
    except (TypeError, ValueError):
        return None


def summarize(rows: list[dict]) -> list[str]:
    by_element = defaultdict(list)
    for r in rows:
        by_element[(r.get("kind", "prediction"), r["row"], r["col"])].append(r)

    lines = ["## Sweep summary\n"]
    for (kind, row, col), recs in sorted(by_element.items()):
        recs.sort(key=lambda r: -float(r["epsilon"]))
        lines.append(f"### s_{row}{col} ({kind})")
        lines.append("| eps | abs(s_num) | abs(s_pred) | rel_err | eps*log abs(s_num) |")
        lines.append("|---:|---:|---:|---:|---:|")
        for r in recs:
            rel = _num(r.get("rel_err"))
            rel_s = f"{rel:.3e}" if rel is not None else "-"
            lines.append(
                f"| {float(r['epsilon']):.4g} | {float(r['abs_s_num']):.6e} | {float(r['abs_s_pred']):.6e} "
                f"| {rel_s} | {float(r['eps_log_s']):.6f} |"
            )
        rels = [_num(r.get("rel_err")) for r in recs]
        rels = [x for x in rels if x is not None]
        if len(rels) >= 2:
            trend = "decreasing" if all(b <= 1.1 * a for a, b in zip(rels, rels[1:])) else "not monotone"
            lines.append(f"\n- rel_err trend as eps decreases: **{trend}**")
        lines.append("")
    return lines


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--csv", default="results/three_level/compare.csv")
    ap.add_argument("--out", default="results/summary.md")
    args = ap.parse_args()

    with Path(args.csv).open("r", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        log.warning("no rows in %s", args.csv)

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("\n".join(summarize(rows)) + "\n", encoding="utf-8")
    log.info("✅ Wrote %s", args.out)


if __name__ == "__main__":
    main()
