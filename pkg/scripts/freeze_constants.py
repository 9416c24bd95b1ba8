#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""Regenerate data/regression_constants.yaml from the independent decay-rate oracles.

Closed form for the two-level family; collapsed-contour quadrature for the
three-level family (one value per upper degeneracy).
"""

import argparse
import logging
from pathlib import Path

import yaml

from nlevel_core.geometry import collapsed_loop_integral, find_degeneracies, two_level_gamma
from nlevel_core.logging_utils import setup_logging
from nlevel_core.models import three_level_adiabatic, two_level_avoided

setup_logging()
log = logging.getLogger(__name__)


def _key(delta: float) -> str:
    return "delta_" + f"{delta:g}".replace(".", "_")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/regression_constants.yaml")
    ap.add_argument("--two-level-deltas", default="0.5", help="Comma-separated deltas.")
    ap.add_argument("--three-level-deltas", default="0.1", help="Comma-separated deltas.")
    args = ap.parse_args()

    constants = {"two_level_gamma": {}, "two_level_gamma_quadrature": {}, "three_level_gammas": {}}
    for d in (float(x) for x in args.two_level_deltas.split(",") if x):
        constants["two_level_gamma"][_key(d)] = float(f"{two_level_gamma(d):.15f}")
        model = two_level_avoided(d)
        upper = next(p for p in find_degeneracies(model) if p.z0.imag > 0)
        val = collapsed_loop_integral(model, 0.0, upper.z0, *upper.pair)
        constants["two_level_gamma_quadrature"][_key(d)] = float(f"{abs(val.imag):.15f}")
        log.info("two-level delta=%g: closed form %.15f, quadrature %.15f", d, two_level_gamma(d), abs(val.imag))

    for d in (float(x) for x in args.three_level_deltas.split(",") if x):
        model = three_level_adiabatic(d)
        gammas = []
        for p in sorted((p for p in find_degeneracies(model) if p.z0.imag > 0), key=lambda p: p.z0.real):
            val = collapsed_loop_integral(model, complex(p.z0.real), p.z0, *p.pair)
            gammas.append({"z0": [p.z0.real, p.z0.imag], "pair": [p.pair[0] + 1, p.pair[1] + 1],
                           "gamma": float(f"{abs(val.imag):.15f}")})
        constants["three_level_gammas"][_key(d)] = gammas

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = "# Frozen oracle values; regenerate with scripts/freeze_constants.py.\n"
    out.write_text(header + yaml.safe_dump(constants, sort_keys=True), encoding="utf-8")
    log.info("✅ Wrote %s", out)


if __name__ == "__main__":
    main()
