"""Config-driven batch runner: ``python app.py <task> --config run.yaml``.

Exit codes: 0 success, 1 configuration error, 2 failed validation verdict,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable

import numpy as np

from .asymptotics import Prediction, bound_element, crossing_loop, predict_element, sweep
from .errors import ConfigError, DivisionGuard, NLevelError, NumericalFailure
from .geometry import collapsed_loop_integral, scan_degeneracies
from .logging_utils import setup_logging
from .models import GeneratorModel, diagram, validate
from .reporting import write_csv, write_report
from .runconfig import TASKS, RunConfig, load_config
from .smatrix import SMatrixResult, frame_table, s_matrix, tail_window
from .superasymptotic import HALF_LINE_CAP, PathGrid, improved_prediction, renorm_sequence
from .symmetry import (
    block_order_permutation,
    budget,
    derived_elements,
    g_symmetry_residuals,
    reorder,
    verify_block_symmetries,
    verify_s_unitarity,
)
from .transport import monodromy

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_VERDICT, EXIT_NUMERICAL = 0, 1, 2, 3


class Outcome:
    """What a task hands back to ``run``: the JSON result and whether its verdicts passed."""

    def __init__(self, result: dict, passed: bool = True):
        self.result = result
        self.passed = passed


# ===== helpers =====
def _element_rows(eps: float, S: np.ndarray) -> list[dict]:
    n = S.shape[0]
    return [
        {"epsilon": eps, "row": r + 1, "col": c + 1, "re": S[r, c].real, "im": S[r, c].imag, "abs": abs(S[r, c])}
        for r in range(n) for c in range(n)
    ]


def _s_matrices(model: GeneratorModel, cfg: RunConfig) -> list[SMatrixResult]:
    window = tail_window(model, cfg.ode_tol)
    frame_table(model, window.T_minus, window.T_plus, None)
    with ThreadPoolExecutor(max_workers=max(1, cfg.threads)) as pool:
        return list(pool.map(lambda e: s_matrix(model, e, ode_tol=cfg.ode_tol, window=window), cfg.epsilons))


def _reported(model: GeneratorModel, S: np.ndarray) -> np.ndarray:
    """Two-channel S in (+ block first) order; others unchanged."""
    if model.block_size is None:
        return S
    return reorder(S, block_order_permutation(model.block_size))


def _metric_R(model: GeneratorModel, res: SMatrixResult):
    return frame_table(model, res.T_minus, res.T_plus, None).metric


# ===== tasks =====
def task_validate(model: GeneratorModel, cfg: RunConfig, out: Path) -> Outcome:
    report = validate(model)
    write_csv(out / "crossings.csv", ["t", "j", "k", "derivative_difference"],
              [{"t": c.t, "j": c.lower + 1, "k": c.upper + 1, "derivative_difference": c.slope}
               for c in report.crossing_table])
    return Outcome({"hypotheses": report.as_dict()}, report.passed)


def task_smatrix(model: GeneratorModel, cfg: RunConfig, out: Path) -> Outcome:
    results = _s_matrices(model, cfg)
    rows, entries = [], []
    for res in results:
        S = _reported(model, res.S)
        rows += _element_rows(res.epsilon, S)
        d = res.as_dict()
        d["unitarity_residual"] = verify_s_unitarity(res.S, _metric_R(model, res))
        entries.append(d)
    write_csv(out / "smatrix.csv", ["epsilon", "row", "col", "re", "im", "abs"], rows)
    return Outcome({"s_matrices": entries})


def _sweep_rows(records) -> list[dict]:
    return [
        {"epsilon": r.epsilon, "row": r.element[0] + 1, "col": r.element[1] + 1, "kind": "prediction",
         "abs_s_num": abs(r.s_numeric), "abs_s_pred": abs(r.s_predicted),
         "rel_err": r.rel_error_modulus, "eps_log_s": r.eps_log_s, "resolution": r.noise}
        for r in records
    ]


SWEEP_FIELDS = ["epsilon", "row", "col", "kind", "abs_s_num", "abs_s_pred", "rel_err", "eps_log_s", "resolution"]


def task_sweep(model: GeneratorModel, cfg: RunConfig, out: Path) -> Outcome:
    records, fit = sweep(model, cfg.index, cfg.epsilons, cfg.ode_tol, cfg.threads)
    write_csv(out / "sweep.csv", SWEEP_FIELDS, _sweep_rows(records))
    return Outcome({"fit": fit.as_dict()})


def task_compare(model: GeneratorModel, cfg: RunConfig, out: Path) -> Outcome:
    pred = predict_element(model, cfg.index)
    records, fit = sweep(model, cfg.index, cfg.epsilons, cfg.ode_tol, cfg.threads, prediction=pred)
    rows = _sweep_rows(records)
    result = {"prediction": pred.as_dict(), "fit": fit.as_dict()}
    if cfg.other_index is not None:
        exponent = bound_element(model, cfg.index, cfg.other_index)
        row = diagram(model).sigma[cfg.other_index]
        result["bound"] = {"element": [row + 1, cfg.index + 1], "exponent": exponent}
        for r in records:
            s = complex(r.matrix[row, cfg.index])
            rows.append({"epsilon": r.epsilon, "row": row + 1, "col": cfg.index + 1, "kind": "bound",
                         "abs_s_num": abs(s), "abs_s_pred": float(np.exp(-exponent / r.epsilon)),
                         "rel_err": None, "eps_log_s": r.epsilon * float(np.log(abs(s)))})
    write_csv(out / "compare.csv", SWEEP_FIELDS, rows)
    return Outcome(result)


def task_degeneracies(model: GeneratorModel, cfg: RunConfig, out: Path) -> Outcome:
    scan = scan_degeneracies(model, cfg.region, cfg.grid_step)
    rows = []
    for p in scan.points:
        partner = p.conjugate_partner
        rows.append({"re": p.z0.real, "im": p.z0.imag, "j": p.pair[0] + 1, "k": p.pair[1] + 1,
                     "residual": p.discriminant_residual,
                     "partner_re": None if partner is None else partner.real,
                     "partner_im": None if partner is None else partner.imag})
    write_csv(out / "degeneracies.csv", ["re", "im", "j", "k", "residual", "partner_re", "partner_im"], rows)
    return Outcome({"points": [p.as_dict() for p in scan.points],
                    "skipped": [{"seed": s, "reason": r} for s, r in scan.skipped]})


def task_loops(model: GeneratorModel, cfg: RunConfig, out: Path) -> Outcome:
    scan = scan_degeneracies(model, cfg.region, cfg.grid_step)
    rows, entries = [], []
    for p in scan.points:
        if p.z0.imag == 0:
            continue
        loop = crossing_loop(p, orientation=1, base=p.z0.real)
        mono = monodromy(model, loop)
        j, k = p.pair
        oracle = collapsed_loop_integral(model, complex(p.z0.real), p.z0, j, k)
        for label in (j, k):
            v, th = mono.loop_integrals[label], mono.thetas[label]
            rows.append({"z0_re": p.z0.real, "z0_im": p.z0.imag, "label": label + 1,
                         "sigma0": mono.sigma0[label] + 1, "theta_re": th.real, "theta_im": th.imag,
                         "loop_re": v.real, "loop_im": v.imag})
        entries.append({"point": p.as_dict(), "monodromy": mono.as_dict(),
                        "collapsed_integral": oracle,
                        "collapsed_mismatch": float(abs(mono.loop_integrals[j] - oracle))})
    write_csv(out / "loops.csv",
              ["z0_re", "z0_im", "label", "sigma0", "theta_re", "theta_im", "loop_re", "loop_im"], rows)

    window = tail_window(model, cfg.ode_tol)
    table = frame_table(model, window.T_minus, window.T_plus, None)
    n = model.dim
    fields = ["t"] + [f"e{j + 1}_re" for j in range(n)] + [f"e{j + 1}_im" for j in range(n)]
    write_csv(out / "frame_table.csv", fields, [
        {"t": t, **{f"e{j + 1}_re": e[j].real for j in range(n)}, **{f"e{j + 1}_im": e[j].imag for j in range(n)}}
        for t, e in zip(table.ts, table.eigenvalues)
    ])
    return Outcome({"loops": entries, "window": list(window)})


def task_predict(model: GeneratorModel, cfg: RunConfig, out: Path) -> Outcome:
    pred = predict_element(model, cfg.index)
    result = {"prediction": pred.as_dict()}
    if cfg.other_index is not None:
        result["bound_exponent"] = bound_element(model, cfg.index, cfg.other_index)
    write_csv(out / "predict.csv", ["z0_re", "z0_im", "label", "theta_re", "theta_im", "loop_re", "loop_im"], [
        {"z0_re": c.point.z0.real, "z0_im": c.point.z0.imag, "label": c.label + 1,
         "theta_re": c.theta.real, "theta_im": c.theta.imag, "loop_re": c.integral.real, "loop_im": c.integral.imag}
        for c in pred.crossing_loops
    ])
    return Outcome(result)


def task_superasym(model: GeneratorModel, cfg: RunConfig, out: Path) -> Outcome:
    window = tail_window(model, cfg.ode_tol)
    reach = cfg.half_line or HALF_LINE_CAP
    grid = PathGrid.segment(max(window.T_minus, -reach), min(window.T_plus, reach))
    plain = predict_element(model, cfg.index)
    direct = [complex(res.S[plain.target, cfg.index]) for res in _s_matrices(model, cfg)]
    rows, entries = [], []
    for eps, reference in zip(cfg.epsilons, direct):
        seq = renorm_sequence(model, eps, grid, q_max=cfg.q_max, threads=cfg.threads)
        for q, d in enumerate(seq.diffs, start=1):
            rows.append({"epsilon": eps, "q": q, "diff_q": d, "eigenvalue_deviation": seq.eigenvalue_deviation[q]})
        q = max(1, min(seq.q_star, seq.q_max))
        improved = improved_prediction(model, cfg.index, eps, q=q, plain=plain, threads=cfg.threads,
                                       half_line=cfg.half_line, reference=reference)
        entries.append({"renorm": seq.as_dict(), "improved": improved.as_dict()})
    write_csv(out / "superasym.csv", ["epsilon", "q", "diff_q", "eigenvalue_deviation"], rows)
    return Outcome({"sequences": entries, "gamma": plain.gamma_total})


def _predictions(model: GeneratorModel) -> list[Prediction]:
    out = []
    for j in range(model.dim):
        try:
            out.append(predict_element(model, j))
        except NLevelError as exc:
            log.info("no prediction for column %d: %s", j + 1, exc)
    return out


def task_symmetry(model: GeneratorModel, cfg: RunConfig, out: Path) -> Outcome:
    entries, rows, passed = [], [], True
    preds = _predictions(model) if model.block_size is None else []
    for res in _s_matrices(model, cfg):
        limit = budget(res.ode_tol, res.tail_estimate, span=res.T_plus - res.T_minus)
        metric = _metric_R(model, res)
        checks = {"unitarity": verify_s_unitarity(res.S, metric)}
        S = _reported(model, res.S)
        derived: list = []
        if model.block_size is not None:
            m = model.block_size
            checks.update(verify_block_symmetries(S, m))
            residuals = g_symmetry_residuals(model)
            try:
                derived = derived_elements(S, m=m, pairs=range(m - 1))
            except DivisionGuard as exc:
                log.warning("derived elements skipped: %s", exc)
        else:
            residuals = {}
            try:
                guesses = {(p.target, p.source): p.value(res.epsilon) for p in preds}
                derived = derived_elements(S, pairs=range(model.dim - 1), predicted=guesses)
            except DivisionGuard as exc:
                log.warning("derived elements skipped: %s", exc)
        ok = all(v <= limit for v in checks.values())
        passed = passed and ok
        for name, value in checks.items():
            rows.append({"epsilon": res.epsilon, "check": name, "residual": value, "budget": limit,
                         "pass": value <= limit})
        entries.append({"epsilon": res.epsilon, "budget": limit, "checks": checks, "passed": ok,
                        "g_symmetry": residuals, "derived_elements": derived})
    write_csv(out / "symmetry.csv", ["epsilon", "check", "residual", "budget", "pass"], rows)
    return Outcome({"symmetry": entries}, passed)


TASK_RUNNERS: dict[str, Callable[[GeneratorModel, RunConfig, Path], Outcome]] = {
    "validate": task_validate,
    "smatrix": task_smatrix,
    "sweep": task_sweep,
    "degeneracies": task_degeneracies,
    "loops": task_loops,
    "predict": task_predict,
    "compare": task_compare,
    "superasym": task_superasym,
    "symmetry": task_symmetry,
}


# ===== entry points =====
def run(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    resolved = cfg.resolved()
    try:
        model = cfg.model.build()
        log.info("task %s on %s -> %s", cfg.task, model.name, out)
        outcome = TASK_RUNNERS[cfg.task](model, cfg, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        log.error("numerical failure: %s", exc)
        write_report(out, cfg.task, resolved, {"error": type(exc).__name__, "message": str(exc)},
                     status="numerical_failure")
        return EXIT_NUMERICAL
    except NLevelError as exc:
        # model-domain errors are configuration problems
        log.error("%s", exc)
        return EXIT_CONFIG
    status = "ok" if outcome.passed else "failed_verdict"
    write_report(out, cfg.task, resolved, outcome.result, status=status)
    return EXIT_OK if outcome.passed else EXIT_VERDICT


def _epsilon_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlevel", description="S-matrix toolkit for singular-limit n-level systems.")
    sub = ap.add_subparsers(dest="task", required=True)
    for name in TASKS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="YAML run configuration.")
        sp.add_argument("--out", default=None, help="Output directory (overrides output.dir).")
        sp.add_argument("--epsilon", type=_epsilon_list, default=None, help="Comma-separated eps list.")
        sp.add_argument("--threads", type=int, default=None, help="Worker threads (else NLEVEL_THREADS).")
    return ap


def main(argv: list[str] | None = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, task=args.task).with_overrides(args.epsilon, args.threads, args.out)
        return run(cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


__all__ = ["run", "main", "build_parser", "TASK_RUNNERS"]
