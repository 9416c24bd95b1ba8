"""Exponentially small transition elements from loops around complex degeneracies.

For a level j carried by the crossing diagram into sigma(j) != j the element
s_{sigma(j) j} is predicted as

    g * exp(-i sum_k I_k / eps),    g = prod_k exp(-i theta_k),

with one loop per crossing of the chain, based at the origin, and I_k, theta_k
the loop integral and monodromy phase of the running branch label.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from config import SETTINGS

from .errors import DynamicRangeExceeded, NoCrossingChain, NotApplicable
from .geometry import BOX_CLEARANCE, BOX_WIDTH, DegeneracyPoint, construct_candidate_path, degeneracies_of
from .models import GeneratorModel, diagram
from .smatrix import Window, frame_table, s_matrix, tail_window
from .transport import PathSpec, monodromy

log = logging.getLogger(__name__)

RANGE_FACTOR = 100.0
MONOTONE_BAND = 0.10


# ===== loops =====
def crossing_loop(point: DegeneracyPoint | complex, orientation: int, base: float = 0.0,
                  width: float | None = None, clearance: float = BOX_CLEARANCE) -> PathSpec:
    """Rectangle on the real axis around one degeneracy, reached from ``base`` along the axis."""
    z0 = point.z0 if isinstance(point, DegeneracyPoint) else complex(point)
    side = 1.0 if z0.imag > 0 else -1.0
    w = width if width is not None else BOX_WIDTH * abs(z0.imag)
    h = side * clearance * abs(z0.imag)
    a, b = z0.real - w, z0.real + w
    base = complex(base)
    if a <= base.real <= b:
        ring = [base, complex(b), complex(b, h), complex(a, h), complex(a), base]
    elif base.real < a:
        ring = [base, complex(a), complex(b), complex(b, h), complex(a, h), complex(a), base]
    else:
        ring = [base, complex(b), complex(a), complex(a, h), complex(b, h), complex(b), base]
    ring = [v for i, v in enumerate(ring) if i == 0 or v != ring[i - 1]]
    return PathSpec(tuple(ring), closed=True, orientation=orientation)


@dataclass(frozen=True, eq=False)
class CrossingLoop:
    loop: PathSpec
    point: DegeneracyPoint
    label: int
    theta: complex
    integral: complex

    def as_dict(self) -> dict:
        return {
            "z0": [self.point.z0.real, self.point.z0.imag],
            "label": self.label + 1,
            "theta": [self.theta.real, self.theta.imag],
            "loop_integral": [self.integral.real, self.integral.imag],
            "loop": self.loop.as_dict(),
        }


@dataclass(frozen=True, eq=False)
class Prediction:
    source: int
    target: int
    crossing_loops: tuple[CrossingLoop, ...]

    @property
    def gamma_total(self) -> float:
        return float(sum(abs(c.integral.imag) for c in self.crossing_loops))

    @property
    def prefactor(self) -> complex:
        return complex(np.prod([np.exp(-1j * c.theta) for c in self.crossing_loops]))

    @property
    def total_integral(self) -> complex:
        return complex(sum(c.integral for c in self.crossing_loops))

    def value(self, epsilon: float) -> complex:
        return self.prefactor * complex(np.exp(-1j * self.total_integral / epsilon))

    def modulus(self, epsilon: float) -> float:
        return abs(self.value(epsilon))

    def as_dict(self) -> dict:
        g = self.prefactor
        return {
            "element": [self.target + 1, self.source + 1],
            "gamma_total": self.gamma_total,
            "prefactor": [g.real, g.imag],
            "total_integral": [self.total_integral.real, self.total_integral.imag],
            "loops": [c.as_dict() for c in self.crossing_loops],
        }


def _point_for(points: Sequence[DegeneracyPoint], t: float, pair: tuple[int, int], side: int) -> DegeneracyPoint:
    same_side = [p for p in points if np.sign(p.z0.imag) == side]
    matching = [p for p in same_side if p.pair == pair] or same_side
    if not matching:
        raise NoCrossingChain(f"no degeneracy found near the crossing at t={t:.6g}")
    return min(matching, key=lambda p: abs(p.z0.real - t))


def predict_element(model: GeneratorModel, j: int) -> Prediction:
    dg = diagram(model)
    target = dg.sigma[j]
    if target == j:
        raise NoCrossingChain(f"level {j + 1} is not carried to another level (sigma(j) = j)")
    side = 1 if target > j else -1
    points = degeneracies_of(model)
    running = j
    loops = []
    for link in dg.chains[j]:
        pair = (min(link.from_pos, link.to_pos), max(link.from_pos, link.to_pos))
        point = _point_for(points, link.t, pair, side)
        loop = crossing_loop(point, orientation=-side)
        mono = monodromy(model, loop)
        if mono.sigma0[running] != link.to_pos:
            raise NoCrossingChain(
                f"loop around {point.z0:.6g} sends label {running + 1} to {mono.sigma0[running] + 1}, "
                f"diagram expects {link.to_pos + 1}"
            )
        loops.append(CrossingLoop(loop, point, running, complex(mono.thetas[running]),
                                  complex(mono.loop_integrals[running])))
        running = link.to_pos
    if running != target:
        raise NoCrossingChain(f"chain of level {j + 1} ends at {running + 1}, not {target + 1}")
    pred = Prediction(j, target, tuple(loops))
    log.info("prediction for s_%d%d of %s: Gamma=%.10g |g|=%.6g",
             target + 1, j + 1, model.name, pred.gamma_total, abs(pred.prefactor))
    return pred


def bound_element(model: GeneratorModel, j: int, l: int, height: float | None = None) -> float:
    """Decay exponent bounding the non-target element s_{sigma(l) j}.

    ``height`` defaults to the terminal height of the dissipative path for the pair (j, l).
    """
    dg = diagram(model)
    if model.dim == 2 or l == j or dg.sigma[l] == j:
        raise NotApplicable(f"no off-target element for j={j + 1}, l={l + 1} in a {model.dim}-level model")
    pred = predict_element(model, j)
    if height is None:
        height = construct_candidate_path(model, j, k=l).vertices[-1].imag
    e_plus = np.sort(np.linalg.eigvals(model.limits[1]).real)
    return pred.gamma_total + abs(height) * float(e_plus[dg.sigma[j]] - e_plus[dg.sigma[l]])


# ===== sweeps =====
@dataclass(frozen=True)
class SweepRecord:
    epsilon: float
    element: tuple[int, int]
    s_numeric: complex
    s_predicted: complex
    rel_error_modulus: float
    matrix: np.ndarray | None = field(default=None, compare=False, repr=False)
    # error budget of S relative to |s_pred|: differences below it are not resolved
    noise: float = 0.0

    @property
    def eps_log_s(self) -> float:
        return self.epsilon * math.log(abs(self.s_numeric))


@dataclass(frozen=True)
class SweepFit:
    gamma_predicted: float
    gamma_fit: float
    log_prefactor_fit: float
    rel_error_slope: float
    monotone: bool

    @property
    def gamma_rel_error(self) -> float:
        return abs(self.gamma_fit - self.gamma_predicted) / self.gamma_predicted

    def as_dict(self) -> dict:
        return {
            "gamma_predicted": self.gamma_predicted,
            "gamma_fit": self.gamma_fit,
            "gamma_rel_error": self.gamma_rel_error,
            "log_prefactor_fit": self.log_prefactor_fit,
            "rel_error_slope": self.rel_error_slope,
            "monotone": self.monotone,
        }


def auto_epsilon_floor(gamma: float, budget: float) -> float:
    """Smallest eps whose predicted element stays 100x above the error budget."""
    return gamma / math.log(1.0 / (RANGE_FACTOR * budget))


def fit_sweep(records: Sequence[SweepRecord], gamma: float) -> SweepFit:
    eps = np.array([r.epsilon for r in records])
    y = np.array([r.eps_log_s for r in records])
    if len(records) >= 2:
        slope, intercept = np.polyfit(eps, y, 1)
        err_slope = float(np.polyfit(eps, [r.rel_error_modulus for r in records], 1)[0])
    else:
        slope, intercept, err_slope = 0.0, float(y[0]), 0.0
    ordered = sorted(records, key=lambda r: -r.epsilon)
    monotone = all(
        b.rel_error_modulus <= (1.0 + MONOTONE_BAND) * a.rel_error_modulus + b.noise
        for a, b in zip(ordered, ordered[1:])
    )
    return SweepFit(gamma, float(-intercept), float(slope), err_slope, monotone)


def sweep(model: GeneratorModel, j: int, epsilons: Sequence[float], ode_tol: float | None = None,
          threads: int | None = None, prediction: Prediction | None = None,
          window: Window | None = None) -> tuple[list[SweepRecord], SweepFit]:
    """Direct s_{sigma(j) j} against the prediction over ``epsilons`` (run largest first)."""
    ode_tol = ode_tol or SETTINGS.ODE_TOL
    threads = threads or SETTINGS.THREADS
    pred = prediction or predict_element(model, j)
    window = window or tail_window(model, ode_tol)
    budget = ode_tol * (window.T_plus - window.T_minus) + window.tail_estimate
    floor = RANGE_FACTOR * budget
    eps_list = sorted((float(e) for e in epsilons), reverse=True)
    for eps in eps_list:
        if pred.modulus(eps) < floor:
            raise DynamicRangeExceeded(
                f"predicted |s| = {pred.modulus(eps):.3e} at eps={eps} is below {floor:.1e}; "
                f"use eps >= {auto_epsilon_floor(pred.gamma_total, budget):.4g}"
            )
    # build the shared table before fanning out
    frame_table(model, window.T_minus, window.T_plus, None)

    def one(eps: float) -> SweepRecord:
        res = s_matrix(model, eps, ode_tol=ode_tol, window=window)
        num = complex(res.S[pred.target, j])
        guess = pred.value(eps)
        rel = abs(abs(num) - abs(guess)) / abs(guess)
        noise = res.error_budget / abs(guess)
        log.info("eps=%.4g |s_num|=%.6e |s_pred|=%.6e rel=%.3e (resolution %.1e)",
                 eps, abs(num), abs(guess), rel, noise)
        return SweepRecord(eps, (pred.target, j), num, guess, rel, res.S, noise)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        records = list(pool.map(one, eps_list))
    return records, fit_sweep(records, pred.gamma_total)


__all__ = [
    "crossing_loop", "CrossingLoop", "Prediction", "predict_element", "bound_element",
    "SweepRecord", "SweepFit", "auto_epsilon_floor", "fit_sweep", "sweep",
]
