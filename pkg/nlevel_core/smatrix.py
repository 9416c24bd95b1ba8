"""Reference S-matrix from the coefficient equation on a truncated real line.

In the transported frame phi_j(t) = W(t) phi_j(0) the solution is written
psi = sum_k c_k exp(-i I_k(t)/eps) phi_k(t), I_k(t) = int_0^t e_k, and

    c_k' = sum_l a_kl exp(i (I_k - I_l)/eps) c_l.

The frame, couplings a and phases I are tabulated once per model and window
(``frame_table``) and shared by every eps and every column.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from config import SETTINGS

from .errors import StepFailure, WindowTooSmall
from .models import GeneratorModel, HypothesisReport, crossings_of, validate
from .symmetry import MetricData, j_normalize
from .transport import PathSpec, couplings, transport_frame

log = logging.getLogger(__name__)

TAIL_MARGIN = 4.0
FRAME_TOL = 1e-12


class Window(NamedTuple):
    T_minus: float
    T_plus: float
    tail_estimate: float


# ===== frame table =====
@dataclass(frozen=True, eq=False)
class FrameTable:
    """Real-axis frame data on [T_minus, T_plus] sampled at the transport steps."""

    model: GeneratorModel
    ts: np.ndarray
    phases: np.ndarray
    eigenvalues: np.ndarray
    coupling: np.ndarray
    Phi0: np.ndarray
    Phi_minus: np.ndarray
    Phi_plus: np.ndarray
    metric: MetricData | None
    normalization: str

    @property
    def T_minus(self) -> float:
        return float(self.ts[0])

    @property
    def T_plus(self) -> float:
        return float(self.ts[-1])

    @cached_property
    def _phase_splines(self):
        return (CubicHermiteSpline(self.ts, self.phases.real, self.eigenvalues.real, axis=0),
                CubicHermiteSpline(self.ts, self.phases.imag, self.eigenvalues.imag, axis=0))

    @cached_property
    def _coupling_splines(self):
        return (CubicSpline(self.ts, self.coupling.real, axis=0),
                CubicSpline(self.ts, self.coupling.imag, axis=0))

    def phase(self, t: float) -> np.ndarray:
        re, im = self._phase_splines
        return re(t) + 1j * im(t)

    def a(self, t: float) -> np.ndarray:
        re, im = self._coupling_splines
        return re(t) + 1j * im(t)

    @cached_property
    def max_gap(self) -> float:
        e = self.eigenvalues
        return float(np.max(np.abs(e[:, :, None] - e[:, None, :])))


def build_frame_table(model: GeneratorModel, T_minus: float, T_plus: float,
                      normalization: str | None = None, tol: float = FRAME_TOL) -> FrameTable:
    if normalization is None:
        normalization = "metric" if model.metric_J is not None else "unit"
    if normalization not in ("unit", "metric"):
        raise ValueError(f"unknown normalization {normalization!r}")
    step = SETTINGS.TABLE_STEP
    halves = []
    for end in (T_minus, T_plus):
        fp = transport_frame(model, PathSpec.segment(0.0, end), tol=tol, max_step=step)
        a = np.array([couplings(fp, i) for i in range(len(fp.samples))])
        halves.append((fp, a))
    (fm, am), (fpl, ap) = halves

    def column(fp, attr):
        return np.array([getattr(s, attr) for s in fp.samples])

    ts = np.concatenate([column(fm, "z").real[:0:-1], column(fpl, "z").real])
    phases = np.concatenate([column(fm, "phases")[:0:-1], column(fpl, "phases")])
    eig_m = np.array([s.frame.eigenvalues for s in fm.samples])
    eig_p = np.array([s.frame.eigenvalues for s in fpl.samples])
    eigenvalues = np.concatenate([eig_m[:0:-1], eig_p])
    coupling = np.concatenate([am[:0:-1], ap])

    start = fpl.start.frame
    metric = None
    Phi0 = start.right
    if normalization == "metric":
        metric = j_normalize(start, model.metric_J)
        D = metric.scales
        Phi0 = metric.vectors
        # rescaling phi_j by D_j maps a to D^-1 a D
        coupling = coupling * (D[None, None, :] / D[None, :, None])
    table = FrameTable(
        model=model,
        ts=ts,
        phases=phases,
        eigenvalues=eigenvalues,
        coupling=coupling,
        Phi0=Phi0,
        Phi_minus=fm.end.W @ Phi0,
        Phi_plus=fpl.end.W @ Phi0,
        metric=metric,
        normalization=normalization,
    )
    log.info("frame table for %s on [%.3g, %.3g]: %d samples", model.name, T_minus, T_plus, len(ts))
    return table


@lru_cache(maxsize=16)
def frame_table(model: GeneratorModel, T_minus: float, T_plus: float,
                normalization: str | None = None) -> FrameTable:
    return build_frame_table(model, T_minus, T_plus, normalization)


# ===== tail window =====
def _tail(report: HypothesisReport, T: float) -> float:
    C, k = report.decay_constant, report.decay_fit_exponent
    if report.decay_kind == "exponential":
        return C * math.exp(-k * T) / k
    if report.decay_kind == "power":
        return C * T ** (-k) / k
    return 0.0


def tail_window(model: GeneratorModel, ode_tol: float, report: HypothesisReport | None = None) -> Window:
    """Smallest symmetric window whose truncation error is below ode_tol / 10."""
    report = report or validate(model)
    C, k = report.decay_constant, report.decay_fit_exponent
    target = ode_tol / 10.0
    if report.decay_kind == "exponential":
        T = math.log(max(C / (k * target), 1.0)) / k
    elif report.decay_kind == "power":
        T = (C / (k * target)) ** (1.0 / k)
    elif report.decay_kind == "none":
        T = 0.0
    else:
        raise WindowTooSmall(f"{model.name}: decay of H towards its limits could not be fitted")
    extent = max((abs(c.t) for c in crossings_of(model)), default=0.0)
    T = max(T, extent + TAIL_MARGIN)
    if T > SETTINGS.MAX_WINDOW:
        T = SETTINGS.MAX_WINDOW
        if _tail(report, T) >= ode_tol:
            raise WindowTooSmall(
                f"{model.name}: tail estimate {_tail(report, T):.3e} at the window cap "
                f"{SETTINGS.MAX_WINDOW} exceeds ode_tol {ode_tol:.1e}"
            )
    return Window(-T, T, _tail(report, T))


# ===== coefficient integration =====
@dataclass(frozen=True, eq=False)
class SMatrixResult:
    S: np.ndarray
    epsilon: float
    T_minus: float
    T_plus: float
    ode_tol: float
    tail_estimate: float
    step_count: int
    normalization: str = "unit"

    @property
    def error_budget(self) -> float:
        return self.ode_tol * (self.T_plus - self.T_minus) + self.tail_estimate

    def as_dict(self) -> dict:
        n = self.S.shape[0]
        return {
            "epsilon": self.epsilon,
            "T_minus": self.T_minus,
            "T_plus": self.T_plus,
            "ode_tol": self.ode_tol,
            "tail_estimate": self.tail_estimate,
            "error_budget": self.error_budget,
            "step_count": self.step_count,
            "normalization": self.normalization,
            "S": [[[self.S[r, c].real, self.S[r, c].imag] for c in range(n)] for r in range(n)],
        }


def _rhs(table: FrameTable, epsilon: float, n: int, cols: int):
    def fun(t, y):
        p = np.exp(1j * table.phase(t) / epsilon)
        A = table.a(t) * (p[:, None] / p[None, :])
        return (A @ y.reshape(n, cols)).ravel()
    return fun


def _integrate(table: FrameTable, epsilon: float, c0: np.ndarray, ode_tol: float):
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    n = table.model.dim
    cols = c0.shape[1]
    max_step = SETTINGS.PHASE_FACTOR * epsilon / max(table.max_gap, 1e-300)
    sol = solve_ivp(
        _rhs(table, epsilon, n, cols),
        (table.T_minus, table.T_plus),
        c0.astype(complex).ravel(),
        method="DOP853",
        rtol=ode_tol,
        atol=ode_tol,
        max_step=max_step,
    )
    if not sol.success:
        raise StepFailure(f"coefficient integration failed at eps={epsilon}: {sol.message}")
    return sol.y[:, -1].reshape(n, cols), int(sol.t.size - 1)


def _checked_window(model: GeneratorModel, ode_tol: float, window: Window | None) -> Window:
    """tail_window, or a caller-supplied window with its tail re-estimated from the model."""
    if window is None:
        return tail_window(model, ode_tol)
    T = min(abs(window.T_minus), abs(window.T_plus))
    tail = _tail(validate(model), T)
    if tail >= ode_tol:
        raise WindowTooSmall(
            f"{model.name}: tail estimate {tail:.3e} on [{window.T_minus}, {window.T_plus}] "
            f"exceeds ode_tol {ode_tol:.1e}"
        )
    return window._replace(tail_estimate=max(tail, window.tail_estimate))


def _window_and_table(model, ode_tol, window, normalization):
    window = _checked_window(model, ode_tol, window)
    return window, frame_table(model, window.T_minus, window.T_plus, normalization)


def integrate_column(model: GeneratorModel, epsilon: float, j: int, ode_tol: float | None = None,
                     window: Window | None = None, normalization: str | None = None) -> np.ndarray:
    """c(T_plus) for c_k(T_minus) = delta_jk."""
    ode_tol = ode_tol or SETTINGS.ODE_TOL
    window, table = _window_and_table(model, ode_tol, window, normalization)
    c0 = np.zeros((model.dim, 1), dtype=complex)
    c0[j, 0] = 1.0
    c, _ = _integrate(table, epsilon, c0, ode_tol)
    return c[:, 0]


def s_matrix(model: GeneratorModel, epsilon: float, ode_tol: float | None = None,
             window: Window | None = None, normalization: str | None = None) -> SMatrixResult:
    """All columns in one pass of the matrix equation C' = A C, C(T_minus) = I."""
    ode_tol = ode_tol or SETTINGS.ODE_TOL
    window, table = _window_and_table(model, ode_tol, window, normalization)
    S, steps = _integrate(table, epsilon, np.eye(model.dim, dtype=complex), ode_tol)
    log.debug("S(eps=%.4g) for %s in %d steps", epsilon, model.name, steps)
    return SMatrixResult(S, float(epsilon), window.T_minus, window.T_plus, float(ode_tol),
                         window.tail_estimate, steps, table.normalization)


def integrate_schrodinger_column(model: GeneratorModel, epsilon: float, j: int,
                                 ode_tol: float | None = None, window: Window | None = None,
                                 normalization: str | None = None) -> np.ndarray:
    """Same column from i eps psi' = H psi, started on phi_j(T_minus) and projected at T_plus."""
    ode_tol = ode_tol or SETTINGS.ODE_TOL
    window, table = _window_and_table(model, ode_tol, window, normalization)
    psi0 = table.Phi_minus[:, j] * np.exp(-1j * table.phase(table.T_minus)[j] / epsilon)
    scale = max(float(np.max(np.abs(table.eigenvalues))), 1e-300)

    def fun(t, y):
        return -1j * (model.H(t) @ y) / epsilon

    sol = solve_ivp(fun, (table.T_minus, table.T_plus), psi0.astype(complex), method="DOP853",
                    rtol=ode_tol, atol=ode_tol, max_step=SETTINGS.PHASE_FACTOR * epsilon / scale)
    if not sol.success:
        raise StepFailure(f"state integration failed at eps={epsilon}: {sol.message}")
    coeffs = np.linalg.solve(table.Phi_plus, sol.y[:, -1])
    return coeffs * np.exp(1j * table.phase(table.T_plus) / epsilon)


__all__ = [
    "Window", "FrameTable", "build_frame_table", "frame_table", "tail_window",
    "SMatrixResult", "integrate_column", "s_matrix", "integrate_schrodinger_column",
]
