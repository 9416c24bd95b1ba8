"""Renormalised generators H_q = H - i eps K_{q-1} and improved transition elements.

K_q is built from the spectral data of H_q on a fixed grid of Chebyshev-Lobatto
panels laid along a path; K_{q-1}' comes from spectral differentiation on each
panel.  The sizes ||K_q - K_{q-1}|| first shrink and then grow factorially,
and the recursion is stopped at q* = floor(1 / (e c eps)) with c fitted from
those sizes.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BarycentricInterpolator
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln

from config import SETTINGS

from .asymptotics import Prediction, predict_element
from .errors import DegenerateSpectrum, GapCollapse, ModelDomainError, StepFailure
from .models import GeneratorModel
from .smatrix import tail_window
from .spectral import SpectralFrame, eig_simple, transport_generator
from .transport import PathSpec

log = logging.getLogger(__name__)

PANEL_LENGTH = 0.5
MIN_PANEL_NODES = 8
HALF_LINE_CAP = 10.0


# ===== Chebyshev panels =====
def cheb(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Lobatto nodes cos(pi j / N) and the differentiation matrix on them."""
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** np.arange(N + 1)
    X = np.tile(x, (N + 1, 1)).T
    D = np.outer(c, 1.0 / c) / (X - X.T + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def clencurt(N: int) -> np.ndarray:
    """Clenshaw-Curtis weights on the Lobatto nodes of ``cheb``."""
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    inner = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N * N - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(N * theta[inner]) / (N * N - 1)
    else:
        w[0] = w[N] = 1.0 / (N * N)
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2.0 * v / N
    return w


@dataclass(frozen=True, eq=False)
class Panel:
    start: int
    stop: int
    a: complex
    u: complex
    length: float
    s: np.ndarray
    Dz: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class PathGrid:
    path: PathSpec
    z: np.ndarray
    panels: tuple[Panel, ...]

    @classmethod
    def along(cls, path: PathSpec, density: int | None = None) -> "PathGrid":
        density = density or SETTINGS.GRID_DENSITY
        verts = path.oriented_vertices()
        zs, panels, offset = [], [], 0
        for a, b in zip(verts[:-1], verts[1:]):
            seg = abs(b - a)
            u = (b - a) / seg
            count = max(1, math.ceil(seg / PANEL_LENGTH))
            Lp = seg / count
            N = max(MIN_PANEL_NODES, math.ceil(density * Lp))
            x, D = cheb(N)
            w = clencurt(N)
            s = (1.0 - x) * Lp / 2.0
            for p in range(count):
                pa = a + u * p * Lp
                # s = (1 - x) Lp / 2, so d/ds = -(2 / Lp) d/dx and d/dz = d/ds / u
                panels.append(Panel(offset, offset + N + 1, pa, u, Lp, s, -(2.0 / Lp) * D / u, w * Lp / 2.0))
                zs.append(pa + u * s)
                offset += N + 1
        return cls(path, np.concatenate(zs), tuple(panels))

    @classmethod
    def segment(cls, a: float, b: float, density: int | None = None) -> "PathGrid":
        return cls.along(PathSpec.segment(a, b), density)

    def __len__(self) -> int:
        return len(self.z)

    def derivative(self, values: np.ndarray) -> np.ndarray:
        out = np.empty_like(values)
        for p in self.panels:
            out[p.start:p.stop] = np.tensordot(p.Dz, values[p.start:p.stop], axes=1)
        return out

    def integral(self, values: np.ndarray) -> np.ndarray:
        """Integral over the path of samples ``values`` (first axis = nodes) with respect to z."""
        return sum(p.u * np.tensordot(p.weights, values[p.start:p.stop], axes=1) for p in self.panels)


def _continue_labels(eigs: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    """Relabel node eigenvalues by continuity along the grid; also return the end label map."""
    out = eigs.copy()
    for i in range(1, len(out)):
        _, cols = linear_sum_assignment(np.abs(out[i - 1][:, None] - eigs[i][None, :]))
        out[i] = eigs[i][cols]
    _, label_map = linear_sum_assignment(np.abs(out[-1][:, None] - eigs[0][None, :]))
    return out, tuple(int(k) for k in label_map)


# ===== renormalisation =====
def optimal_truncation(c: float, epsilon: float) -> int:
    if c <= 0 or epsilon <= 0:
        raise ValueError("optimal_truncation needs c > 0 and eps > 0")
    return int(math.floor(1.0 / (math.e * c * epsilon)))


@dataclass(frozen=True, eq=False)
class RenormSequence:
    model: GeneratorModel
    epsilon: float
    grid: PathGrid
    K: tuple[np.ndarray, ...]
    eigenvalues: tuple[np.ndarray, ...]
    frames: tuple[SpectralFrame, ...]
    label_maps: tuple[tuple[int, ...], ...]

    @property
    def q_max(self) -> int:
        return len(self.K) - 1

    @cached_property
    def diffs(self) -> np.ndarray:
        return np.array([
            float(np.max(np.linalg.norm(self.K[q] - self.K[q - 1], ord=2, axis=(1, 2))))
            for q in range(1, len(self.K))
        ])

    @cached_property
    def eigenvalue_deviation(self) -> np.ndarray:
        e0 = self.eigenvalues[0]
        return np.array([float(np.max(np.abs(e - e0))) for e in self.eigenvalues])

    @cached_property
    def envelope(self) -> tuple[float, float]:
        """(b, c) with diff_q <= b eps^q c^q q! for q <= q*."""
        d = self.diffs
        if len(d) == 0 or not np.all(d > 0):
            return 0.0, 0.0
        qs = np.arange(1, len(d) + 1)
        upto = min(len(d), max(int(np.argmin(d)) + 1, 2))
        y = np.log(d[:upto]) - qs[:upto] * math.log(self.epsilon) - gammaln(qs[:upto] + 1)
        if upto >= 2:
            slope, _ = np.polyfit(qs[:upto], y, 1)
        else:
            slope = y[0]
        c = float(math.exp(slope))
        qs_env = qs[: min(len(d), max(1, optimal_truncation(c, self.epsilon)))]
        b = float(np.max(d[qs_env - 1] / np.exp(qs_env * math.log(self.epsilon * c) + gammaln(qs_env + 1))))
        return b, c

    @property
    def c_fit(self) -> float:
        return self.envelope[1]

    @property
    def b_fit(self) -> float:
        return self.envelope[0]

    @property
    def q_star(self) -> int:
        c = self.c_fit
        return self.q_max if c <= 0 else optimal_truncation(c, self.epsilon)

    @property
    def argmin(self) -> int:
        return int(np.argmin(self.diffs)) + 1 if len(self.diffs) else 0

    def closure_residual(self, q: int) -> float:
        """Distance between K_q at the two ends of a closed grid."""
        return float(np.linalg.norm(self.K[q][-1] - self.K[q][0], 2))

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "q_max": self.q_max,
            "diffs": [float(v) for v in self.diffs],
            "argmin": self.argmin,
            "b_fit": self.b_fit,
            "c_fit": self.c_fit,
            "q_star": self.q_star,
            "eigenvalue_deviation": [float(v) for v in self.eigenvalue_deviation],
        }


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def renorm_sequence(model: GeneratorModel, epsilon: float, grid: PathGrid, q_max: int = 12,
                    threads: int | None = None) -> RenormSequence:
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if np.max(np.abs(grid.z.imag)) > model.strip_alpha + 1e-12:
        raise ModelDomainError(f"grid leaves the strip |Im z| <= {model.strip_alpha}")
    threads = threads or SETTINGS.THREADS
    nodes = range(len(grid))
    H = np.array([model.H(z) for z in grid.z])
    Hp = np.array([model.dH(z) for z in grid.z])

    def level0(i):
        try:
            return eig_simple(H[i], point=grid.z[i])
        except DegenerateSpectrum as exc:
            raise GapCollapse(f"H is degenerate at grid point {grid.z[i]:.6g}", 0) from exc

    raw = _map(level0, nodes, threads)
    e0, label_map = _continue_labels(np.array([f.eigenvalues for f in raw]))
    frames = []
    for f, e in zip(raw, e0):
        _, cols = linear_sum_assignment(np.abs(e[:, None] - f.eigenvalues[None, :]))
        frames.append(f.permuted(cols))
    K = [np.array([transport_generator(f, Hp[i]) for i, f in enumerate(frames)])]
    eigs = [e0]
    label_maps = [label_map]

    for q in range(1, q_max + 1):
        K_prev = K[-1]
        dK_prev = grid.derivative(K_prev)
        if not np.all(np.isfinite(dK_prev)):
            raise GapCollapse(f"K_{q - 1} is not finite on the grid", q)

        def level(i, q=q, K_prev=K_prev, dK_prev=dK_prev):
            Hq = H[i] - 1j * epsilon * K_prev[i]
            try:
                f = eig_simple(Hq, point=grid.z[i])
            except DegenerateSpectrum as exc:
                raise GapCollapse(f"H_{q} loses simple spectrum at {grid.z[i]:.6g} (eps={epsilon})", q) from exc
            _, cols = linear_sum_assignment(np.abs(e0[i][:, None] - f.eigenvalues[None, :]))
            f = f.permuted(cols)
            return f, transport_generator(f, Hp[i] - 1j * epsilon * dK_prev[i])

        out = _map(level, nodes, threads)
        frames = [f for f, _ in out]
        K.append(np.array([k for _, k in out]))
        e_q = np.array([f.eigenvalues for f in frames])
        eigs.append(e_q)
        label_maps.append(_continue_labels(e_q)[1])
        log.debug("q=%d eps=%.4g diff=%.3e", q, epsilon, float(np.max(np.abs(K[-1] - K[-2]))))

    seq = RenormSequence(model, float(epsilon), grid, tuple(K), tuple(eigs), tuple(frames), tuple(label_maps))
    log.info("renormalised %s at eps=%.4g: argmin=%d q*=%d c=%.4g", model.name, epsilon,
             seq.argmin, seq.q_star, seq.c_fit)
    return seq


# ===== transport on a grid =====
def transport_on_grid(grid: PathGrid, K: np.ndarray, tol: float = 1e-11) -> np.ndarray:
    """W at the end of the grid for W' = K W, K interpolated panel by panel."""
    n = K.shape[1]
    W = np.eye(n, dtype=complex)
    for p in grid.panels:
        vals = K[p.start:p.stop].reshape(len(p.s), n * n)
        re = BarycentricInterpolator(p.s, vals.real)
        im = BarycentricInterpolator(p.s, vals.imag)

        def fun(s, y, re=re, im=im, u=p.u):
            Ks = (re(s) + 1j * im(s)).reshape(n, n)
            return (u * (Ks @ y.reshape(n, n))).ravel()

        sol = solve_ivp(fun, (0.0, p.length), W.ravel(), method="DOP853", rtol=tol, atol=tol)
        if not sol.success:
            raise StepFailure(f"grid transport failed on panel at {p.a:.6g}: {sol.message}")
        W = sol.y[:, -1].reshape(n, n)
    return W


# ===== improved prediction =====
@dataclass(frozen=True, eq=False)
class CorrectionPhases:
    alpha_star: np.ndarray
    beta_plus: np.ndarray
    beta_minus: np.ndarray
    integral_plus: np.ndarray
    integral_minus: np.ndarray

    def as_dict(self) -> dict:
        def pairs(v):
            return [[complex(x).real, complex(x).imag] for x in np.ravel(v)]
        return {
            "alpha_star": [pairs(row) for row in self.alpha_star],
            "beta_plus": pairs(self.beta_plus),
            "beta_minus": pairs(self.beta_minus),
            "integral_plus": pairs(self.integral_plus),
            "integral_minus": pairs(self.integral_minus),
            "max_abs_exp_alpha_minus_one": float(np.max(np.abs(np.exp(-1j * self.alpha_star) - 1.0))),
        }


@dataclass(frozen=True, eq=False)
class ImprovedPrediction:
    plain: Prediction
    epsilon: float
    q: int
    loop_integrals: tuple[complex, ...]
    multipliers: tuple[complex, ...]
    corrections: CorrectionPhases
    # direct numerical element; when set, a correction that does not reduce the error is dropped
    reference: complex | None = None

    @property
    def gamma_star(self) -> float:
        return float(sum(abs(v.imag) for v in self.loop_integrals))

    @property
    def prefactor_star(self) -> complex:
        return complex(np.prod(self.multipliers))

    def corrected_value(self) -> complex:
        k, j = self.plain.target, self.plain.source
        core = self.prefactor_star * np.exp(-1j * sum(self.loop_integrals) / self.epsilon)
        return complex(core * np.exp(-1j * self.corrections.alpha_star[k, j]))

    @property
    def used_plain(self) -> bool:
        if self.reference is None:
            return False
        return _rel_error(self.corrected_value(), self.reference) > self.plain_rel_error

    @property
    def plain_rel_error(self) -> float | None:
        if self.reference is None:
            return None
        return _rel_error(self.plain.value(self.epsilon), self.reference)

    @property
    def rel_error(self) -> float | None:
        if self.reference is None:
            return None
        return _rel_error(self.value(), self.reference)

    def value(self) -> complex:
        if self.used_plain:
            return self.plain.value(self.epsilon)
        return self.corrected_value()

    def modulus(self) -> float:
        return abs(self.value())

    def as_dict(self) -> dict:
        v = self.value()
        return {
            "epsilon": self.epsilon,
            "q": self.q,
            "gamma": self.plain.gamma_total,
            "gamma_star": self.gamma_star,
            "value": [v.real, v.imag],
            "plain_value": [self.plain.value(self.epsilon).real, self.plain.value(self.epsilon).imag],
            "used_plain": self.used_plain,
            "rel_error_modulus": self.rel_error,
            "plain_rel_error_modulus": self.plain_rel_error,
            "corrections": self.corrections.as_dict(),
        }


def _rel_error(value: complex, reference: complex) -> float:
    return abs(abs(value) - abs(reference)) / abs(reference)


def _frame_multiplier(seq: RenormSequence, q: int, label: int, image: int) -> complex:
    """(W_q phi_label)(end) read in the start frame on the image label."""
    W = transport_on_grid(seq.grid, seq.K[q])
    start = _start_frame(seq, q)
    return complex(start.dual[image] @ (W @ start.right[:, label]))


def _start_frame(seq: RenormSequence, q: int) -> SpectralFrame:
    if q == seq.q_max:
        return seq.frames[0]
    Hq = seq.model.H(seq.grid.z[0]) - 1j * seq.epsilon * seq.K[q - 1][0] if q else seq.model.H(seq.grid.z[0])
    f = eig_simple(Hq, point=seq.grid.z[0])
    e0 = seq.eigenvalues[0][0]
    _, cols = linear_sum_assignment(np.abs(e0[:, None] - f.eigenvalues[None, :]))
    return f.permuted(cols)


def _half_line(model: GeneratorModel, epsilon: float, end: float, q: int, threads: int | None):
    """exp(-i beta) and the integral of e^q - e along [0, end]."""
    seq = renorm_sequence(model, epsilon, PathGrid.segment(0.0, end), q_max=q, threads=threads)
    W0 = transport_on_grid(seq.grid, seq.K[0])
    Wq = transport_on_grid(seq.grid, seq.K[q])
    plain_start = _start_frame(seq, 0)
    star_start = _start_frame(seq, q)
    Phi = W0 @ plain_start.right
    Phi_star = Wq @ star_start.right
    factors = np.diag(np.linalg.solve(Phi, Phi_star))
    integral = seq.grid.integral(seq.eigenvalues[q] - seq.eigenvalues[0])
    return factors, integral


def improved_prediction(model: GeneratorModel, j: int, epsilon: float, q: int | None = None,
                        plain: Prediction | None = None, threads: int | None = None,
                        half_line: float | None = None, reference: complex | None = None) -> ImprovedPrediction:
    """Prediction rebuilt on the level-q frame, with the phase corrections at both ends.

    ``q`` defaults to the optimal truncation fitted on the real axis. With a ``reference``
    element the result falls back to the plain value whenever the correction moves
    |s| further from it.
    """
    plain = plain or predict_element(model, j)
    window = tail_window(model, SETTINGS.ODE_TOL)
    T_plus = min(window.T_plus, half_line or HALF_LINE_CAP)
    T_minus = max(window.T_minus, -(half_line or HALF_LINE_CAP))
    if q is None:
        real_axis = renorm_sequence(model, epsilon, PathGrid.segment(T_minus, T_plus), threads=threads)
        q = max(1, min(real_axis.q_star, real_axis.q_max))

    integrals, multipliers = [], []
    for cl in plain.crossing_loops:
        seq = renorm_sequence(model, epsilon, PathGrid.along(cl.loop), q_max=q, threads=threads)
        e_star = seq.eigenvalues[q]
        integrals.append(complex(seq.grid.integral(e_star[:, cl.label])))
        image = seq.label_maps[0][cl.label]
        multipliers.append(_frame_multiplier(seq, q, cl.label, image))

    f_plus, int_plus = _half_line(model, epsilon, T_plus, q, threads)
    f_minus, int_minus = _half_line(model, epsilon, T_minus, q, threads)
    beta_plus = 1j * np.log(f_plus)
    beta_minus = 1j * np.log(f_minus)
    # [T_minus, 0] = -(integral along 0 -> T_minus)
    int_minus = -int_minus
    alpha = (beta_plus[:, None] - beta_minus[None, :]
             + (int_plus[:, None] + int_minus[None, :]) / epsilon)
    corrections = CorrectionPhases(alpha, beta_plus, beta_minus, int_plus, int_minus)
    result = ImprovedPrediction(plain, float(epsilon), int(q), tuple(integrals), tuple(multipliers), corrections,
                                reference=None if reference is None else complex(reference))
    log.info("improved prediction eps=%.4g q=%d Gamma*=%.10g (Gamma=%.10g)",
             epsilon, q, result.gamma_star, plain.gamma_total)
    if result.used_plain:
        log.warning("eps=%.4g: correction does not reduce the error (%.3e vs %.3e); keeping the plain value",
                    epsilon, _rel_error(result.corrected_value(), result.reference), result.plain_rel_error)
    return result


__all__ = [
    "cheb", "clencurt", "Panel", "PathGrid", "optimal_truncation", "RenormSequence",
    "renorm_sequence", "transport_on_grid", "CorrectionPhases", "ImprovedPrediction",
    "improved_prediction",
]
