"""Generator families H(z) and the hypothesis checks run on them.

Level and label indices are 0-based throughout the Python API; reports and
CSV files shift them to 1-based.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from functools import lru_cache, partial
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, linear_sum_assignment

from .errors import DegenerateSpectrum, ModelDomainError, PositivityViolated
from .expressions import MatrixExpression, compile_matrix
from .spectral import SpectralFrame, eig_simple, min_gap_of

log = logging.getLogger(__name__)

TANH_STRIP = 1.2
LIMIT_POINT = 40.0


# ===== types =====
@dataclass(frozen=True)
class Crossing:
    """Exact real crossing of diabatic levels ``lower`` and ``upper`` at ``t``.

    ``lower`` is the level below before the crossing; ``slope`` is
    d/dt(e_lower - e_upper) at ``t`` and is positive.
    """

    t: float
    lower: int
    upper: int
    slope: float


@dataclass(frozen=True, eq=False)
class GeneratorModel:
    name: str
    dim: int
    eval_fn: Callable[[complex], np.ndarray]
    deriv_fn: Callable[[complex], np.ndarray]
    strip_alpha: float
    decay_a: float
    limits: tuple[np.ndarray, np.ndarray]
    metric_J: np.ndarray | None = None
    coupling_delta: float | None = None
    crossing_points: tuple[Crossing, ...] = ()
    params: Mapping[str, object] = field(default_factory=dict)
    unperturbed_factory: Callable[[], "GeneratorModel"] | None = None
    block_size: int | None = None
    real_on_real: bool = True

    def H(self, z) -> np.ndarray:
        return np.asarray(self.eval_fn(complex(z)), dtype=complex)

    def dH(self, z) -> np.ndarray:
        return np.asarray(self.deriv_fn(complex(z)), dtype=complex)

    def frame(self, z, gap_tol: float | None = None) -> SpectralFrame:
        return eig_simple(self.H(z), gap_tol=gap_tol, point=complex(z))

    def unperturbed(self) -> "GeneratorModel | None":
        return self.unperturbed_factory() if self.unperturbed_factory else None

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim, "params": dict(self.params),
                "strip_alpha": self.strip_alpha, "decay_a": self.decay_a}


@dataclass(frozen=True)
class ChainLink:
    t: float
    from_pos: int
    to_pos: int


@dataclass(frozen=True)
class CrossingDiagram:
    """Permutation and per-level crossing chains of the unperturbed levels."""

    sigma: tuple[int, ...]
    chains: tuple[tuple[ChainLink, ...], ...]
    crossings: tuple[Crossing, ...]

    def inverse(self) -> tuple[int, ...]:
        inv = [0] * len(self.sigma)
        for j, s in enumerate(self.sigma):
            inv[s] = j
        return tuple(inv)


@dataclass(frozen=True)
class HypothesisReport:
    gap_min: float
    gap_argmin: float
    decay_kind: str
    decay_fit_exponent: float
    decay_constant: float
    analyticity_residual: float
    real_spectrum_residual: float
    metric_residual: float
    crossing_table: tuple[Crossing, ...]
    expects_gap: bool = True

    @property
    def passed(self) -> bool:
        ok = (
            self.analyticity_residual <= 1e-8
            and self.real_spectrum_residual <= 1e-8
            and self.metric_residual <= 1e-10
            and self.decay_kind != "failed"
        )
        if self.expects_gap:
            ok = ok and self.gap_min > 0.0
        return ok

    def as_dict(self) -> dict:
        d = asdict(self)
        d["crossing_table"] = [
            {"t": c.t, "j": c.lower + 1, "k": c.upper + 1, "derivative_difference": c.slope}
            for c in self.crossing_table
        ]
        d["passed"] = self.passed
        return d


# ===== built-in families =====
def _sech2(z):
    return 1.0 / np.cosh(z) ** 2


def _two_level(delta: float) -> GeneratorModel:
    sz = np.diag([1.0, -1.0]).astype(complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)

    def H(z):
        return np.tanh(z) * sz + delta * sx

    def dH(z):
        return _sech2(z) * sz

    return GeneratorModel(
        name="two_level_avoided",
        dim=2,
        eval_fn=H,
        deriv_fn=dH,
        strip_alpha=TANH_STRIP,
        decay_a=1.0,
        limits=(H(-LIMIT_POINT), H(LIMIT_POINT)),
        coupling_delta=delta,
        crossing_points=(Crossing(0.0, 0, 1, 2.0),),
        params={"delta": delta},
        unperturbed_factory=None if delta == 0 else partial(_two_level, 0.0),
    )


def two_level_avoided(delta: float) -> GeneratorModel:
    """H(z) = [[tanh z, delta], [delta, -tanh z]]."""
    if not 0.0 < delta < 1.0:
        raise ModelDomainError(f"two_level_avoided needs 0 < delta < 1, got {delta}")
    return _two_level(float(delta))


def three_level_adiabatic(delta: float) -> GeneratorModel:
    """H(z) = diag(3 tanh z, -1, 1) + delta * (ones - I).

    At delta = 0 level 0 crosses level 1 at artanh(-1/3) and level 2 at
    artanh(1/3), giving the permutation 0 -> 2, 1 -> 0, 2 -> 1.
    """
    if not 0.0 <= delta <= 0.3:
        raise ModelDomainError(f"three_level_adiabatic needs 0 <= delta <= 0.3, got {delta}")
    delta = float(delta)
    V = np.ones((3, 3), dtype=complex) - np.eye(3)
    d0 = np.diag([0.0, -1.0, 1.0]).astype(complex)
    e0 = np.diag([1.0, 0.0, 0.0]).astype(complex)

    def H(z):
        return 3.0 * np.tanh(z) * e0 + d0 + delta * V

    def dH(z):
        return 3.0 * _sech2(z) * e0

    slope = 3.0 * (1.0 - 1.0 / 9.0)
    crossings = (
        Crossing(float(np.arctanh(-1.0 / 3.0)), 0, 1, slope),
        Crossing(float(np.arctanh(1.0 / 3.0)), 0, 2, slope),
    )
    return GeneratorModel(
        name="three_level_adiabatic",
        dim=3,
        eval_fn=H,
        deriv_fn=dH,
        strip_alpha=TANH_STRIP,
        decay_a=1.0,
        limits=(H(-LIMIT_POINT), H(LIMIT_POINT)),
        coupling_delta=delta,
        crossing_points=crossings,
        params={"delta": delta},
        unperturbed_factory=None if delta == 0 else partial(three_level_adiabatic, 0.0),
    )


def channel_potential(scale: float = 0.3, coupling: complex = 0.1, twist: float = 0.0):
    """V(z) = scale * tanh z * diag(1, -1) with off-diagonal w(z) = coupling * (1 + i twist tanh z).

    The lower entry is conj(w(conj z)), so V is Hermitian on the real axis and
    the two channels cross diabatically at t = 0. A constant phase of
    ``coupling`` is only a gauge; a nonzero ``twist`` turns the coupling's
    phase along the axis and makes V genuinely complex-Hermitian, which breaks
    the real-potential block identities.
    """
    c = complex(coupling)
    sz = np.diag([1.0, -1.0]).astype(complex)

    def V(z):
        t = np.tanh(z)
        w = c * (1.0 + 1j * twist * t)
        w_bar = np.conj(c) * (1.0 - 1j * twist * t)
        return scale * t * sz + np.array([[0, w], [w_bar, 0]], dtype=complex)

    def dV(z):
        s2 = _sech2(z)
        off = np.array([[0, 1j * twist * c], [-1j * twist * np.conj(c), 0]], dtype=complex)
        return s2 * (scale * sz + off)

    return V, dV


def two_channel_schrodinger(E: float, V: Callable, dV: Callable | None = None,
                            strip_alpha: float = TANH_STRIP, decay_a: float = 1.0,
                            grid: tuple[float, float, int] = (-20.0, 20.0, 401)) -> GeneratorModel:
    """First-order form of -eps^2 psi'' + V psi = E psi: H = [[0, I], [E - V, 0]]."""
    if dV is None:
        dV = getattr(V, "deriv", None)
    if dV is None:
        raise ModelDomainError("two_channel_schrodinger needs the potential's derivative")
    m = np.asarray(V(0.0)).shape[0]
    eye = np.eye(m, dtype=complex)
    zero = np.zeros((m, m), dtype=complex)

    def U(z):
        return E * eye - np.asarray(V(z), dtype=complex)

    ts = np.linspace(*grid)
    lowest = min(float(np.linalg.eigvalsh(0.5 * (U(t) + U(t).conj().T))[0]) for t in ts)
    if lowest <= 0.0:
        raise PositivityViolated(f"E - V(t) not positive definite on the sample grid (min eigenvalue {lowest:.3e})")
    real_on_real = all(np.allclose(np.asarray(V(t)).imag, 0.0, atol=1e-14) for t in ts[::40])

    def H(z):
        return np.block([[zero, eye], [U(z), zero]])

    def dH(z):
        return np.block([[zero, zero], [-np.asarray(dV(z), dtype=complex), zero]])

    J = np.block([[zero, eye], [eye, zero]])
    model = GeneratorModel(
        name="two_channel_schrodinger",
        dim=2 * m,
        eval_fn=H,
        deriv_fn=dH,
        strip_alpha=strip_alpha,
        decay_a=decay_a,
        limits=(H(-LIMIT_POINT), H(LIMIT_POINT)),
        metric_J=J,
        params={"E": E},
        block_size=m,
        real_on_real=real_on_real,
    )
    # equal channel momenta make the whole construction meaningless
    try:
        model.frame(0.0)
    except DegenerateSpectrum as exc:
        raise DegenerateSpectrum(f"two-channel spectrum degenerate at t=0: {exc}", exc.min_gap, 0j) from exc
    return model


def constant_model(matrix, name: str = "constant") -> GeneratorModel:
    M = np.array(matrix, dtype=complex)
    zero = np.zeros_like(M)
    return GeneratorModel(
        name=name,
        dim=M.shape[0],
        eval_fn=lambda z: M,
        deriv_fn=lambda z: zero,
        strip_alpha=TANH_STRIP,
        decay_a=1.0,
        limits=(M, M),
        real_on_real=bool(np.allclose(M.imag, 0.0)),
    )


def custom_model(entries: Sequence[Sequence], params: Mapping[str, float] | None = None,
                 strip_alpha: float = TANH_STRIP, decay_a: float = 1.0,
                 metric_J=None, name: str = "custom") -> GeneratorModel:
    """Model from expression-tree entries; a ``delta`` parameter marks the coupling."""
    params = dict(params or {})
    expr: MatrixExpression = compile_matrix(entries, params)
    unperturbed = None
    if params.get("delta"):
        unperturbed = partial(custom_model, entries, {**params, "delta": 0.0},
                              strip_alpha, decay_a, metric_J, name)
    return GeneratorModel(
        name=name,
        dim=expr.dim,
        eval_fn=expr,
        deriv_fn=expr.deriv,
        strip_alpha=float(strip_alpha),
        decay_a=float(decay_a),
        limits=(expr(-LIMIT_POINT), expr(LIMIT_POINT)),
        metric_J=None if metric_J is None else np.array(metric_J, dtype=complex),
        coupling_delta=params.get("delta"),
        params=params,
        unperturbed_factory=unperturbed,
        real_on_real=expr.is_real_on_real_axis(),
    )


# ===== level tracking and crossing diagram =====
def track_levels(model: GeneratorModel, ts: np.ndarray) -> np.ndarray:
    """Eigenvalues along a real grid with labels continued by assignment.

    Column j follows the level that is j-th lowest at ``ts[0]``, including
    through exact crossings.
    """
    out = np.empty((len(ts), model.dim), dtype=complex)
    w = np.linalg.eigvals(model.H(ts[0]))
    out[0] = w[np.argsort(w.real, kind="stable")]
    for i in range(1, len(ts)):
        w = np.linalg.eigvals(model.H(ts[i]))
        guess = out[i - 1] if i == 1 else 2 * out[i - 1] - out[i - 2]
        cost = np.abs(guess[:, None] - w[None, :])
        rows, cols = linear_sum_assignment(cost)
        out[i, rows] = w[cols]
    return out


def crossing_table(model: GeneratorModel, T: float = 10.0, step: float = 2e-3) -> tuple[Crossing, ...]:
    ts = np.linspace(-T, T, int(round(2 * T / step)) + 1)
    levels = track_levels(model, ts).real
    found: list[Crossing] = []
    for a in range(model.dim):
        for b in range(a + 1, model.dim):
            diff = levels[:, a] - levels[:, b]
            sgn = np.sign(diff)
            for i in np.nonzero((sgn[:-1] != sgn[1:]) & (sgn[:-1] != 0))[0]:
                lo, hi = max(0, i - 4), min(len(ts), i + 6)
                spline = CubicSpline(ts[lo:hi], diff[lo:hi])
                root = ts[i + 1] if diff[i + 1] == 0 else brentq(spline, ts[i], ts[i + 1], xtol=1e-14)
                d = float(spline(root, 1))
                if diff[i] < 0:
                    found.append(Crossing(float(root), a, b, d))
                else:
                    found.append(Crossing(float(root), b, a, -d))
    found.sort(key=lambda c: (c.t, c.lower, c.upper))
    log.debug("%s: %d real crossings", model.name, len(found))
    return tuple(found)


@lru_cache(maxsize=64)
def crossings_of(model: GeneratorModel) -> tuple[Crossing, ...]:
    if model.crossing_points:
        return model.crossing_points
    base = model.unperturbed()
    return crossing_table(base) if base is not None else ()


def diagram(model: GeneratorModel) -> CrossingDiagram:
    """Follow each unperturbed level through its crossings in time order."""
    n = model.dim
    pos = list(range(n))
    chains: list[list[ChainLink]] = [[] for _ in range(n)]
    crossings = tuple(sorted(crossings_of(model), key=lambda c: c.t))
    for c in crossings:
        p_lo, p_up = pos[c.lower], pos[c.upper]
        if p_up != p_lo + 1:
            log.warning("crossing at t=%.6g joins non-adjacent positions %d, %d", c.t, p_lo, p_up)
        chains[c.lower].append(ChainLink(c.t, p_lo, p_up))
        chains[c.upper].append(ChainLink(c.t, p_up, p_lo))
        pos[c.lower], pos[c.upper] = p_up, p_lo
    return CrossingDiagram(sigma=tuple(pos), chains=tuple(tuple(ch) for ch in chains), crossings=crossings)


# ===== hypothesis validation =====
def _fit_decay(ts: np.ndarray, r: np.ndarray, decay_a: float) -> tuple[str, float, float]:
    keep = r > 1e-13
    if not keep.any():
        return "none", decay_a, 0.0
    if keep.sum() < 4:
        return "failed", float("nan"), float("nan")
    t, y = ts[keep], np.log(r[keep])
    exp_fit, exp_res, *_ = np.polyfit(t, y, 1, full=True)
    pow_fit, pow_res, *_ = np.polyfit(np.log(t), y, 1, full=True)
    exp_res = float(exp_res[0]) if len(exp_res) else 0.0
    pow_res = float(pow_res[0]) if len(pow_res) else 0.0
    if exp_res <= pow_res and exp_fit[0] < 0:
        return "exponential", float(-exp_fit[0]), float(np.exp(exp_fit[1]))
    if pow_fit[0] < -1.0:
        # ||H - H(+-)|| <= C / t^(1+a)
        return "power", float(-pow_fit[0] - 1.0), float(np.exp(pow_fit[1]))
    return "failed", float(-pow_fit[0] - 1.0), float(np.exp(pow_fit[1]))


def _cauchy_residual(model: GeneratorModel, z0: complex, rho: float = 0.05, nodes: int = 32) -> float:
    theta = 2 * np.pi * np.arange(nodes) / nodes
    ring = np.exp(1j * theta)
    samples = np.array([model.H(z0 + rho * u) for u in ring])
    deriv = np.tensordot(ring.conj(), samples, axes=1) / (nodes * rho)
    negative = np.tensordot(ring, samples, axes=1) * rho / nodes
    scale = max(1.0, float(np.linalg.norm(model.dH(z0))))
    return max(float(np.linalg.norm(deriv - model.dH(z0))), float(np.linalg.norm(negative))) / scale


def validate(model: GeneratorModel, T: float = 10.0, step: float = 0.05) -> HypothesisReport:
    ts = np.linspace(-T, T, int(round(2 * T / step)) + 1)
    gaps = np.empty(len(ts))
    imag = 0.0
    metric = 0.0
    J = model.metric_J
    Jinv = None if J is None else np.linalg.inv(J)
    for i, t in enumerate(ts):
        Ht = model.H(t)
        w = np.linalg.eigvals(Ht)
        gaps[i] = min_gap_of(w)
        imag = max(imag, float(np.max(np.abs(w.imag))) / max(1.0, float(np.max(np.abs(w)))))
        if J is not None:
            metric = max(metric, float(np.linalg.norm(Jinv @ Ht.conj().T @ J - Ht)))

    tail = ts[ts >= T / 4]
    H_minus, H_plus = model.limits
    r = np.array([max(np.linalg.norm(model.H(t) - H_plus), np.linalg.norm(model.H(-t) - H_minus)) for t in tail])
    kind, exponent, constant = _fit_decay(tail, r, model.decay_a)

    alpha = model.strip_alpha
    analytic = max(
        _cauchy_residual(model, complex(t, s))
        for t in np.linspace(-T / 2, T / 2, 9)
        for s in np.linspace(-alpha, alpha, 5)
    )

    base = model if model.coupling_delta == 0 else model.unperturbed()
    table = crossing_table(base) if base is not None else ()
    k = int(np.argmin(gaps))
    report = HypothesisReport(
        gap_min=float(gaps[k]),
        gap_argmin=float(ts[k]),
        decay_kind=kind,
        decay_fit_exponent=exponent,
        decay_constant=constant,
        analyticity_residual=analytic,
        real_spectrum_residual=imag,
        metric_residual=metric,
        crossing_table=table,
        expects_gap=model.coupling_delta != 0,
    )
    log.info("validated %s: gap_min=%.6g decay=%s(%.4g) analyticity=%.2e",
             model.name, report.gap_min, kind, exponent, analytic)
    return report


__all__ = [
    "Crossing", "GeneratorModel", "ChainLink", "CrossingDiagram", "HypothesisReport",
    "two_level_avoided", "three_level_adiabatic", "two_channel_schrodinger",
    "channel_potential", "constant_model", "custom_model",
    "track_levels", "crossing_table", "crossings_of", "diagram", "validate",
]
