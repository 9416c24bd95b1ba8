"""Parallel transport of the eigenframe along polygonal paths in the strip.

Along each straight segment z(s) = a + u s (|u| = 1) we integrate

    dW/ds = u K(z) W,        dI_j/ds = u e_j(z),

with K the transport generator, so that W carries the frame and I_j
accumulates the integral of the continued eigenvalue branch e_j.  Branch
labels are continued by matching the new eigenvalues against a linear
predictor from the last accepted step; a match worse than half the local gap
rejects the step and the segment is restarted with a smaller step cap.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import DOP853
from scipy.optimize import linear_sum_assignment

from .errors import (
    ConfigError,
    DegenerateSpectrum,
    ModelDomainError,
    NonProportional,
    PathThroughDegeneracy,
    SingularW,
    StepFailure,
)
from .models import GeneratorModel
from .spectral import SpectralFrame, eigenvalue_derivatives, transport_generator

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


# ===== paths =====
@dataclass(frozen=True)
class PathSpec:
    """Polygonal path. For closed paths ``orientation`` is +1 (counter-clockwise) or -1."""

    vertices: tuple[complex, ...]
    closed: bool = False
    orientation: int = 1

    def __post_init__(self):
        vs = tuple(complex(v) for v in self.vertices)
        object.__setattr__(self, "vertices", vs)
        if len(vs) < 2:
            raise ConfigError("a path needs at least two vertices", field="path.vertices")
        for a, b in zip(vs, vs[1:]):
            if a == b:
                raise ConfigError(f"repeated consecutive vertex {a}", field="path.vertices")
        if self.closed and vs[0] != vs[-1]:
            raise ConfigError("closed path must end at its first vertex", field="path.vertices")
        if self.orientation not in (1, -1):
            raise ConfigError("orientation must be +1 or -1", field="path.orientation")

    @classmethod
    def segment(cls, a: complex, b: complex) -> "PathSpec":
        return cls((a, b))

    @classmethod
    def rectangle(cls, center: complex, half_width: float, half_height: float,
                  orientation: int = 1) -> "PathSpec":
        c = complex(center)
        corners = (c + complex(-half_width, -half_height), c + complex(half_width, -half_height),
                   c + complex(half_width, half_height), c + complex(-half_width, half_height))
        return cls(corners + corners[:1], closed=True, orientation=orientation)

    @property
    def signed_area(self) -> float:
        v = np.asarray(self.vertices)
        return 0.5 * float(np.sum(v[:-1].real * v[1:].imag - v[1:].real * v[:-1].imag))

    def oriented_vertices(self) -> tuple[complex, ...]:
        if not self.closed:
            return self.vertices
        area = self.signed_area
        if area != 0.0 and np.sign(area) != self.orientation:
            return self.vertices[::-1]
        return self.vertices

    @property
    def length(self) -> float:
        v = np.asarray(self.vertices)
        return float(np.sum(np.abs(np.diff(v))))

    def conjugate(self) -> "PathSpec":
        # conjugation reverses the sense of rotation
        return PathSpec(tuple(np.conj(self.vertices)), self.closed, -self.orientation)

    def reversed(self) -> "PathSpec":
        return PathSpec(self.vertices[::-1], self.closed, -self.orientation)

    def distance_to(self, point: complex) -> float:
        v = np.asarray(self.vertices)
        best = np.inf
        for a, b in zip(v[:-1], v[1:]):
            d = b - a
            s = np.clip(((point - a) * np.conj(d)).real / abs(d) ** 2, 0.0, 1.0)
            best = min(best, abs(a + s * d - point))
        return float(best)

    def as_dict(self) -> dict:
        return {"vertices": [[v.real, v.imag] for v in self.vertices],
                "closed": self.closed, "orientation": self.orientation}


# ===== frame paths =====
@dataclass(frozen=True, eq=False)
class FrameSample:
    s: float
    z: complex
    frame: SpectralFrame
    W: np.ndarray | None
    phases: np.ndarray


@dataclass(frozen=True, eq=False)
class FramePath:
    """Transported frame; ``samples[i].frame`` is labelled by continuation from the start.

    ``label_map[j]`` is the index, in the start point's deterministic
    ordering, of the eigenvalue that branch j has become at the end.
    """

    model: GeneratorModel
    path: PathSpec
    samples: tuple[FrameSample, ...]
    label_map: tuple[int, ...]
    carries_frame: bool

    @property
    def start(self) -> FrameSample:
        return self.samples[0]

    @property
    def end(self) -> FrameSample:
        return self.samples[-1]

    def vectors(self, index: int = -1) -> np.ndarray:
        """Columns phi_j(z) = W(z) phi_j(start)."""
        return self.samples[index].W @ self.start.frame.right


class _LabelAmbiguity(Exception):
    pass


class _Reference:
    """Eigenvalues and their s-derivatives at the last accepted step."""

    def __init__(self, s: float, e: np.ndarray, slope: np.ndarray):
        self.s, self.e, self.slope = s, e, slope

    def match(self, frame: SpectralFrame, s: float) -> np.ndarray:
        pred = self.e + self.slope * (s - self.s)
        cost = np.abs(pred[:, None] - frame.eigenvalues[None, :])
        rows, cols = linear_sum_assignment(cost)
        worst = float(cost[rows, cols].max())
        if worst >= 0.5 * frame.min_gap:
            raise _LabelAmbiguity(f"label match {worst:.3e} vs gap {frame.min_gap:.3e}")
        return cols


def _frame_at(model: GeneratorModel, z: complex) -> SpectralFrame:
    try:
        return model.frame(z)
    except DegenerateSpectrum as exc:
        raise PathThroughDegeneracy(f"path meets a degeneracy near z={z:.6g}", point=z) from exc


def transport_frame(model: GeneratorModel, path: PathSpec, tol: float = 1e-10,
                    carry_frame: bool = True, max_step: float | None = None,
                    avoid: Sequence[complex] = (), margin: float = 0.0) -> FramePath:
    """Transport the frame from the first vertex of ``path`` to the last."""
    verts = path.oriented_vertices()
    if max(abs(v.imag) for v in verts) > model.strip_alpha + 1e-12:
        raise ModelDomainError(f"path leaves the strip |Im z| <= {model.strip_alpha}")
    for p in avoid:
        if path.distance_to(p) < margin:
            raise PathThroughDegeneracy(f"path passes within {margin} of degeneracy {p}", point=p)

    n = model.dim
    total = path.length
    rtol = atol = tol / max(1.0, total)
    cap = max_step if max_step is not None else min(total, 0.1)
    h_min = 1e-9 * max(1.0, total)

    start = _frame_at(model, verts[0])
    W0 = np.eye(n, dtype=complex)
    y = np.concatenate([W0.ravel(), np.zeros(n, dtype=complex)]) if carry_frame else np.zeros(n, dtype=complex)
    samples = [FrameSample(0.0, verts[0], start, W0 if carry_frame else None, np.zeros(n, dtype=complex))]
    current = start
    offset = 0.0

    for a, b in zip(verts[:-1], verts[1:]):
        seg_len = abs(b - a)
        u = (b - a) / seg_len
        ref = _Reference(0.0, current.eigenvalues.copy(), u * eigenvalue_derivatives(current, model.dH(a)))

        def fun(s, yv, a=a, u=u, ref=ref):
            z = a + u * s
            frame = _frame_at(model, z)
            e = frame.eigenvalues[ref.match(frame, s)]
            if not carry_frame:
                return u * e
            K = transport_generator(frame, model.dH(z))
            W = yv[: n * n].reshape(n, n)
            return np.concatenate([(u * (K @ W)).ravel(), u * e])

        s = 0.0
        seg_cap = min(cap, seg_len)
        while s < seg_len:
            solver = DOP853(fun, s, y, seg_len, max_step=seg_cap, rtol=rtol, atol=atol)
            try:
                while solver.status == "running":
                    message = solver.step()
                    if solver.status == "failed":
                        raise StepFailure(f"step control failed at z={a + u * solver.t:.6g}: {message}")
                    z = a + u * solver.t
                    frame = _frame_at(model, z)
                    labelled = frame.permuted(ref.match(frame, solver.t))
                    ref.s, ref.e = solver.t, labelled.eigenvalues.copy()
                    ref.slope = u * eigenvalue_derivatives(labelled, model.dH(z))
                    s, y = solver.t, solver.y.copy()
                    W = y[: n * n].reshape(n, n).copy() if carry_frame else None
                    samples.append(FrameSample(offset + s, z, labelled, W, y[-n:].copy()))
                    current = labelled
            except _LabelAmbiguity as exc:
                seg_cap /= 2.0
                log.debug("label ambiguity near s=%.6g (%s); step cap now %.3e", offset + s, exc, seg_cap)
                if seg_cap < h_min:
                    raise StepFailure(f"step cap underflow near z={a + u * s:.6g}") from exc
        offset += seg_len

    fresh = _frame_at(model, verts[-1])
    cost = np.abs(current.eigenvalues[:, None] - fresh.eigenvalues[None, :])
    _, label_map = linear_sum_assignment(cost)
    log.debug("transported %s over length %.4g in %d samples", model.name, total, len(samples))
    return FramePath(model, path, tuple(samples), tuple(int(k) for k in label_map), carry_frame)


# ===== couplings and phases =====
def couplings(fp: FramePath, index: int = -1) -> np.ndarray:
    """a_jk = -(Phi^-1 K Phi)_jk with Phi = W Phi(start); the diagonal is exactly zero."""
    sample = fp.samples[index]
    W = sample.W
    if W is None:
        raise ValueError("frame path was transported without its frame")
    if np.linalg.cond(W) > COND_LIMIT:
        raise SingularW(f"transported frame numerically singular at z={sample.z:.6g}")
    K = transport_generator(sample.frame, fp.model.dH(sample.z))
    Phi = W @ fp.start.frame.right
    a = -np.linalg.solve(Phi, K @ Phi)
    np.fill_diagonal(a, 0.0)
    return a


def delta_phase(fp: FramePath, j: int, k: int, index: int = -1) -> complex:
    """Integral of e_j - e_k along the path up to sample ``index``."""
    if j == k:
        return 0j
    ph = fp.samples[index].phases
    return complex(ph[j] - ph[k])


def intertwining_residual(fp: FramePath) -> float:
    P0 = fp.start.frame.projectors
    worst = 0.0
    for sample in fp.samples:
        P = sample.frame.projectors
        for j in range(fp.model.dim):
            worst = max(worst, float(np.linalg.norm(sample.W @ P0[j] - P[j] @ sample.W)))
    return worst


# ===== monodromy =====
@dataclass(frozen=True, eq=False)
class MonodromyResult:
    loop: PathSpec
    sigma0: tuple[int, ...]
    thetas: np.ndarray
    W_loop: np.ndarray
    loop_integrals: np.ndarray
    proportionality: np.ndarray
    residual: float

    def as_dict(self) -> dict:
        return {
            "loop": self.loop.as_dict(),
            "sigma0": [s + 1 for s in self.sigma0],
            "theta": [[t.real, t.imag] for t in self.thetas],
            "loop_integral": [[v.real, v.imag] for v in self.loop_integrals],
            "residual": self.residual,
        }


def monodromy(model: GeneratorModel, loop: PathSpec, tol: float = 1e-8) -> MonodromyResult:
    """Transport around a closed loop; W_loop phi_j = exp(-i theta_j) phi_sigma0(j)."""
    if not loop.closed:
        raise ConfigError("monodromy needs a closed loop", field="path.closed")
    fp = transport_frame(model, loop, tol=min(1e-10, tol * 1e-2))
    sigma0 = fp.label_map
    start = fp.start.frame
    W = fp.end.W
    n = model.dim
    moved = W @ start.right
    lam = np.array([start.dual[sigma0[j]] @ moved[:, j] for j in range(n)])
    residual = max(
        float(np.linalg.norm(moved[:, j] - lam[j] * start.right[:, sigma0[j]])) for j in range(n)
    )
    if residual > tol:
        raise NonProportional(f"monodromy proportionality residual {residual:.3e} exceeds {tol:.1e}", residual)

    # arg(lambda_j) continued along the loop from 1 at the start
    tracked = np.array([
        [sample.frame.dual[j] @ (sample.W @ start.right[:, j]) for j in range(n)]
        for sample in fp.samples
    ])
    args = np.unwrap(np.angle(tracked), axis=0)[-1]
    thetas = 1j * np.log(np.abs(lam)) - args
    log.debug("monodromy of %s: sigma0=%s residual=%.2e", model.name, sigma0, residual)
    return MonodromyResult(loop, sigma0, thetas, W, fp.end.phases.copy(), lam, residual)


def conjugate_monodromy_residual(model: GeneratorModel, loop: PathSpec, tol: float = 1e-8) -> dict:
    """Compare a loop's monodromy with that of its complex conjugate (real-on-real models)."""
    first = monodromy(model, loop, tol)
    second = monodromy(model, loop.conjugate(), tol)
    return {
        "sigma_equal": first.sigma0 == second.sigma0,
        "proportionality": float(np.max(np.abs(second.proportionality - np.conj(first.proportionality)))),
        "loop_integral": float(np.max(np.abs(second.loop_integrals - np.conj(first.loop_integrals)))),
    }


def metric_products_along(fp: FramePath, J=None) -> float:
    """Largest drift of the Gram matrix (phi_j, phi_k)_J along the path."""
    J = fp.model.metric_J if J is None else np.asarray(J, dtype=complex)
    if J is None:
        J = np.eye(fp.model.dim)
    Phi0 = fp.start.frame.right
    G0 = Phi0.conj().T @ J @ Phi0
    return max(
        float(np.linalg.norm((s.W @ Phi0).conj().T @ J @ (s.W @ Phi0) - G0)) for s in fp.samples
    )


__all__ = [
    "PathSpec", "FrameSample", "FramePath", "MonodromyResult",
    "transport_frame", "couplings", "delta_phase", "intertwining_residual",
    "monodromy", "conjugate_monodromy_residual", "metric_products_along",
]
