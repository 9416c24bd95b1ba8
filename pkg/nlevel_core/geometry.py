"""Degeneracy points, loop integrals of eigenvalue branches, and dissipative paths."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .errors import (
    ConfigError,
    ConstructionFailure,
    ModelDomainError,
    NewtonDivergence,
    NumericalFailure,
    PathThroughDegeneracy,
)
from .models import GeneratorModel, crossings_of, diagram
from .transport import PathSpec, transport_frame

log = logging.getLogger(__name__)

CAUCHY_RADIUS = 1e-3
CAUCHY_NODES = 8
MERGE_RADIUS = 1e-6
BOX_WIDTH = 2.0
BOX_CLEARANCE = 1.5
FAR_MARGIN = 4.0


# ===== discriminant =====
def char_poly_coefficients(A) -> np.ndarray:
    """Coefficients of det(x I - A), highest degree first (Faddeev-LeVerrier)."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    coeffs = np.zeros(n + 1, dtype=complex)
    coeffs[0] = 1.0
    M = np.zeros_like(A)
    eye = np.eye(n, dtype=complex)
    for k in range(1, n + 1):
        M = A @ M + coeffs[k - 1] * eye
        coeffs[k] = -np.trace(A @ M) / k
    return coeffs


def sylvester_matrix(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    m, n = len(p) - 1, len(q) - 1
    S = np.zeros((m + n, m + n), dtype=complex)
    for i in range(n):
        S[i, i:i + m + 1] = p
    for i in range(m):
        S[n + i, i:i + n + 1] = q
    return S


def discriminant(A) -> complex:
    """Resultant of the characteristic polynomial and its derivative; zero iff eigenvalues repeat."""
    p = char_poly_coefficients(A)
    dp = np.polyder(p)
    return complex(np.linalg.det(sylvester_matrix(p, dp)))


def _disc(model: GeneratorModel, z: complex) -> complex:
    return discriminant(model.H(z))


def _disc_derivative(model: GeneratorModel, z: complex) -> complex:
    ring = np.exp(2j * np.pi * np.arange(CAUCHY_NODES) / CAUCHY_NODES)
    vals = np.array([_disc(model, z + CAUCHY_RADIUS * u) for u in ring])
    return complex(np.mean(vals * ring.conj()) / CAUCHY_RADIUS)


# ===== degeneracy search =====
@dataclass(frozen=True)
class Region:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def contains(self, z: complex, pad: float = 0.0) -> bool:
        return (self.re_min - pad <= z.real <= self.re_max + pad
                and self.im_min - pad <= z.imag <= self.im_max + pad)

    @classmethod
    def default_for(cls, model: GeneratorModel) -> "Region":
        extent = max((abs(c.t) for c in crossings_of(model)), default=0.0) + 3.0
        return cls(-extent, extent, -model.strip_alpha, model.strip_alpha)


@dataclass(frozen=True)
class DegeneracyPoint:
    z0: complex
    pair: tuple[int, int]
    discriminant_residual: float
    conjugate_partner: complex | None = None

    def as_dict(self) -> dict:
        partner = self.conjugate_partner
        return {
            "z0": [self.z0.real, self.z0.imag],
            "pair": [self.pair[0] + 1, self.pair[1] + 1],
            "discriminant_residual": self.discriminant_residual,
            "conjugate_partner": None if partner is None else [partner.real, partner.imag],
        }


@dataclass(frozen=True)
class DegeneracyScan:
    points: tuple[DegeneracyPoint, ...]
    skipped: tuple[tuple[complex, str], ...] = ()


def _newton(model: GeneratorModel, seed: complex, region: Region, scale: float,
            newton_tol: float, max_iter: int = 80) -> complex:
    z = complex(seed)
    for _ in range(max_iter):
        d = _disc(model, z)
        if abs(d) <= 1e-15 * scale:
            return z
        dp = _disc_derivative(model, z)
        if dp == 0:
            raise NewtonDivergence("vanishing derivative", seed)
        step = d / dp
        z -= step
        if not region.contains(z, pad=0.1) or abs(z.imag) > model.strip_alpha:
            raise NewtonDivergence(f"iterate left the region at {z:.4g}", seed)
        if abs(step) <= newton_tol * max(1.0, abs(z)):
            return z
    raise NewtonDivergence(f"no convergence after {max_iter} iterations", seed)


def _grid_seeds(values: np.ndarray, re: np.ndarray, im: np.ndarray) -> list[complex]:
    ang = np.angle(values)

    def wrap(x):
        return (x + np.pi) % (2 * np.pi) - np.pi

    # winding of arg D around each grid cell (rows: im, cols: re)
    a00, a01, a11, a10 = ang[:-1, :-1], ang[:-1, 1:], ang[1:, 1:], ang[1:, :-1]
    winding = (wrap(a01 - a00) + wrap(a11 - a01) + wrap(a10 - a11) + wrap(a00 - a10)) / (2 * np.pi)
    seeds = [complex(0.5 * (re[c] + re[c + 1]), 0.5 * (im[r] + im[r + 1]))
             for r, c in zip(*np.nonzero(np.abs(np.round(winding)) >= 1))]

    mag = np.abs(values)
    inner = mag[1:-1, 1:-1]
    is_min = np.ones_like(inner, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr or dc:
                is_min &= inner < mag[1 + dr:mag.shape[0] - 1 + dr, 1 + dc:mag.shape[1] - 1 + dc]
    seeds += [complex(re[c + 1], im[r + 1]) for r, c in zip(*np.nonzero(is_min))]
    return seeds


def _real_roots(model: GeneratorModel, region: Region, step: float, scale: float) -> list[float]:
    ts = np.arange(region.re_min, region.re_max + step / 2, step)
    D = np.array([_disc(model, t).real for t in ts])
    roots = []
    for i in np.nonzero(np.sign(D[:-1]) * np.sign(D[1:]) < 0)[0]:
        roots.append(brentq(lambda t: _disc(model, t).real, ts[i], ts[i + 1], xtol=1e-14))
    roots += [float(t) for t, d in zip(ts, D) if d == 0.0]
    # double roots: extrema of D where D itself vanishes
    dD = np.gradient(D, ts)
    for i in np.nonzero(np.sign(dD[:-1]) * np.sign(dD[1:]) < 0)[0]:
        if min(abs(D[i]), abs(D[i + 1])) > 1e-3 * scale:
            continue
        t = brentq(lambda s: _disc_derivative(model, s).real, ts[max(i - 1, 0)], ts[min(i + 2, len(ts) - 1)],
                   xtol=1e-14)
        if abs(_disc(model, t)) <= 1e-9 * scale:
            roots.append(float(t))
    return roots


def _classify(model: GeneratorModel, z0: complex) -> tuple[int, int]:
    """Labels, as continued from the real axis below, of the two colliding branches."""
    if z0.imag == 0.0:
        w = np.sort_complex(np.linalg.eigvals(model.H(z0)))
        gaps = np.abs(np.diff(w))
        p = int(np.argmin(gaps))
        return (p, p + 1)
    inner = complex(z0.real, 0.75 * z0.imag)
    try:
        fp = transport_frame(model, PathSpec.segment(complex(z0.real, 0.0), inner),
                             tol=1e-9, carry_frame=False)
        e = fp.end.frame.eigenvalues
    except NumericalFailure as exc:
        log.warning("could not continue labels towards %s (%s); using local ordering", z0, exc)
        e = model.frame(inner).eigenvalues
    diff = np.abs(e[:, None] - e[None, :])
    np.fill_diagonal(diff, np.inf)
    j, k = np.unravel_index(int(np.argmin(diff)), diff.shape)
    return (int(min(j, k)), int(max(j, k)))


def scan_degeneracies(model: GeneratorModel, region: Region | None = None, grid_step: float = 0.05,
                      newton_tol: float = 1e-12) -> DegeneracyScan:
    region = region or Region.default_for(model)
    if max(abs(region.im_min), abs(region.im_max)) > model.strip_alpha + 1e-12:
        raise ModelDomainError(f"region exceeds the strip |Im z| <= {model.strip_alpha}")
    re = np.arange(region.re_min, region.re_max + grid_step / 2, grid_step)
    im = np.arange(region.im_min, region.im_max + grid_step / 2, grid_step)
    values = np.array([[_disc(model, complex(x, y)) for x in re] for y in im])
    scale = max(float(np.max(np.abs(values))), 1e-300)

    found: list[complex] = []
    skipped: list[tuple[complex, str]] = []
    if model.real_on_real:
        found += [complex(t, 0.0) for t in _real_roots(model, region, grid_step / 4, scale)]
    for seed in _grid_seeds(values, re, im):
        try:
            z = _newton(model, seed, region, scale, newton_tol)
        except NewtonDivergence as exc:
            log.warning("skipped seed %s: %s", seed, exc)
            skipped.append((seed, str(exc)))
            continue
        if region.contains(z):
            found.append(z)

    merged: list[complex] = []
    for z in found:
        if model.real_on_real and abs(z.imag) < 1e-7:
            z = complex(z.real, 0.0)
        if all(abs(z - m) > MERGE_RADIUS for m in merged):
            merged.append(z)

    if model.real_on_real:
        # Schwarz reflection: pair every root with its exact conjugate
        upper: list[complex] = []
        for z in merged:
            if z.imag == 0:
                continue
            u = z if z.imag > 0 else z.conjugate()
            if all(abs(u - m) > MERGE_RADIUS for m in upper):
                upper.append(u)
        merged = [z for z in merged if z.imag == 0] + [w for u in upper for w in (u, u.conjugate())]

    points = []
    for z in sorted(merged, key=lambda z: (round(z.real, 9), round(z.imag, 9))):
        if z.imag == 0:
            partner = z
        else:
            partner = next((m for m in merged if abs(m - z.conjugate()) <= MERGE_RADIUS), None)
        points.append(DegeneracyPoint(z, _classify(model, z), abs(_disc(model, z)) / scale, partner))
    log.info("%s: %d degeneracies, %d seeds skipped", model.name, len(points), len(skipped))
    return DegeneracyScan(tuple(points), tuple(skipped))


def find_degeneracies(model: GeneratorModel, region: Region | None = None, grid_step: float = 0.05,
                      newton_tol: float = 1e-12) -> list[DegeneracyPoint]:
    return list(scan_degeneracies(model, region, grid_step, newton_tol).points)


@lru_cache(maxsize=16)
def degeneracies_of(model: GeneratorModel) -> tuple[DegeneracyPoint, ...]:
    """Degeneracies in the default region, computed once per model."""
    return tuple(find_degeneracies(model))


# ===== loop integrals =====
def loop_eigenvalue_integral(model: GeneratorModel, loop: PathSpec, j: int, tol: float = 1e-12) -> complex:
    """Integral of the branch starting as e_j at the loop's first vertex."""
    if not loop.closed:
        raise ValueError("loop_eigenvalue_integral needs a closed loop")
    fp = transport_frame(model, loop, tol=tol, carry_frame=False)
    return complex(fp.end.phases[j])


def decay_rate(model: GeneratorModel, loop: PathSpec, j: int) -> float:
    return abs(loop_eigenvalue_integral(model, loop, j).imag)


def collapsed_loop_integral(model: GeneratorModel, base: complex, z0: complex, j: int, k: int,
                            nodes: int = 96) -> complex:
    """Loop integral of e_j around the square-root point z0, based at ``base``.

    The loop collapses onto the segment [base, z0] and equals the integral
    of e_j - e_k along it.  With z = z0 + (base - z0) tau^2 the integrand
    (e_j - e_k) dz/dtau is smooth at tau = 0.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    tau, weights = 0.5 * (x + 1.0)[::-1], 0.5 * w[::-1]
    start = model.frame(base)
    prev = start.eigenvalues.copy()
    g_prev = prev[j] - prev[k]
    total = 0j
    for t, wt in zip(tau, weights):
        z = z0 + (base - z0) * t * t
        vals = np.linalg.eigvals(model.H(z))
        _, cols = linear_sum_assignment(np.abs(prev[:, None] - vals[None, :]))
        cur = vals[cols]
        g = (cur[j] - cur[k]) / t
        if (g * np.conj(g_prev)).real < 0:
            g = -g
        total += wt * g * t * 2.0 * (base - z0) * t
        g_prev, prev = g, cur
    # total runs from z0 to base
    return -total


def two_level_gamma(delta: float) -> float:
    """Decay rate of the two-level family: pi (sqrt(1 + delta^2) - 1)."""
    return float(np.pi * (np.sqrt(1.0 + delta * delta) - 1.0))


# ===== dissipative paths =====
@dataclass(frozen=True)
class DissipativeReport:
    path: PathSpec
    index_j: int
    margins: dict = field(default_factory=dict)
    differential: dict = field(default_factory=dict)
    slack: float = 0.0

    @property
    def verdict(self) -> dict:
        return {k: m >= -self.slack for k, m in self.margins.items()}

    @property
    def passed(self) -> bool:
        return all(self.verdict.values())

    def as_dict(self) -> dict:
        return {
            "index_j": self.index_j + 1,
            "slack": self.slack,
            "pairs": [
                {"k": k + 1, "margin": self.margins[k], "differential": self.differential[k],
                 "pass": self.verdict[k]}
                for k in sorted(self.margins)
            ],
            "passed": self.passed,
            "path": self.path.as_dict(),
        }


def check_dissipative(model: GeneratorModel, path: PathSpec, j: int, slack: float | None = None,
                      max_step: float = 0.02, pairs=None) -> DissipativeReport:
    """Sample Im of the continued e_j - e_k along ``path`` and report its smallest increments.

    Labels are continued from the real point below the first vertex. ``pairs``
    restricts the check to those k.
    """
    verts = path.oriented_vertices()
    lead = complex(verts[0].real, 0.0)
    full = PathSpec((lead,) + verts) if verts[0].imag != 0 else PathSpec(verts)
    lead_len = abs(verts[0].imag)
    if slack is None:
        slack = 1e-9 * path.length
    fp = transport_frame(model, full, tol=1e-10, carry_frame=False, max_step=max_step)
    samples = [s for s in fp.samples if s.s >= lead_len - 1e-12]
    phases = np.array([s.phases for s in samples])
    n = model.dim
    margins, differential = {}, {}
    for k in (range(n) if pairs is None else pairs):
        if k == j:
            continue
        im_delta = (phases[:, j] - phases[:, k]).imag
        margins[k] = float(np.min(np.diff(im_delta))) if len(im_delta) > 1 else 0.0
        rates = []
        for a, b in zip(samples[:-1], samples[1:]):
            d = b.z - a.z
            if d == 0:
                continue
            u = d / abs(d)
            de = a.frame.eigenvalues[j] - a.frame.eigenvalues[k]
            rates.append((de * u).imag)
        differential[k] = float(min(rates)) if rates else 0.0
    return DissipativeReport(path, j, margins, differential, slack)


def _march(model: GeneratorModel, j: int, others: tuple[int, ...], sign: int, h0: float,
           us: np.ndarray, h_cap: float):
    """Heights along ``us`` using the flattest slope admissible for the pairs (j, k), k in ``others``.

    None when the slope bounds conflict or the path leaves the side.
    """
    fp = transport_frame(model, PathSpec.segment(complex(us[0], 0.0), complex(us[0], sign * h0)),
                         tol=1e-9, carry_frame=False)
    e = fp.end.frame.eigenvalues.copy()
    h = sign * h0
    heights = [h]
    du = us[1] - us[0]
    idx = list(others)
    for u in us[:-1]:
        de = e[j] - e[idx]
        R, I = de.real, de.imag
        lo = max([-i / r for r, i in zip(R, I) if r > 1e-12], default=-np.inf)
        hi = min([-i / r for r, i in zip(R, I) if r < -1e-12], default=np.inf)
        if any(abs(r) <= 1e-12 and i < 0 for r, i in zip(R, I)) or lo > hi:
            return None
        slope = float(np.clip(sign * h0 - h, lo, hi))
        # keep strictly inside active bounds
        if slope == hi and np.isfinite(hi):
            slope = max(hi - 0.1 * abs(hi) - 1e-6, lo if np.isfinite(lo) else -np.inf)
        elif slope == lo and np.isfinite(lo):
            slope = min(lo + 0.1 * abs(lo) + 1e-6, hi if np.isfinite(hi) else np.inf)
        h = h + slope * du
        if abs(h) > h_cap or h * sign <= 0:
            return None
        z = complex(u + du, h)
        try:
            frame = model.frame(z)
        except NumericalFailure:
            return None
        vals = frame.eigenvalues
        _, cols = linear_sum_assignment(np.abs(e[:, None] - vals[None, :]))
        e = vals[cols]
        heights.append(h)
    return np.array(heights)


def dissipative_side(model: GeneratorModel, j: int) -> int:
    """+1 above, -1 below, 0 for the real axis: the sign of sigma(j) - j."""
    target = diagram(model).sigma[j]
    return 0 if target == j else (1 if target > j else -1)


def construct_candidate_path(model: GeneratorModel, j: int, side: int | None = None,
                             k: int | None = None, du: float = 0.01, thin: int = 5) -> PathSpec:
    """Polyline from far left to far right, above (side=+1) or below (-1) the real axis,
    along which branch j is dissipative with respect to branch ``k`` (every other
    branch when ``k`` is None)."""
    dg = diagram(model)
    extent = max((abs(c.t) for c in dg.crossings), default=0.0) + FAR_MARGIN
    if side is None:
        side = dissipative_side(model, j)
    if side == 0:
        return PathSpec((complex(-extent, 0.0), complex(extent, 0.0)))
    others = tuple(x for x in range(model.dim) if x != j) if k is None else (k,)
    if j in others:
        raise ConfigError(f"pair ({j + 1}, {j + 1}) has no dissipative path", field="k")

    points = [p for p in degeneracies_of(model) if np.sign(p.z0.imag) == side]
    h_min = BOX_CLEARANCE * max((abs(p.z0.imag) for p in points), default=0.05 / BOX_CLEARANCE)
    h_cap = 0.9 * model.strip_alpha
    us = np.arange(-extent, extent + du / 2, du)
    for h0 in np.linspace(h_min, h_cap, 8):
        heights = _march(model, j, others, side, h0, us, h_cap)
        if heights is None:
            log.debug("height %.4g: no admissible slope", h0)
            continue
        clear = all(
            abs(h) >= BOX_CLEARANCE * abs(p.z0.imag)
            for p in points
            for u, h in zip(us, heights)
            if abs(u - p.z0.real) <= BOX_WIDTH * abs(p.z0.imag)
        )
        if not clear:
            log.debug("height %.4g: path enters a degeneracy box", h0)
            continue
        keep = list(range(0, len(us), thin))
        if keep[-1] != len(us) - 1:
            keep.append(len(us) - 1)
        path = PathSpec(tuple(complex(us[i], heights[i]) for i in keep))
        try:
            report = check_dissipative(model, path, j, pairs=others)
        except PathThroughDegeneracy:
            continue
        if report.passed:
            log.info("dissipative path for index %d (pairs %s) at starting height %.4g",
                     j + 1, [x + 1 for x in others], h0)
            return path
        log.debug("height %.4g: margins %s", h0, report.margins)
    raise ConstructionFailure(
        f"no dissipative path for index {j + 1} against {[x + 1 for x in others]} on side {side:+d}")


@dataclass(frozen=True)
class DissipativeDomain:
    """One dissipative path per pair (j, k), all on the same side of the real axis."""

    index_j: int
    side: int
    paths: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)

    @property
    def margins(self) -> dict:
        return {k: r.margins[k] for k, r in self.reports.items()}

    @property
    def passed(self) -> bool:
        return all(r.verdict[k] for k, r in self.reports.items())

    def as_dict(self) -> dict:
        return {
            "index_j": self.index_j + 1,
            "side": self.side,
            "passed": self.passed,
            "pairs": [
                {"k": k + 1, "margin": self.reports[k].margins[k], "pass": self.reports[k].verdict[k],
                 "path": self.paths[k].as_dict()}
                for k in sorted(self.paths)
            ],
        }


def dissipative_domain(model: GeneratorModel, j: int, side: int | None = None) -> DissipativeDomain:
    """Dissipative paths for index j against every other branch.

    A single path serving all pairs is used when one exists; otherwise each
    pair gets its own path on the common side.
    """
    if side is None:
        side = dissipative_side(model, j)
    others = [k for k in range(model.dim) if k != j]
    try:
        common = construct_candidate_path(model, j, side)
        paths = {k: common for k in others}
    except ConstructionFailure:
        log.info("no common dissipative path for index %d; building one per pair", j + 1)
        paths = {k: construct_candidate_path(model, j, side, k=k) for k in others}
    reports = {k: check_dissipative(model, paths[k], j, pairs=(k,)) for k in others}
    return DissipativeDomain(j, side, paths, reports)




def enclosing_loop(path: PathSpec) -> PathSpec:
    """Closed loop: along ``path`` then back along the real axis, so its label map is sigma."""
    verts = path.vertices
    side = 1 if max(v.imag for v in verts) > 0 else -1
    left, right = complex(verts[0].real, 0.0), complex(verts[-1].real, 0.0)
    ring = ((left,) if verts[0].imag != 0 else ()) + verts + ((right,) if verts[-1].imag != 0 else ()) + (left,)
    return PathSpec(ring, closed=True, orientation=-side)


def level_line_samples(model: GeneratorModel, j: int, k: int, region: Region, step: float) -> list[tuple]:
    """Im of the continued e_j - e_k integral on a grid, continued 0 -> Re z -> z."""
    xs = np.arange(region.re_min, region.re_max + step / 2, step)
    ys_up = np.arange(step, region.im_max + step / 2, step)
    ys_dn = -np.arange(step, -region.im_min + step / 2, step)
    rows = []
    for x in xs:
        base = [0j] if abs(x) > 1e-12 else []
        for ys in (np.array([0.0]), ys_up, ys_dn):
            verts = base + [complex(x, y) for y in ([0.0] if ys[0] == 0.0 else [0.0, *ys])]
            verts = [v for i, v in enumerate(verts) if i == 0 or v != verts[i - 1]]
            targets = [complex(x, y) for y in ys]
            if len(verts) < 2:
                rows += [(float(x), 0.0, 0.0)] if ys[0] == 0.0 else []
                continue
            try:
                fp = transport_frame(model, PathSpec(tuple(verts)), tol=1e-9, carry_frame=False)
            except NumericalFailure:
                rows += [(float(x), float(t.imag), float("nan")) for t in targets]
                continue
            zs = np.array([s.z for s in fp.samples])
            for t in targets:
                i = int(np.argmin(np.abs(zs - t)))
                if abs(zs[i] - t) > 1e-9:
                    rows.append((float(x), float(t.imag), float("nan")))
                    continue
                ph = fp.samples[i].phases
                rows.append((float(x), float(t.imag), float((ph[j] - ph[k]).imag)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


__all__ = [
    "char_poly_coefficients", "sylvester_matrix", "discriminant",
    "Region", "DegeneracyPoint", "DegeneracyScan", "scan_degeneracies", "find_degeneracies", "degeneracies_of",
    "loop_eigenvalue_integral", "decay_rate", "collapsed_loop_integral", "two_level_gamma",
    "DissipativeReport", "check_dissipative", "dissipative_side", "construct_candidate_path",
    "DissipativeDomain", "dissipative_domain", "enclosing_loop",
    "level_line_samples",
]
