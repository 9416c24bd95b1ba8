"""Indefinite-metric normalisation and S-matrix symmetry checks.

Two-channel conventions: the generator is [[0, I], [U, 0]] with eigenvectors
(u_j, +-k_j u_j), metric J = [[0, I], [I, 0]] and G = diag(I, -I).  Reported
S-matrices for two-channel models use (+ block first) ordering.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, DivisionGuard, NullVector
from .spectral import SpectralFrame

log = logging.getLogger(__name__)

NULL_TOL = 1e-10
BUDGET_FACTOR = 50.0


@dataclass(frozen=True, eq=False)
class MetricData:
    J: np.ndarray
    signs: np.ndarray
    vectors: np.ndarray
    scales: np.ndarray

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.signs)

    def gram(self) -> np.ndarray:
        return self.vectors.conj().T @ self.J @ self.vectors


def j_normalize(frame: SpectralFrame, J=None) -> MetricData:
    """Rescale each eigenvector so that (phi_j, phi_j)_J = +-1."""
    n = frame.dim
    J = np.eye(n, dtype=complex) if J is None else np.asarray(J, dtype=complex)
    if J.shape != (n, n):
        raise DimensionMismatch(f"metric of shape {J.shape} for a {n}-level frame")
    V = frame.right
    norms = np.einsum("ij,ik,kj->j", V.conj(), J, V)
    Jn = float(np.linalg.norm(J, 2))
    for j, q in enumerate(norms):
        if abs(q) <= NULL_TOL * float(np.linalg.norm(V[:, j])) ** 2 * Jn:
            raise NullVector(f"eigenvector {j + 1} has vanishing J-norm ({abs(q):.2e})")
    signs = np.sign(norms.real)
    scales = 1.0 / np.sqrt(np.abs(norms))
    return MetricData(J=J, signs=signs, vectors=V * scales, scales=scales)


def verify_s_unitarity(S, metric: MetricData | None = None) -> float:
    """||S* R S - R||_2."""
    S = np.asarray(S, dtype=complex)
    R = np.eye(S.shape[0]) if metric is None else metric.R
    if S.shape != R.shape:
        raise DimensionMismatch(f"S of shape {S.shape} against metric of size {R.shape[0]}")
    return float(np.linalg.norm(S.conj().T @ R @ S - R, 2))


def budget(ode_tol: float, tail_estimate: float, span: float = 1.0) -> float:
    return BUDGET_FACTOR * (ode_tol * span + tail_estimate)


# ===== two-channel block structure =====
def block_order_permutation(m: int) -> list[int]:
    """Ascending labels (-k_m..-k_1, k_1..k_m) to (k_1..k_m, -k_1..-k_m)."""
    return list(range(m, 2 * m)) + list(range(m - 1, -1, -1))


def reorder(S, perm: Sequence[int]) -> np.ndarray:
    idx = np.asarray(perm)
    return np.asarray(S)[np.ix_(idx, idx)]


def blocks(S, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    S = np.asarray(S, dtype=complex)
    if S.shape != (2 * m, 2 * m):
        raise DimensionMismatch(f"expected a {2 * m}x{2 * m} S-matrix, got {S.shape}")
    return S[:m, :m], S[:m, m:], S[m:, :m], S[m:, m:]


def verify_block_symmetries(S, m: int) -> dict[str, float]:
    """Residuals of the real-potential block identities for S in (+ block first) order."""
    Spp, Spm, Smp, Smm = blocks(S, m)
    eye = np.eye(m)
    return {
        "pp_conj_mm": float(np.linalg.norm(Spp - Smm.conj(), 2)),
        "pm_conj_mp": float(np.linalg.norm(Spm - Smp.conj(), 2)),
        "pp_unitarity": float(np.linalg.norm(Spp @ Spp.conj().T - Spm @ Spm.conj().T - eye, 2)),
        "pm_orthogonality": float(np.linalg.norm(Spp @ Smp.conj().T - Spm @ Smm.conj().T, 2)),
        "symmetric_product": float(np.linalg.norm(Spp @ Spm.T - (Spp @ Spm.T).T, 2)),
    }


def g_symmetry_residuals(model, ts: Sequence[float] = tuple(np.linspace(-10, 10, 41))) -> dict[str, float]:
    """max ||G H G + H|| and max ||conj(H) - H|| over real points."""
    m = model.block_size
    if m is None:
        raise DimensionMismatch("G-symmetry needs a two-channel model")
    G = np.diag([1.0] * m + [-1.0] * m)
    anti, real = 0.0, 0.0
    for t in ts:
        H = model.H(t)
        anti = max(anti, float(np.linalg.norm(G @ H @ G + H)))
        real = max(real, float(np.linalg.norm(H.conj() - H)))
    return {"GHG_plus_H": anti, "conj_H_minus_H": real}


# ===== derived elements =====
def adjacent_relation(S, a: int, derive: str = "lower",
                      predicted: Mapping[tuple[int, int], complex] | None = None) -> dict:
    """Element of the pair (a, a+1) derived from the other three by near-unitarity.

    ``derive="lower"`` uses column orthogonality,
    s_{a+1,a} = -s_aa conj(s_{a,a+1}) / conj(s_{a+1,a+1});
    ``derive="upper"`` uses row orthogonality,
    s_{a,a+1} = -s_aa conj(s_{a+1,a}) / conj(s_{a+1,a+1}).

    When ``predicted`` holds the off-diagonal input element (0-based (row, col)
    of ``S``), the same expression is also evaluated on the predicted value and
    compared with the direct element.
    """
    S = np.asarray(S, dtype=complex)
    b = a + 1
    if abs(S[b, b]) < 0.5:
        raise DivisionGuard(f"|s_{b + 1}{b + 1}| = {abs(S[b, b]):.3g} is below 0.5")
    if derive == "lower":
        row, col, source = b, a, (a, b)
    elif derive == "upper":
        row, col, source = a, b, (b, a)
    else:
        raise ValueError(f"derive must be 'lower' or 'upper', not {derive!r}")

    def derive_from(other: complex) -> complex:
        return complex(-S[a, a] * np.conj(other) / np.conj(S[b, b]))

    derived = derive_from(S[source])
    direct = complex(S[row, col])
    scale = abs(direct)
    rec = {
        "element": [row + 1, col + 1],
        "direct": [direct.real, direct.imag],
        "derived": [derived.real, derived.imag],
        "relative_residual": float(abs(direct - derived) / scale) if scale > 0 else float(abs(derived)),
    }
    if predicted is not None and source in predicted:
        guess = complex(predicted[source])
        from_guess = derive_from(guess)
        rec["predicted_input"] = [guess.real, guess.imag]
        rec["derived_from_prediction"] = [from_guess.real, from_guess.imag]
        # moduli only: the phase of a prediction depends on the frame gauge
        rec["prediction_ratio"] = abs(from_guess) / scale if scale > 0 else float("nan")
    return rec


def derived_elements(S, m: int | None = None, pairs: Sequence[int] = (0,),
                     predicted: Mapping[tuple[int, int], complex] | None = None) -> list[dict]:
    """Derived exponentially small elements with agreement against the direct values.

    For an n-level S the lower element of each adjacent pair in ``pairs`` is
    derived; for a two-channel S (``m`` given, + block first) the upper
    element inside the ++ block. ``predicted`` maps 0-based (row, col) of the
    n-level S to asymptotic values used as the relation's input.
    """
    S = np.asarray(S, dtype=complex)
    if m is not None:
        Spp = blocks(S, m)[0]
        out = [adjacent_relation(Spp, a, derive="upper") for a in pairs if a + 1 < m]
        for rec in out:
            rec["block"] = "++"
        return out
    return [adjacent_relation(S, a, predicted=predicted) for a in pairs if a + 1 < S.shape[0]]


__all__ = [
    "MetricData", "j_normalize", "verify_s_unitarity", "budget",
    "block_order_permutation", "reorder", "blocks", "verify_block_symmetries",
    "g_symmetry_residuals", "adjacent_relation", "derived_elements",
]
