"""Simple-spectrum eigendecompositions, spectral projectors and the transport generator.

Everything here works on small dense complex matrices (n up to about a dozen)
and is called at every integrator stage, so the helpers avoid building the
n rank-one projectors unless a caller asks for them.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DegenerateSpectrum, DimensionMismatch, NonConvergence

DEFECTIVE_OVERLAP = 1e-12
GAP_REL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class SpectralFrame:
    """Eigen-data of H at one point.

    ``right[:, j]`` is the unit right eigenvector of ``eigenvalues[j]`` in the
    fixed phase convention, ``dual[j, :]`` the matching row of ``right``'s
    inverse, so ``P_j = right[:, j] ⊗ dual[j, :]``.
    """

    point: complex
    eigenvalues: np.ndarray
    right: np.ndarray
    dual: np.ndarray
    min_gap: float

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def left(self) -> np.ndarray:
        """Left eigenvectors as columns, normalized so that <l_j|r_j> = 1."""
        return self.dual.conj().T

    @cached_property
    def projectors(self) -> np.ndarray:
        return np.einsum("ij,jk->jik", self.right, self.dual)

    def projector(self, j: int) -> np.ndarray:
        return np.outer(self.right[:, j], self.dual[j, :])

    def permuted(self, order: Sequence[int]) -> "SpectralFrame":
        """Frame whose label j is this frame's label ``order[j]``."""
        idx = np.asarray(order, dtype=int)
        return SpectralFrame(
            point=self.point,
            eigenvalues=self.eigenvalues[idx],
            right=self.right[:, idx],
            dual=self.dual[idx, :],
            min_gap=self.min_gap,
        )


def _label_order(w: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.all(np.abs(w.imag) <= 1e-10 * scale):
        return np.argsort(w.real, kind="stable")
    return np.lexsort((w.imag, w.real))


def phase_normalize(vectors: np.ndarray) -> np.ndarray:
    """Unit columns whose first non-negligible component is real positive."""
    out = vectors / np.linalg.norm(vectors, axis=0)
    mags = np.abs(out)
    for j in range(out.shape[1]):
        k = int(np.argmax(mags[:, j] > 1e-12 * mags[:, j].max()))
        out[:, j] *= mags[k, j] / out[k, j]
    return out


def min_gap_of(w: np.ndarray) -> float:
    if w.shape[0] < 2:
        return float("inf")
    diff = np.abs(w[:, None] - w[None, :])
    np.fill_diagonal(diff, np.inf)
    return float(diff.min())


def eig_simple(H, gap_tol: float | None = None, point: complex = 0j) -> SpectralFrame:
    """Diagonalize H, refusing repeated or effectively defective eigenvalues."""
    A = np.asarray(H, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] < 2:
        raise DimensionMismatch("dimension must be at least 2")
    if not np.all(np.isfinite(A)):
        raise NonConvergence(f"non-finite matrix entries at z={point}")
    if gap_tol is None:
        gap_tol = GAP_REL_TOL * float(np.linalg.norm(A))

    try:
        w, vl, vr = scipy.linalg.eig(A, left=True, right=True, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NonConvergence(f"eigen-solver failed at z={point}: {exc}") from exc

    order = _label_order(w)
    w, vl, vr = w[order], vl[:, order], vr[:, order]

    gap = min_gap_of(w)
    if gap <= gap_tol or gap == 0.0:
        raise DegenerateSpectrum(
            f"min eigenvalue gap {gap:.3e} below tolerance {gap_tol:.3e} at z={point}",
            min_gap=gap, point=point,
        )

    right = phase_normalize(vr)
    overlaps = np.abs(np.einsum("ij,ij->j", vl.conj(), right))
    if np.any(overlaps < DEFECTIVE_OVERLAP):
        raise DegenerateSpectrum(
            f"effectively defective eigenvector pair at z={point}", min_gap=gap, point=point
        )
    try:
        dual = np.linalg.inv(right)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSpectrum(f"singular eigenvector matrix at z={point}", gap, point) from exc

    return SpectralFrame(point=complex(point), eigenvalues=w, right=right, dual=dual, min_gap=gap)


def _inverse_gaps(w: np.ndarray) -> np.ndarray:
    diff = w[:, None] - w[None, :]
    np.fill_diagonal(diff, 1.0)
    G = 1.0 / diff
    np.fill_diagonal(G, 0.0)
    return G


def eigen_coordinates(frame: SpectralFrame, M) -> np.ndarray:
    """Matrix elements B_jk = <l_j| M |r_k>."""
    return frame.dual @ np.asarray(M, dtype=complex) @ frame.right


def eigenvalue_derivatives(frame: SpectralFrame, Hprime) -> np.ndarray:
    return np.einsum("ij,ji->i", frame.dual, np.asarray(Hprime, dtype=complex) @ frame.right)


def projector_derivative(H, Hprime, frame: SpectralFrame) -> list[np.ndarray]:
    """P_j' = sum_{k != j} (P_k H' P_j + P_j H' P_k) / (e_j - e_k)."""
    Hp = np.asarray(Hprime, dtype=complex)
    if Hp.shape != (frame.dim, frame.dim) or np.shape(H) != Hp.shape:
        raise DimensionMismatch("H, H' and frame dimensions differ")
    B = eigen_coordinates(frame, Hp)
    G = _inverse_gaps(frame.eigenvalues)
    n = frame.dim
    derivs = []
    for j in range(n):
        M = np.zeros((n, n), dtype=complex)
        M[:, j] = B[:, j] * G[j, :]
        M[j, :] += B[j, :] * G[j, :]
        derivs.append(frame.right @ M @ frame.dual)
    return derivs


def k_matrix(frame: SpectralFrame, derivs: Sequence[np.ndarray]) -> np.ndarray:
    """K = sum_j P_j' P_j."""
    if len(derivs) != frame.dim:
        raise DimensionMismatch(f"{len(derivs)} projector derivatives for a {frame.dim}-level frame")
    K = np.zeros((frame.dim, frame.dim), dtype=complex)
    for j, dP in enumerate(derivs):
        if np.shape(dP) != (frame.dim, frame.dim):
            raise DimensionMismatch("projector derivative has the wrong shape")
        K += dP @ frame.projector(j)
    return K


def transport_generator(frame: SpectralFrame, Hprime) -> np.ndarray:
    """K without forming the projectors: in eigen-coordinates K_kj = B_kj / (e_j - e_k)."""
    B = eigen_coordinates(frame, Hprime)
    M = B * _inverse_gaps(frame.eigenvalues).T
    return frame.right @ M @ frame.dual


def frame_residuals(H, frame: SpectralFrame) -> dict[str, float]:
    A = np.asarray(H, dtype=complex)
    P = frame.projectors
    n = frame.dim
    eye = np.eye(n)
    completeness = float(np.linalg.norm(P.sum(axis=0) - eye))
    products = 0.0
    for j in range(n):
        for k in range(n):
            target = P[j] if j == k else 0.0
            products = max(products, float(np.linalg.norm(P[j] @ P[k] - target)))
    resolution = float(np.linalg.norm(A - np.einsum("j,jik->ik", frame.eigenvalues, P)))
    return {"completeness": completeness, "orthogonality": products, "resolution": resolution}


__all__ = [
    "SpectralFrame", "eig_simple", "phase_normalize", "min_gap_of",
    "eigen_coordinates", "eigenvalue_derivatives", "projector_derivative",
    "k_matrix", "transport_generator", "frame_residuals",
]
