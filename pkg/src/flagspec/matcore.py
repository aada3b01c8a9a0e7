"""Dense real linear algebra kernel.

Everything downstream (Jordan factors, flag actions, distances) goes through
these few routines.  Matrices are plain ``numpy`` arrays; :func:`as_square`
is the single validation gate.

Spectral projectors are obtained from a complex Schur form whose diagonal is
reordered cluster by cluster and then block-diagonalized with Sylvester
solves.  That is more robust than inverting an eigenvector matrix when an
eigenvalue is defective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    InvalidMatrix,
    NonConvergence,
    NotPositiveDiagonalizable,
    NotSymmetric,
    RankDeficient,
)

DEFAULT_CLUSTER_TOL = 1e-6


def as_square(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite square float array or raise InvalidMatrix."""
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidMatrix(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidMatrix(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class EigenCluster:
    eigenvalue: complex
    multiplicity: int
    projector: np.ndarray

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.projector)


@dataclass(frozen=True)
class EigenBlocks:
    """Clustered spectral decomposition ``m = sum_i (lambda_i P_i + N_i)``."""

    clusters: list[EigenCluster]
    basis: np.ndarray
    scale: float = field(default=1.0)

    def combine(self, fn) -> np.ndarray:
        """Return ``sum_i fn(lambda_i) P_i`` as a real matrix.

        ``fn`` must commute with complex conjugation for the result to be
        real, which holds for every function used in this package.
        """
        n = self.basis.shape[0]
        acc = np.zeros((n, n), dtype=complex)
        for c in self.clusters:
            acc += fn(c.eigenvalue) * c.projector
        return acc.real.copy()


def _single_linkage(values: np.ndarray, tol: float) -> list[list[int]]:
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def eigen_blocks(m, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> EigenBlocks:
    """Cluster the spectrum of a real matrix and return spectral projectors.

    Eigenvalues closer than ``cluster_tol * ||m||_2`` are merged by single
    linkage.  For each cluster the projector onto its generalized eigenspace
    along the others is returned; conjugate clusters get exactly conjugate
    projectors and real clusters get real ones.
    """
    a = as_square(m)
    n = a.shape[0]
    scale = float(np.linalg.norm(a, 2))
    try:
        T, Z = scipy.linalg.schur(a.astype(complex), output="complex")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NonConvergence(f"Schur iteration failed: {exc}") from exc

    eig = np.diag(T).copy()
    groups = _single_linkage(eig, cluster_tol * scale)
    centers = np.array([eig[g].mean() for g in groups])
    sizes = [len(g) for g in groups]
    order = sorted(range(len(groups)), key=lambda k: (-centers[k].real, -centers[k].imag))
    centers = centers[order]
    sizes = [sizes[k] for k in order]

    # move each cluster, in turn, to the top of the trailing triangular block
    start = 0
    for k, size in enumerate(sizes):
        if start + size < n:
            remaining = centers[k:]

            def select(z, _k=k, _rem=remaining):
                return int(np.argmin(np.abs(_rem - z))) == 0

            try:
                Ts, Qs, sdim = scipy.linalg.schur(T[start:, start:], output="complex", sort=select)
            except (np.linalg.LinAlgError, ValueError) as exc:
                raise NonConvergence(f"Schur reordering failed: {exc}") from exc
            if sdim != size:
                raise NonConvergence(
                    f"cluster {k} reordered {sdim} eigenvalues, expected {size}; "
                    "try a different cluster_tol"
                )
            T[start:, start:] = Ts
            T[:start, start:] = T[:start, start:] @ Qs
            Z[:, start:] = Z[:, start:] @ Qs
        start += size

    # decouple the blocks:  T_aa X - X T_bb = -T_ab
    bounds = np.cumsum([0] + sizes)
    Y = np.eye(n, dtype=complex)
    for k in range(len(sizes) - 1):
        a0, a1 = bounds[k], bounds[k + 1]
        X = scipy.linalg.solve_sylvester(T[a0:a1, a0:a1], -T[a1:, a1:], -T[a0:a1, a1:])
        if not np.all(np.isfinite(X)):
            raise NonConvergence("Sylvester solve produced non-finite values")
        Y[:, a1:] += Y[:, a0:a1] @ X
        T[a0:a1, a1:] = 0.0
    V = Z @ Y
    Vinv = np.linalg.inv(Y) @ Z.conj().T

    projectors = [V[:, bounds[k]:bounds[k + 1]] @ Vinv[bounds[k]:bounds[k + 1], :] for k in range(len(sizes))]

    # enforce conjugation symmetry of the real input exactly
    partner = [int(np.argmin(np.abs(centers - np.conj(c)))) for c in centers]
    clusters: list[EigenCluster | None] = [None] * len(sizes)
    for k in range(len(sizes)):
        j = partner[k]
        if partner[j] != k or sizes[j] != sizes[k]:
            raise NonConvergence("eigenvalue clusters are not closed under conjugation")
        if j == k:
            clusters[k] = EigenCluster(complex(centers[k].real, 0.0), sizes[k], projectors[k].real.copy())
        elif centers[k].imag > 0:
            P = 0.5 * (projectors[k] + projectors[j].conj())
            c = complex(0.5 * (centers[k] + np.conj(centers[j])))
            clusters[k] = EigenCluster(c, sizes[k], P)
            clusters[j] = EigenCluster(c.conjugate(), sizes[j], P.conj())
    return EigenBlocks(clusters=[c for c in clusters if c is not None], basis=V, scale=scale)


def sym_eig(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix with descending eigenvalues."""
    a = as_square(m)
    if np.max(np.abs(a - a.T)) > 1e-10 * max(1.0, np.max(np.abs(a))):
        raise NotSymmetric("matrix is not symmetric")
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return w[::-1].copy(), v[:, ::-1].copy()


def orthonormalize_nested(frame, dims: Sequence[int]) -> np.ndarray:
    """Orthonormalize columns keeping every leading span listed in ``dims``.

    This is QR with the sign of ``diag(R)`` fixed positive, so the map is a
    projection: applying it to its own output returns the output.
    """
    f = np.asarray(frame, dtype=float)
    q, r = np.linalg.qr(f)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    threshold = 1e-12 * np.linalg.norm(f, 2)
    for d in dims:
        smin = np.linalg.svd(r[:d, :d], compute_uv=False)[-1]
        if smin <= threshold:
            raise RankDeficient(f"leading {d} columns are numerically rank deficient")
    return q * signs


def mat_exp(m, t: float = 1.0) -> np.ndarray:
    a = as_square(m)
    if t == 0:
        return np.eye(a.shape[0])
    return scipy.linalg.expm(t * a)


def mat_log_positive(m, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> np.ndarray:
    """Real logarithm of a diagonalizable matrix with positive spectrum."""
    a = as_square(m)
    eb = eigen_blocks(a, cluster_tol)
    scale = max(eb.scale, np.finfo(float).tiny)
    for c in eb.clusters:
        lam = c.eigenvalue
        if abs(lam.imag) > 1e-8 * scale or lam.real <= 0:
            raise NotPositiveDiagonalizable(f"eigenvalue {lam} is not positive real")
        resid = (a - lam.real * np.eye(a.shape[0])) @ c.projector
        if np.linalg.norm(resid) > 1e-7 * scale:
            raise NotPositiveDiagonalizable("matrix is not diagonalizable")
    return eb.combine(lambda z: np.log(z.real))
