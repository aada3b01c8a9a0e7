"""Jordan decompositions of flows and their hyperbolic type.

A flow is either the iterates of an invertible matrix ``g`` (discrete time)
or ``exp(tX)`` (continuous time).  Its elliptic, hyperbolic and unipotent
parts commute, and the hyperbolic part alone decides the Morse components
and their spectra.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg

from .errors import InputError, Overflow, Singular
from .matcore import DEFAULT_CLUSTER_TOL, as_square, eigen_blocks

Kind = Literal["discrete", "continuous"]


class IllConditionedBasis(UserWarning):
    """The basis that diagonalizes the hyperbolic part is badly conditioned."""


@dataclass(frozen=True)
class Flow:
    kind: Kind
    matrix: np.ndarray

    def __post_init__(self):
        if self.kind not in ("discrete", "continuous"):
            raise InputError(f"unknown flow kind {self.kind!r}")
        a = as_square(self.matrix)
        object.__setattr__(self, "matrix", a)
        if self.kind == "discrete":
            s = np.linalg.svd(a, compute_uv=False)
            if s[-1] <= 1e-12 * s[0]:
                raise Singular("discrete flow generator is not invertible")

    @classmethod
    def discrete(cls, g) -> "Flow":
        return cls("discrete", g)

    @classmethod
    def continuous(cls, x) -> "Flow":
        return cls("continuous", x)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_discrete(self) -> bool:
        return self.kind == "discrete"

    def at(self, t: float) -> np.ndarray:
        """The group element ``g^t``.  Discrete flows need integer ``t``."""
        if self.is_discrete:
            k = int(round(t))
            if abs(k - t) > 1e-12:
                raise InputError(f"discrete flow evaluated at non-integer time {t}")
            if k >= 0:
                return np.linalg.matrix_power(self.matrix, k)
            return np.linalg.matrix_power(np.linalg.inv(self.matrix), -k)
        if t == 0:
            return np.eye(self.n)
        return scipy.linalg.expm(t * self.matrix)

    def inverse(self) -> "Flow":
        if self.is_discrete:
            return Flow("discrete", np.linalg.inv(self.matrix))
        return Flow("continuous", -self.matrix)

    def conjugate(self, p) -> "Flow":
        """Express the flow in the basis given by the columns of ``p``."""
        p = np.asarray(p, dtype=float)
        return Flow(self.kind, np.linalg.solve(p, self.matrix @ p))


@dataclass(frozen=True)
class JordanTriple:
    """Commuting parts of a flow.

    For discrete flows ``g = elliptic @ hyperbolic @ unipotent``.  For
    continuous flows the fields hold the additive parts ``X = E + H + N``.
    """

    kind: Kind
    elliptic: np.ndarray
    hyperbolic: np.ndarray
    unipotent: np.ndarray


@dataclass(frozen=True)
class HyperbolicType:
    """Sorted, traceless eigenvalues of the hyperbolic type with block data.

    ``mu`` is descending with equal values inside each block, exactly.
    ``basis_change`` conjugates the raw hyperbolic part to
    ``diag(mu) + offset * I``.
    """

    mu: np.ndarray
    blocks: tuple[tuple[int, ...], ...]
    basis_change: np.ndarray
    offset: float = 0.0
    condition: float = 1.0

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def block_of(self) -> np.ndarray:
        out = np.empty(self.n, dtype=int)
        for b, idx in enumerate(self.blocks):
            out[list(idx)] = b
        return out

    @property
    def mu_full(self) -> np.ndarray:
        return self.mu + self.offset

    @classmethod
    def from_values(cls, values, tol: float = 1e-9) -> "HyperbolicType":
        """Build a diagonal hyperbolic type from eigenvalues in any order.

        Values closer than ``tol`` (after sorting) share a block.  The basis
        change is the permutation that sorts ``values``.
        """
        v = np.asarray(values, dtype=float)
        order = np.argsort(-v, kind="stable")
        mu, blocks, offset = _merge_sorted(v[order], np.ones(len(v), dtype=int), tol)
        return cls(mu=mu, blocks=blocks, basis_change=np.eye(len(v))[:, order], offset=offset)


def _merge_sorted(values: np.ndarray, mults: np.ndarray, tol: float):
    """Merge a descending list of (value, multiplicity) into blocks."""
    runs: list[list[int]] = []
    for k, v in enumerate(values):
        if runs and values[runs[-1][-1]] - v <= tol:
            runs[-1].append(k)
        else:
            runs.append([k])
    mu_full: list[float] = []
    blocks: list[tuple[int, ...]] = []
    pos = 0
    for run in runs:
        m = int(sum(mults[k] for k in run))
        mean = float(sum(values[k] * mults[k] for k in run) / m)
        mu_full.extend([mean] * m)
        blocks.append(tuple(range(pos, pos + m)))
        pos += m
    arr = np.array(mu_full)
    offset = float(arr.mean())
    mu = arr - offset
    # equal inside a block after the shift as well
    for b in blocks:
        mu[list(b)] = mu[b[0]]
    return mu, tuple(blocks), offset


def additive_jordan(x, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Split ``x`` into commuting semisimple and nilpotent parts."""
    a = as_square(x)
    s = eigen_blocks(a, cluster_tol).combine(lambda z: z)
    return s, a - s


def multiplicative_jordan(g, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> JordanTriple:
    a = as_square(g)
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise Singular("matrix is not invertible")
    eb = eigen_blocks(a, cluster_tol)
    s_inv = eb.combine(lambda z: 1.0 / z)
    u = s_inv @ a
    h = eb.combine(lambda z: abs(z))
    e = eb.combine(lambda z: z / abs(z))
    return JordanTriple("discrete", e, h, u)


def jordan(f: Flow, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> JordanTriple:
    """Jordan parts of either kind of flow."""
    if f.is_discrete:
        return multiplicative_jordan(f.matrix, cluster_tol)
    eb = eigen_blocks(f.matrix, cluster_tol)
    e = eb.combine(lambda z: 1j * z.imag)
    h = eb.combine(lambda z: z.real)
    n = f.matrix - e - h
    return JordanTriple("continuous", e, h, n)


def _range_basis(p: np.ndarray, rank: int) -> np.ndarray:
    u, _, _ = np.linalg.svd(p)
    return u[:, :rank]


def hyperbolic_type(f: Flow, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> HyperbolicType:
    """Hyperbolic type of ``f`` in sorted diagonal form.

    The basis change is built cluster by cluster: an orthonormal basis of
    each real generalized eigenspace, and ``(Re v, Im v)`` pairs for complex
    ones.  In that basis the elliptic part becomes a block rotation and
    every Jordan factor is block diagonal with respect to the H-blocks.
    """
    eb = eigen_blocks(f.matrix, cluster_tol)
    if f.is_discrete:
        value = lambda z: math.log(abs(z))  # noqa: E731
        tol = cluster_tol
    else:
        value = lambda z: z.real  # noqa: E731
        tol = cluster_tol * max(eb.scale, np.finfo(float).tiny)

    reps = [c for c in eb.clusters if c.is_real or c.eigenvalue.imag > 0]
    reps.sort(key=lambda c: (-value(c.eigenvalue), -c.eigenvalue.imag))
    vals = np.array([value(c.eigenvalue) for c in reps])
    mults = np.array([c.multiplicity * (1 if c.is_real else 2) for c in reps])
    mu, blocks, offset = _merge_sorted(vals, mults, tol)

    columns = []
    for c in reps:
        basis = _range_basis(c.projector, c.multiplicity)
        if c.is_real:
            columns.append(basis.real)
        else:
            pairs = np.empty((f.n, 2 * c.multiplicity))
            pairs[:, 0::2] = basis.real
            pairs[:, 1::2] = basis.imag
            columns.append(pairs * math.sqrt(2.0))
    p = np.hstack(columns)
    cond = float(np.linalg.cond(p))
    if cond > 1e6:
        warnings.warn(
            f"basis diagonalizing the hyperbolic part has condition number {cond:.3g}",
            IllConditionedBasis,
            stacklevel=2,
        )
    return HyperbolicType(mu=mu, blocks=blocks, basis_change=p, offset=offset, condition=cond)


def is_conformal(f: Flow, tol: float = 1e-7, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> bool:
    """True when the unipotent part of ``f`` is trivial."""
    jt = jordan(f, cluster_tol)
    norm = np.linalg.norm(f.matrix, 2)
    if f.is_discrete:
        return bool(np.linalg.norm(jt.unipotent - np.eye(f.n), 2) <= tol * norm)
    return bool(np.linalg.norm(jt.unipotent, 2) <= tol * norm)


def conjugated_flow(f: Flow, h: HyperbolicType) -> Flow:
    return f.conjugate(h.basis_change)


def _block_mask(h: HyperbolicType) -> np.ndarray:
    b = h.block_of
    return b[:, None] == b[None, :]


def unipotent_log(u: np.ndarray) -> np.ndarray:
    """Logarithm of a unipotent matrix (finite series)."""
    n = u.shape[0]
    d = u - np.eye(n)
    term = np.eye(n)
    out = np.zeros_like(d)
    for k in range(1, n + 1):
        term = term @ d
        out += ((-1) ** (k + 1) / k) * term
    return out


@dataclass(frozen=True)
class SortedFlow:
    """A flow written in coordinates where its hyperbolic type is diagonal.

    The flow factors as ``g^t = core^t @ diag(exp(t * mu_full))`` with
    ``core`` block diagonal (elliptic times unipotent part).  Propagating
    the two factors separately keeps exact zeros on root spaces that are
    not populated, so rounding never leaks into expanding directions.
    """

    flow: Flow
    htype: HyperbolicType
    core: np.ndarray
    mask: np.ndarray

    @property
    def n(self) -> int:
        return self.flow.n

    @property
    def kind(self) -> Kind:
        return self.flow.kind

    def core_at(self, t: float) -> np.ndarray:
        if self.flow.is_discrete:
            k = int(round(t))
            if abs(k - t) > 1e-12:
                raise InputError(f"discrete flow evaluated at non-integer time {t}")
            base = self.core if k >= 0 else np.linalg.inv(self.core)
            out = np.linalg.matrix_power(base, abs(k))
        else:
            out = scipy.linalg.expm(t * self.core) if t != 0 else np.eye(self.n)
        return np.where(self.mask, out, 0.0)

    def root_scaling(self, t: float) -> np.ndarray:
        """Entrywise factors ``exp(t (mu_a - mu_b))`` of ``Ad(exp(tH))``."""
        mu = self.htype.mu
        expo = t * (mu[:, None] - mu[None, :])
        return np.exp(np.minimum(expo, 700.0))

    def adjoint(self, y: np.ndarray, t: float, core: np.ndarray | None = None,
                core_inv: np.ndarray | None = None) -> np.ndarray:
        """``Ad(g^t) y`` evaluated factor by factor."""
        if core is None:
            core = self.core_at(t)
        if core_inv is None:
            core_inv = np.where(self.mask, np.linalg.inv(core), 0.0)
        scaled = y * self.root_scaling(t)
        if not np.all(np.isfinite(scaled)):
            raise Overflow("adjoint action overflowed; reduce the step")
        return core @ scaled @ core_inv

    def nilpotent_part(self) -> np.ndarray:
        if self.flow.is_discrete:
            return np.where(self.mask, unipotent_log(multiplicative_jordan(self.flow.matrix).unipotent), 0.0)
        return np.where(self.mask, jordan(self.flow).unipotent, 0.0)


def sorted_flow(f: Flow, cluster_tol: float = DEFAULT_CLUSTER_TOL, conjugate: bool = True) -> SortedFlow:
    """Split ``f`` into a block-diagonal core and a diagonal hyperbolic factor.

    With ``conjugate=False`` the flow is kept in its own coordinates, which
    requires its hyperbolic part to be diagonal already (blocks may then be
    non-contiguous index sets).
    """
    if conjugate:
        h = hyperbolic_type(f, cluster_tol)
        g = conjugated_flow(f, h)
        h = HyperbolicType(mu=h.mu, blocks=h.blocks, basis_change=np.eye(f.n),
                           offset=h.offset, condition=1.0)
    else:
        g = f
        h = _diagonal_type(f, cluster_tol)
    mask = _block_mask(h)
    mu_full = h.mu_full
    if g.is_discrete:
        core = g.matrix * np.exp(-mu_full)[None, :]
    else:
        core = g.matrix - np.diag(mu_full)
    return SortedFlow(flow=g, htype=h, core=np.where(mask, core, 0.0), mask=mask)


def _diagonal_type(f: Flow, cluster_tol: float) -> HyperbolicType:
    jt = jordan(f, cluster_tol)
    hyp = jt.hyperbolic
    off = hyp - np.diag(np.diag(hyp))
    if np.max(np.abs(off)) > 1e-10 * max(1.0, np.max(np.abs(hyp))):
        raise InputError("hyperbolic part is not diagonal in the given coordinates")
    d = np.diag(hyp)
    if f.is_discrete:
        if np.any(d <= 0):
            raise InputError("hyperbolic part has non-positive diagonal")
        d = np.log(d)
        tol = cluster_tol
    else:
        tol = cluster_tol * max(np.linalg.norm(f.matrix, 2), np.finfo(float).tiny)
    order = np.argsort(-d, kind="stable")
    _, sorted_blocks, _ = _merge_sorted(d[order], np.ones(f.n, dtype=int), tol)
    mu_full = np.empty(f.n)
    blocks = []
    for blk in sorted_blocks:
        idx = tuple(sorted(int(order[k]) for k in blk))
        mu_full[list(idx)] = d[list(idx)].mean()
        blocks.append(idx)
    offset = float(mu_full.mean())
    mu = mu_full - offset
    for blk in blocks:
        mu[list(blk)] = mu[blk[0]]
    return HyperbolicType(mu=mu, blocks=tuple(blocks), basis_change=np.eye(f.n), offset=offset)
