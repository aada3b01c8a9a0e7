"""Type A root combinatorics.

Roots of sl(n) are ordered index pairs ``(a, b)`` with root space spanned by
the unit matrix ``E_ab`` and value ``mu_a - mu_b`` on a diagonal ``H``.
Flag types are lists of subspace dimensions, Weyl elements are permutations.
Indices are 0-based throughout the library; simple roots are labelled by
the cut position ``d`` in ``1..n-1`` (the root between entries ``d`` and
``d + 1`` in 1-based counting), so ``dims`` and ``Theta`` share a label set.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyLayer, InputError
from .jordan import Flow, HyperbolicType, hyperbolic_type, is_conformal
from .matcore import DEFAULT_CLUSTER_TOL

# relative tolerance for grouping equal root values
_VALUE_TOL = 1e-9


@dataclass(frozen=True)
class FlagType:
    n: int
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if self.n < 1:
            raise InputError("flag type needs n >= 1")
        if any(b <= a for a, b in zip(dims, dims[1:])):
            raise InputError(f"dims must be strictly increasing, got {dims}")
        if dims and (dims[0] < 1 or dims[-1] > self.n - 1):
            raise InputError(f"dims must lie in 1..{self.n - 1}, got {dims}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def full(cls, n: int) -> "FlagType":
        return cls(n, tuple(range(1, n)))

    @classmethod
    def from_theta(cls, n: int, theta: Iterable[int]) -> "FlagType":
        theta = set(theta)
        if not theta <= set(range(1, n)):
            raise InputError(f"Theta must be a subset of 1..{n - 1}")
        return cls(n, tuple(d for d in range(1, n) if d not in theta))

    @property
    def theta(self) -> frozenset[int]:
        return frozenset(range(1, self.n)) - frozenset(self.dims)

    @property
    def dimension(self) -> int:
        """Dimension of the flag manifold."""
        sizes = [len(iv) for iv in theta_intervals(self)]
        return (self.n * self.n - sum(s * s for s in sizes)) // 2


@dataclass(frozen=True)
class WeylWord:
    """A permutation ``i -> perm[i]`` of ``0..n-1``."""

    perm: tuple[int, ...]

    def __post_init__(self):
        p = tuple(int(i) for i in self.perm)
        if sorted(p) != list(range(len(p))):
            raise InputError(f"{p} is not a permutation of 0..{len(p) - 1}")
        object.__setattr__(self, "perm", p)

    @classmethod
    def identity(cls, n: int) -> "WeylWord":
        return cls(tuple(range(n)))

    @classmethod
    def reversal(cls, n: int) -> "WeylWord":
        return cls(tuple(range(n - 1, -1, -1)))

    @classmethod
    def from_images(cls, images: Sequence[int]) -> "WeylWord":
        """From 1-based images ``w(1), ..., w(n)``."""
        return cls(tuple(int(i) - 1 for i in images))

    @property
    def n(self) -> int:
        return len(self.perm)

    @property
    def is_identity(self) -> bool:
        return self.perm == tuple(range(self.n))

    def __call__(self, i: int) -> int:
        return self.perm[i]

    def compose(self, other: "WeylWord") -> "WeylWord":
        """``self o other``."""
        return WeylWord(tuple(self.perm[other.perm[i]] for i in range(self.n)))

    def matrix(self) -> np.ndarray:
        """Permutation matrix with column ``i`` equal to ``e_{w(i)}``."""
        m = np.zeros((self.n, self.n))
        m[list(self.perm), list(range(self.n))] = 1.0
        return m


@dataclass(frozen=True)
class RootPair:
    i: int
    j: int
    value: float

    @property
    def pair(self) -> tuple[int, int]:
        return (self.i, self.j)


@dataclass(frozen=True)
class SpectrumPrediction:
    lambdas: tuple[float, ...]
    multiplicities: tuple[int, ...]
    root_sets: tuple[tuple[RootPair, ...], ...]
    negative: tuple[bool, ...]
    excluded_zero_pairs: int = 0
    flag_dimension: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def negative_part(self) -> tuple[float, ...]:
        return tuple(lam for lam, neg in zip(self.lambdas, self.negative) if neg)

    @property
    def negative_layers(self) -> tuple[int, ...]:
        """Indices into ``lambdas`` of the stable layers."""
        return tuple(k for k, neg in enumerate(self.negative) if neg)

    @property
    def is_empty(self) -> bool:
        return not self.lambdas


def theta_intervals(ft: FlagType) -> list[tuple[int, ...]]:
    """Consecutive index intervals obtained by cutting after each dim."""
    cuts = [0, *ft.dims, ft.n]
    return [tuple(range(a, b)) for a, b in zip(cuts, cuts[1:])]


def _interval_of(ft: FlagType) -> np.ndarray:
    out = np.empty(ft.n, dtype=int)
    for k, iv in enumerate(theta_intervals(ft)):
        out[list(iv)] = k
    return out


def _check(h: HyperbolicType, ft: FlagType, w: WeylWord):
    if not (h.n == ft.n == w.n):
        raise DimensionMismatch(f"sizes differ: H {h.n}, flag type {ft.n}, Weyl word {w.n}")


def _crossing_pairs(ft: FlagType):
    iv = _interval_of(ft)
    for i in range(ft.n):
        for j in range(i + 1, ft.n):
            if iv[i] != iv[j]:
                yield i, j


def l_roots(h: HyperbolicType, ft: FlagType, w: WeylWord) -> list[RootPair]:
    """Root pairs spanning the normal directions of the component at ``w b``."""
    _check(h, ft, w)
    blk = h.block_of
    out = []
    for i, j in _crossing_pairs(ft):
        a, b = w(j), w(i)
        if blk[a] != blk[b]:
            out.append(RootPair(a, b, float(h.mu[a] - h.mu[b])))
    return out


def _zero_pairs(h: HyperbolicType, ft: FlagType, w: WeylWord) -> int:
    blk = h.block_of
    return sum(1 for i, j in _crossing_pairs(ft) if blk[w(i)] == blk[w(j)])


def predicted_spectrum(h: HyperbolicType, ft: FlagType, w: WeylWord) -> SpectrumPrediction:
    """Distinct root values on the normal directions, largest first."""
    roots = l_roots(h, ft, w)
    blk = h.block_of
    scale = max(1.0, float(np.max(np.abs(h.mu)))) if h.n else 1.0
    roots_sorted = sorted(roots, key=lambda r: (-r.value, r.i, r.j))
    groups: list[list[RootPair]] = []
    for r in roots_sorted:
        if groups and groups[-1][-1].value - r.value <= _VALUE_TOL * scale:
            groups[-1].append(r)
        else:
            groups.append([r])
    lambdas = tuple(float(np.mean([r.value for r in g])) for g in groups)
    # blocks are numbered in descending mu, so the sign is a block comparison
    negative = tuple(blk[g[0].i] > blk[g[0].j] for g in groups)
    return SpectrumPrediction(
        lambdas=lambdas,
        multiplicities=tuple(len(g) for g in groups),
        root_sets=tuple(tuple(sorted(g, key=lambda r: r.pair)) for g in groups),
        negative=negative,
        excluded_zero_pairs=_zero_pairs(h, ft, w),
        flag_dimension=ft.dimension,
    )


def flag_spectrum(f: Flow, cluster_tol: float = DEFAULT_CLUSTER_TOL) -> tuple[float, ...]:
    """Negative spectrum of the attractor on the maximal flag manifold."""
    h = hyperbolic_type(f, cluster_tol)
    return predicted_spectrum(h, FlagType.full(f.n), WeylWord.identity(f.n)).negative_part


def sigma_h(h: HyperbolicType) -> frozenset[int]:
    """Simple roots annihilated by ``H``."""
    blk = h.block_of
    return frozenset(d for d in range(1, h.n) if blk[d - 1] == blk[d])


class Equivariance(enum.Enum):
    CONFORMAL = "ConformalCase"
    ATTRACTOR_NESTED = "AttractorNestedCase"
    NOT_GUARANTEED = "NotGuaranteed"


def equivariance_condition(f: Flow, ft: FlagType, w: WeylWord, tol: float = 1e-7,
                           cluster_tol: float = DEFAULT_CLUSTER_TOL) -> Equivariance:
    """Which hypothesis, if any, makes the linearization equivariant."""
    h = hyperbolic_type(f, cluster_tol)
    _check(h, ft, w)
    if is_conformal(f, tol, cluster_tol):
        return Equivariance.CONFORMAL
    s = sigma_h(h)
    if w.is_identity and (ft.theta <= s or s <= ft.theta):
        return Equivariance.ATTRACTOR_NESTED
    return Equivariance.NOT_GUARANTEED


def sample_stable_layer(h: HyperbolicType, ft: FlagType, w: WeylWord, layer: int,
                        magnitude: float = 1.0, rng=None) -> np.ndarray:
    """Random normal vector whose largest populated root value is ``lambdas[layer]``.

    Root pairs at the layer value get coefficients with modulus in
    ``[0.5, 1] * magnitude``; deeper pairs get ``[-1, 1] * magnitude``.
    """
    pred = predicted_spectrum(h, ft, w)
    if not (0 <= layer < len(pred.lambdas)) or not pred.negative[layer]:
        raise EmptyLayer(f"layer {layer} is not in the negative spectrum {pred.negative_part}")
    rng = np.random.default_rng(rng)
    x = np.zeros((h.n, h.n))
    for r in pred.root_sets[layer]:
        x[r.i, r.j] = rng.choice((-1.0, 1.0)) * rng.uniform(0.5, 1.0) * magnitude
    for k in range(layer + 1, len(pred.lambdas)):
        for r in pred.root_sets[k]:
            x[r.i, r.j] = rng.uniform(-1.0, 1.0) * magnitude
    return x
