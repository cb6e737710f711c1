"""Tensor-sketch primitives: seeded pairwise-independent hashes, the
cyclic-convolution semiring, per-table sketch monomials, and norm estimates.

A length-k sketch vector holds polynomial coefficients modulo (z^k - 1).
Combining per-table monomials with cyclic convolution realizes a count
sketch of the implicit Kronecker-product row indicator; squared norms of
summed sketches estimate squared norms of the underlying vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, QueryError
from .semiring import Semiring

MERSENNE_PRIME = (1 << 61) - 1

# cyclic convolution switches from the schoolbook loop to FFT above this size
FFT_THRESHOLD = 64


def poly_mul_mod(u: np.ndarray, v: np.ndarray, method: str = "auto") -> np.ndarray:
    """Multiply coefficient vectors modulo (z^k - 1), i.e. cyclic convolution.

    ``method`` forces the schoolbook or FFT path when set to "naive" or
    "fft"; the default picks schoolbook up to k=64 and FFT beyond, with an
    exact shortcut when an operand has a single non-zero term.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 1 or v.ndim != 1 or u.shape != v.shape:
        raise DimensionError(
            f"cyclic convolution needs equal-length vectors, got {u.shape} and {v.shape}"
        )
    k = u.shape[0]
    if method == "auto":
        for a, b in ((u, v), (v, u)):
            nz = np.flatnonzero(a)
            if nz.size == 0:
                return np.zeros(k)
            if nz.size == 1:
                i = int(nz[0])
                return a[i] * np.roll(b, i)
        method = "fft" if k > FFT_THRESHOLD else "naive"
    if method == "naive":
        full = np.convolve(u, v)
        out = full[:k].copy()
        if k > 1:
            out[: k - 1] += full[k:]
        return out
    if method == "fft":
        return np.fft.irfft(np.fft.rfft(u) * np.fft.rfft(v), n=k)
    raise ValueError(f"unknown method {method!r}")


def sketch_norm_sq(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(v @ v)


def sketch_inner(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.shape} vs {v.shape}")
    return float(u @ v)


def sketch_semiring(k: int) -> Semiring:
    """Coefficient vectors under coordinatewise addition and cyclic convolution."""
    if k < 1:
        raise ValueError("sketch width must be at least 1")
    one = np.zeros(k)
    one[0] = 1.0
    return Semiring(_add_vec, poly_mul_mod, np.zeros(k), one, width=k, name=f"poly{k}")


def _add_vec(a, b):
    return a + b


@dataclass(frozen=True)
class HashFamily:
    """h(j) = ((a*j + b) mod p) mod size, with p = 2^61 - 1.

    With ``signed`` the range-2 value is mapped to {-1, +1}.  Equal
    parameters give equal functions, so seeded construction is reproducible.
    """

    a: int
    b: int
    size: int
    signed: bool = False

    def __call__(self, j: int) -> int:
        r = (self.a * int(j) + self.b) % MERSENNE_PRIME
        if self.signed:
            return 2 * int(r % 2) - 1
        return int(r % self.size)

    @classmethod
    def bucket(cls, size: int, rng) -> "HashFamily":
        a = int(rng.integers(1, MERSENNE_PRIME))
        b = int(rng.integers(0, MERSENNE_PRIME))
        return cls(a, b, size)

    @classmethod
    def sign(cls, rng) -> "HashFamily":
        a = int(rng.integers(1, MERSENNE_PRIME))
        b = int(rng.integers(0, MERSENNE_PRIME))
        return cls(a, b, 2, signed=True)


@dataclass(frozen=True)
class SketchHashes:
    """One (bucket, sign) hash pair per table, drawn from a single seed."""

    k: int
    families: tuple[tuple[HashFamily, HashFamily], ...]

    @classmethod
    def from_seed(cls, seed, n_tables: int, k: int) -> "SketchHashes":
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        fams = []
        for _ in range(n_tables):
            bucket = HashFamily.bucket(k, rng)
            sign = HashFamily.sign(rng)
            fams.append((bucket, sign))
        return cls(k, tuple(fams))


class DomainIndex:
    """Per-table index of distinct projections onto the assigned features.

    Each feature is assigned to the lowest-index table containing it; the
    distinct projected tuples are ordered lexicographically and every table
    row maps to the index of its projection.
    """

    def __init__(self, assigned, positions, domains):
        self.assigned = tuple(tuple(a) for a in assigned)
        self.positions = tuple(tuple(p) for p in positions)
        self.domains = tuple(tuple(d) for d in domains)
        self.lookup = tuple(
            {proj: i for i, proj in enumerate(domain)} for domain in self.domains
        )

    @classmethod
    def from_dataset(cls, ds) -> "DomainIndex":
        assigned, positions, domains = [], [], []
        for t_idx, table in enumerate(ds.tables):
            cols = [
                (pos, c)
                for pos, c in enumerate(table.columns)
                if ds.owner[c] == t_idx
            ]
            positions.append([pos for pos, _ in cols])
            assigned.append([c for _, c in cols])
            projected = {tuple(row[p] for p, _ in cols) for row in table.rows}
            if not projected:
                projected = {()}
            domains.append(sorted(projected))
        return cls(assigned, positions, domains)

    def size(self, t: int) -> int:
        return len(self.domains[t])

    def project(self, t: int, row) -> tuple:
        return tuple(row[p] for p in self.positions[t])

    def index_of(self, t: int, row) -> int:
        proj = self.project(t, row)
        try:
            return self.lookup[t][proj]
        except KeyError:
            raise QueryError(
                f"projection {proj!r} is not in the indexed domain of table {t}"
            ) from None


def table_factor_monomial(
    t: int, row, domain_index: DomainIndex, hashes: SketchHashes
) -> np.ndarray:
    """The signed one-hot coefficient vector for one table row.

    The row's projection index w maps to the single term
    sign_t(w) * z^(bucket_t(w)).
    """
    w = domain_index.index_of(t, row)
    bucket, sign = hashes.families[t]
    vec = np.zeros(hashes.k)
    vec[bucket(w)] = float(sign(w))
    return vec
