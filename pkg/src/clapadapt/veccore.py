"""Vector primitives and the package's portable random number generator.

Conventions used package-wide:

* Embeddings are stored as float32; every dot product, norm, and reduction
  accumulates in float64 before results are cast back for storage.
* A vector norm below 1e-12 is treated as zero and raises ZeroNorm wherever a
  direction is required.

RNG
---
All randomness flows through `Rng`, a counter-based SplitMix64 generator
(Steele, Lea & Flood, "Fast splittable pseudorandom number generators", 2014).
The k-th raw output for a given seed is

    mix64((seed + (k + 1) * GAMMA) mod 2**64)

where GAMMA = 0x9E3779B97F4A7C15 and mix64 is the standard finalizer
(xor-shift 30, multiply 0xBF58476D1CE4E5B9, xor-shift 27, multiply
0x94D049BB133111EB, xor-shift 31). Because outputs are a pure function of
(seed, counter), the stream is identical across platforms and processes,
vectorizes into numpy uint64, and supports O(1) skipping. Child streams are
derived by `split(key)`: child_seed = mix64(seed XOR fnv1a64(key)).
Platform default generators are deliberately not used anywhere.

Uniform doubles take the top 53 bits: (x >> 11) * 2**-53, giving [0, 1).
Gaussians use Box-Muller on uniform pairs. Bounded integers use unbiased
rejection sampling. Shuffles are Fisher-Yates over `below`.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyBatch,
    NonFiniteInput,
    ZeroNorm,
)

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

NORM_FLOOR = 1e-12


def mix64(x: int) -> int:
    """SplitMix64 output finalizer on a python int, mod 2**64."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & MASK64
    return x ^ (x >> 31)


def fnv1a64(data: bytes | str) -> int:
    """FNV-1a 64-bit hash; strings are hashed as UTF-8."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


class Rng:
    """Counter-based SplitMix64 stream; see module docstring for the contract.

    Scalar draws and vectorized draws read the same counter sequence, so
    `[rng.next_u64() for _ in range(n)]` equals `rng.raw(n).tolist()` for a
    fresh clone.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & MASK64
        self.counter = int(counter)

    def clone(self) -> "Rng":
        return Rng(self.seed, self.counter)

    def split(self, key: str) -> "Rng":
        """Derive an independent child stream from a string key."""
        return Rng(mix64(self.seed ^ fnv1a64(key)))

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.seed + self.counter * GAMMA) & MASK64)

    def raw(self, n: int) -> np.ndarray:
        """Next n raw outputs as uint64, advancing the counter by n."""
        if n < 0:
            raise ValueError("n must be >= 0")
        ks = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        state = np.uint64(self.seed) + ks * np.uint64(GAMMA)  # wraps mod 2**64
        z = (state ^ (state >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def uniform(self, n: int | None = None):
        """Doubles in [0, 1): scalar when n is None, else an array of n."""
        if n is None:
            return (self.next_u64() >> 11) * 2.0**-53
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """n standard-normal draws via Box-Muller, scaled to (mean, std).

        Layout is fixed: m = ceil(n/2) radius/angle pairs produce
        [r*cos..., r*sin...] truncated to n, so the stream is reproducible.
        """
        if n < 0:
            raise ValueError("n must be >= 0")
        if n == 0:
            return np.zeros(0, dtype=np.float64)
        m = (n + 1) // 2
        u = self.uniform(2 * m)
        u1 = 1.0 - u[:m]  # (0, 1], keeps log finite
        u2 = u[m:]
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z * std + mean

    def below(self, bound: int) -> int:
        """Unbiased integer in [0, bound) via rejection sampling."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (MASK64 + 1) - ((MASK64 + 1) % bound)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % bound

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n) as int64."""
        idx = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return np.asarray(idx, dtype=np.int64)

    def sample(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), partial Fisher-Yates order."""
        if k > n:
            raise ValueError(f"cannot sample {k} from {n}")
        idx = list(range(n))
        out = []
        for i in range(k):
            j = i + self.below(n - i)
            idx[i], idx[j] = idx[j], idx[i]
            out.append(idx[i])
        return out


# vector primitives


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteInput(f"{what} contains non-finite entries")


def as_matrix(values, what: str = "embeddings") -> np.ndarray:
    """Coerce to a finite 2-D float32 array of shape (n, dim)."""
    a = np.asarray(values, dtype=np.float32)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionMismatch(f"{what}: expected 2-D array, got ndim={a.ndim}")
    if a.size == 0:
        raise EmptyBatch(f"{what}: empty array")
    _check_finite(a, what)
    return a


def l2_norm(v) -> float:
    """Euclidean norm with float64 accumulation."""
    a = np.asarray(v, dtype=np.float64).ravel()
    return float(np.sqrt(np.dot(a, a)))


def l2_normalize(v) -> np.ndarray:
    """Unit-normalize a vector (1-D) or each row of a matrix (2-D).

    Returns float32. Raises ZeroNorm naming the offending row when a norm
    falls below the 1e-12 floor.
    """
    a = np.asarray(v, dtype=np.float64)
    if a.ndim == 1:
        n = np.sqrt(np.dot(a, a))
        if n <= NORM_FLOOR:
            raise ZeroNorm(f"norm {n:.3e} below floor")
        return (a / n).astype(np.float32)
    if a.ndim != 2:
        raise DimensionMismatch(f"expected 1-D or 2-D input, got ndim={a.ndim}")
    norms = np.sqrt(np.einsum("ij,ij->i", a, a))
    bad = np.where(norms <= NORM_FLOOR)[0]
    if bad.size:
        raise ZeroNorm(f"row {bad[0]} norm {norms[bad[0]]:.3e} below floor")
    return (a / norms[:, None]).astype(np.float32)


def cosine_sim(u, v) -> float:
    """Cosine similarity of two vectors, clipped into [-1, 1]."""
    a = np.asarray(u, dtype=np.float64).ravel()
    b = np.asarray(v, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"cosine_sim: {a.shape} vs {b.shape}")
    na = np.sqrt(np.dot(a, a))
    nb = np.sqrt(np.dot(b, b))
    if na <= NORM_FLOOR or nb <= NORM_FLOOR:
        raise ZeroNorm("cosine_sim of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def affine_forward(weights, bias, x) -> np.ndarray:
    """W @ x + b with float64 accumulation, returned as float32.

    weights has shape (out_dim, in_dim), bias (out_dim,), x (in_dim,).
    """
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    xv = np.asarray(x, dtype=np.float64).ravel()
    if w.ndim != 2:
        raise DimensionMismatch(f"weights must be 2-D, got ndim={w.ndim}")
    if b.shape != (w.shape[0],):
        raise DimensionMismatch(f"bias shape {b.shape} vs out_dim {w.shape[0]}")
    if xv.shape != (w.shape[1],):
        raise DimensionMismatch(f"input shape {xv.shape} vs in_dim {w.shape[1]}")
    _check_finite(w, "weights")
    _check_finite(b, "bias")
    _check_finite(xv, "input")
    return (w @ xv + b).astype(np.float32)
