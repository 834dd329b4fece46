"""Samplers and unbiased decoders for every mechanism.

Randomness comes from counter-based Philox streams keyed by
``(seed, stream)``, so a given key reproduces its draws bit for bit no matter
how work is scheduled.  Batch functions take arrays of shape ``(..., d)`` and
a :class:`numpy.random.Generator`; the ``*_encode`` wrappers act on a single
vector and return an :class:`EncodedVector`.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Callable, Iterable, Iterator, TextIO

import numpy as np

from discrete_fdp.mechanisms import SqkrParams


@dataclasses.dataclass(frozen=True)
class RandomSeed:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed < 2**64 and 0 <= self.stream < 2**64):
            raise ValueError("seed and stream must be 64-bit unsigned integers")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed | (self.stream << 64)))


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, RandomSeed):
        return seed.generator()
    return RandomSeed(int(seed)).generator()


@dataclasses.dataclass
class EncodedVector:
    """What a user would transmit, plus its bit cost.

    ``indices`` lists coordinates that carry a symbol; ``symbols`` holds the
    matching integer or real payload.  Dense mechanisms list every coordinate.
    """

    mechanism: str
    dim: int
    indices: np.ndarray
    symbols: np.ndarray
    bit_cost: float
    meta: dict = dataclasses.field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "mechanism": self.mechanism,
            "dim": self.dim,
            "indices": np.asarray(self.indices).tolist(),
            "symbols": np.asarray(self.symbols).tolist(),
            "bit_cost": self.bit_cost,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EncodedVector":
        return cls(
            obj["mechanism"],
            int(obj["dim"]),
            np.asarray(obj["indices"], dtype=np.int64),
            np.asarray(obj["symbols"]),
            float(obj["bit_cost"]),
            dict(obj.get("meta", {})),
        )


def write_jsonl(encoded: Iterable[EncodedVector], out: TextIO) -> None:
    for enc in encoded:
        out.write(json.dumps(enc.to_json()) + "\n")


def read_jsonl(src: TextIO) -> Iterator[EncodedVector]:
    for line in src:
        if line.strip():
            yield EncodedVector.from_json(json.loads(line))


def _check_bound(x: np.ndarray, c: float) -> None:
    if np.any(np.abs(x) > c * (1 + 1e-12)):
        raise ValueError(f"input exceeds the magnitude bound c={c}")


# ---------------------------------------------------------------------------
# Sign-type compressors


def ternary_symbols(x, A: float, B: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ternary(x, A, B) elementwise: +1 w.p. (A+x)/2B, -1 w.p. (A-x)/2B, else 0."""
    x = np.asarray(x, dtype=float)
    if not B >= A > 0:
        raise ValueError("need B >= A > 0")
    if np.any(np.abs(x) > A):
        raise ValueError("ternary input must satisfy |x| <= A")
    u = rng.random(x.shape)
    p_plus = (A + x) / (2.0 * B)
    p_minus = (A - x) / (2.0 * B)
    out = np.zeros(x.shape, dtype=np.int8)
    out[u < p_plus] = 1
    out[(u >= p_plus) & (u < p_plus + p_minus)] = -1
    return out


def sto_sign_symbols(x, A: float, rng: np.random.Generator) -> np.ndarray:
    return ternary_symbols(x, A, A, rng)


def cldp_symbols(x, eps: float, c: float, rng: np.random.Generator) -> np.ndarray:
    """+1 w.p. 1/2 + (x/2c) tanh(eps/2), -1 otherwise."""
    x = np.asarray(x, dtype=float)
    _check_bound(x, c)
    p_plus = 0.5 + x / (2.0 * c) * math.tanh(eps / 2.0)
    return np.where(rng.random(x.shape) < p_plus, 1, -1).astype(np.int8)


def ternarize_symbols(x, B: float, rng: np.random.Generator) -> np.ndarray:
    """sign(x) w.p. |x|/B, else 0; sign(0) is taken as +1."""
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > B):
        raise ValueError("ternarize input must satisfy |x| <= B")
    sign = np.where(x < 0, -1, 1).astype(np.int8)
    keep = rng.random(x.shape) < np.abs(x) / B
    return np.where(keep, sign, 0).astype(np.int8)


def _sparse(mechanism: str, symbols: np.ndarray, bits_per_nonzero: float, meta: dict) -> EncodedVector:
    idx = np.flatnonzero(symbols)
    return EncodedVector(mechanism, symbols.size, idx, symbols[idx], bits_per_nonzero * idx.size, meta)


def _dense_from_sparse(enc: EncodedVector, scale: float) -> np.ndarray:
    out = np.zeros(enc.dim)
    out[np.asarray(enc.indices, dtype=np.int64)] = scale * np.asarray(enc.symbols, dtype=float)
    return out


def ternary_encode(x, A: float, B: float, c: float, seed) -> EncodedVector:
    x = np.asarray(x, dtype=float)
    if not B >= A > c:
        raise ValueError("need B >= A > c")
    _check_bound(x, c)
    sym = ternary_symbols(x, A, B, _rng(seed))
    return _sparse("ternary", sym, math.log2(x.size) + 1.0, {"A": A, "B": B})


def ternary_decode(enc: EncodedVector, B: float) -> np.ndarray:
    return _dense_from_sparse(enc, B)


def sto_sign_encode(x, A: float, c: float, seed) -> EncodedVector:
    x = np.asarray(x, dtype=float)
    if not A > c:
        raise ValueError("need A > c")
    _check_bound(x, c)
    sym = sto_sign_symbols(x, A, _rng(seed))
    return EncodedVector("sto-sign", x.size, np.arange(x.size), sym, float(x.size), {"A": A})


def sto_sign_decode(enc: EncodedVector, A: float) -> np.ndarray:
    return _dense_from_sparse(enc, A)


def cldp_encode(x, eps: float, c: float, seed) -> EncodedVector:
    x = np.asarray(x, dtype=float)
    sym = cldp_symbols(x, eps, c, _rng(seed))
    return EncodedVector("cldp", x.size, np.arange(x.size), sym, float(x.size), {"eps": eps, "c": c})


def cldp_decode(enc: EncodedVector, eps: float, c: float) -> np.ndarray:
    return _dense_from_sparse(enc, c / math.tanh(eps / 2.0))


def ternarize_encode(x, B: float, c: float, seed) -> EncodedVector:
    x = np.asarray(x, dtype=float)
    if not B > c:
        raise ValueError("need B > c")
    _check_bound(x, c)
    sym = ternarize_symbols(x, B, _rng(seed))
    return _sparse("ternarize", sym, math.log2(x.size) + 1.0, {"B": B})


def ternarize_decode(enc: EncodedVector, B: float) -> np.ndarray:
    return _dense_from_sparse(enc, B)


# ---------------------------------------------------------------------------
# Integer-valued mechanisms


def binomial_noise_encode(x: int, M: int, p: float, l: int, seed) -> int:
    """x + Binom(M, p) for integer x in {0, ..., l}."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if int(x) != x or not 0 <= x <= l:
        raise ValueError(f"input must be an integer in [0, {l}], got {x}")
    return int(x) + int(_rng(seed).binomial(M, p))


def affine_probability(theta: float, c: float) -> Callable[[float], float]:
    """p(x) = 1/2 + (theta / c) x."""
    return lambda x: 0.5 + theta / c * x


def binomial_mech_encode(x: float, M: int, p_fn: Callable[[float], float], seed) -> int:
    p = float(p_fn(x))
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"success probability {p} outside [0, 1]")
    return int(_rng(seed).binomial(M, p))


# ---------------------------------------------------------------------------
# SQKR baseline


def _rr_keep_probability(eps: float, k: int) -> float:
    if math.isinf(eps):
        return 1.0
    # e^eps / (e^eps + 2^k - 1)
    return float(math.exp(eps - np.logaddexp(eps, k * math.log(2.0) + math.log1p(-(2.0 ** -k)))))


def sqkr_batch(
    x, eps: float, k: int, C: float, rng: np.random.Generator, replace: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Encode rows of ``x`` (shape (n, d)); returns sampled indices and reported signs, both (n, k).

    Each coordinate is 1-bit quantized to +-c (c = C/sqrt(d)), k coordinates
    are sampled (with replacement unless ``replace=False``), and the k-bit
    message goes through 2^k-ary randomized response: kept w.p.
    e^eps/(e^eps + 2^k - 1), otherwise replaced by one of the other 2^k - 1
    messages uniformly.

    Decoded variance is (d/k) F^2 C^2 - ||x||^2 without replacement and
    (d/k) F^2 C^2 - ||x||^2 / k with it.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, d = x.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if not replace and k > d:
        raise ValueError("sampling without replacement needs k <= d")
    c = C / math.sqrt(d)
    _check_bound(x, c)
    if replace:
        idx = rng.integers(0, d, size=(n, k))
    else:
        idx = np.argsort(rng.random((n, d)), axis=1)[:, :k]
    xs = np.take_along_axis(x, idx, axis=1)
    bits = rng.random((n, k)) < (c + xs) / (2.0 * c)
    keep = rng.random(n) < _rr_keep_probability(eps, k)
    # uniform nonzero k-bit mask, by rejection
    flip = rng.random((n, k)) < 0.5
    empty = ~flip.any(axis=1)
    while empty.any():
        flip[empty] = rng.random((int(empty.sum()), k)) < 0.5
        empty = ~flip.any(axis=1)
    reported = np.where(keep[:, None], bits, bits ^ flip)
    return idx, np.where(reported, 1, -1).astype(np.int8)


def sqkr_decode_batch(idx: np.ndarray, signs: np.ndarray, eps: float, k: int, d: int, C: float) -> np.ndarray:
    """Unbiased estimates: (d/k) * c * F * sign, accumulated at each sampled coordinate."""
    n = idx.shape[0]
    c = C / math.sqrt(d)
    F = SqkrParams(eps, k, d, C).rr_factor
    out = np.zeros((n, d))
    rows = np.repeat(np.arange(n), k)
    np.add.at(out, (rows, idx.ravel()), (d / k) * c * F * signs.ravel().astype(float))
    return out


def sqkr_encode(x, eps: float, k: int, C: float, seed, replace: bool = True) -> EncodedVector:
    x = np.asarray(x, dtype=float)
    idx, signs = sqkr_batch(x[None, :], eps, k, C, _rng(seed), replace)
    bits = (math.log2(x.size) + 1.0) * k
    return EncodedVector("sqkr", x.size, idx[0], signs[0], bits, {"eps": eps, "k": k, "C": C})


def sqkr_decode(enc: EncodedVector) -> np.ndarray:
    m = enc.meta
    idx = np.asarray(enc.indices, dtype=np.int64)[None, :]
    signs = np.asarray(enc.symbols, dtype=np.int8)[None, :]
    return sqkr_decode_batch(idx, signs, m["eps"], m["k"], enc.dim, m["C"])[0]


# ---------------------------------------------------------------------------
# Sparsified Gaussian baseline


def gaussian_sparse_batch(x, sigma: float, A: float, B: float, rng: np.random.Generator) -> np.ndarray:
    """(B/A)(x + N(0, sigma^2)) w.p. A/B, else 0; already decoded."""
    if sigma < 0.0 or not 0.0 < A <= B:
        raise ValueError("need sigma >= 0 and 0 < A <= B")
    x = np.asarray(x, dtype=float)
    keep = rng.random(x.shape) < A / B
    noisy = x + sigma * rng.standard_normal(x.shape)
    return np.where(keep, (B / A) * noisy, 0.0)


def gaussian_sparse_encode(x, sigma: float, A: float, B: float, seed) -> EncodedVector:
    if not sigma > 0.0:
        raise ValueError("sigma must be > 0")
    x = np.asarray(x, dtype=float)
    rng = _rng(seed)
    keep = rng.random(x.shape) < A / B
    noisy = x + sigma * rng.standard_normal(x.shape)
    idx = np.flatnonzero(keep)
    bits = (math.log2(x.size) + 32.0) * idx.size
    return EncodedVector("gaussian", x.size, idx, noisy[idx], bits, {"A": A, "B": B, "sigma": sigma})


def gaussian_sparse_decode(enc: EncodedVector) -> np.ndarray:
    return _dense_from_sparse(enc, enc.meta["B"] / enc.meta["A"])
