"""Scalar probability primitives.

Binomial probabilities are evaluated with Loader's saddle-point expansion
(``stirlerr`` + ``bd0``), which keeps relative accuracy near machine precision
even for very large trial counts and far tails such as P(Binom(500, 1/2) <= 7)
~ 4.6e-136.  Tail sums are accumulated in the log domain.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import special

_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_S0 = 1.0 / 12.0
_S1 = 1.0 / 360.0
_S2 = 1.0 / 1260.0
_S3 = 1.0 / 1680.0
_S4 = 1.0 / 1188.0


def _check_prob(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def _stirlerr(n: np.ndarray) -> np.ndarray:
    """log(n!) - log(sqrt(2 pi n) (n/e)^n) for integer n >= 1."""
    n = np.asarray(n, dtype=float)
    out = np.empty_like(n)
    small = n <= 15.0
    ns = n[small]
    out[small] = special.gammaln(ns + 1.0) - (ns + 0.5) * np.log(ns) + ns - _LN_SQRT_2PI
    nl = n[~small]
    nn = nl * nl
    series = np.where(
        nl > 500.0,
        (_S0 - _S1 / nn) / nl,
        np.where(
            nl > 80.0,
            (_S0 - (_S1 - _S2 / nn) / nn) / nl,
            np.where(
                nl > 35.0,
                (_S0 - (_S1 - (_S2 - _S3 / nn) / nn) / nn) / nl,
                (_S0 - (_S1 - (_S2 - (_S3 - _S4 / nn) / nn) / nn) / nn) / nl,
            ),
        ),
    )
    out[~small] = series
    return out


def _bd0(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Deviance term x log(x/m) + m - x, accurate when x is close to m."""
    x = np.asarray(x, dtype=float)
    m = np.broadcast_to(np.asarray(m, dtype=float), x.shape)
    out = np.empty_like(x)
    near = np.abs(x - m) < 0.1 * (x + m)
    far = ~near
    # a subnormal m overflows x/m to inf, which is the right deviance
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out[far] = x[far] * np.log(x[far] / m[far]) + m[far] - x[far]
    if np.any(near):
        xn, mn = x[near], m[near]
        v = (xn - mn) / (xn + mn)
        s = (xn - mn) * v
        ej = 2.0 * xn * v
        v2 = v * v
        active = np.ones_like(s, dtype=bool)
        for j in range(1, 1000):
            ej = ej * v2
            s1 = s + ej / (2 * j + 1)
            active = s1 != s
            s = s1
            if not active.any():
                break
        out[near] = s
    return out


def binom_logpmf(M: int, p: float, k) -> np.ndarray:
    """Natural log of P(Binom(M, p) = k), elementwise over ``k``.

    Returns ``-inf`` for k outside [0, M].
    """
    M = int(M)
    if M < 0:
        raise ValueError(f"trial count must be >= 0, got {M}")
    p = _check_prob(p)
    q = 1.0 - p
    k = np.asarray(k)
    scalar = k.ndim == 0
    k = np.atleast_1d(k).astype(float)
    out = np.full(k.shape, -np.inf)
    inside = (k >= 0) & (k <= M) & (k == np.floor(k))
    if p == 0.0:
        out[inside & (k == 0)] = 0.0
    elif p == 1.0:
        out[inside & (k == M)] = 0.0
    else:
        lo = inside & (k == 0)
        hi = inside & (k == M)
        mid = inside & ~lo & ~hi
        out[lo] = M * math.log1p(-p)
        out[hi] = M * math.log(p)
        if np.any(mid):
            km = k[mid]
            lc = (
                _stirlerr(np.full_like(km, M))
                - _stirlerr(km)
                - _stirlerr(M - km)
                - _bd0(km, M * p)
                - _bd0(M - km, M * q)
            )
            lf = 2.0 * _LN_SQRT_2PI + np.log(km) + np.log1p(-km / M)
            out[mid] = lc - 0.5 * lf
    return out[0] if scalar else out


def binom_pmf(M: int, p: float, k: int) -> float:
    """P(Binom(M, p) = k); zero outside [0, M]."""
    return float(np.exp(binom_logpmf(M, p, k)))


def binom_logpmf_all(M: int, p: float) -> np.ndarray:
    """Log-pmf of Binom(M, p) on its full support 0..M."""
    return binom_logpmf(M, p, np.arange(M + 1))


def log_cumsum(logs: np.ndarray) -> np.ndarray:
    """Running log-sum-exp: out[k] = log(sum_{j<=k} exp(logs[j]))."""
    return np.logaddexp.accumulate(np.asarray(logs, dtype=float))


def binom_log_tails(M: int, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Return (log P(Z <= k), log P(Z > k)) for k = 0..M, Z ~ Binom(M, p).

    Each tail is summed from its own end so both keep full relative accuracy.
    """
    lp = binom_logpmf_all(M, p)
    logcdf = np.minimum(log_cumsum(lp), 0.0)
    logsf = np.full(M + 1, -np.inf)
    if M > 0:
        logsf[:-1] = np.minimum(log_cumsum(lp[::-1])[::-1][1:], 0.0)
    return logcdf, logsf


def binom_cdf(M: int, p: float, k: int) -> float:
    """P(Binom(M, p) <= k); exactly 1 for k >= M and 0 for k < 0."""
    _check_prob(p)
    if k < 0:
        return 0.0
    if k >= M:
        return 1.0
    logcdf, logsf = binom_log_tails(M, p)
    if logcdf[k] < math.log(0.5):
        return float(np.exp(logcdf[k]))
    return float(min(1.0, -np.expm1(logsf[k])))


def poisson_binom_pmf_all(probs: Sequence[float]) -> np.ndarray:
    """Full pmf (length N+1) of a sum of independent Bernoulli(p_i)."""
    pmf = np.ones(1)
    for p in probs:
        p = _check_prob(p)
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] += pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def poisson_binom_pmf(probs: Sequence[float], k: int) -> float:
    pmf = poisson_binom_pmf_all(probs)
    if k < 0 or k >= pmf.size:
        return 0.0
    return float(pmf[k])


def std_normal_cdf(x):
    return special.ndtr(x)


def std_normal_quantile(q):
    """Inverse standard normal CDF; q must lie strictly inside (0, 1)."""
    arr = np.asarray(q, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError(f"quantile argument must lie in (0, 1), got {q}")
    out = special.ndtri(arr)
    return float(out) if out.ndim == 0 else out


def std_normal_quantile_from_log(log_q: float) -> float:
    """Phi^{-1}(exp(log_q)), usable when exp(log_q) underflows."""
    if not log_q < 0.0:
        raise ValueError(f"log probability must be < 0, got {log_q}")
    return float(special.ndtri_exp(log_q))
