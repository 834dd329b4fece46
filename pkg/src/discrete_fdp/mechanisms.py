"""Closed-form f-DP curves, GDP parameters, MSE and bit costs of the mechanisms.

Every curve here is exact and piecewise linear; the worst-case distribution
pairs used to derive them are exposed through :func:`worst_case_pairs` so
the Neyman-Pearson oracle in :mod:`discrete_fdp.tradeoff` can check them.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Union

import numpy as np

from discrete_fdp import numeric
from discrete_fdp.tradeoff import (
    DiscreteDist,
    TradeoffCurve,
    curve_min,
    gdp_value,
    identity_curve,
    np_tradeoff,
    pure_dp_to_gdp,
)


def _prob(x: float, name: str) -> None:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {x}")


def _scales(A: float, c: float, B: float | None = None) -> None:
    if not c > 0.0:
        raise ValueError(f"c must be > 0, got {c}")
    if not A > c:
        raise ValueError(f"A must exceed c (A={A}, c={c})")
    if B is not None and not B >= A:
        raise ValueError(f"B must be >= A (A={A}, B={B})")


@dataclasses.dataclass(frozen=True)
class BinomialNoise:
    M: int
    p: float
    l: int

    def __post_init__(self):
        _prob(self.p, "p")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.l < 0:
            raise ValueError("l must be >= 0")
        if not self.M > self.l:
            raise ValueError(f"binomial noise needs M > l for any DP guarantee (M={self.M}, l={self.l})")


@dataclasses.dataclass(frozen=True)
class BinomialMech:
    M: int
    p_min: float
    p_max: float

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        _prob(self.p_min, "p_min")
        _prob(self.p_max, "p_max")
        if not self.p_min <= self.p_max:
            raise ValueError("p_min must not exceed p_max")


@dataclasses.dataclass(frozen=True)
class StoSign:
    A: float
    c: float

    def __post_init__(self):
        _scales(self.A, self.c)


@dataclasses.dataclass(frozen=True)
class CldpInf:
    eps: float
    c: float

    def __post_init__(self):
        if not (self.eps > 0.0 and math.isfinite(self.eps)):
            raise ValueError("eps must be positive and finite")
        if not self.c > 0.0:
            raise ValueError("c must be > 0")

    @property
    def A(self) -> float:
        return self.c / math.tanh(self.eps / 2.0)


@dataclasses.dataclass(frozen=True)
class Ternary:
    A: float
    B: float
    c: float

    def __post_init__(self):
        _scales(self.A, self.c, self.B)


@dataclasses.dataclass(frozen=True)
class Ternarize:
    B: float
    c: float

    def __post_init__(self):
        if not self.c > 0.0:
            raise ValueError("c must be > 0")
        if not self.B > self.c:
            raise ValueError(f"B must exceed c (B={self.B}, c={self.c})")


@dataclasses.dataclass(frozen=True)
class PoissonBinomial:
    p_min: float
    p_max: float

    def __post_init__(self):
        _prob(self.p_min, "p_min")
        _prob(self.p_max, "p_max")
        if not 0.0 < self.p_min <= self.p_max < 1.0:
            raise ValueError("need 0 < p_min <= p_max < 1")


@dataclasses.dataclass(frozen=True)
class SqkrParams:
    eps: float
    k: int
    d: int
    C: float

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ValueError("eps must be > 0")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.C > 0.0:
            raise ValueError("C must be > 0")

    @property
    def rr_factor(self) -> float:
        """(e^eps + 2^k - 1) / (e^eps - 1), the randomized-response debiasing factor."""
        if math.isinf(self.eps):
            return 1.0
        # exp(log(e^eps + 2^k - 1) - log(e^eps - 1)), safe for large k
        num = np.logaddexp(self.eps, self.k * math.log(2.0) + math.log1p(-(2.0 ** -self.k)))
        den = self.eps + math.log(-math.expm1(-self.eps))
        return math.exp(num - den) if num - den < 709.0 else math.inf


@dataclasses.dataclass(frozen=True)
class GaussianSparse:
    sigma: float
    A: float
    B: float
    c: float
    d: int

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be > 0")
        if not 0.0 < self.A <= self.B:
            raise ValueError("need 0 < A <= B")
        if self.d < 1:
            raise ValueError("d must be >= 1")

    @property
    def mu(self) -> float:
        return 2.0 * math.sqrt(self.d) * self.c / self.sigma


MechanismParams = Union[
    BinomialNoise,
    BinomialMech,
    StoSign,
    CldpInf,
    Ternary,
    Ternarize,
    PoissonBinomial,
    SqkrParams,
    GaussianSparse,
]


# ---------------------------------------------------------------------------
# Scalar curves


def _monotone_ratio_curve(M_x: int, p_x: float, shift_x: int, M_y: int, p_y: float) -> TradeoffCurve:
    """T(X, Y) for X = shift_x + Binom(M_x, p_x), Y = Binom(M_y, p_y).

    Requires P(Y=k)/P(X=k) nonincreasing in k, so rejecting small k first is
    most powerful.  Vertices: alpha_k = P(X <= k), beta_k = P(Y > k), with the
    tails taken from log-domain sums.
    """
    x_cdf, x_sf = numeric.binom_log_tails(M_x, p_x)
    y_cdf, y_sf = numeric.binom_log_tails(M_y, p_y)
    top = max(M_x + shift_x, M_y)
    ks = np.arange(-1, top + 1)

    def lookup(log_tail, k, below, above):
        out = np.empty(k.shape)
        out[k < 0] = below
        out[k > log_tail.size - 1] = above
        inside = (k >= 0) & (k <= log_tail.size - 1)
        out[inside] = log_tail[k[inside]]
        return out

    kx = ks - shift_x
    log_alpha = lookup(x_cdf, kx, -np.inf, 0.0)
    log_alpha_c = lookup(x_sf, kx, 0.0, -np.inf)
    log_beta = lookup(y_sf, ks, 0.0, -np.inf)
    log_beta_c = lookup(y_cdf, ks, -np.inf, 0.0)
    alpha, alpha_c = np.exp(log_alpha), np.exp(log_alpha_c)
    beta, beta_c = np.exp(log_beta), np.exp(log_beta_c)
    alpha = np.where(alpha_c < 0.5, 1.0 - alpha_c, alpha)
    beta = np.where(beta_c < 0.5, 1.0 - beta_c, beta)
    alpha[-1], alpha_c[-1] = 1.0, 0.0
    return TradeoffCurve.from_vertices(alpha, beta, alpha_c, beta_c)


def binomial_noise_curve(M: int, p: float, l: int) -> TradeoffCurve:
    """f-DP curve of x + Binom(M, p) for integer inputs x in {0, ..., l}.

    min of the two branches obtained from the extreme inputs x = l and x' = 0.
    """
    BinomialNoise(M, p, l)
    if l == 0:
        return identity_curve()
    plus = _monotone_ratio_curve(M, p, l, M, p)
    # the mirrored branch is the same construction with p -> 1 - p
    minus = _monotone_ratio_curve(M, 1.0 - p, l, M, 1.0 - p)
    return curve_min(plus, minus)


def binomial_mech_curve(M: int, p_min: float, p_max: float) -> TradeoffCurve:
    """f-DP curve of Binom(M, p(x)) with p(x) confined to [p_min, p_max]."""
    BinomialMech(M, p_min, p_max)
    if p_min == p_max:
        return identity_curve()
    plus = _monotone_ratio_curve(M, p_max, 0, M, p_min)
    minus = _monotone_ratio_curve(M, 1.0 - p_min, 0, M, 1.0 - p_max)
    return curve_min(plus, minus)


def sto_sign_curve(A: float, c: float) -> TradeoffCurve:
    """Two-segment curve of the stochastic sign compressor.

    The kink sits where the two printed lines meet, alpha = (A - c) / (2A),
    which is also the B = A case of :func:`ternary_curve`.
    """
    StoSign(A, c)
    knot = (A - c) / (2.0 * A)
    return TradeoffCurve.from_vertices([0.0, knot, 1.0], [1.0, knot, 0.0])


def cldp_curve(eps: float, c: float) -> TradeoffCurve:
    """Sto-sign with A = c (e^eps + 1)/(e^eps - 1): lines 1 - e^eps a and e^-eps (1 - a)."""
    CldpInf(eps, c)
    knot = 1.0 / (1.0 + math.exp(eps))
    return TradeoffCurve.from_vertices([0.0, knot, 1.0], [1.0, knot, 0.0], [1.0, 1.0 - knot, 0.0], [0.0, 1.0 - knot, 1.0])


def ternary_curve(A: float, B: float, c: float) -> TradeoffCurve:
    """Three-segment curve of the ternary stochastic compressor."""
    Ternary(A, B, c)
    lo = (A - c) / (2.0 * B)
    hi = 1.0 - (A + c) / (2.0 * B)
    if hi <= lo:
        return TradeoffCurve.from_vertices([0.0, lo, 1.0], [1.0, lo, 0.0])
    return TradeoffCurve.from_vertices([0.0, lo, hi, 1.0], [1.0, hi, lo, 0.0])


def ternarize_curve(B: float, c: float) -> TradeoffCurve:
    """Slope -1 from (0, 1 - c/B) down to (1 - c/B, 0)."""
    Ternarize(B, c)
    r = c / B
    return TradeoffCurve.from_vertices([0.0, 1.0 - r, 1.0], [1.0 - r, 0.0, 0.0], [1.0, r, 0.0], [r, 1.0, 1.0])


def _max_of_lines(steep: float, flat: float) -> TradeoffCurve:
    """max{0, 1 - steep * a, flat * (1 - a)} with steep >= 1 >= flat > 0."""
    if steep <= flat:
        return identity_curve()
    knot = (1.0 - flat) / (steep - flat)
    return TradeoffCurve.from_vertices([0.0, knot, 1.0], [1.0, flat * (1.0 - knot), 0.0])


def pbm_curve(p_min: float, p_max: float) -> TradeoffCurve:
    """Lower bound on the f-DP of the M = 1 Poisson binomial mechanism."""
    PoissonBinomial(p_min, p_max)
    first = _max_of_lines((1.0 - p_min) / (1.0 - p_max), p_min / p_max)
    second = _max_of_lines(p_max / p_min, (1.0 - p_max) / (1.0 - p_min))
    return curve_min(first, second)


def tradeoff_curve(params: MechanismParams) -> TradeoffCurve:
    """Dispatch to the closed-form curve of a scalar mechanism."""
    if isinstance(params, BinomialNoise):
        return binomial_noise_curve(params.M, params.p, params.l)
    if isinstance(params, BinomialMech):
        return binomial_mech_curve(params.M, params.p_min, params.p_max)
    if isinstance(params, StoSign):
        return sto_sign_curve(params.A, params.c)
    if isinstance(params, CldpInf):
        return cldp_curve(params.eps, params.c)
    if isinstance(params, Ternary):
        return ternary_curve(params.A, params.B, params.c)
    if isinstance(params, Ternarize):
        return ternarize_curve(params.B, params.c)
    if isinstance(params, PoissonBinomial):
        return pbm_curve(params.p_min, params.p_max)
    if isinstance(params, SqkrParams):
        # eps-LDP: the pure-DP curve at eps, identical to CLDP's
        return cldp_curve(params.eps, params.C / math.sqrt(params.d))
    raise TypeError(f"no scalar tradeoff curve for {type(params).__name__}")


# ---------------------------------------------------------------------------
# Worst-case distribution pairs (for the Neyman-Pearson oracle)


def _binom_dist(M: int, p: float, shift: int = 0) -> DiscreteDist:
    k = np.arange(M + 1)
    pmf = np.exp(numeric.binom_logpmf_all(M, p))
    pmf = pmf / math.fsum(pmf)
    return DiscreteDist.from_arrays(k + shift, pmf)


def ternary_dist(x: float, A: float, B: float) -> DiscreteDist:
    """Output law of ternary(x, A, B) on labels -1, 0, +1."""
    return DiscreteDist((-1, 0, 1), ((A - x) / (2 * B), 1.0 - A / B, (A + x) / (2 * B)))


def worst_case_pairs(params: MechanismParams) -> list[tuple[DiscreteDist, DiscreteDist]]:
    """Distribution pairs (H0, H1) whose tradeoff minimum is the mechanism's curve."""
    if isinstance(params, BinomialNoise):
        M, p, l = params.M, params.p, params.l
        shifted, base = _binom_dist(M, p, l), _binom_dist(M, p)
        return [(shifted, base), (base, shifted)]
    if isinstance(params, BinomialMech):
        hi = _binom_dist(params.M, params.p_max)
        lo = _binom_dist(params.M, params.p_min)
        return [(hi, lo), (lo, hi)]
    if isinstance(params, (StoSign, CldpInf)):
        A, c = params.A, params.c
        return [(ternary_dist(c, A, A), ternary_dist(-c, A, A))]
    if isinstance(params, Ternary):
        A, B, c = params.A, params.B, params.c
        return [(ternary_dist(c, A, B), ternary_dist(-c, A, B))]
    if isinstance(params, Ternarize):
        B, c = params.B, params.c
        # ternarize(x) is ternary with A = |x|; the extreme inputs are +-c
        return [(ternary_dist(c, c, B), ternary_dist(-c, c, B))]
    raise TypeError(f"no worst-case pair for {type(params).__name__}")


def oracle_curve(params: MechanismParams) -> TradeoffCurve:
    """Curve computed by the Neyman-Pearson oracle on the worst-case pairs."""
    curves = [np_tradeoff(P, Q) for P, Q in worst_case_pairs(params)]
    out = curves[0]
    for other in curves[1:]:
        out = curve_min(out, other)
    return out


# ---------------------------------------------------------------------------
# Vector case


def ternary_vector_gdp(A: float, c: float, d: int) -> float:
    """GDP parameter from (d log((A+c)/(A-c)), 0)-DP."""
    _scales(A, c)
    if d < 1:
        raise ValueError("d must be >= 1")
    return pure_dp_to_gdp(d * (math.log1p(c / A) - math.log1p(-c / A)))


@dataclasses.dataclass(frozen=True)
class CltBound:
    """Central-limit sandwich G_mu(a + gamma) - gamma <= f <= G_mu(a - gamma) + gamma."""

    mu: float
    gamma: float

    @property
    def valid(self) -> bool:
        return self.gamma < 0.5

    def lower(self, alpha):
        a = np.asarray(alpha, dtype=float)
        out = np.clip(gdp_value(self.mu, a + self.gamma) - self.gamma, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def upper(self, alpha):
        a = np.asarray(alpha, dtype=float)
        out = np.clip(gdp_value(self.mu, a - self.gamma) + self.gamma, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def center(self, alpha):
        return gdp_value(self.mu, alpha)

    def to_json(self) -> dict:
        return {"mu": self.mu, "gamma": self.gamma, "gamma_ok": self.valid}


def ternary_clt_bound(A: float, B: float, c: float, d: int) -> CltBound:
    _scales(A, c, B)
    if d < 1:
        raise ValueError("d must be >= 1")
    mu = 2.0 * math.sqrt(d) * c / math.sqrt(A * B - c * c)
    r = c / B
    third = (A - c) / (2 * B) * abs(1 + r) ** 3 + (A + c) / (2 * B) * abs(1 - r) ** 3 + (1 - A / B) * abs(r) ** 3
    gamma = 0.56 * third / ((A / B - r * r) ** 1.5 * math.sqrt(d))
    return CltBound(mu, gamma)


def ternary_composition_exact(A: float, B: float, c: float, d: int) -> TradeoffCurve:
    """Exact d-fold composition of the scalar ternary curve.

    The likelihood ratio of the product law depends only on
    (#minus - #plus), so the tradeoff of that statistic's law under the
    inputs +c and -c equals the full product tradeoff.
    """
    Ternary(A, B, c)
    P = ternary_dist(c, A, B)
    Q = ternary_dist(-c, A, B)
    # count difference D = n_minus - n_plus, via d-fold convolution on {-1,0,1}
    step_p = np.array([P.probs[2], P.probs[1], P.probs[0]])
    step_q = np.array([Q.probs[2], Q.probs[1], Q.probs[0]])
    law_p = np.ones(1)
    law_q = np.ones(1)
    for _ in range(d):
        law_p = np.convolve(law_p, step_p)
        law_q = np.convolve(law_q, step_q)
    labels = np.arange(-d, d + 1)
    return np_tradeoff(
        DiscreteDist.from_arrays(labels, law_p / math.fsum(law_p)),
        DiscreteDist.from_arrays(labels, law_q / math.fsum(law_q)),
    )


def ternary_product_pair(A: float, B: float, c: float, d: int) -> tuple[DiscreteDist, DiscreteDist]:
    """Worst-case pair for the d-dimensional ternary compressor on all 3^d outcomes."""
    P = np.array(ternary_dist(c, A, B).probs)
    Q = np.array(ternary_dist(-c, A, B).probs)
    prod_p = np.ones(1)
    prod_q = np.ones(1)
    for _ in range(d):
        prod_p = np.kron(prod_p, P)
        prod_q = np.kron(prod_q, Q)
    labels = np.arange(prod_p.size)
    return (
        DiscreteDist.from_arrays(labels, prod_p / math.fsum(prod_p)),
        DiscreteDist.from_arrays(labels, prod_q / math.fsum(prod_q)),
    )


def ternary_params_for_mu(mu: float, r: float, d: int, C: float) -> tuple[float, float]:
    """A, B with sparsity A/B = r meeting a GDP budget mu under the CLT formula.

    Solves AB = 4 d c^2 / mu^2 + c^2 with c = C / sqrt(d); feasible iff
    mu^2 < 4 d r / (1 - r).
    """
    if not (mu > 0.0 and 0.0 < r <= 1.0):
        raise ValueError("need mu > 0 and r in (0, 1]")
    c = C / math.sqrt(d)
    ab = 4.0 * d * c * c / (mu * mu) + c * c
    A = math.sqrt(r * ab)
    if not A > c:
        raise ValueError(f"budget mu={mu} infeasible at sparsity r={r}: need mu < sqrt(4dr/(1-r))")
    return A, A / r


# ---------------------------------------------------------------------------
# Accuracy and communication


def analytic_mse_ternary(A: float, B: float, c: float, d: int, x_norm2):
    """Per-user variance ABd - ||x||^2 of the decoded ternary estimate."""
    _scales(A, c, B)
    return A * B * d - np.asarray(x_norm2)


def analytic_mse_sqkr(eps: float, k: int, d: int, C: float, x_norm2, replace: bool = True):
    """Per-user variance of the SQKR decoder, F the randomized-response debiasing factor.

    Sampling coordinates without replacement gives (d/k) F^2 C^2 - ||x||^2.
    With replacement the k draws are independent and the mean term shrinks to
    ||x||^2 / k.
    """
    F = SqkrParams(eps, k, d, C).rr_factor
    x_norm2 = np.asarray(x_norm2)
    return d / k * F * F * C * C - (x_norm2 / k if replace else x_norm2)


def analytic_mse_gaussian_sparse(sigma: float, A: float, B: float, d: int, x_norm2):
    """(B/A) sigma^2 d + (B/A - 1) ||x||^2."""
    if not (sigma >= 0.0 and 0.0 < A <= B):
        raise ValueError("need sigma >= 0 and 0 < A <= B")
    ratio = B / A
    return ratio * sigma * sigma * d + (ratio - 1.0) * np.asarray(x_norm2)


def comm_bits(params: MechanismParams, d: int = 1) -> float:
    """Expected bits per user for a d-dimensional input."""
    index_bits = math.log2(d)
    if isinstance(params, Ternary):
        return (index_bits + 1.0) * params.A / params.B * d
    if isinstance(params, SqkrParams):
        return (math.log2(params.d) + 1.0) * params.k
    if isinstance(params, GaussianSparse):
        return (index_bits + 32.0) * params.A / params.B * d
    if isinstance(params, BinomialNoise):
        return math.log2(params.M + params.l + 1) * d
    if isinstance(params, BinomialMech):
        return math.log2(params.M + 1) * d
    if isinstance(params, (StoSign, CldpInf)):
        return float(d)
    if isinstance(params, Ternarize):
        # worst case |x_j| = c for every coordinate
        return (index_bits + 1.0) * params.c / params.B * d
    if isinstance(params, PoissonBinomial):
        return float(d)
    raise TypeError(f"no bit accounting for {type(params).__name__}")
