"""Piecewise-linear tradeoff functions and their conversions.

A :class:`TradeoffCurve` stores its vertices together with the complements
``1 - alpha`` and ``1 - beta``.  Mechanisms with extremely small tail masses
(e.g. binomial noise, where f(0) = 1 - 4.6e-136) would otherwise lose those
masses to rounding, and the (epsilon, delta) conversion reads them directly.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np
from scipy import special

from discrete_fdp import numeric

_TOL = 1e-12
_TIE_RTOL = 1e-12


@dataclasses.dataclass(frozen=True, eq=False)
class TradeoffCurve:
    """Convex, nonincreasing piecewise-linear map from type I to type II error.

    Attributes:
      alpha: strictly increasing vertex abscissae, from 0 to 1.
      beta: vertex ordinates (nonincreasing), ending at 0.
      alpha_c: 1 - alpha, carried separately for tail precision.
      beta_c: 1 - beta, carried separately for tail precision.
    """

    alpha: np.ndarray
    beta: np.ndarray
    alpha_c: np.ndarray
    beta_c: np.ndarray

    @classmethod
    def from_vertices(
        cls,
        alpha: Sequence[float],
        beta: Sequence[float],
        alpha_c: Optional[Sequence[float]] = None,
        beta_c: Optional[Sequence[float]] = None,
        validate: bool = True,
    ) -> "TradeoffCurve":
        a = np.asarray(alpha, dtype=float).copy()
        b = np.asarray(beta, dtype=float).copy()
        ac = 1.0 - a if alpha_c is None else np.asarray(alpha_c, dtype=float).copy()
        bc = 1.0 - b if beta_c is None else np.asarray(beta_c, dtype=float).copy()
        if not (a.shape == b.shape == ac.shape == bc.shape) or a.ndim != 1:
            raise ValueError("vertex arrays must be one-dimensional and equally long")
        if a.size < 2:
            raise ValueError("a tradeoff curve needs at least two vertices")
        a, b, ac, bc = _merge_equal_alpha(a, b, ac, bc)
        np.clip(b, 0.0, 1.0, out=b)
        np.clip(bc, 0.0, 1.0, out=bc)
        for arr in (a, b, ac, bc):
            arr.setflags(write=False)
        curve = cls(a, b, ac, bc)
        if validate:
            curve.validate()
        return curve

    def validate(self, require_convex: bool = False) -> None:
        a, b = self.alpha, self.beta
        if a[0] != 0.0 or a[-1] != 1.0:
            raise ValueError("first vertex must have alpha=0 and last alpha=1")
        if np.any(np.diff(a) <= 0.0):
            raise ValueError("alpha must be strictly increasing")
        if np.any(np.diff(b) > _TOL):
            raise ValueError("beta must be nonincreasing in alpha")
        if b[-1] > _TOL:
            raise ValueError("a tradeoff curve must satisfy f(1) = 0")
        if np.any(b > 1.0 + _TOL) or np.any(b < -_TOL):
            raise ValueError("beta must lie in [0, 1]")
        if require_convex and not self.is_convex():
            raise ValueError("curve is not convex")

    def is_convex(self, tol: float = 1e-9) -> bool:
        slopes = np.diff(self.beta) / np.diff(self.alpha)
        return bool(np.all(np.diff(slopes) >= -tol * np.maximum(1.0, np.abs(slopes[1:]))))

    @property
    def vertices(self) -> list[tuple[float, float]]:
        return list(zip(self.alpha.tolist(), self.beta.tolist()))

    def __call__(self, alpha):
        return eval_curve(self, alpha)

    def __len__(self) -> int:
        return self.alpha.size

    def __repr__(self) -> str:
        return f"TradeoffCurve({len(self)} vertices)"

    def sample(self, n: int = 1001) -> tuple[np.ndarray, np.ndarray]:
        grid = np.linspace(0.0, 1.0, n)
        return grid, eval_curve(self, grid)


def _merge_equal_alpha(a, b, ac, bc):
    """Collapse vertices sharing an alpha, keeping the lowest beta."""
    order = np.argsort(a, kind="stable")
    a, b, ac, bc = a[order], b[order], ac[order], bc[order]
    keep = np.ones(a.size, dtype=bool)
    i = 0
    while i < a.size:
        j = i
        while j + 1 < a.size and a[j + 1] == a[i]:
            j += 1
        if j > i:
            best = i + int(np.argmin(b[i : j + 1]))
            keep[i : j + 1] = False
            keep[best] = True
        i = j + 1
    return a[keep], b[keep], ac[keep], bc[keep]


def identity_curve() -> TradeoffCurve:
    """Perfect privacy, f(alpha) = 1 - alpha."""
    return TradeoffCurve.from_vertices([0.0, 1.0], [1.0, 0.0])


def zero_curve() -> TradeoffCurve:
    """Perfect distinguishability, f = 0."""
    return TradeoffCurve.from_vertices([0.0, 1.0], [0.0, 0.0])


@dataclasses.dataclass(frozen=True)
class DiscreteDist:
    """Finite distribution over integer labels."""

    support: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs must have equal length")
        if len(self.support) == 0:
            raise ValueError("distribution has empty support")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support labels must be distinct")
        probs = np.asarray(self.probs, dtype=float)
        if np.any(probs < 0.0) or np.any(~np.isfinite(probs)):
            raise ValueError("probabilities must be finite and nonnegative")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(self.probs)!r}, not 1")

    @classmethod
    def from_arrays(cls, support, probs) -> "DiscreteDist":
        return cls(tuple(int(s) for s in support), tuple(float(p) for p in probs))

    @classmethod
    def point_mass(cls, label: int) -> "DiscreteDist":
        return cls((int(label),), (1.0,))

    @classmethod
    def bernoulli(cls, p: float) -> "DiscreteDist":
        return cls((0, 1), (1.0 - p, p))

    @classmethod
    def from_json(cls, obj) -> "DiscreteDist":
        return cls.from_arrays(obj["support"], obj["probs"])

    def to_json(self) -> dict:
        return {"support": list(self.support), "probs": list(self.probs)}


def np_tradeoff(P: DiscreteDist, Q: DiscreteDist) -> TradeoffCurve:
    """Exact tradeoff function T(P, Q) of two finite distributions.

    Outcomes are ranked by likelihood ratio Q/P (infinite where P vanishes),
    tied ratios are merged into one randomized-rejection segment, and the
    cumulative masses give the vertices of the most powerful tests.
    """
    labels = sorted(set(P.support) | set(Q.support))
    index = {lab: i for i, lab in enumerate(labels)}
    p = np.zeros(len(labels))
    q = np.zeros(len(labels))
    for lab, pr in zip(P.support, P.probs):
        p[index[lab]] += pr
    for lab, pr in zip(Q.support, Q.probs):
        q[index[lab]] += pr
    live = (p > 0.0) | (q > 0.0)
    p, q = p[live], q[live]

    with np.errstate(divide="ignore"):
        ratio = np.where(p > 0.0, q / np.where(p > 0.0, p, 1.0), np.inf)
    order = np.argsort(-ratio, kind="stable")
    ratio, p, q = ratio[order], p[order], q[order]

    group_p: list[float] = []
    group_q: list[float] = []
    group_r: list[float] = []
    for r, pp, qq in zip(ratio, p, q):
        if group_r and _same_ratio(group_r[-1], r):
            group_p[-1] += pp
            group_q[-1] += qq
        else:
            group_r.append(r)
            group_p.append(pp)
            group_q.append(qq)
    gp = np.asarray(group_p)
    gq = np.asarray(group_q)

    # alpha_k, 1 - beta_k after rejecting the first k groups; complements summed
    # from the opposite end so that tiny tails survive.
    alpha = np.concatenate([[0.0], np.cumsum(gp)])
    beta_c = np.concatenate([[0.0], np.cumsum(gq)])
    alpha_c = np.concatenate([np.cumsum(gp[::-1])[::-1], [0.0]])
    beta = np.concatenate([np.cumsum(gq[::-1])[::-1], [0.0]])
    alpha = np.where(alpha_c < 0.5, 1.0 - alpha_c, alpha)
    beta_c = np.where(beta < 0.5, 1.0 - beta, beta_c)
    alpha[0], alpha_c[0] = 0.0, 1.0
    return TradeoffCurve.from_vertices(alpha, beta, alpha_c, beta_c)


def _same_ratio(a: float, b: float) -> bool:
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= _TIE_RTOL * max(abs(a), abs(b))


def eval_curve(f: TradeoffCurve, alpha):
    """Linear interpolation of ``f`` at ``alpha`` (scalar or array) in [0, 1]."""
    arr = np.asarray(alpha, dtype=float)
    if np.any((arr < 0.0) | (arr > 1.0)) or np.any(np.isnan(arr)):
        raise ValueError("alpha must lie in [0, 1]")
    out = np.interp(arr, f.alpha, f.beta)
    return float(out) if out.ndim == 0 else out


def curve_min(a: TradeoffCurve, b: TradeoffCurve) -> TradeoffCurve:
    """Pointwise minimum of two curves, exact at crossings.

    No convex hull is taken, so the result may be nonconvex where the
    branches cross.
    """
    grid = np.union1d(a.alpha, b.alpha)
    fa = np.interp(grid, a.alpha, a.beta)
    fb = np.interp(grid, b.alpha, b.beta)
    diff = fa - fb
    extra = []
    for i in range(grid.size - 1):
        d0, d1 = diff[i], diff[i + 1]
        if d0 * d1 < 0.0:
            t = d0 / (d0 - d1)
            extra.append(grid[i] + t * (grid[i + 1] - grid[i]))
    if extra:
        grid = np.union1d(grid, extra)

    fa = np.interp(grid, a.alpha, a.beta)
    fb = np.interp(grid, b.alpha, b.beta)
    fa_c = np.interp(grid, a.alpha, a.beta_c)
    fb_c = np.interp(grid, b.alpha, b.beta_c)
    use_a = fa <= fb
    beta = np.where(use_a, fa, fb)
    beta_c = np.where(use_a, fa_c, fb_c)
    alpha_c = np.minimum(
        np.interp(grid, a.alpha, a.alpha_c), np.interp(grid, b.alpha, b.alpha_c)
    )
    return TradeoffCurve.from_vertices(grid, beta, alpha_c, beta_c)


def curve_to_delta(f: TradeoffCurve, epsilon: float) -> float:
    """Smallest delta with f >= max{0, 1-delta-e^eps a, e^-eps (1-delta-a)}.

    Both constraints are linear in alpha on every segment, so their suprema
    are attained at vertices.  ``epsilon = inf`` is supported.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    if math.isinf(epsilon):
        t1 = f.beta_c[f.alpha == 0.0]
        t2 = f.alpha_c[f.beta == 0.0]
        cands = np.concatenate([t1, t2, [0.0]])
        return float(min(1.0, cands.max()))
    e = math.exp(epsilon)
    t1 = f.beta_c - e * f.alpha
    t2 = f.alpha_c - e * f.beta
    return float(min(1.0, max(0.0, t1.max(), t2.max())))


def curve_to_epsilon(f: TradeoffCurve, delta: float) -> float:
    """Smallest epsilon >= 0 with curve_to_delta(f, epsilon) <= delta.

    Solved exactly per vertex: each vertex constraint is of the form
    ``e^eps >= (complement - delta) / coordinate``.  Returns ``inf`` when no
    finite epsilon works.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    worst = 1.0
    for num, den in ((f.beta_c, f.alpha), (f.alpha_c, f.beta)):
        excess = num - delta
        need = excess > 0.0
        if np.any(need & (den <= 0.0)):
            return math.inf
        if np.any(need):
            worst = max(worst, float(np.max(excess[need] / den[need])))
    return math.log(worst)


def gdp_value(mu: float, alpha):
    """G_mu(alpha) = Phi(Phi^{-1}(1 - alpha) - mu), with G = 1 left of 0 and 0 right of 1."""
    a = np.asarray(alpha, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = special.ndtri(np.clip(a, 0.0, 1.0))
        out = special.ndtr(-z - mu)
    out = np.where(a <= 0.0, 1.0, np.where(a >= 1.0, 0.0, out))
    return float(out) if out.ndim == 0 else out


def gdp_curve(mu: float, n_grid: int = 10001) -> TradeoffCurve:
    """Piecewise-linear G_mu with vertices on a uniform alpha grid.

    Vertices lie exactly on G_mu, so the interpolant sits on or above it.
    """
    if mu < 0.0:
        raise ValueError("mu must be >= 0")
    if n_grid < 2:
        raise ValueError("grid needs at least two points")
    grid = np.linspace(0.0, 1.0, n_grid)
    with np.errstate(divide="ignore"):
        z = special.ndtri(grid)
    beta = special.ndtr(-z - mu)
    beta_c = special.ndtr(z + mu)
    beta[0], beta_c[0] = 1.0, 0.0
    beta[-1], beta_c[-1] = 0.0, 1.0
    return TradeoffCurve.from_vertices(grid, beta, 1.0 - grid, beta_c)


def pure_dp_to_gdp(epsilon: float) -> float:
    """mu = -2 Phi^{-1}(1 / (1 + e^eps)), evaluated in log space."""
    if epsilon < 0.0:
        raise ValueError("epsilon must be >= 0")
    if epsilon == 0.0:
        return 0.0
    if math.isinf(epsilon):
        return math.inf
    log_q = -float(np.logaddexp(0.0, epsilon))
    return -2.0 * numeric.std_normal_quantile_from_log(log_q)


def curve_to_gdp(f: TradeoffCurve) -> float:
    """Smallest mu with f >= G_mu.

    G_mu is convex, so checking the vertices of ``f`` suffices; at a vertex
    the requirement is mu >= Phi^{-1}(1 - alpha) - Phi^{-1}(beta).
    """
    mu = 0.0
    for a, ac, b, bc in zip(f.alpha, f.alpha_c, f.beta, f.beta_c):
        if a == 0.0 and bc == 0.0:
            continue
        if ac == 0.0 and b == 0.0:
            continue
        if a == 0.0 or b == 0.0:
            return math.inf
        z_alpha = -special.ndtri(a) if a < 0.5 else special.ndtri(ac)
        z_beta = special.ndtri(b) if b < 0.5 else -special.ndtri(bc)
        mu = max(mu, float(z_alpha - z_beta))
    return mu


@dataclasses.dataclass(frozen=True)
class PrivacyProfile:
    """(epsilon, delta) pairs, optionally with a GDP parameter."""

    points: tuple[tuple[float, float], ...]
    mu: Optional[float] = None

    def __post_init__(self):
        pts = sorted(self.points)
        for (e0, d0), (e1, d1) in zip(pts, pts[1:]):
            if d1 > d0 + 1e-12:
                raise ValueError("delta must be nonincreasing in epsilon")
        for e, d in pts:
            if e < 0.0 or not 0.0 <= d <= 1.0:
                raise ValueError(f"invalid (epsilon, delta) pair ({e}, {d})")
        if self.mu is not None and self.mu < 0.0:
            raise ValueError("mu must be >= 0")

    def to_json(self) -> dict:
        return {
            "points": [{"epsilon": _num(e), "delta": _num(d)} for e, d in self.points],
            "mu": None if self.mu is None else _num(self.mu),
        }


def _num(x: float):
    return "inf" if math.isinf(x) else x


def privacy_profile(f: TradeoffCurve, epsilons: Iterable[float], with_mu: bool = True) -> PrivacyProfile:
    pts = tuple((float(e), curve_to_delta(f, e)) for e in sorted(epsilons))
    return PrivacyProfile(pts, curve_to_gdp(f) if with_mu else None)


def write_curve_csv(f: TradeoffCurve, out: TextIO, comments: Sequence[str] = ()) -> None:
    """Vertex CSV: ``#`` comments, header ``alpha,beta``, 17 significant digits."""
    for line in comments:
        out.write(f"# {line}\n")
    out.write("alpha,beta\n")
    for a, b in zip(f.alpha, f.beta):
        out.write(f"{a:.17g},{b:.17g}\n")


def write_samples_csv(f: TradeoffCurve, out: TextIO, n: int = 1001, comments: Sequence[str] = ()) -> None:
    for line in comments:
        out.write(f"# {line}\n")
    grid, vals = f.sample(n)
    out.write("alpha,beta\n")
    for a, b in zip(grid, vals):
        out.write(f"{a:.17g},{b:.17g}\n")


def read_curve_csv(src: TextIO) -> TradeoffCurve:
    rows = [line for line in src if line.strip() and not line.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(rows)))
    if reader.fieldnames is None or [n.strip() for n in reader.fieldnames] != ["alpha", "beta"]:
        raise ValueError("curve CSV must have header 'alpha,beta'")
    alpha, beta = [], []
    for row in reader:
        alpha.append(float(row["alpha"]))
        beta.append(float(row["beta"]))
    return TradeoffCurve.from_vertices(alpha, beta)
