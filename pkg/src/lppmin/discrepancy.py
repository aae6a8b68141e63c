"""Edge discrepancy statistics.

The discrepancy of edge (x, x+1) is d(x) = 2c - |F(x+1) - F(x)|; it is
small exactly when the two endpoint potentials sit near opposite ends of
(-c, c), which is what makes an edge profitable under alternating signs.
This module computes the field, its small-value law, the rescaled point
cloud {(n^{-zeta} x, n^{1-zeta} d(x))}, and closed-form Poisson rectangle
intensities for comparing that cloud against its limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .env import (EnvError, EnvParams, Environment, counter_uniform,
                  density_pdf, inverse_cdf, replica_seed, sample_environment,
                  stream_seed)

_STREAM_D = 0x44  # dedicated stream for direct d(0) sampling


def p_kappa(kappa: float) -> float:
    """2 * Beta(kappa+1, kappa+1), the symmetric edge-collision constant."""
    if kappa <= -1:
        raise EnvError("kappa must exceed -1")
    a = kappa + 1.0
    return 2.0 * math.exp(2.0 * math.lgamma(a) - math.lgamma(2.0 * a))


def zeta(kappa: float) -> float:
    if kappa <= -1:
        raise EnvError("kappa must exceed -1")
    return (2.0 * kappa + 2.0) / (2.0 * kappa + 3.0)


def zeta_identity_residual(kappa: float) -> float:
    """(2k+2)(zeta-1) + zeta; identically zero, kept as an explicit check."""
    z = zeta(kappa)
    return (2.0 * kappa + 2.0) * (z - 1.0) + z


def small_d_constant(params: EnvParams) -> float:
    """lim_{u->0} P(d(0) <= u) / u^{2kappa+2} = p_kappa q^2 / (2kappa+2)."""
    k = params.kappa
    return p_kappa(k) * params.q ** 2 / (2.0 * k + 2.0)


def discrepancy_density(params: EnvParams, u: float) -> float:
    """Density of d(0) at u in (0, 2c), via the self-convolution of rho."""
    c = params.c
    if not 0.0 < u < 2.0 * c:
        raise EnvError("u must lie in (0, 2c)")
    s = 2.0 * c - u

    def integrand(t):
        return float(density_pdf(params, t)) * float(density_pdf(params, s - t))

    lo, hi = max(-c, s - c), min(c, s + c)
    val, _ = integrate.quad(integrand, lo, hi, limit=200)
    return 2.0 * val


# ---------------------------------------------------------------------------
# Field and variants
# ---------------------------------------------------------------------------

@dataclass
class DiscrepancyField:
    """d over the edges (x, x+1) for x = lo .. lo+len(d)-1."""

    d: np.ndarray
    lo: int
    c: float

    @property
    def hi(self) -> int:
        return self.lo + len(self.d) - 1

    def at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        if np.any(x < self.lo) or np.any(x > self.hi):
            raise EnvError("edge outside field")
        return self.d[x - self.lo]

    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)


def discrepancy_field(env: Environment) -> DiscrepancyField:
    f = env.f_values
    if len(f) < 2:
        raise EnvError("window needs at least two sites")
    d = 2.0 * env.params.c - np.abs(np.diff(f))
    return DiscrepancyField(d, env.lo, env.params.c)


def modified_discrepancy(env: Environment, x: int) -> float:
    """d*(x) = 2c - F(x) + min(F(x-1), F(x), F(x+1))."""
    if not env.lo + 1 <= x <= env.hi - 1:
        raise EnvError("needs both neighbors inside the window")
    i = x - env.lo
    f = env.f_values
    return float(2.0 * env.params.c - f[i] + min(f[i - 1], f[i], f[i + 1]))


def modified_field(values: np.ndarray, c: float) -> np.ndarray:
    """Vectorized d* for the interior of a plain value array."""
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        raise EnvError("needs at least three sites")
    interior = v[1:-1]
    m = np.minimum(np.minimum(v[:-2], interior), v[2:])
    return 2.0 * c - interior + m


def modified_tail_bound(kappa: float, h: float) -> float:
    """Upper bound for P(d*(x) <= h); finite only for kappa > 0.

    Requires the density to satisfy rho(x) <= (c-|x|)^kappa / kappa, which
    for the edge_power family means kappa(kappa+1) <= 2c^{kappa+1}.
    """
    if kappa <= 0:
        return math.inf
    return 2.0 / (kappa * (1.0 + kappa)) ** 2 * h ** (2.0 * (kappa + 1.0))


# ---------------------------------------------------------------------------
# Small-value law by direct sampling
# ---------------------------------------------------------------------------

@dataclass
class SmallDiscrepancyReport:
    u_grid: np.ndarray
    prob: np.ndarray
    ratio: np.ndarray           # prob / u^{2kappa+2}
    ratio_ci: np.ndarray        # half-width, 95% normal
    limit_constant: float
    samples: int
    converging: bool
    narrow: np.ndarray          # False where the CI is too wide to be useful


def small_discrepancy_cdf_check(params: EnvParams, u_grid: Sequence[float],
                                samples: int, chunk: int = 1 << 22) -> SmallDiscrepancyReport:
    """Empirical P(d(0) <= u)/u^{2k+2} versus its closed-form limit.

    d(0) is sampled directly from pairs of fresh F values, not from a
    lattice window, so `samples` can reach 1e8 cheaply.
    """
    u = np.sort(np.asarray(u_grid, dtype=float))
    if np.any(u <= 0) or np.any(u > params.c / 4.0 + 1e-12):
        raise EnvError("u grid must lie in (0, c/4]")
    seed = stream_seed(params.seed, _STREAM_D)
    counts = np.zeros(len(u), dtype=np.int64)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        idx = np.arange(2 * done, 2 * (done + m), dtype=np.uint64)
        fv = inverse_cdf(params, counter_uniform(seed, idx))
        d = 2.0 * params.c - np.abs(fv[0::2] - fv[1::2])
        for i, uu in enumerate(u):
            counts[i] += int(np.count_nonzero(d <= uu))
        done += m
    prob = counts / samples
    expo = 2.0 * params.kappa + 2.0
    ratio = prob / u ** expo
    half = 1.96 * np.sqrt(np.maximum(prob * (1 - prob), 0.0) / samples) / u ** expo
    limit = small_d_constant(params)
    narrow = half < 0.5 * np.maximum(ratio, limit)
    err = np.abs(ratio - limit)
    converging = bool(err[0] <= err[-1] + half[0] + half[-1])
    return SmallDiscrepancyReport(u, prob, ratio, half, limit, samples,
                                  converging, narrow)


# ---------------------------------------------------------------------------
# Rescaled cloud and Poisson comparison
# ---------------------------------------------------------------------------

@dataclass
class RescaledPointCloud:
    n: int
    zeta: float
    xs: np.ndarray   # n^{-zeta} x per edge
    ys: np.ndarray   # n^{1-zeta} d(x) per edge
    params: EnvParams


def rescale_cloud(env: Environment, n: int) -> RescaledPointCloud:
    if n < 1:
        raise EnvError("n must be positive")
    z = zeta(env.params.kappa)
    fld = discrepancy_field(env)
    xs = fld.sites() * float(n) ** -z
    ys = fld.d * float(n) ** (1.0 - z)
    return RescaledPointCloud(n, z, xs, ys, env.params)


def view_window(params: EnvParams, n: int, a_max: float) -> Tuple[int, int]:
    """Site window wide enough that scaled |x| <= a_max is fully covered."""
    A = int(math.ceil(a_max * float(n) ** zeta(params.kappa))) + 2
    return -A, A


Rectangle = Tuple[float, float, float, float]  # a1, a2, b1, b2


def rectangle_intensity(params: EnvParams, rect: Rectangle) -> float:
    """Limit mean count in [a1,a2) x [b1,b2): q^2 p_k (a2-a1)(b2^e - b1^e)/e."""
    a1, a2, b1, b2 = rect
    if not (a2 >= a1 and 0 <= b1 <= b2):
        raise EnvError("malformed rectangle")
    e = 2.0 * params.kappa + 2.0
    return params.q ** 2 * p_kappa(params.kappa) * (a2 - a1) * (b2 ** e - b1 ** e) / e


def _g_inverse(params: EnvParams, g: float) -> float:
    e = 2.0 * params.kappa + 2.0
    k = params.q ** 2 * p_kappa(params.kappa) / e
    return (g / k) ** (1.0 / e)


def default_rectangles(params: EnvParams) -> List[Rectangle]:
    """Six disjoint rectangles spanning a y decade with intensities in [0.2, 5].

    Three x-widths (0.5, 1, 2) cross two y strips; the strip levels are set
    so the smallest intensity is 0.2 and the largest stays below 5.
    """
    y_lo = _g_inverse(params, 0.02075)
    y_mid = _g_inverse(params, 0.42075)
    y_hi = _g_inverse(params, 2.07575)
    x_spans = [(-2.0, -1.5), (-1.0, 0.0), (0.0, 2.0)]
    rects = [(a1, a2, y_lo, y_mid) for a1, a2 in x_spans]
    rects += [(a1, a2, y_mid, y_hi) for a1, a2 in x_spans]
    return rects


def cloud_counts(params: EnvParams, n: int, rects: Sequence[Rectangle],
                 replicas: int) -> np.ndarray:
    """Counts matrix (replicas x rectangles) from independent environments."""
    a_max = max(max(abs(r[0]), abs(r[1])) for r in rects)
    lo, hi = view_window(params, n, a_max)
    counts = np.zeros((replicas, len(rects)), dtype=np.int64)
    for r in range(replicas):
        p = params.with_seed(replica_seed(params.seed, r)).with_window(lo, hi).with_horizon(0)
        cloud = rescale_cloud(sample_environment(p), n)
        for j, (a1, a2, b1, b2) in enumerate(rects):
            sel = (cloud.xs >= a1) & (cloud.xs < a2) & (cloud.ys >= b1) & (cloud.ys < b2)
            counts[r, j] = int(np.count_nonzero(sel))
    return counts


@dataclass
class RectangleStat:
    rect: Rectangle
    lam: float
    mean: float
    var: float
    avoid_emp: float
    avoid_theory: float
    z_mean: float
    z_avoid: float


@dataclass
class PoissonComparison:
    n: int
    replicas: int
    stats: List[RectangleStat]
    counts: np.ndarray = field(repr=False)

    @property
    def ok_mean(self) -> bool:
        return all(abs(s.z_mean) < 4.0 for s in self.stats)

    @property
    def ok_avoid(self) -> bool:
        return all(abs(s.z_avoid) < 4.0 for s in self.stats)


def poisson_compare(cloud: RescaledPointCloud, rects: Sequence[Rectangle],
                    replicas: int) -> PoissonComparison:
    """Empirical rectangle counts against the limiting Poisson intensities.

    The cloud supplies (params, n); replicas are drawn as fresh seeded
    environments so counts are i.i.d. across replicas.
    """
    if replicas < 100:
        raise EnvError("need at least 100 replicas")
    counts = cloud_counts(cloud.params, cloud.n, rects, replicas)
    stats = []
    for j, rect in enumerate(rects):
        lam = rectangle_intensity(cloud.params, rect)
        col = counts[:, j]
        mean = float(col.mean())
        var = float(col.var(ddof=1)) if replicas > 1 else 0.0
        avoid = float(np.mean(col == 0))
        av_th = math.exp(-lam)
        z_mean = (mean - lam) / math.sqrt(lam / replicas) if lam > 0 else 0.0
        sd_av = math.sqrt(av_th * (1.0 - av_th) / replicas)
        z_avoid = (avoid - av_th) / sd_av if sd_av > 0 else 0.0
        stats.append(RectangleStat(tuple(rect), lam, mean, var, avoid, av_th,
                                   z_mean, z_avoid))
    return PoissonComparison(cloud.n, replicas, stats, counts)


# ---------------------------------------------------------------------------
# Record edges
# ---------------------------------------------------------------------------

def record_edges(env: Environment, max_x: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Running minima of d over x >= 0: the record edges (x_i, d_i)."""
    if env.lo > 0:
        raise EnvError("window must start at or below 0")
    fld = discrepancy_field(env)
    hi = fld.hi if max_x is None else min(max_x, fld.hi)
    if hi < 0:
        raise EnvError("no edges at x >= 0 in window")
    d = fld.at(np.arange(0, hi + 1))
    mins = np.minimum.accumulate(d)
    is_rec = np.empty(len(d), dtype=bool)
    is_rec[0] = True
    is_rec[1:] = d[1:] < mins[:-1]
    xs = np.flatnonzero(is_rec)
    return xs, d[xs]
