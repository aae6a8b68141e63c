"""Free-endpoint optimizer statistics.

For the minimizer over all n-step lazy walks with free endpoint, extracts
the minimal-discrepancy site ell_n on the path's range, its discrepancy
d_n, the first hitting time tau_n of the edge {ell_n, ell_n+1}, and whether
the path stays on that edge afterwards; aggregates replicas into scaling
regressions and the rescaled-action limit law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import dp
from .discrepancy import p_kappa, zeta
from .env import EnvError, EnvParams, Environment, replica_seed, sample_environment


class WindowTooSmall(RuntimeError):
    """The optimal path reached the sampled window's boundary."""


@dataclass
class FreePathStats:
    n: int
    action: float
    endpoint: int
    ell: int
    d: float
    tau: int
    settled: bool
    unique: bool
    window: int          # half-width actually used
    retries: int         # window doublings before success
    a2_holds: bool       # action + cn >= (1/5) n d


def free_path_stats(env: Environment, n: int,
                    budget: Optional[dp.Budget] = None) -> FreePathStats:
    """Single-environment extraction; raises WindowTooSmall on boundary contact."""
    res = dp.optimal_path(env, n, budget=budget)
    if res.touched_boundary:
        raise WindowTooSmall(f"path range hit window {res.window}")
    pos = res.path.positions
    rlo, rhi = int(pos.min()), int(pos.max())
    c = env.params.c
    f = env.f_slice(rlo, rhi + 1)
    d_vals = 2.0 * c - np.abs(np.diff(f))
    sites = np.arange(rlo, rhi + 1)
    best = d_vals.min()
    cand = sites[d_vals == best]
    ell = int(min(cand, key=lambda x: (abs(x), x)))
    d_n = float(best)
    on_edge = (pos == ell) | (pos == ell + 1)
    tau = int(np.argmax(on_edge))
    if not on_edge[tau]:
        raise EnvError("path misses its own minimal edge")  # cannot happen
    settled = bool(np.all(on_edge[tau:]))
    a2 = (res.value + c * n) >= 0.2 * n * d_n
    return FreePathStats(n, res.value, res.endpoint, ell, d_n, tau, settled,
                         res.unique, (res.window[1] - res.window[0]) // 2, 0, bool(a2))


def run_free_replica(params: EnvParams, n: int, r: int,
                     budget: Optional[dp.Budget] = None,
                     w0_factor: float = 4.0,
                     max_doublings: int = 12) -> FreePathStats:
    """One seeded replica with window auto-sizing.

    The window starts at w0_factor * n^zeta and doubles on boundary contact;
    counter-based sampling keeps the overlapping environment identical, so
    growth never changes values already seen.
    """
    z = zeta(params.kappa)
    W = int(math.ceil(w0_factor * float(n) ** z))
    retries = 0
    while True:
        p_r = (params.with_seed(replica_seed(params.seed, r))
               .with_window(-W - 2, W + 2).with_horizon(n))
        env = sample_environment(p_r)
        try:
            st = free_path_stats(env, n, budget=budget)
            st.window = W
            st.retries = retries
            return st
        except WindowTooSmall:
            if retries >= max_doublings:
                raise
            W *= 2
            retries += 1


@dataclass
class FreeEnsemble:
    params: EnvParams
    n: int
    replicas: int
    action: np.ndarray
    endpoint: np.ndarray
    ell: np.ndarray
    d: np.ndarray
    tau: np.ndarray
    settled: np.ndarray
    retries: np.ndarray
    truncated: bool = False

    @property
    def excess(self) -> np.ndarray:
        """cn + action per replica; exactly nonnegative."""
        return self.params.c * self.n + self.action

    @property
    def settled_fraction(self) -> float:
        return float(np.mean(self.settled))

    @property
    def a2_fraction(self) -> float:
        return float(np.mean(self.excess >= 0.2 * self.n * self.d))

    def tau_diag(self, m: float) -> float:
        """Fraction of replicas with tau_n < m |ell_n|."""
        return float(np.mean(self.tau < m * np.abs(self.ell)))


def run_free_ensemble(params: EnvParams, n: int, replicas: int,
                      budget: Optional[dp.Budget] = None) -> FreeEnsemble:
    rows = []
    truncated = False
    for r in range(replicas):
        if budget is not None and budget.exceeded:
            truncated = True
            break
        rows.append(run_free_replica(params, n, r, budget=budget))
    if not rows:
        raise dp.BudgetExceeded("budget exhausted before the first replica")
    return FreeEnsemble(
        params, n, len(rows),
        action=np.array([s.action for s in rows]),
        endpoint=np.array([s.endpoint for s in rows], dtype=np.int64),
        ell=np.array([s.ell for s in rows], dtype=np.int64),
        d=np.array([s.d for s in rows]),
        tau=np.array([s.tau for s in rows], dtype=np.int64),
        settled=np.array([s.settled for s in rows], dtype=bool),
        retries=np.array([s.retries for s in rows], dtype=np.int64),
        truncated=truncated,
    )


# ---------------------------------------------------------------------------
# Scaling regression
# ---------------------------------------------------------------------------

def _loglog_slope(ns: np.ndarray, ys: np.ndarray) -> float:
    # a zero median (possible for |ell| at very small n) gives a NaN slope
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.log(ns)
        y = np.log(ys)
        x = x - x.mean()
        return float(np.dot(x, y - y.mean()) / np.dot(x, x))


@dataclass
class ScalingReport:
    n_grid: List[int]
    replicas: int
    slope_ell: float
    slope_d: float
    slope_action: float
    ci_ell: Tuple[float, float]
    ci_d: Tuple[float, float]
    ci_action: Tuple[float, float]
    med_ell: np.ndarray
    med_d: np.ndarray
    med_excess: np.ndarray
    settled_frac: np.ndarray
    zeta: float


def scaling_regression(params: EnvParams, n_grid: Sequence[int], replicas: int,
                       budget: Optional[dp.Budget] = None,
                       ensembles: Optional[Dict[int, FreeEnsemble]] = None,
                       boot: int = 200, boot_seed: int = 1) -> ScalingReport:
    """Log-log slopes of median |ell_n|, d_n, and cn+action against n.

    Bootstrap CIs resample replicas within each n.  Pass precomputed
    ensembles to reuse expensive runs.
    """
    ns = [int(n) for n in n_grid]
    if len(ns) < 3 or sorted(set(ns)) != ns:
        raise EnvError("n grid must be increasing with at least 3 points")
    if math.log10(ns[-1] / ns[0]) < 1.5 - 1e-9:
        raise EnvError("n grid must span at least 1.5 decades")
    if ensembles is None:
        ensembles = {}
    for n in ns:
        if n not in ensembles:
            ensembles[n] = run_free_ensemble(params, n, replicas, budget=budget)
    ell_mat = [np.abs(ensembles[n].ell) for n in ns]
    d_mat = [ensembles[n].d for n in ns]
    exc_mat = [ensembles[n].excess for n in ns]
    narr = np.array(ns, dtype=float)
    med = lambda cols: np.array([np.median(col) for col in cols])
    med_ell, med_d, med_exc = med(ell_mat), med(d_mat), med(exc_mat)
    s_ell = _loglog_slope(narr, med_ell)
    s_d = _loglog_slope(narr, med_d)
    s_act = _loglog_slope(narr, med_exc)

    rng = np.random.default_rng(boot_seed)
    bs = np.empty((boot, 3))
    for b in range(boot):
        m_e, m_d, m_a = [], [], []
        for j, n in enumerate(ns):
            R = len(ell_mat[j])
            idx = rng.integers(0, R, R)
            m_e.append(np.median(ell_mat[j][idx]))
            m_d.append(np.median(d_mat[j][idx]))
            m_a.append(np.median(exc_mat[j][idx]))
        bs[b, 0] = _loglog_slope(narr, np.array(m_e))
        bs[b, 1] = _loglog_slope(narr, np.array(m_d))
        bs[b, 2] = _loglog_slope(narr, np.array(m_a))
    ci = lambda k: (float(np.quantile(bs[:, k], 0.025)), float(np.quantile(bs[:, k], 0.975)))
    return ScalingReport(ns, replicas, s_ell, s_d, s_act, ci(0), ci(1), ci(2),
                         med_ell, med_d, med_exc,
                         np.array([ensembles[n].settled_fraction for n in ns]),
                         zeta(params.kappa))


# ---------------------------------------------------------------------------
# Limit law
# ---------------------------------------------------------------------------

def compute_h(params: EnvParams, s: float) -> float:
    """Normalizer of the rescaled excess action:
    (p_k q^2 2^{2k+2} / (s (k+1)(2k+3)))^{-1/(2k+3)}."""
    if s <= 0:
        raise EnvError("s must be positive")
    k = params.kappa
    inner = p_kappa(k) * params.q ** 2 * 2.0 ** (2 * k + 2) / (s * (k + 1) * (2 * k + 3))
    return inner ** (-1.0 / (2 * k + 3))


def survival_theory(kappa: float, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return np.exp(-np.maximum(t, 0.0) ** (2.0 * kappa + 3.0))


@dataclass
class LimitLawReport:
    n: int
    replicas: int
    s: float
    s_se: float
    h: float
    h_lo: float
    h_hi: float
    values: np.ndarray           # sorted rescaled excess actions
    ks: float
    quantiles: List[Tuple[float, float, float, float]]  # t, surv_theory, surv_emp, z
    tau_diags: Dict[int, float]  # M -> fraction tau < M |ell|
    settled_fraction: float
    a2_fraction: float


def limit_law_test(params: EnvParams, n: int, replicas: int,
                   s_source: Union[float, Tuple[float, float]],
                   budget: Optional[dp.Budget] = None,
                   ensemble: Optional[FreeEnsemble] = None,
                   surv_levels: Sequence[float] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
                   ms: Sequence[int] = (2, 4, 8)) -> LimitLawReport:
    """Empirical law of (cn + action)/(h n^zeta) against exp(-t^{2k+3}).

    s_source is the slope magnitude -Lambda'(0+): a plain float or
    (estimate, stderr); the stderr widens h into a band [h_lo, h_hi].
    """
    if isinstance(s_source, tuple):
        s, s_se = float(s_source[0]), float(s_source[1])
    else:
        s, s_se = float(s_source), 0.0
    h = compute_h(params, s)
    h_lo = compute_h(params, max(s - 3 * s_se, 1e-12)) if s_se else h
    h_hi = compute_h(params, s + 3 * s_se) if s_se else h
    if ensemble is None:
        ensemble = run_free_ensemble(params, n, replicas, budget=budget)
    z = zeta(params.kappa)
    vals = np.sort(ensemble.excess / (h * float(n) ** z))
    N = len(vals)
    cdf_th = 1.0 - survival_theory(params.kappa, vals)
    i = np.arange(1, N + 1)
    ks = float(np.max(np.maximum(np.abs(i / N - cdf_th), np.abs((i - 1) / N - cdf_th))))
    expo = 2.0 * params.kappa + 3.0
    quantiles = []
    for p in surv_levels:
        t_p = (-math.log(p)) ** (1.0 / expo)
        p_emp = float(np.mean(vals >= t_p))
        z_p = (p_emp - p) / math.sqrt(p * (1 - p) / N)
        quantiles.append((t_p, p, p_emp, z_p))
    diags = {int(m): ensemble.tau_diag(m) for m in ms}
    return LimitLawReport(n, ensemble.replicas, s, s_se, h, h_lo, h_hi, vals,
                          ks, quantiles, diags, ensemble.settled_fraction,
                          ensemble.a2_fraction)


# ---------------------------------------------------------------------------
# Rescaled objective g
# ---------------------------------------------------------------------------

def g_argmin(env: Environment, n: int, s: float) -> Tuple[int, float]:
    """Minimizer over window edges of g(n^{-z}x, n^{1-z}d(x)), g(x,y)=s|x|+y/2."""
    if s <= 0:
        raise EnvError("s must be positive")
    z = zeta(env.params.kappa)
    c = env.params.c
    f = env.f_values
    if len(f) < 2:
        raise EnvError("window too small")
    sites = np.arange(env.lo, env.hi)
    d_vals = 2.0 * c - np.abs(np.diff(f))
    g = s * float(n) ** -z * np.abs(sites) + 0.5 * float(n) ** (1.0 - z) * d_vals
    best = g.min()
    cand = sites[g == best]
    x = int(min(cand, key=lambda t: (abs(t), t)))
    return x, float(best)


def g_value(params: EnvParams, n: int, s: float, x: int, d_x: float) -> float:
    z = zeta(params.kappa)
    return s * float(n) ** -z * abs(x) + 0.5 * float(n) ** (1.0 - z) * d_x
