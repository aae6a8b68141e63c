"""Random environment: site potential F and time signs B.

F(x), x in a window of Z, are i.i.d. with a symmetric density on (-c, c)
whose edge behavior is rho(x) ~ q * (c - |x|)^kappa as |x| -> c, kappa > -1.
B(i), i = 1..horizon, are i.i.d. uniform signs.

Sampling is counter based: the value at a site or time index is a pure
function of (seed, index), so growing the window or horizon never perturbs
values already drawn.  Site x maps to counter index 2x (x >= 0) or -2x-1
(x < 0); time i maps to index i.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

U64 = np.uint64
_GOLDEN = U64(0x9E3779B97F4A7C15)
_STREAM_F = 0x46  # 'F'
_STREAM_B = 0x42  # 'B'
_STREAM_REPLICA = 0x52  # 'R'

FAMILIES = ("edge_power", "uniform", "custom_table")


class EnvError(ValueError):
    """Invalid environment parameters or out-of-window access."""


# ---------------------------------------------------------------------------
# Counter-based generator (splitmix64 evaluated at an arbitrary index)
# ---------------------------------------------------------------------------

def _finalize(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # mod 2^64 arithmetic
        z = z.copy()
        z ^= z >> U64(30)
        z *= U64(0xBF58476D1CE4E5B9)
        z ^= z >> U64(27)
        z *= U64(0x94D049BB133111EB)
        z ^= z >> U64(31)
    return z


def counter_value(seed: int, index) -> np.ndarray:
    """64-bit output at position `index` of the stream keyed by `seed`."""
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = U64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _GOLDEN
    return _finalize(base)


def counter_uniform(seed: int, index) -> np.ndarray:
    """Uniform [0,1) doubles, 53 significant bits."""
    return (counter_value(seed, index) >> U64(11)) * (1.0 / (1 << 53))


def stream_seed(seed: int, tag: int) -> int:
    """Derive an independent child stream key."""
    return int(counter_value(seed ^ (tag * 0x9E3779B9), np.uint64(tag)))


def replica_seed(seed: int, r: int) -> int:
    """Seed for replica r; stable under reordering of replicas."""
    return int(counter_value(stream_seed(seed, _STREAM_REPLICA), np.uint64(r)))


def _site_index(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return np.where(x >= 0, 2 * x, -2 * x - 1).astype(np.uint64)


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvParams:
    """Distributional and addressing parameters of one environment.

    window is the inclusive site range (lo, hi) for F; horizon the largest
    time index for B.  For family "custom_table", `table` gives the density
    on [0, c] as (x, rho(x)) pairs (symmetrized; normalized internally) and
    `q_user` the edge constant used in closed-form predictions.
    """

    kappa: float
    c: float
    family: str = "edge_power"
    seed: int = 0
    window: Tuple[int, int] = (-64, 64)
    horizon: int = 128
    table: Optional[Tuple[Tuple[float, float], ...]] = None
    q_user: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise EnvError(f"unknown family {self.family!r}")
        if not self.c > 0:
            raise EnvError("c must be positive")
        if not self.kappa > -1:
            raise EnvError("kappa must exceed -1")
        if self.family == "uniform" and self.kappa != 0:
            raise EnvError("uniform family requires kappa = 0")
        if self.window[0] > self.window[1]:
            raise EnvError("window lo exceeds hi")
        if self.horizon < 0:
            raise EnvError("horizon must be nonnegative")
        if self.family == "custom_table":
            if self.table is None or len(self.table) < 2:
                raise EnvError("custom_table needs a density table")
            if self.q_user is None or self.q_user <= 0:
                raise EnvError("custom_table needs a positive edge constant q")

    @property
    def q(self) -> float:
        """Edge constant: lim rho(x)/(c-|x|)^kappa as |x| -> c."""
        if self.family == "custom_table":
            return float(self.q_user)
        return (self.kappa + 1.0) / (2.0 * self.c ** (self.kappa + 1.0))

    def with_seed(self, seed: int) -> "EnvParams":
        return replace(self, seed=seed)

    def with_window(self, lo: int, hi: int) -> "EnvParams":
        return replace(self, window=(int(lo), int(hi)))

    def with_horizon(self, horizon: int) -> "EnvParams":
        return replace(self, horizon=int(horizon))

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        d = {
            "kappa": self.kappa,
            "c": self.c,
            "family": self.family,
            "seed": self.seed,
            "window": list(self.window),
            "horizon": self.horizon,
        }
        if self.table is not None:
            d["table"] = [list(p) for p in self.table]
        if self.q_user is not None:
            d["q"] = self.q_user
        return json.dumps({"env": d}, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "EnvParams":
        d = json.loads(text)
        if "env" in d:
            d = d["env"]
        return EnvParams._from_dict(d)

    @staticmethod
    def _from_dict(d: dict) -> "EnvParams":
        table = d.get("table")
        if table is not None:
            table = tuple((float(x), float(p)) for x, p in table)
        return EnvParams(
            kappa=float(d["kappa"]),
            c=float(d["c"]),
            family=str(d.get("family", "edge_power")),
            seed=int(d.get("seed", 0)),
            window=(int(d["window"][0]), int(d["window"][1])),
            horizon=int(d.get("horizon", 128)),
            table=table,
            q_user=(float(d["q"]) if "q" in d else None),
        )

    def to_config_block(self) -> str:
        lines = [
            f"kappa = {self.kappa!r}",
            f"c = {self.c!r}",
            f"family = {self.family}",
            f"seed = {self.seed}",
            f"window = {self.window[0]},{self.window[1]}",
            f"horizon = {self.horizon}",
        ]
        if self.table is not None:
            pairs = ";".join(f"{x!r}:{p!r}" for x, p in self.table)
            lines.append(f"table = {pairs}")
        if self.q_user is not None:
            lines.append(f"q = {self.q_user!r}")
        return "\n".join(lines)

    @staticmethod
    def from_config_items(items: dict) -> "EnvParams":
        d = dict(items)
        out = {
            "kappa": float(d.pop("kappa")),
            "c": float(d.pop("c", 1.0)),
            "family": d.pop("family", "edge_power"),
            "seed": int(d.pop("seed", 0)),
            "horizon": int(d.pop("horizon", 128)),
        }
        win = d.pop("window", "-64,64")
        lo, hi = (int(s) for s in str(win).split(","))
        out["window"] = [lo, hi]
        if "table" in d:
            out["table"] = [
                [float(a) for a in pair.split(":")]
                for pair in str(d.pop("table")).split(";")
            ]
        if "q" in d:
            out["q"] = float(d.pop("q"))
        if d:
            raise EnvError(f"unknown env keys: {sorted(d)}")
        return EnvParams._from_dict(out)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------

def _custom_grid(params: EnvParams):
    tab = np.asarray(params.table, dtype=float)
    xs, ps = tab[:, 0], tab[:, 1]
    if xs[0] != 0.0 or xs[-1] != params.c:
        raise EnvError("custom table must span [0, c]")
    if np.any(np.diff(xs) <= 0) or np.any(ps < 0):
        raise EnvError("custom table must be increasing in x with rho >= 0")
    half_mass = np.concatenate([[0.0], np.cumsum(np.diff(xs) * (ps[:-1] + ps[1:]) / 2.0)])
    z = 2.0 * half_mass[-1]
    if z <= 0:
        raise EnvError("custom table has zero mass")
    return xs, ps / z, half_mass / z  # density normalized to total mass 1


def density_pdf(params: EnvParams, x) -> np.ndarray:
    """rho(x); zero outside (-c, c)."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    if params.family == "custom_table":
        xs, ps, _ = _custom_grid(params)
        out = np.interp(ax, xs, ps)
    else:
        kap, c = params.kappa, params.c
        z = 2.0 * c ** (kap + 1.0) / (kap + 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(ax < c, np.power(np.maximum(c - ax, 0.0), kap) / z, 0.0)
    return np.where(ax < params.c, out, 0.0)


def cdf(params: EnvParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if params.family == "custom_table":
        xs, _, hm = _custom_grid(params)
        pos = np.interp(np.abs(x), xs, hm)
        return np.where(x >= 0, 0.5 + pos, 0.5 - pos)
    kap, c = params.kappa, params.c
    xx = np.clip(x, -c, c)
    lower = 0.5 * np.power(np.maximum(1.0 - np.abs(xx) / c, 0.0), kap + 1.0)
    return np.where(xx >= 0, 1.0 - lower, lower)


def inverse_cdf(params: EnvParams, u) -> np.ndarray:
    """Quantile map sending uniform u to F values; strictly inside (-c, c).

    u = 0.5 maps to 0 exactly; endpoints are clamped one ulp into the
    interior so |F| = c never occurs.
    """
    u = np.asarray(u, dtype=float)
    c = params.c
    if params.family == "custom_table":
        xs, _, hm = _custom_grid(params)
        pos = np.interp(np.abs(u - 0.5), hm, xs)
        out = np.where(u >= 0.5, pos, -pos)
    else:
        kap = params.kappa
        # |x| = c (1 - (2 min(u,1-u))^{1/(kappa+1)}) on the matching side
        tail = 2.0 * np.minimum(u, 1.0 - u)
        mag = c * (1.0 - np.power(tail, 1.0 / (kap + 1.0)))
        out = np.where(u >= 0.5, mag, -mag)
    lim = np.nextafter(c, 0.0)
    return np.clip(out, -lim, lim)


def mean_abs_F(params: EnvParams) -> float:
    """D = E|F(0)|; closed form c/(kappa+2) for the edge-power families."""
    if params.family != "custom_table":
        return params.c / (params.kappa + 2.0)
    val, _ = integrate.quad(
        lambda x: 2.0 * x * float(density_pdf(params, x)), 0.0, params.c, limit=200
    )
    return float(val)


def tail_prob(params: EnvParams, a: float) -> float:
    """P(F > a) for a >= 0."""
    return float(1.0 - cdf(params, a))


# ---------------------------------------------------------------------------
# Sampled environment
# ---------------------------------------------------------------------------

class Environment:
    """One realization of (F, B) on a window and horizon.

    Arrays are read-only; F(x) and B(i) are O(1) lookups.  `extended`
    resamples with a larger window/horizon; overlapping values are
    bit-identical by construction.
    """

    def __init__(self, params: EnvParams, f_values: np.ndarray, b_values: np.ndarray):
        self.params = params
        self.lo, self.hi = params.window
        self._f = f_values
        self._b = b_values  # signs for times 1..horizon
        self._f.setflags(write=False)
        self._b.setflags(write=False)
        self._b_prefix = None

    @property
    def horizon(self) -> int:
        return self.params.horizon

    @property
    def f_values(self) -> np.ndarray:
        return self._f

    @property
    def b_values(self) -> np.ndarray:
        return self._b

    def F(self, x):
        x = np.asarray(x, dtype=np.int64)
        if np.any(x < self.lo) or np.any(x > self.hi):
            raise EnvError("site outside window")
        return self._f[x - self.lo]

    def B(self, i):
        i = np.asarray(i, dtype=np.int64)
        if np.any(i < 1) or np.any(i > self.horizon):
            raise EnvError("time outside horizon")
        return self._b[i - 1]

    def f_slice(self, lo: int, hi: int) -> np.ndarray:
        """F values on sites lo..hi inclusive."""
        if lo < self.lo or hi > self.hi:
            raise EnvError("slice outside window")
        return self._f[lo - self.lo : hi - self.lo + 1]

    def b_slice(self, t1: int, t2: int) -> np.ndarray:
        """Signs for times t1+1 .. t2."""
        if t1 < 0 or t2 > self.horizon or t1 > t2:
            raise EnvError("time range outside horizon")
        return self._b[t1:t2]

    def n_plus_prefix(self) -> np.ndarray:
        """prefix[i] = #{j <= i : B(j) = +1}, prefix[0] = 0."""
        if self._b_prefix is None:
            acc = np.concatenate([[0], np.cumsum(self._b > 0)])
            acc.setflags(write=False)
            self._b_prefix = acc
        return self._b_prefix

    def extended(self, lo: int = None, hi: int = None, horizon: int = None) -> "Environment":
        lo = self.lo if lo is None else min(lo, self.lo)
        hi = self.hi if hi is None else max(hi, self.hi)
        horizon = self.horizon if horizon is None else max(horizon, self.horizon)
        p = self.params.with_window(lo, hi).with_horizon(horizon)
        return sample_environment(p)


def sample_environment(params: EnvParams) -> Environment:
    lo, hi = params.window
    sites = np.arange(lo, hi + 1, dtype=np.int64)
    uf = counter_uniform(stream_seed(params.seed, _STREAM_F), _site_index(sites))
    f = inverse_cdf(params, uf)
    return Environment(params, f, sample_signs(params.seed, params.horizon))


def sample_signs(seed: int, horizon: int) -> np.ndarray:
    """The B stream alone: signs for times 1..horizon under this seed."""
    times = np.arange(1, horizon + 1, dtype=np.uint64)
    bits = counter_value(stream_seed(seed, _STREAM_B), times)
    return np.where((bits >> U64(63)) == 1, 1, -1).astype(np.int8)


class SiteField:
    """Plain value-per-site field (used where no full Environment exists)."""

    def __init__(self, values: np.ndarray, lo: int):
        self.values = np.asarray(values, dtype=float)
        self.lo = int(lo)
        self.hi = self.lo + len(self.values) - 1

    def __call__(self, x):
        x = np.asarray(x, dtype=np.int64)
        if np.any(x < self.lo) or np.any(x > self.hi):
            raise EnvError("site outside field")
        return self.values[x - self.lo]

    def slice(self, lo: int, hi: int) -> np.ndarray:
        if lo < self.lo or hi > self.hi:
            raise EnvError("slice outside field")
        return self.values[lo - self.lo : hi - self.lo + 1]
