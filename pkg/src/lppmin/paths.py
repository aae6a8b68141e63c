"""Lazy lattice paths and hand-built reference paths.

A lazy path takes steps in {-1, 0, +1}.  Its action in environment (F, B)
is the sum of B(i) * F(gamma(i)) over times i in (t0, t1]; the starting
point contributes nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .env import EnvError, Environment


class PathError(ValueError):
    pass


@dataclass(frozen=True)
class LazyPath:
    """Positions at consecutive integer times start_time, start_time+1, ..."""

    start_time: int
    positions: np.ndarray  # int64, length = duration + 1

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 1 or len(pos) == 0:
            raise PathError("positions must be a nonempty 1-d array")
        if len(pos) > 1 and np.max(np.abs(np.diff(pos))) > 1:
            raise PathError("path has a step larger than 1")

    @property
    def end_time(self) -> int:
        return self.start_time + len(self.positions) - 1

    @property
    def duration(self) -> int:
        return len(self.positions) - 1

    def at(self, t: int) -> int:
        if not self.start_time <= t <= self.end_time:
            raise PathError("time outside path support")
        return int(self.positions[t - self.start_time])

    def site_range(self) -> Tuple[int, int]:
        return int(self.positions.min()), int(self.positions.max())

    def to_csv_rows(self):
        for i, x in enumerate(self.positions):
            yield (self.start_time + i, int(x))

    def to_json(self) -> str:
        return json.dumps({"start": self.start_time, "sites": [int(x) for x in self.positions]})

    @staticmethod
    def from_json(text: str) -> "LazyPath":
        d = json.loads(text)
        return LazyPath(int(d["start"]), np.asarray(d["sites"], dtype=np.int64))


def action(env: Environment, path: LazyPath) -> float:
    """Sum of B(i) F(gamma(i)) over (start_time, end_time]."""
    t0, t1 = path.start_time, path.end_time
    if t0 < 0 or t1 > env.horizon:
        raise EnvError("path time range outside horizon")
    if t1 == t0:
        return 0.0
    b = env.b_slice(t0, t1).astype(float)
    f = env.F(path.positions[1:])
    return float(np.dot(b, f))


def n_plus(env: Environment, a: int, b: int) -> int:
    """Number of +1 signs among times in (a, b]."""
    if not 0 <= a <= b <= env.horizon:
        raise EnvError("bad time interval")
    pre = env.n_plus_prefix()
    return int(pre[b] - pre[a])


# ---------------------------------------------------------------------------
# Edge-stay path eta
# ---------------------------------------------------------------------------

def _eta_positions(env: Environment, x: int, a: int, b: int) -> np.ndarray:
    fx, fx1 = float(env.F(x)), float(env.F(x + 1))
    sgn = env.b_slice(a, b)
    # sit on the smaller-F endpoint when the sign is +1, on the larger when -1;
    # ties resolve to x
    if fx <= fx1:
        on_plus, on_minus = x, x + 1
    else:
        on_plus, on_minus = x + 1, x
    inner = np.where(sgn > 0, on_plus, on_minus).astype(np.int64)
    return np.concatenate([[x], inner])


@dataclass(frozen=True)
class EdgeStayPath:
    """Path pinned to the edge {x, x+1} over (a, b], jumping with the signs."""

    x: int
    a: int
    b: int
    path: LazyPath

    @property
    def duration(self) -> int:
        return self.b - self.a


def eta_path(env: Environment, x: int, a: int, b: int) -> EdgeStayPath:
    if not 0 <= a <= b <= env.horizon:
        raise EnvError("bad time interval")
    if x < env.lo or x + 1 > env.hi:
        raise EnvError("edge outside window")
    pos = _eta_positions(env, x, a, b)
    return EdgeStayPath(x, a, b, LazyPath(a, pos))


def eta_action(env: Environment, x: int, a: int, b: int) -> float:
    """Closed form for the action of eta over (a, b].

    Equals (b-a)(d(x)/2 - c) + (N+ - (b-a)/2)(F(x) + F(x+1)) where d(x) is
    the edge discrepancy and N+ counts +1 signs in (a, b].
    """
    fx, fx1 = float(env.F(x)), float(env.F(x + 1))
    c = env.params.c
    d = 2.0 * c - abs(fx1 - fx)
    np_count = n_plus(env, a, b)
    span = b - a
    return span * (d / 2.0 - c) + (np_count - span / 2.0) * (fx + fx1)


def eta_action_bounds(env: Environment, x: int, a: int, b: int):
    """(center, deviation, naive) for the eta action over (a, b].

    |action - center| <= deviation always; action <= naive additionally
    requires F(x) F(x+1) < 0.  naive is NaN when that fails.
    """
    fx, fx1 = float(env.F(x)), float(env.F(x + 1))
    c = env.params.c
    d = 2.0 * c - abs(fx1 - fx)
    span = b - a
    center = span * (d / 2.0 - c)
    deviation = abs(n_plus(env, a, b) - span / 2.0) * d
    naive = span * (d - c) if fx * fx1 < 0 else float("nan")
    return center, deviation, naive


# ---------------------------------------------------------------------------
# Constructed reference paths
# ---------------------------------------------------------------------------

def ballistic_then_edge(env: Environment, xbar: int, n: int) -> LazyPath:
    """March straight to xbar, then ride the edge {xbar, xbar+1} until n."""
    m = abs(xbar)
    if n < m:
        raise PathError("horizon too short to reach the target site")
    step = 1 if xbar >= 0 else -1
    march = step * np.arange(m + 1, dtype=np.int64)
    tail = _eta_positions(env, xbar, m, n)[1:] if n > m else np.empty(0, dtype=np.int64)
    return LazyPath(0, np.concatenate([march, tail]))


def detour_rate(params) -> float:
    """Probability that a site pair triggers a detour in nonlinearity_walk."""
    from .env import tail_prob

    p_hi = tail_prob(params, 0.75 * params.c)
    return p_hi * p_hi


def nonlinearity_walk(env: Environment, n: int) -> Tuple[LazyPath, int]:
    """Left-to-right walk over sites 0..n with opportunistic two-step detours.

    Passing from site i-1 to i, if F(i-1) is deep negative, F(i) deep
    positive (both beyond 3c/4) and the next sign is +1, the walk lingers
    one extra step at i-1.  Returns (path, duration T_n); E T_n = (1+r/2) n
    with r = detour_rate.
    """
    if n < 1:
        raise PathError("n must be positive")
    if env.hi < n:
        raise EnvError("window too small for nonlinearity walk")
    thresh = 0.75 * env.params.c
    f = env.f_slice(0, n)
    pos = np.empty(2 * n + 1, dtype=np.int64)
    pos[0] = 0
    t = 0
    for i in range(1, n + 1):
        if t + 2 > env.horizon:
            raise EnvError("horizon too short for nonlinearity walk")
        if f[i - 1] < -thresh and f[i] > thresh and env.B(t + 1) == 1:
            pos[t + 1] = i - 1
            pos[t + 2] = i
            t += 2
        else:
            pos[t + 1] = i
            t += 1
    return LazyPath(0, pos[: t + 1].copy()), t


def min_discrepancy_action_bound(env: Environment, path: LazyPath) -> float:
    """Lower bound on action(env, path) from the smallest visited discrepancy.

    -c (t2-t1) + (number of even i in (t1,t2) with B(i) != B(i+1)) * min d(x),
    minimum over the visited site range.
    """
    t1, t2 = path.start_time, path.end_time
    lo, hi = path.site_range()
    if hi + 1 > env.hi:
        raise EnvError("window too small for discrepancy over the visited range")
    f = env.f_slice(lo, hi + 1)
    d_min = float(np.min(2.0 * env.params.c - np.abs(np.diff(f))))
    i = np.arange(t1 + 1, t2)
    i = i[i % 2 == 0]
    flips = 0
    if len(i):
        b = env.b_values
        flips = int(np.count_nonzero(b[i - 1] != b[i]))
    return -env.params.c * (t2 - t1) + flips * d_min
