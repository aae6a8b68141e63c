"""Exact minimal-action dynamic programming for lazy lattice paths.

All solvers compute min over paths gamma from an origin (t0, x0) of
sum_{i in (t0, t]} B(i) F(gamma(i)), restricted to a site window.  Cells
unreachable from the origin hold +inf.  Values are exact in the sense that
every stored number is the correctly rounded sequential sum of some path,
so small instances agree bit-for-bit with brute-force enumeration.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .env import EnvError, Environment
from .paths import LazyPath

TABLE_MAGIC = b"LPPTBL01"
BRUTE_FORCE_LIMIT = 14


class BudgetExceeded(RuntimeError):
    pass


class Budget:
    """Shared cap on DP cell updates.

    charge() never raises; callers stop between units of work once
    `exceeded` turns true, so the cap is overshot by at most one unit.
    guard() raises upfront for requests that cannot fit at all.
    """

    def __init__(self, max_cells: int):
        self.max_cells = int(max_cells)
        self.spent = 0

    def charge(self, cells: int) -> None:
        self.spent += int(cells)

    @property
    def exceeded(self) -> bool:
        return self.spent >= self.max_cells

    @property
    def remaining(self) -> int:
        return max(0, self.max_cells - self.spent)

    def guard(self, projected: int, what: str) -> None:
        if projected > self.max_cells - self.spent:
            raise BudgetExceeded(
                f"{what} needs about {projected} cell updates, "
                f"{self.max_cells - self.spent} remain"
            )


def _charge(budget: Optional[Budget], cells: int) -> None:
    if budget is not None:
        budget.charge(cells)


# ---------------------------------------------------------------------------
# Window plumbing
# ---------------------------------------------------------------------------

def _resolve_window(env: Environment, origin_x: int, span: int,
                    window: Optional[Tuple[int, int]]) -> Tuple[int, int]:
    if window is None:
        lo = max(env.lo, origin_x - span)
        hi = min(env.hi, origin_x + span)
    else:
        lo, hi = int(window[0]), int(window[1])
        if lo < env.lo or hi > env.hi:
            raise EnvError("requested window exceeds sampled environment")
    if not lo <= origin_x <= hi:
        raise EnvError("origin outside window")
    return lo, hi


def _fresh_rows(width: int, ox_idx: int):
    row = np.full(width, np.inf)
    scratch = np.full(width, np.inf)
    row[ox_idx] = 0.0
    return row, scratch


# ---------------------------------------------------------------------------
# Full table
# ---------------------------------------------------------------------------

@dataclass
class ActionTable:
    """Dense minimal-action table rooted at origin (t0, x0).

    values[r, i] is the minimum over paths from (t0, x0) to
    (t0 + r, lo + i); +inf where unreachable.
    """

    origin: Tuple[int, int]
    lo: int
    hi: int
    values: np.ndarray
    cells: int = 0

    @property
    def duration(self) -> int:
        return self.values.shape[0] - 1

    def value(self, t: int, x: int) -> float:
        t0, _ = self.origin
        if not (t0 <= t <= t0 + self.duration and self.lo <= x <= self.hi):
            raise EnvError("cell outside table")
        return float(self.values[t - t0, x - self.lo])

    def row(self, t: int) -> np.ndarray:
        t0, _ = self.origin
        if not t0 <= t <= t0 + self.duration:
            raise EnvError("row outside table")
        return self.values[t - t0]

    def last_row(self) -> np.ndarray:
        return self.values[-1]

    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def save(self, path) -> None:
        """Row-major float64 dump; 16-byte header (magic, duration).

        Only origin-rooted full-cone tables (origin (0,0), window [-n, n])
        round-trip, since the header carries no window fields.
        """
        n = self.duration
        if self.origin != (0, 0) or self.lo != -n or self.hi != n:
            raise EnvError("only canonical tables (origin 0, window [-n, n]) can be dumped")
        with open(path, "wb") as fh:
            fh.write(TABLE_MAGIC)
            fh.write(struct.pack("<Q", n))
            fh.write(np.ascontiguousarray(self.values).tobytes())

    @staticmethod
    def load(path) -> "ActionTable":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != TABLE_MAGIC:
                raise EnvError("bad table file magic")
            (n,) = struct.unpack("<Q", fh.read(8))
            raw = np.frombuffer(fh.read(), dtype=np.float64)
        width = 2 * n + 1
        if raw.size != (n + 1) * width:
            raise EnvError("table file size mismatch")
        return ActionTable((0, 0), -n, n, raw.reshape(n + 1, width).copy())


def build_table(env: Environment, n: int, origin: Tuple[int, int] = (0, 0),
                window: Optional[Tuple[int, int]] = None,
                budget: Optional[Budget] = None,
                max_cells: int = 200_000_000) -> ActionTable:
    """Dense table for times t0..t0+n.  Memory is (n+1) x width doubles."""
    t0, x0 = origin
    if n < 0 or t0 < 0 or t0 + n > env.horizon:
        raise EnvError("time range outside horizon")
    lo, hi = _resolve_window(env, x0, n, window)
    width = hi - lo + 1
    if (n + 1) * width > max_cells:
        raise BudgetExceeded(f"table of {(n + 1) * width} cells exceeds max_cells")
    f = env.f_slice(lo, hi)
    b = env.b_slice(t0, t0 + n).astype(np.float64)
    values = np.full((n + 1, width), np.inf)
    values[0, x0 - lo] = 0.0
    cells = _kernels.dp_table(f, b, values, 0, x0 - lo)
    _charge(budget, cells)
    return ActionTable((t0, x0), lo, hi, values, cells=int(cells))


# ---------------------------------------------------------------------------
# Rolling solvers
# ---------------------------------------------------------------------------

def _roll(env: Environment, n: int, origin: Tuple[int, int],
          window: Optional[Tuple[int, int]], budget: Optional[Budget]):
    t0, x0 = origin
    if n < 0 or t0 < 0 or t0 + n > env.horizon:
        raise EnvError("time range outside horizon")
    lo, hi = _resolve_window(env, x0, n, window)
    f = env.f_slice(lo, hi)
    b = env.b_slice(t0, t0 + n).astype(np.float64)
    row, scratch = _fresh_rows(hi - lo + 1, x0 - lo)
    cells = _kernels.dp_rows(f, b, row, scratch, 0, x0 - lo)
    _charge(budget, cells)
    final = row if n % 2 == 0 else scratch
    return final, lo, hi


def min_action_point(env: Environment, n: int, k: int,
                     origin: Tuple[int, int] = (0, 0),
                     window: Optional[Tuple[int, int]] = None,
                     budget: Optional[Budget] = None) -> float:
    """Minimum action from origin to (t0 + n, k), paths inside the window."""
    t0, x0 = origin
    if abs(k - x0) > n:
        raise EnvError("endpoint unreachable in n steps")
    row, lo, hi = _roll(env, n, origin, window, budget)
    if not lo <= k <= hi:
        raise EnvError("endpoint outside window")
    v = float(row[k - lo])
    if not np.isfinite(v):
        raise EnvError("endpoint unreachable inside window")
    return v


def free_argmin(row: np.ndarray, lo: int) -> int:
    """Site of the row minimum; ties resolve to smallest |k|, negative first."""
    m = np.min(row)
    ks = np.flatnonzero(row == m) + lo
    best = min(ks, key=lambda k: (abs(k), k))
    return int(best)


def min_action_free(env: Environment, n: int,
                    origin: Tuple[int, int] = (0, 0),
                    window: Optional[Tuple[int, int]] = None,
                    budget: Optional[Budget] = None) -> Tuple[float, int]:
    row, lo, hi = _roll(env, n, origin, window, budget)
    k = free_argmin(row, lo)
    return float(row[k - lo]), k


def point_rows(env: Environment, ns: Sequence[int],
               origin: Tuple[int, int] = (0, 0),
               window: Optional[Tuple[int, int]] = None,
               budget: Optional[Budget] = None) -> Dict[int, np.ndarray]:
    """Final rows at each requested time, from a single forward pass."""
    ns = sorted(set(int(n) for n in ns))
    if not ns or ns[0] < 0:
        raise EnvError("ladder times must be nonnegative")
    t0, x0 = origin
    if t0 + ns[-1] > env.horizon:
        raise EnvError("ladder exceeds horizon")
    lo, hi = _resolve_window(env, x0, ns[-1], window)
    f = env.f_slice(lo, hi)
    cur, other = _fresh_rows(hi - lo + 1, x0 - lo)
    out: Dict[int, np.ndarray] = {}
    t = 0
    if ns[0] == 0:
        out[0] = cur.copy()
        ns = ns[1:]
    for target in ns:
        seg = env.b_slice(t0 + t, t0 + target).astype(np.float64)
        cells = _kernels.dp_rows(f, seg, cur, other, t, x0 - lo)
        _charge(budget, cells)
        if len(seg) % 2 == 1:
            cur, other = other, cur
        t = target
        out[target] = cur.copy()
    return out


def two_point_action(env: Environment, p1: Tuple[int, int], p2: Tuple[int, int],
                     window: Optional[Tuple[int, int]] = None,
                     budget: Optional[Budget] = None) -> float:
    """Minimum action over paths from (t1, x1) to (t2, x2)."""
    (t1, x1), (t2, x2) = p1, p2
    if t2 < t1:
        raise EnvError("reversed time order")
    if abs(x2 - x1) > t2 - t1:
        raise EnvError("endpoint unreachable in the available time")
    return min_action_point(env, t2 - t1, x2, origin=(t1, x1),
                            window=window, budget=budget)


def min_action_signs(f_values: np.ndarray, f_lo: int, signs: np.ndarray,
                     x_start: int, x_end: int,
                     budget: Optional[Budget] = None) -> float:
    """Minimum action under an explicit sign sequence (times 1..len(signs)).

    Paths start at (0, x_start), end at (len(signs), x_end), and stay inside
    the extent of f_values.
    """
    T = len(signs)
    if abs(x_end - x_start) > T:
        raise EnvError("endpoint unreachable")
    f_hi = f_lo + len(f_values) - 1
    if not (f_lo <= x_start <= f_hi and f_lo <= x_end <= f_hi):
        raise EnvError("endpoint outside field")
    b = np.asarray(signs, dtype=np.float64)
    row, scratch = _fresh_rows(len(f_values), x_start - f_lo)
    cells = _kernels.dp_rows(np.asarray(f_values, dtype=np.float64), b,
                             row, scratch, 0, x_start - f_lo)
    _charge(budget, cells)
    final = row if T % 2 == 0 else scratch
    v = float(final[x_end - f_lo])
    if not np.isfinite(v):
        raise EnvError("endpoint unreachable inside field")
    return v


# ---------------------------------------------------------------------------
# Optimal paths
# ---------------------------------------------------------------------------

@dataclass
class OptimalPathResult:
    value: float
    endpoint: int
    path: LazyPath
    unique: bool
    touched_boundary: bool
    window: Tuple[int, int]
    cells: int


def backtrack(table: ActionTable, endpoint: Optional[int] = None) -> OptimalPathResult:
    """Walk an ActionTable back from an endpoint (or the free argmin).

    Ties prefer staying, then the left predecessor, then the right; the
    result is flagged non-unique when any visited cell had a tied minimum.
    """
    t0, x0 = table.origin
    n = table.duration
    last = table.last_row()
    if endpoint is None:
        endpoint = free_argmin(last, table.lo)
    if not table.lo <= endpoint <= table.hi:
        raise EnvError("endpoint outside table window")
    value = float(last[endpoint - table.lo])
    if not np.isfinite(value):
        raise EnvError("endpoint unreachable")
    width = table.hi - table.lo + 1
    pos = np.empty(n + 1, dtype=np.int64)
    idx = endpoint - table.lo
    unique = True
    for r in range(n, 0, -1):
        pos[r] = idx + table.lo
        prev = table.values[r - 1]
        vs = prev[idx]
        vl = prev[idx - 1] if idx - 1 >= 0 else np.inf
        vr = prev[idx + 1] if idx + 1 < width else np.inf
        m = min(vs, vl, vr)
        if (vs == m) + (vl == m) + (vr == m) > 1:
            unique = False
        if vs == m:
            pass
        elif vl == m:
            idx -= 1
        else:
            idx += 1
    pos[0] = idx + table.lo
    if pos[0] != x0:
        raise EnvError("backtrack did not reach the origin")
    path = LazyPath(t0, pos)
    rlo, rhi = path.site_range()
    return OptimalPathResult(value, int(endpoint), path, unique,
                             rlo == table.lo or rhi == table.hi,
                             (table.lo, table.hi), table.cells)


def optimal_path(env: Environment, n: int, endpoint: Optional[int] = None,
                 origin: Tuple[int, int] = (0, 0),
                 window: Optional[Tuple[int, int]] = None,
                 budget: Optional[Budget] = None,
                 block_rows: Optional[int] = None) -> OptimalPathResult:
    """Minimal path by checkpointed forward pass plus blockwise backtrack.

    Memory stays O((n / block) * width + block * width) instead of the full
    n * width predecessor table.
    """
    t0, x0 = origin
    if n < 1 or t0 < 0 or t0 + n > env.horizon:
        raise EnvError("time range outside horizon")
    lo, hi = _resolve_window(env, x0, n, window)
    width = hi - lo + 1
    ox = x0 - lo
    if block_rows is None:
        block_rows = max(128, min(4096, 6_000_000 // width))
    f = env.f_slice(lo, hi)
    bsign = env.b_slice(t0, t0 + n).astype(np.float64)

    starts = list(range(0, n, block_rows))
    checkpoints = []
    cur, other = _fresh_rows(width, ox)
    total_cells = 0
    for s in starts:
        checkpoints.append(cur.copy())
        seg = bsign[s : min(s + block_rows, n)]
        total_cells += _kernels.dp_rows(f, seg, cur, other, s, ox)
        if len(seg) % 2 == 1:
            cur, other = other, cur
    _charge(budget, total_cells)

    last = cur
    if endpoint is None:
        endpoint = free_argmin(last, lo)
    if not lo <= endpoint <= hi:
        raise EnvError("endpoint outside window")
    value = float(last[endpoint - lo])
    if not np.isfinite(value):
        raise EnvError("endpoint unreachable inside window")

    pos = np.empty(n + 1, dtype=np.int64)
    idx = endpoint - lo
    unique = True
    buf = np.empty((block_rows + 1, width), dtype=np.float64)
    back_cells = 0
    for j in range(len(starts) - 1, -1, -1):
        s = starts[j]
        length = min(s + block_rows, n) - s
        block = buf[: length + 1]
        block[0] = checkpoints[j]
        block[1:] = np.inf
        back_cells += _kernels.dp_table(f, bsign[s : s + length], block, s, ox)
        steps, idx, tie = _kernels.walk_value_block(block, idx)
        pos[s + 1 : s + 1 + length] = steps + lo
        unique = unique and not tie
    _charge(budget, back_cells)
    pos[0] = idx + lo
    if pos[0] != x0:
        raise EnvError("backtrack did not reach the origin")
    path = LazyPath(t0, pos)
    rlo, rhi = path.site_range()
    return OptimalPathResult(value, int(endpoint), path, unique,
                             rlo == lo or rhi == hi, (lo, hi),
                             total_cells + back_cells)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

_enum_cache: Dict[int, tuple] = {}


def _enumeration(n: int):
    """All 3^n step sequences: relative positions, endpoint grouping."""
    if n in _enum_cache:
        return _enum_cache[n]
    count = 3 ** n
    codes = np.arange(count, dtype=np.int64)
    steps = np.empty((count, n), dtype=np.int8)
    for t in range(n):
        steps[:, t] = codes % 3 - 1
        codes //= 3
    rel = np.cumsum(steps, axis=1, dtype=np.int16)
    ends = rel[:, -1].astype(np.int64)
    order = np.argsort(ends, kind="stable")
    sorted_ends = ends[order]
    uniq, seg_starts = np.unique(sorted_ends, return_index=True)
    _enum_cache.clear()  # bounded memory: keep one size at a time
    _enum_cache[n] = (rel, order, seg_starts, uniq)
    return _enum_cache[n]


def brute_force_oracle(env: Environment, n: int,
                       origin: Tuple[int, int] = (0, 0),
                       endpoint: Optional[int] = None):
    """Exhaustive minimum over all 3^n lazy paths.

    With endpoint=None returns (sites, minima) over every reachable
    endpoint; otherwise the scalar minimum.  Refuses n > 14.
    """
    if n > BRUTE_FORCE_LIMIT:
        raise EnvError(f"brute force capped at n = {BRUTE_FORCE_LIMIT}")
    if n < 1:
        raise EnvError("n must be positive")
    t0, x0 = origin
    if t0 + n > env.horizon:
        raise EnvError("time range outside horizon")
    if x0 - n < env.lo or x0 + n > env.hi:
        raise EnvError("window must cover the full cone for brute force")
    rel, order, seg_starts, uniq = _enumeration(n)
    f = env.f_values
    off = x0 - env.lo
    b = env.b_slice(t0, t0 + n).astype(np.float64)
    acc = np.zeros(rel.shape[0])
    for t in range(n):
        acc += b[t] * f[rel[:, t].astype(np.int64) + off]
    minima = np.minimum.reduceat(acc[order], seg_starts)
    sites = uniq + x0
    if endpoint is None:
        return sites, minima
    sel = np.flatnonzero(sites == endpoint)
    if len(sel) == 0:
        raise EnvError("endpoint unreachable in n steps")
    return float(minima[sel[0]])
