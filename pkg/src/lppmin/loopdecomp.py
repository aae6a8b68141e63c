"""Loop-erasure decomposition of a point-to-point minimizing path.

A path from (0, 0) to (ln, n) is stripped of its loops site by site.  The
site order is: 0 first, then n, then the interior sites 1..n-1 by increasing
modified discrepancy d* (ties by site index).  At stage i the first and last
surviving visits a_i, z_i to the stage site v_i are located, every surviving
time in (a_i, z_i] becomes the loop L_i, and those times are removed.  What
remains after stage i is U_i; projecting the path and the sign sequence onto
U_i leaves a shorter instance that still runs from 0 to n.

Per loop the decomposition records the action mass s_i carried by the
removed times and the count e_i of adjacent removed pairs whose signs switch
from -1 to +1; those pairs are the ones that can exploit a near-degenerate
site pair, so each costs at least d*(v_i) relative to the free bound.
validate() checks every structural claim the decomposition is supposed to
satisfy, including the action bookkeeping identity, and reports each item
separately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import dp
from .discrepancy import modified_field
from .env import EnvError, Environment, SiteField
from .paths import LazyPath


@dataclass
class LoopDecomposition:
    """Full record of the stage-by-stage loop removal.

    stage[t] is the stage at which time t was removed, -1 if t survives to
    the end, -2 for t = 0 which is never part of any removable set.  Arrays
    a, z, loop_len, e, s are indexed by stage i = 0..n; a[i] = z[i] = -1
    marks a stage whose site had no surviving visit (degenerate input).
    """

    n: int
    ln: int
    c: float
    order: np.ndarray
    d_star_values: np.ndarray
    d_star_lo: int
    a: np.ndarray
    z: np.ndarray
    loop_len: np.ndarray
    e: np.ndarray
    s: np.ndarray
    stage: np.ndarray
    path: LazyPath
    signs: np.ndarray
    field: SiteField
    action: float

    def d_star(self, x: int) -> float:
        i = x - self.d_star_lo
        if not 0 <= i < len(self.d_star_values):
            raise EnvError("site outside modified discrepancy extent")
        return float(self.d_star_values[i])

    def loop_times(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.stage == i)

    def alive_times(self, m: int) -> np.ndarray:
        """Sorted U_m, times 1..ln surviving every stage up to m."""
        keep = (self.stage == -1) | (self.stage > m)
        keep[0] = False
        return np.flatnonzero(keep)

    def u_size(self, m: int) -> int:
        return int(len(self.alive_times(m)))

    def projected_signs(self, m: int) -> np.ndarray:
        return self.signs[self.alive_times(m) - 1]

    def projected_positions(self, m: int) -> np.ndarray:
        """Positions at time 0 and at each time of U_m, in time order."""
        pos = np.asarray(self.path.positions)
        return np.concatenate(([pos[0]], pos[self.alive_times(m)]))


def site_order(field: SiteField, n: int, c: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """Stage order v_0..v_n plus the modified discrepancy table behind it."""
    flo = field.lo
    fhi = field.lo + len(field.values) - 1
    if flo > -1 or fhi < n + 1:
        raise EnvError("field must cover sites -1..n+1 for the site order")
    dstar = modified_field(np.asarray(field.values, dtype=np.float64), c)
    dlo = flo + 1
    interior = np.arange(1, n)
    keys = dstar[interior - dlo]
    interior = interior[np.lexsort((interior, keys))]
    order = np.concatenate(([0, n], interior))
    return order, dstar, dlo


def decompose(signs: np.ndarray, field: SiteField, path: LazyPath,
              n: int, c: float) -> LoopDecomposition:
    """Run the loop removal on a path from (0, 0) to (len(signs), n).

    signs[t-1] is the sign at time t.  The field must cover the visited
    sites and one extra site on each side of 0..n.
    """
    pos = np.asarray(path.positions)
    ln = len(pos) - 1
    signs = np.asarray(signs, dtype=np.float64)
    if len(signs) != ln:
        raise EnvError("sign count must match path step count")
    if path.start_time != 0 or pos[0] != 0:
        raise EnvError("path must start at (0, 0)")
    if pos[-1] != n:
        raise EnvError("path must end at site n")
    if n < 1 or ln < n:
        raise EnvError("need ln >= n >= 1")

    order, dstar, dlo = site_order(field, n, c)
    fvals = field.values[pos - field.lo]
    action = 0.0
    for t in range(1, ln + 1):
        action += signs[t - 1] * fvals[t]

    alive = np.ones(ln + 1, dtype=bool)
    alive[0] = False
    stage = np.full(ln + 1, -1, dtype=np.int64)
    stage[0] = -2

    visits: dict = {}
    for t in range(ln + 1):
        visits.setdefault(int(pos[t]), []).append(t)

    a = np.full(n + 1, -1, dtype=np.int64)
    z = np.full(n + 1, -1, dtype=np.int64)
    loop_len = np.zeros(n + 1, dtype=np.int64)
    e = np.zeros(n + 1, dtype=np.int64)
    s = np.zeros(n + 1, dtype=np.float64)

    for i in range(n + 1):
        v = int(order[i])
        cand = [t for t in visits.get(v, ()) if t == 0 or alive[t]]
        if not cand:
            continue
        ai, zi = cand[0], cand[-1]
        a[i], z[i] = ai, zi
        if zi <= ai:
            continue
        Lt = np.flatnonzero(alive[ai + 1 : zi + 1]) + ai + 1
        if len(Lt) == 0:
            continue
        alive[Lt] = False
        stage[Lt] = i
        loop_len[i] = len(Lt)
        adj = Lt[:-1][np.diff(Lt) == 1]
        if len(adj):
            e[i] = int(np.sum((signs[adj - 1] == -1.0) & (signs[adj] == 1.0)))
        acc = 0.0
        for t in Lt:
            acc += signs[t - 1] * fvals[t]
        s[i] = acc

    return LoopDecomposition(n=n, ln=ln, c=c, order=order,
                             d_star_values=dstar, d_star_lo=dlo,
                             a=a, z=z, loop_len=loop_len, e=e, s=s,
                             stage=stage, path=path, signs=signs,
                             field=field, action=float(action))


def minimizer_decomposition(env: Environment, n: int, ell: int,
                            window: Optional[Tuple[int, int]] = None,
                            budget: Optional[dp.Budget] = None) -> LoopDecomposition:
    """Decompose the tie-broken minimal path for the (ell*n, n) endpoint."""
    ln = ell * n
    res = dp.optimal_path(env, ln, endpoint=n, window=window, budget=budget)
    field = SiteField(env.f_values, env.lo)
    signs = env.b_slice(0, ln).astype(np.float64)
    return decompose(signs, field, res.path, n, env.params.c)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class ItemCheck:
    label: str
    ok: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: List[ItemCheck]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> List[ItemCheck]:
        return [c for c in self.checks if not c.ok]

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            mark = "ok " if c.ok else "FAIL"
            lines.append(f"[{mark}] {c.label}" + (f": {c.detail}" if c.detail else ""))
        return "\n".join(lines)


def _lazy(posseq: np.ndarray) -> bool:
    return bool(np.all(np.abs(np.diff(posseq)) <= 1)) if len(posseq) > 1 else True


def validate(dec: LoopDecomposition,
             budget: Optional[dp.Budget] = None) -> ValidationReport:
    """Check every structural item of the decomposition.

    Items 1..10 are combinatorial.  Item 11 splits into the exact action
    bookkeeping identity (11a), minimality of the projected instance's
    optimum against the projected path (11b), and the loop-cost upper bound
    on that optimum (11c); 11b and 11c run a DP per stage.
    """
    checks: List[ItemCheck] = []
    n, ln, c = dec.n, dec.ln, dec.c
    pos = np.asarray(dec.path.positions)
    signs = dec.signs
    stage = dec.stage

    # (1) the loops plus the final surviving set partition times 1..ln
    sizes_ok = int(dec.loop_len.sum() + len(dec.alive_times(n))) == ln
    labels_ok = bool(np.all(stage[1:] >= -1)) and stage[0] == -2
    checks.append(ItemCheck("01 partition", sizes_ok and labels_ok,
                            f"loop sizes {dec.loop_len.sum()} + survivors "
                            f"{len(dec.alive_times(n))} vs ln {ln}"))

    # (2) each projection is lazy 0 -> n, visits v_0..v_i exactly once,
    #     and keeps at least n times; for i >= 1 it ends at n
    ok2 = True
    det2 = ""
    for i in range(n + 1):
        proj = dec.projected_positions(i)
        if not _lazy(proj):
            ok2, det2 = False, f"stage {i}: projection not lazy"
            break
        if len(proj) - 1 < n:
            ok2, det2 = False, f"stage {i}: |U_i| = {len(proj) - 1} < n"
            break
        if i >= 1 and proj[-1] != n:
            ok2, det2 = False, f"stage {i}: projection ends at {proj[-1]}"
            break
        want = dec.order[: i + 1]
        counts = [int(np.sum(proj == v)) for v in want]
        if any(k != 1 for k in counts):
            ok2, det2 = False, f"stage {i}: visit counts {counts} for {list(want)}"
            break
    checks.append(ItemCheck("02 projections lazy, single visits", ok2, det2))

    # (3) each loop is exactly the surviving part of (a_i, z_i], with a_i
    #     and z_i the extreme surviving visits to v_i
    ok3 = True
    det3 = ""
    for i in range(n + 1):
        Lt = dec.loop_times(i)
        ai, zi = int(dec.a[i]), int(dec.z[i])
        if ai < 0:
            if len(Lt):
                ok3, det3 = False, f"stage {i}: loop without anchor"
                break
            continue
        before = (stage == -1) | (stage > i) | (stage == i)
        before[0] = False
        if pos[ai] != dec.order[i] or pos[zi] != dec.order[i]:
            ok3, det3 = False, f"stage {i}: anchors not at site v_i"
            break
        vis = np.flatnonzero((pos == dec.order[i]) & (before | (np.arange(ln + 1) == 0)))
        if len(vis) == 0 or vis[0] != ai or vis[-1] != zi:
            ok3, det3 = False, f"stage {i}: a/z not the extreme surviving visits"
            break
        inside = np.flatnonzero(before & (np.arange(ln + 1) > ai)
                                & (np.arange(ln + 1) <= zi))
        if not np.array_equal(inside, Lt):
            ok3, det3 = False, f"stage {i}: loop is not the full surviving interval"
            break
    checks.append(ItemCheck("03 loops are full intervals", ok3, det3))

    # (4) U_m is {1..ln} minus at most m+1 disjoint intervals, size >= n
    ok4 = True
    det4 = ""
    for m in range(n + 1):
        removed = (stage >= 0) & (stage <= m)
        r = removed[1:]
        starts = int(np.sum(r & ~np.concatenate(([False], r[:-1]))))
        if starts > m + 1:
            ok4, det4 = False, f"stage {m}: {starts} removed intervals > {m + 1}"
            break
        if ln - int(r.sum()) < n:
            ok4, det4 = False, f"stage {m}: |U_m| < n"
            break
    checks.append(ItemCheck("04 at most m+1 removed intervals", ok4, det4))

    # (5) from stage 1 on, projections stay inside 0..n
    ok5 = True
    det5 = ""
    for i in range(1, n + 1):
        proj = dec.projected_positions(i)
        if proj.min() < 0 or proj.max() > n:
            ok5, det5 = False, f"stage {i}: projection leaves [0, n]"
            break
    checks.append(ItemCheck("05 projections inside 0..n", ok5, det5))

    # (6) for i >= 2 loop sites lie among the not yet processed sites
    ok6 = True
    det6 = ""
    for i in range(2, n + 1):
        Lt = dec.loop_times(i)
        if len(Lt) == 0:
            continue
        allowed = set(int(v) for v in dec.order[i:])
        sites = set(int(x) for x in pos[Lt])
        if not sites <= allowed:
            ok6, det6 = False, f"stage {i}: loop sites {sorted(sites - allowed)} already processed"
            break
    checks.append(ItemCheck("06 loop sites not yet processed", ok6, det6))

    # (7) for i >= 2 every loop site has d* at least d*(v_i)
    ok7 = True
    det7 = ""
    for i in range(2, n + 1):
        Lt = dec.loop_times(i)
        if len(Lt) == 0:
            continue
        try:
            ref = dec.d_star(int(dec.order[i]))
            worst = min(dec.d_star(int(x)) for x in set(int(x) for x in pos[Lt]))
        except EnvError:
            ok7, det7 = False, f"stage {i}: loop site outside d* extent"
            break
        if worst < ref:
            ok7, det7 = False, f"stage {i}: loop site with d* {worst:.3g} < {ref:.3g}"
            break
    checks.append(ItemCheck("07 loop sites have larger d*", ok7, det7))

    # (8) every loop action is at least -c |L_i|
    slack8 = dec.s + c * dec.loop_len
    ok8 = bool(np.all(slack8 >= -1e-9))
    checks.append(ItemCheck("08 loop action >= -c|L|", ok8,
                            "" if ok8 else f"worst slack {slack8.min():.3g}"))

    # (9) for i >= 2 each sign-switch pair inside the loop costs d*(v_i)
    ok9 = True
    det9 = ""
    for i in range(2, n + 1):
        if dec.a[i] < 0:
            continue
        ref = dec.d_star(int(dec.order[i]))
        lhs = dec.s[i]
        rhs = -c * dec.loop_len[i] + dec.e[i] * ref
        if lhs < rhs - 1e-9:
            ok9, det9 = False, f"stage {i}: s = {lhs:.6g} < {rhs:.6g}"
            break
    checks.append(ItemCheck("09 loop action >= -c|L| + e d*", ok9, det9))

    # (10) the loops capture all but at most 2(n+1) sign-switch pairs
    t = np.arange(1, ln)
    pairs = int(np.sum((signs[t - 1] == -1.0) & (signs[t] == 1.0)))
    total_e = int(dec.e.sum())
    ok10 = total_e >= pairs - 2 * (n + 1)
    checks.append(ItemCheck("10 switch pairs captured", ok10,
                            f"sum e = {total_e}, pairs = {pairs}, allowance {2 * (n + 1)}"))

    # (11a) projecting drops exactly the removed action mass
    ok11a = True
    det11a = ""
    fvals = dec.field.values[pos - dec.field.lo]
    scale = max(1.0, abs(dec.action))
    for m in range(n + 1):
        keep = dec.alive_times(m)
        acc = 0.0
        for tt in keep:
            acc += signs[tt - 1] * fvals[tt]
        expect = dec.action - float(dec.s[: m + 1].sum())
        if abs(acc - expect) > 1e-9 * scale:
            ok11a, det11a = False, f"stage {m}: {acc!r} vs {expect!r}"
            break
    checks.append(ItemCheck("11a projected action bookkeeping", ok11a, det11a))

    # (11b) the projected instance's optimum is at most the projected path
    # (11c) and at most the loop-cost bound on the original optimum
    ok11b = True
    ok11c = True
    det11b = ""
    det11c = ""
    for m in range(n + 1):
        ps = dec.projected_signs(m)
        K = len(ps)
        try:
            opt = dp.min_action_signs(dec.field.values, dec.field.lo, ps, 0, n,
                                      budget=budget)
        except EnvError as exc:
            # tampered records can leave too few surviving times to reach n
            ok11b, det11b = False, f"stage {m}: infeasible projection ({exc})"
            ok11c, det11c = False, det11b
            break
        proj_val = dec.action - float(dec.s[: m + 1].sum())
        if opt > proj_val + 1e-9 * scale:
            ok11b, det11b = False, f"stage {m}: opt {opt!r} > projected {proj_val!r}"
        loop_cost = float(sum(dec.e[j] * dec.d_star(int(dec.order[j]))
                              for j in range(2, m + 1) if dec.a[j] >= 0))
        bound = dec.action + (ln - K) * c - loop_cost
        if opt > bound + 1e-9 * scale:
            ok11c, det11c = False, f"stage {m}: opt {opt!r} > bound {bound!r}"
        if not ok11b and not ok11c:
            break
    checks.append(ItemCheck("11b projected optimum <= projected path", ok11b, det11b))
    checks.append(ItemCheck("11c projected optimum <= loop-cost bound", ok11c, det11c))

    return ValidationReport(checks)
