"""Numba inner loops for the lattice dynamic program.

Rows live on a site window mapped to array indices 0..width-1.  A cell
outside the light cone of the origin holds +inf; the kernels keep that
invariant, so reachability never needs explicit masking.  The additive term
b(t)*F(x) is applied after the 3-way min, and b is held at exactly +-1, so
every stored value is a correctly rounded sequential sum along some path.

The inner loops peel the two window-edge cells so the remaining body has no
index bounds checks and vectorizes.
"""

import numpy as np
from numba import njit


@njit(inline="always")
def _advance(a, b, f, s, lo_i, hi_i, width):
    """One DP step from row `a` into row `b` on cells lo_i..hi_i.

    The interior runs over slice views indexed from 0: a start of literal 0
    lets the compiler drop negative-index handling, which is what allows the
    loop to vectorize.
    """
    x0 = lo_i
    x1 = hi_i
    if x0 == 0:
        m = a[0]
        if width > 1 and a[1] < m:
            m = a[1]
        b[0] = m + s * f[0]
        x0 = 1
    if x1 == width - 1 and x1 >= x0:
        m = a[width - 1]
        if a[width - 2] < m:
            m = a[width - 2]
        b[width - 1] = m + s * f[width - 1]
        x1 = width - 2
    aL = a[x0 - 1 : x1]
    aC = a[x0 : x1 + 1]
    aR = a[x0 + 1 : x1 + 2]
    bC = b[x0 : x1 + 1]
    fC = f[x0 : x1 + 1]
    for i in range(bC.shape[0]):
        u = aL[i]
        v = aC[i]
        w = aR[i]
        m = u if u < v else v
        if w < m:
            m = w
        bC[i] = m + s * fC[i]
    if lo_i - 1 >= 0:
        b[lo_i - 1] = np.inf
    if hi_i + 1 < width:
        b[hi_i + 1] = np.inf


@njit(cache=True)
def dp_rows(f, bsign, row, scratch, dt0, ox):
    """Advance `row` (time offset dt0 from the origin) by len(bsign) steps.

    Result lands in `row` when len(bsign) is even, else in `scratch`.
    Returns the number of updated cells.
    """
    width = f.shape[0]
    T = bsign.shape[0]
    cells = 0
    a = row
    b = scratch
    for j in range(T):
        dt = dt0 + j + 1
        lo_i = ox - dt
        if lo_i < 0:
            lo_i = 0
        hi_i = ox + dt
        if hi_i > width - 1:
            hi_i = width - 1
        _advance(a, b, f, bsign[j], lo_i, hi_i, width)
        cells += hi_i - lo_i + 1
        tmp = a
        a = b
        b = tmp
    return cells


@njit(cache=True)
def dp_table(f, bsign, values, dt0, ox):
    """Fill rows 1..T of a dense (T+1, width) table from its row 0.

    values must arrive +inf-filled except for the caller's row 0.  The cone
    is measured from a walk start dt0 rows above row 0.  Returns the number
    of updated cells.
    """
    width = f.shape[0]
    T = bsign.shape[0]
    cells = 0
    for j in range(T):
        dt = dt0 + j + 1
        lo_i = ox - dt
        if lo_i < 0:
            lo_i = 0
        hi_i = ox + dt
        if hi_i > width - 1:
            hi_i = width - 1
        _advance(values[j], values[j + 1], f, bsign[j], lo_i, hi_i, width)
        cells += hi_i - lo_i + 1
    return cells


@njit(cache=True)
def walk_value_block(values, idx_in):
    """Backtrack through a dense block by value comparison.

    values[j] are consecutive DP rows; the walk enters at index idx_in of
    the last row.  Ties prefer staying, then the left predecessor, then the
    right.  Returns (index after each step 1..T, entry index of row 0,
    whether any visited cell had a tied minimum).
    """
    T = values.shape[0] - 1
    width = values.shape[1]
    out = np.empty(T, dtype=np.int64)
    idx = idx_in
    tie = False
    for j in range(T, 0, -1):
        out[j - 1] = idx
        prev = values[j - 1]
        vs = prev[idx]
        vl = prev[idx - 1] if idx - 1 >= 0 else np.inf
        vr = prev[idx + 1] if idx + 1 < width else np.inf
        m = vs
        if vl < m:
            m = vl
        if vr < m:
            m = vr
        dup = 0
        if vs == m:
            dup += 1
        if vl == m:
            dup += 1
        if vr == m:
            dup += 1
        if dup > 1:
            tie = True
        if vs == m:
            pass
        elif vl == m:
            idx = idx - 1
        else:
            idx = idx + 1
    return out, idx, tie


@njit(cache=True)
def dp_strip_min_with_tail(f, bsign, tail, ox, xi):
    """Best split of strip DP into 'reach the edge by m' plus 'edge tail'.

    f covers the strip; the walk starts at index ox.  tail[m] is the cost of
    the optimal edge-confined continuation over steps m+1..T.  Returns
    min over m of (min(row_m[xi], row_m[xi+1]) + tail[m]) and the cell count.
    """
    width = f.shape[0]
    T = bsign.shape[0]
    a = np.full(width, np.inf)
    b = np.full(width, np.inf)
    a[ox] = 0.0
    best = np.inf
    if ox == xi or ox == xi + 1:
        best = tail[0]
    cells = 0
    for j in range(T):
        dt = j + 1
        lo_i = ox - dt
        if lo_i < 0:
            lo_i = 0
        hi_i = ox + dt
        if hi_i > width - 1:
            hi_i = width - 1
        _advance(a, b, f, bsign[j], lo_i, hi_i, width)
        cells += hi_i - lo_i + 1
        arrive = b[xi]
        if xi + 1 < width and b[xi + 1] < arrive:
            arrive = b[xi + 1]
        cand = arrive + tail[dt]
        if cand < best:
            best = cand
        tmp = a
        a = b
        b = tmp
    return best, cells
