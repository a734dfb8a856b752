"""Compiled inner loop of the potential engine.

A potential is held as two stacks of plateaus ordered from the outside in:

* left stack ``lx, lv``: plateau ``i`` covers ``[lx[i], lx[i+1])``, the top one
  ends at the spike; ``lx[0] == -inf``.
* right stack ``rx, rv``: plateau ``i`` covers ``(rx[i+1], rx[i]]``, the top one
  starts at the spike; ``rx[0] == +inf``.

Plateaus are closed on their outer end, which is what the raise
``[x - z, x + z] -> top`` produces. ``state`` is ``[spike_x, spike_M,
explored_lo, explored_hi]`` (the explored interval is NaN while empty).

Every step pops the plateaus swallowed by the window and pushes one, so the
cost is amortized O(1) per step.
"""

import numpy as np
from numba import njit

# columns of a step record
Z, SIDE, A, B, TRAVEL, POS, MAX = range(7)
RECORD_WIDTH = 7


@njit(cache=True)
def solve(lx, lv, nl, rx, rv, nr, s, top, E, lam):
    """Half-width ``z`` with ``lam * area(top - u, [s-z, s+z]) == E``.

    Returns ``(z, il, ir)`` where ``il``/``ir`` index the plateaus lying just
    beyond the window ends. When ``E`` lands exactly on a breakpoint the
    outer plateau is reported.
    """
    il = nl - 1
    ir = nr - 1
    z = 0.0
    rem = E
    while True:
        dl = s - lx[il]
        dr = rx[ir] - s
        d = min(dl, dr)
        slope = lam * ((top - lv[il]) + (top - rv[ir]))
        if slope > 0.0:
            need = slope * (d - z)
            if rem < need:
                return z + rem / slope, il, ir
            rem -= need
        elif d == np.inf:
            raise ValueError("degenerate potential: zero slope on both tails")
        z = d
        if dl <= d:
            il -= 1
        if dr <= d:
            ir -= 1


@njit(cache=True)
def advance(lx, lv, nl, rx, rv, nr, state, T, E, U, inv_v, lam, unit, out):
    s = state[0]
    M = state[1]
    top = M if unit else M + T
    z, il, ir = solve(lx, lv, nl, rx, rv, nr, s, top, E, lam)
    a = top - lv[il]
    b = top - rv[ir]
    left = U <= a / (a + b)
    if unit:
        travel = 0.0
        new_max = M + 1.0
    else:
        travel = z * inv_v
        new_max = top + travel
    lo = s - z
    hi = s + z
    nl = il + 1
    nr = ir + 1
    # a neighbour already at ``top`` simply extends to the new spike
    if left:
        if rv[nr - 1] != top:
            rx[nr] = hi
            rv[nr] = top
            nr += 1
        new_pos = lo
    else:
        if lv[nl - 1] != top:
            lx[nl] = lo
            lv[nl] = top
            nl += 1
        new_pos = hi
    state[0] = new_pos
    state[1] = new_max
    if np.isnan(state[2]):
        state[2] = lo
        state[3] = hi
    else:
        state[2] = min(state[2], lo)
        state[3] = max(state[3], hi)
    out[Z] = z
    out[SIDE] = -1.0 if left else 1.0
    out[A] = a
    out[B] = b
    out[TRAVEL] = travel
    out[POS] = new_pos
    out[MAX] = new_max
    return nl, nr


@njit(cache=True)
def walk(lx, lv, nl, rx, rv, nr, state, Ts, Es, Us, inv_v, lam, unit, rec):
    for i in range(Es.shape[0]):
        nl, nr = advance(lx, lv, nl, rx, rv, nr, state,
                         Ts[i], Es[i], Us[i], inv_v, lam, unit, rec[i])
    return nl, nr


@njit(cache=True)
def walk_positions(lx, lv, nl, rx, rv, nr, state, Ts, Es, Us, inv_v, lam,
                   unit, pos, times):
    """Like :func:`walk` but only keeps spike positions and heights."""
    out = np.empty(RECORD_WIDTH)
    for i in range(Es.shape[0]):
        nl, nr = advance(lx, lv, nl, rx, rv, nr, state,
                         Ts[i], Es[i], Us[i], inv_v, lam, unit, out)
        pos[i] = out[POS]
        times[i] = out[MAX]
    return nl, nr


@njit(cache=True)
def evaluate(lx, lv, nl, rx, rv, nr, sx, sM, xs, out):
    """Potential values at ``xs`` read straight off the stacks."""
    for k in range(xs.shape[0]):
        x = xs[k]
        if x < sx:
            i = np.searchsorted(lx[:nl], x, side="right") - 1
            out[k] = lv[i]
        elif x > sx:
            # rx[:nr] is decreasing; count entries >= x
            lo, hi = 0, nr
            while lo < hi:
                mid = (lo + hi) // 2
                if rx[mid] >= x:
                    lo = mid + 1
                else:
                    hi = mid
            out[k] = rv[lo - 1]
        else:
            out[k] = sM


@njit(cache=True)
def first_steps(lx0, lv0, nl0, rx0, rv0, nr0, state0, Ts, Es, Us, inv_v, lam,
                unit, rec):
    """One step from the same start for every drive triple."""
    n = Es.shape[0]
    lx = np.empty(lx0.shape[0] + 1)
    lv = np.empty(lx.shape[0])
    rx = np.empty(rx0.shape[0] + 1)
    rv = np.empty(rx.shape[0])
    state = np.empty(4)
    for i in range(n):
        lx[:nl0] = lx0[:nl0]
        lv[:nl0] = lv0[:nl0]
        rx[:nr0] = rx0[:nr0]
        rv[:nr0] = rv0[:nr0]
        state[:] = state0
        advance(lx, lv, nl0, rx, rv, nr0, state, Ts[i], Es[i], Us[i], inv_v, lam,
                unit, rec[i])
