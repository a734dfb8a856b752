"""Block decomposition of a walk and the events used to control it.

Customers are grouped into blocks of ``ell_j = ceil(12 j^(1/4) + 1)`` (or one
more, when the block contains a single backtrack). A block succeeds when its
displacement, duration and confinement stay inside explicit bounds. A failed
block triggers a restart from the recentered potential.

Positions are measured in the scaled, oriented frame ``y = lam * sigma *
(S - S_0)`` so the bounds read the same for every arrival intensity. Times
are never scaled.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import Trajectory, Walker
from .potential import Potential, center


def block_length(j: int) -> int:
    """``ell_0 = 1`` and ``ell_j = ceil(12 j^(1/4) + 1)``."""
    if j < 0:
        raise ValueError("j must be >= 0")
    if j == 0:
        return 1
    # 12 j^(1/4) is an integer only for fourth powers; keep those exact
    r = round(j ** 0.25)
    if r ** 4 == j:
        return 12 * r + 1
    return math.ceil(12 * j ** 0.25 + 1)


def partial_sums(upto: int) -> list[int]:
    """``m_j = ell_1 + ... + ell_j`` for ``j = 0..upto``."""
    out = [0]
    for j in range(1, upto + 1):
        out.append(out[-1] + block_length(j))
    return out


def jstar_and_m(v: float = math.inf, service: str = "det1"):
    """Smallest ``j*`` with ``1 / (m_j* v) < 1/16`` and the first-block size
    ``m = 1 + m_j*``.

    The second condition, ``P(n/2 < T_1 + ... + T_n < 2n) > 0`` for large
    ``n``, holds for every built-in service law (``det1`` sums to ``n``
    exactly and ``exp`` has full support), so only the speed binds.
    """
    if service not in ("det1", "exp"):
        raise ValueError(f"unsupported service {service!r}")
    if not v > 0:
        raise ValueError("speed must be positive")
    j, m = 1, block_length(1)
    while not (1.0 / (m * v) < 1.0 / 16):
        j += 1
        m += block_length(j)
    return j, 1 + m


@dataclass(frozen=True)
class BlockBounds:
    x_lo: float
    x_hi: float
    m_lo: float = 0.0
    m_hi: float = math.inf


def bounds(j: int, N_j: float, N_next: float, eps: float, jstar: int | None = None,
           x0_hi: float = math.inf) -> BlockBounds:
    """Displacement and duration bounds of block ``j``.

    For ``j == 0`` only ``x_lo = 4 / N_1`` (passed as ``N_next``) and
    ``x_hi = x0_hi`` apply. Duration bounds are filled in when ``jstar`` is
    given (general case).
    """
    if not 0 < eps < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    if j == 0:
        return BlockBounds(4.0 / N_next, x0_hi)
    ell = block_length(j)
    x_lo = (1 - eps) * (ell - 1) / N_next
    x_hi = (1 + eps) * ell / N_j
    if jstar is None:
        return BlockBounds(x_lo, x_hi)
    m_lo = 0.5 * ell if j > jstar else 0.0
    return BlockBounds(x_lo, x_hi, m_lo, 3.0 * ell + 3.0)


@dataclass
class Block:
    j: int
    start: int                     # customers served at block start
    L: float                       # time at block start
    Z: float                       # oriented, scaled position at block start
    N: float                       # L - u0(S_start)
    ell: int
    Q: int | None = None
    X: float | None = None
    x_lo: float | None = None
    x_hi: float | None = None
    M: float | None = None
    m_lo: float | None = None
    m_hi: float | None = None
    backtrack: int | None = None   # step index of the single backtrack
    success: bool | None = None    # None while truncated
    reason: str = ""

    @property
    def end(self):
        return None if self.Q is None else self.start + self.Q


@dataclass
class BlockReport:
    case: str
    sigma: int
    eps: float
    lam: float
    blocks: list[Block] = field(default_factory=list)
    failed_j: int | None = None
    restart_at: int | None = None  # index, relative to the report, of the restart
    truncated: bool = False
    jstar: int | None = None
    m: int | None = None
    offset: int = 0

    @property
    def successes(self) -> list[Block]:
        return [b for b in self.blocks if b.success]

    def L_at(self, j: int):
        """Customer count at the start of block ``j`` if it was reached."""
        for b in self.blocks:
            if b.j == j:
                return b.start
        last = self.blocks[-1] if self.blocks else None
        if last is not None and last.j == j - 1 and last.success:
            return last.end
        return None

    def to_json(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return str(v)
            return v

        d = asdict(self)
        d["blocks"] = [{k: clean(v) for k, v in b.items()} for b in d["blocks"]]
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def _orient(traj: Trajectory, u0: Potential, lam: float):
    S0 = traj.S[0]
    return lam * (traj.S - S0), traj.t.copy(), (traj.t - u0(traj.S))


def detect_blocks(traj: Trajectory, u0: Potential, eps: float = 0.1,
                  v: float = math.inf, service: str = "det1",
                  max_blocks: int | None = None) -> BlockReport:
    """Scan ``traj`` (started from ``u0``) block by block until a block
    fails, the trajectory runs out, or ``max_blocks`` blocks succeeded.

    ``N`` always uses ``u0``: the potential at a block start coincides with
    it ahead of the server but not behind.
    """
    if not 0 < eps < 0.5:
        raise ValueError("epsilon must lie in (0, 1/2)")
    lam = traj.lam
    general = traj.case == "general"
    H = traj.horizon
    P, t, N = _orient(traj, u0, lam)
    jstar = m = None
    if general:
        jstar, m = jstar_and_m(v, service)
    rep = BlockReport(traj.case, 0, eps, lam, jstar=jstar, m=m)

    # -- block 0
    Q0 = m if general else 1
    if H < Q0:
        rep.truncated = True
        rep.sigma = int(np.sign(P[1])) if H >= 1 else 0
        return rep
    if general:
        prev = P[:Q0]
        if P[Q0] > prev.max():
            sigma, beyond = 1, True
        elif P[Q0] < prev.min():
            sigma, beyond = -1, True
        else:
            sigma, beyond = int(np.sign(P[Q0]) or 1), False
    else:
        sigma, beyond = int(np.sign(P[1])), True
    rep.sigma = sigma
    P = sigma * P
    b0 = Block(0, 0, t[0] - t[0], 0.0, float(N[0]), 1 if not general else Q0, Q=Q0)
    b0.X = float(P[Q0])
    bb = bounds(0, 0.0, float(N[Q0]), eps, x0_hi=lam * v if general else math.inf)
    b0.x_lo, b0.x_hi = bb.x_lo, bb.x_hi
    if general:
        b0.M = float(t[Q0] - t[0])
        b0.m_lo, b0.m_hi = float(m - 1), math.inf
        jump = abs(P[Q0] - P[Q0 - 1])
        T_last = traj.T[Q0]
        checks = [(beyond, "S_m is not an unexplored point"),
                  (b0.M >= b0.m_lo, "M_0 below m_j*"),
                  (T_last <= 1.0, "T_m > 1"),
                  (bb.x_lo <= jump <= bb.x_hi, "last jump outside [X0-, X0+]")]
    else:
        checks = [(b0.X >= bb.x_lo, "X_0 below 4/N_1")]
    failed = [why for ok, why in checks if not ok]
    b0.success = not failed
    b0.reason = "; ".join(failed)
    rep.blocks.append(b0)
    if failed:
        rep.failed_j, rep.restart_at = 0, Q0
        return rep

    # -- blocks j >= 1
    j, a = 1, Q0
    Z_prev = 0.0
    while max_blocks is None or j <= max_blocks:
        ell = block_length(j)
        blk = Block(j, a, float(t[a] - t[0]), float(P[a]), float(N[a]), ell)
        rep.blocks.append(blk)
        stop = min(a + ell, H)
        steps = np.arange(a + 1, stop + 1)
        back = steps[~(P[steps] > P[steps - 1])]
        fail_at = None
        if back.size >= 2:
            fail_at, blk.reason = int(back[1]), "two backtracks"
        elif a + ell > H:
            rep.truncated = True
            return rep
        elif back.size == 0:
            blk.Q = ell
        else:
            blk.backtrack = int(back[0])
            if a + ell + 1 > H:
                rep.truncated = True
                return rep
            if P[a + ell + 1] > P[a + ell]:
                blk.Q = ell + 1
            else:
                fail_at, blk.reason = a + ell + 1, "backtrack after the single backtrack"
        if fail_at is not None:
            blk.success = False
            rep.failed_j, rep.restart_at = j, fail_at
            return rep

        e = a + blk.Q
        blk.X = float(P[e] - P[a])
        bb = bounds(j, float(N[a]), float(N[e]), eps, jstar)
        blk.x_lo, blk.x_hi = bb.x_lo, bb.x_hi
        failed = []
        if not bb.x_lo <= blk.X <= bb.x_hi:
            failed.append("X_j outside [X-, X+]")
        inside = P[a:e]
        if not (np.all(inside > Z_prev) and np.all(inside < P[e])):
            failed.append("left the corridor (Z_{j-1}, Z_{j+1})")
        if general:
            blk.M = float(t[e] - t[a])
            blk.m_lo, blk.m_hi = bb.m_lo, bb.m_hi
            if not bb.m_lo <= blk.M <= bb.m_hi:
                failed.append("M_j outside [M-, M+]")
        blk.success = not failed
        blk.reason = "; ".join(failed)
        if failed:
            rep.failed_j, rep.restart_at = j, e
            return rep
        Z_prev = blk.Z
        a = e
        j += 1
    return rep


def audit(report: BlockReport, traj: Trajectory, u0: Potential) -> list[str]:
    """Re-derive every accepted block from the raw trajectory.

    Returns a list of violations (empty when the detector is consistent).
    """
    problems = []
    lam, sg, eps = report.lam, report.sigma, report.eps
    S0 = traj.S[0]

    def y(n):
        return lam * sg * (traj.S[n] - S0)

    def Nn(n):
        return traj.t[n] - float(u0(traj.S[n]))

    accepted = report.successes
    for k, blk in enumerate(accepted):
        start, Q = blk.start, blk.Q
        end = start + Q
        if blk.j == 0:
            if report.case == "unit" and not y(1) >= 4.0 / Nn(1):
                problems.append("block 0: X_0 < 4/N_1")
            continue
        ell = block_length(blk.j)
        if Q not in (ell, ell + 1):
            problems.append(f"block {blk.j}: Q={Q}")
        backs = [n for n in range(start + 1, end + 1) if not y(n) > y(n - 1)]
        if (Q == ell and backs) or (Q == ell + 1 and (len(backs) != 1
                                                     or backs[0] > start + ell)):
            problems.append(f"block {blk.j}: backtracks {backs} with Q={Q}")
        X = y(end) - y(start)
        lo = (1 - eps) * (ell - 1) / Nn(end)
        hi = (1 + eps) * ell / Nn(start)
        if not lo <= X <= hi:
            problems.append(f"block {blk.j}: X={X} outside [{lo}, {hi}]")
        z_prev = 0.0 if blk.j == 1 else y(accepted[k - 1].start)
        for n in range(start, end):
            if not z_prev < y(n) < y(end):
                problems.append(f"block {blk.j}: y({n}) outside corridor")
                break
        if report.case == "general":
            M = traj.t[end] - traj.t[start]
            mlo = 0.5 * ell if blk.j > report.jstar else 0.0
            if not mlo <= M <= 3 * ell + 3:
                problems.append(f"block {blk.j}: M={M}")
    return problems


# ---------------------------------------------------------------------------
# restarts


@dataclass
class Attempt:
    """An attempt that got past block 0.

    ``u0`` is the recentered start potential when it was kept, else None.
    """

    offset: int
    x0: float
    t0: float
    report: BlockReport
    traj: Trajectory  # the scanned window, starting at ``offset``
    u0: Potential | None = None
    problems: list[str] = field(default_factory=list)


@dataclass
class RestartScan:
    offsets: np.ndarray           # start of every attempt, in order
    attempts: list[Attempt]       # the attempts that passed block 0
    n_star: int | None            # None when the last attempt never got going

    @property
    def restarts(self) -> np.ndarray:
        return self.offsets[1:]

    @property
    def truncated(self) -> bool:
        return self.n_star is None

    @property
    def final(self) -> Attempt | None:
        if self.n_star is None or not self.attempts:
            return None
        return self.attempts[-1]


def window(traj: Trajectory, k: int, length: int | None = None) -> Trajectory:
    """Steps ``k .. k + length`` of ``traj``, recentered at ``(S_k, t_k)``."""
    stop = traj.S.size if length is None else min(traj.S.size, k + length + 1)

    def cut(x):
        return x[k:stop].copy()

    out = Trajectory(traj.case, traj.lam, traj.v, cut(traj.t) - traj.t[k],
                     cut(traj.S) - traj.S[k], cut(traj.z), cut(traj.side), cut(traj.a),
                     cut(traj.b), cut(traj.E), cut(traj.U), cut(traj.T))
    for name in ("z", "a", "b", "E", "U", "T"):
        getattr(out, name)[0] = np.nan
    out.side[0] = 0
    return out


def _block0_candidates(traj: Trajectory, v: float, Q0: int) -> np.ndarray:
    """Start indices whose block 0 can possibly succeed.

    A necessary condition only; the detector makes the exact call. In the
    unit case the potential just beyond the window end is ``top - a`` (or
    ``top - b``), which bounds ``N_1`` from above since the point itself can
    only sit higher.
    """
    H = traj.horizon
    lam = traj.lam
    if H < Q0:
        return np.zeros(0, dtype=bool)
    if traj.case == "unit":
        gap = np.where(traj.side[1:] < 0, traj.a[1:], traj.b[1:])
        return lam * traj.z[1:] * (1.0 + gap) >= 4.0 * (1 - 1e-9)
    S, t, T = traj.S, traj.t, traj.T
    n = np.arange(H - Q0 + 1)
    past = np.lib.stride_tricks.sliding_window_view(S[:H], Q0)
    hi, lo = past.max(axis=1), past.min(axis=1)
    end = S[n + Q0]
    extreme = (end > hi) | (end < lo)
    jump = lam * np.abs(end - S[n + Q0 - 1])
    return (extreme & (T[n + Q0] <= 1.0) & (t[n + Q0] - t[n] >= Q0 - 1 - 1e-9)
            & (jump <= lam * v))


def restart_scan(traj: Trajectory, u0: Potential, eps: float = 0.1,
                 v: float = math.inf, service: str = "det1",
                 max_blocks: int | None = None, keep_potentials: bool = False,
                 check: bool = False) -> RestartScan:
    """Detect blocks, restarting from the recentered potential after every
    failure, until an attempt runs into the horizon.

    A failed block 0 restarts ``Q_0`` steps later; a failure in block ``j``
    restarts where the failure became certain. ``check`` audits every
    accepted block against the raw trajectory (see :func:`audit`).
    ``traj`` must carry its drives.
    """
    H = traj.horizon
    general = traj.case == "general"
    Q0 = jstar_and_m(v, service)[1] if general else 1
    cand = _block0_candidates(traj, v, Q0)
    walker = Walker(u0, unit=not general, v=v, lam=traj.lam, capacity=H + 1)
    offsets, attempts = [], []
    n1, at = 0, 0   # next attempt start, walker position

    while True:
        hits = np.flatnonzero(cand[n1::Q0])
        if hits.size == 0:
            last = n1 + Q0 * ((H - n1) // Q0)
            offsets.extend(range(n1, last + 1, Q0))
            return RestartScan(np.asarray(offsets, dtype=np.int64), attempts, None)
        c = n1 + Q0 * int(hits[0])
        offsets.extend(range(n1, c + 1, Q0))
        walker.run(traj.T[at + 1:c + 1], traj.E[at + 1:c + 1], traj.U[at + 1:c + 1])
        at = c
        Sc, Mc = float(walker.state[0]), float(walker.state[1])

        def start(x, Sc=Sc, Mc=Mc):
            return walker.evaluate(np.asarray(x) + Sc) - Mc

        length = 256
        while True:
            sub = window(traj, c, length)
            rep = detect_blocks(sub, start, eps, v, service, max_blocks)
            if not rep.truncated or c + length >= H:
                break
            length *= 4
        rep.offset = c
        if rep.failed_j == 0 or not rep.blocks:
            if rep.truncated:
                return RestartScan(np.asarray(offsets, dtype=np.int64), attempts, None)
            n1 = c + Q0
            continue
        att = Attempt(c, float(traj.S[c]), float(traj.t[c]), rep, sub)
        if keep_potentials:
            att.u0 = center(walker.potential())
        if check:
            att.problems = audit(rep, sub, start)
        attempts.append(att)
        if rep.failed_j is None:
            return RestartScan(np.asarray(offsets, dtype=np.int64), attempts, c)
        n1 = c + rep.restart_at
        if n1 >= H:
            return RestartScan(np.asarray(offsets, dtype=np.int64), attempts, None)


def block_start_potentials(attempt: Attempt, v: float = math.inf) -> dict[int, Potential]:
    """Potentials (in the attempt frame) at the start of every block reached."""
    if attempt.u0 is None:
        raise ValueError("attempt was scanned without keep_potentials")
    rep, sub = attempt.report, attempt.traj
    w = Walker(attempt.u0, unit=rep.case == "unit", v=v, lam=rep.lam,
               capacity=sub.horizon + 1)
    out, pos = {}, 0
    starts = [(b.j, b.start) for b in rep.blocks]
    for j, s in starts:
        if s > pos:
            w.run(sub.T[pos + 1:s + 1], sub.E[pos + 1:s + 1], sub.U[pos + 1:s + 1])
            pos = s
        out[j] = w.potential()
    return out


def _interval_min(u: Potential, lo: float, hi: float) -> float:
    starts, ends, vals = u.pieces()
    hit = (ends > lo) & (starts < hi)
    return float(vals[hit].min())


def _beyond_max(u: Potential, x: float, sigma: int) -> float:
    starts, ends, vals = u.pieces()
    hit = ends > x if sigma > 0 else starts < x
    return float(vals[hit].max())


def _same_beyond(u: Potential, w: Potential, x: float, sigma: int) -> bool:
    """Whether ``u`` and ``w`` agree on the open half-line beyond ``x``."""
    cuts = np.concatenate([u.pieces()[0], w.pieces()[0], [x]])
    cuts = np.unique(cuts[np.isfinite(cuts)])
    cuts = cuts[cuts > x] if sigma > 0 else cuts[cuts < x]
    edge = np.concatenate([[x], cuts]) if sigma > 0 else np.concatenate([cuts, [x]])
    probes = np.concatenate([(edge[:-1] + edge[1:]) / 2, edge[1:-1] if sigma > 0
                             else edge[:-1]])
    probes = np.concatenate([probes, [edge[-1] + 1.0] if sigma > 0 else [edge[0] - 1.0]])
    probes = probes[probes != x]
    return bool(np.array_equal(u(probes), w(probes)))


@dataclass
class BlockStartCheck:
    j: int
    height_ok: bool
    ahead_ok: bool
    behind_ok: bool
    special_j1: bool = False

    @property
    def ok(self):
        return self.height_ok and self.ahead_ok and self.behind_ok


def check_block_start(attempt: Attempt, j: int, u_j: Potential) -> BlockStartCheck:
    """State at the start of a block reached after ``j`` successes.

    Checks that the height equals ``L_j``, that the potential ahead of the
    server is untouched and at most ``L_j - N_j``, and that just behind it
    the potential is at least ``L_j - Q_{j-1}`` (unit) or ``L_j - M_{j-1}``
    (general; ``L_1 - 2`` for ``j = 1``).
    """
    rep = attempt.report
    blk = {b.j: b for b in rep.blocks}[j]
    prev = {b.j: b for b in rep.blocks}[j - 1]
    sg, lam = rep.sigma, rep.lam
    x = u_j.spike_pos  # the engine's own copy of sigma * Z_j / lam
    height_ok = u_j.spike_val == blk.L if rep.case == "unit" else \
        abs(u_j.spike_val - blk.L) <= 1e-9 * (1 + blk.L)
    ahead_ok = _same_beyond(u_j, attempt.u0, x, sg) and _beyond_max(u_j, x, sg) <= blk.L - blk.N + 1e-12
    width = prev.x_lo / lam
    lo, hi = (x - width, x) if sg > 0 else (x, x + width)
    special = rep.case == "general" and j == 1
    if rep.case == "unit":
        floor = blk.L - prev.Q
    elif special:
        floor = blk.L - 2.0
    else:
        floor = blk.L - prev.M
    behind_ok = _interval_min(u_j, lo, hi) >= floor - 1e-12
    return BlockStartCheck(j, bool(height_ok), bool(ahead_ok), bool(behind_ok), special)


# ---------------------------------------------------------------------------
# proof events on an explicit field


def r1_areas(field, u0, x0: float, t0: float, Z: float, L: float, sigma: int,
             count: int, served_upto: int | None = None):
    """The first ``count`` field points beyond ``Z`` lying above ``u0`` and
    at most ``L`` high, and their areas ``A(x) = lam * int_Z^x (L - u0)``.

    ``u0`` lives in the frame centered at ``(x0, t0)``; ``Z`` is oriented
    and scaled. Returns ``(y, A)`` with ``y`` in the same units as ``Z``.
    ``served_upto`` drops customers already served by then (the one at
    ``Z`` itself, whose position is only known up to rounding here).
    """
    lam = field.lam

    def lower(xf):
        return u0(xf - x0) + t0

    start = x0 + sigma * Z / lam
    xs, _ = field.scan_outward(start, sigma, L + t0, lower, count, served_upto)
    ys = lam * sigma * (xs - x0)
    A = np.array([lam * u0.area_above(L, *sorted((start - x0, x - x0))) for x in xs])
    return ys, A


@dataclass
class ProofEvents:
    j: int
    B1: bool
    B2: bool
    B3: bool
    n_R2: int
    A_values: list[float]
    increments: list[float]
    consequence16: bool | None = None
    consequence17: bool | None = None
    R3_outside: tuple[float, float] | None = None  # R_3 lies beyond these
    success: bool | None = None


def proof_diagnostics(field, attempt: Attempt, j: int, u_j: Potential) -> ProofEvents:
    """Evaluate the auxiliary events of block ``j`` on the realised field.

    ``A(x)`` integrates ``L_j - u0`` from ``Z_j`` (scaled units, so the
    increments between consecutive points of ``R_1`` are standard
    exponential). ``R_2`` is the hazard region just around ``Z_j``.
    """
    if field is None:
        raise ValueError("proof diagnostics need the explicit point field")
    if attempt.u0 is None:
        raise ValueError("attempt was scanned without keep_potentials")
    rep = attempt.report
    if j < 1:
        raise ValueError("events are defined for blocks j >= 1")
    by_j = {b.j: b for b in rep.blocks}
    blk, prev = by_j[j], by_j[j - 1]
    sg, lam, eps = rep.sigma, rep.lam, rep.eps
    ell = blk.ell
    u0 = attempt.u0
    x0, t0 = attempt.x0, attempt.t0
    L, Z, N = blk.L, blk.Z, blk.N
    X_hi = (1 + eps) * ell / N
    X_prev_lo = prev.x_lo

    def phys(y):  # oriented scaled -> field coordinate
        return x0 + sg * y / lam

    ys, A = r1_areas(field, u0, x0, t0, Z, L, sg, ell,
                     served_upto=attempt.offset + blk.start)
    inc = np.diff(np.concatenate([[0.0], A]))

    # R_2: above u_j (the explored floor) left of Z_j, above L_j right of it
    t_top = L + (ell + 1 if rep.case == "unit" else 3.0 * ell + 3.0)
    xa, xb = sorted((phys(Z - X_prev_lo), phys(Z + X_hi)))
    px, pt = field.points_in(xa, xb, -np.inf, t_top + t0)
    py = lam * sg * (px - x0)
    tau = pt - t0
    in_right = (py > Z) & (py < Z + X_hi) & (tau > L) & (tau <= t_top)
    floor = u_j(px - x0)
    in_left = (py > Z - X_prev_lo) & (py < Z) & (tau > floor) & (tau <= t_top)
    n_R2 = int(np.count_nonzero(in_right | in_left))

    B1 = n_R2 <= 1
    B2 = (1 - eps) * (ell - 1) < A[ell - 2] < A[ell - 1] < (1 + eps) * ell
    B3 = bool(np.all(inc <= ell / 12.0))
    ev = ProofEvents(j, B1, bool(B2), B3, n_R2, list(map(float, A)),
                     list(map(float, inc)), R3_outside=(Z - X_prev_lo, Z + X_hi),
                     success=blk.success)
    if B2 and B3:
        gaps = np.diff(np.concatenate([[Z], ys]))
        ev.consequence16 = bool(ys[ell - 2] - Z <= ys[ell - 1] - Z <= X_hi)
        ev.consequence17 = bool(np.all(gaps <= ell / (12 * N) + 1e-12)
                                and ell / (12 * N) <= X_prev_lo / 3 + 1e-12)
    return ev
