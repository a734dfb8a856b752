"""Brute-force greedy server on an explicit space-time Poisson field.

The field is realised lazily on unit lattice tiles. It is generated in blocks of
``CHUNK`` time rows per space column, and each block draws from its own
substream keyed by ``(seed, column, block)``. The realisation is therefore a
function of the seed alone, whatever order the tiles are queried in.

:func:`direct_simulate` moves the server to the nearest waiting customer
without any reference to potentials. :func:`extract_drives` then replays the
scanned region step by step and reads off the exploration area ``E`` and the
side variable ``U`` of each step. Feeding those drives to the potential
engine has to reproduce the direct trajectory.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .dynamics import SimConfig, Trajectory, run_walk
from .potential import BaselineSpec, make_initial

log = logging.getLogger(__name__)

CHUNK = 16
_FIELD_TAG = 0xF1E1D
_SERVICE_TAG = 0x5E7C1CE


def _zz(k: int) -> int:
    """Signed -> unsigned (zigzag) so lattice keys can seed a SeedSequence."""
    return 2 * k if k >= 0 else -2 * k - 1


class _Column:
    __slots__ = ("x", "t", "served", "top")

    def __init__(self, row_min):
        self.x = np.empty(0)
        self.t = np.empty(0)
        self.served = np.empty(0, dtype=np.int64)
        self.top = row_min  # first row not generated yet

    def add(self, x, t):
        self.x = np.concatenate([self.x, x])
        self.t = np.concatenate([self.t, t])
        self.served = np.concatenate([self.served, np.full(len(x), -1, np.int64)])


class PointField:
    """Lazy realisation of a Poisson process of intensity ``lam`` on
    ``{(x, t): t > u0(x)}`` plus optional planted points.

    ``sample=False`` gives a field made of the planted points only.
    """

    def __init__(self, lam: float = 1.0, seed: int = 0,
                 baseline: BaselineSpec | None = None, planted=(),
                 sample: bool = True):
        self.lam = float(lam)
        self.seed = int(seed)
        self.baseline = BaselineSpec.constant(-1.0) if baseline is None else baseline
        self.sample = sample
        self.row_min = math.floor(min(self.baseline.levels))
        self.columns: dict[int, _Column] = {}
        self.ledger: list[tuple[int, int]] = []
        self.planted = [(float(x), float(t)) for x, t in planted]
        self._planted_cols = {}
        for x, t in self.planted:
            self._planted_cols.setdefault(math.floor(x), []).append((x, t))

    # -- generation --------------------------------------------------------

    def _column(self, k: int) -> _Column:
        col = self.columns.get(k)
        if col is None:
            col = self.columns[k] = _Column(self.row_min)
            pts = self._planted_cols.get(k)
            if pts:
                col.add(np.array([p[0] for p in pts]), np.array([p[1] for p in pts]))
        return col

    def _sample_block(self, k: int, q: int):
        ss = np.random.SeedSequence([self.seed, _zz(k), _zz(q)],
                                    spawn_key=(_FIELD_TAG,))
        rng = np.random.default_rng(ss)
        counts = rng.poisson(self.lam, CHUNK)
        rows = np.repeat(np.arange(q * CHUNK, (q + 1) * CHUNK), counts)
        x = k + rng.random(rows.size)
        t = rows + (1.0 - rng.random(rows.size))  # t in (r, r + 1]
        self.ledger.append((k, q))
        keep = (rows >= self.row_min) & (t > self.baseline(x))
        return x[keep], t[keep]

    def _extend(self, col: _Column, k: int, row_hi: int):
        """Generate rows of column ``k`` up to and including ``row_hi``."""
        if not self.sample:
            col.top = max(col.top, row_hi + 1)
            return
        while col.top <= row_hi:
            q = col.top // CHUNK
            x, t = self._sample_block(k, q)
            col.add(x, t)
            col.top = (q + 1) * CHUNK

    def ensure_coverage(self, x1: float, x2: float, t1: float, t2: float):
        """Realise every tile meeting ``[x1, x2] x [t1, t2]``."""
        for k in range(math.floor(x1), math.floor(x2) + 1):
            self._extend(self._column(k), k, math.ceil(t2) - 1)

    def points_in(self, x1, x2, t1, t2):
        """Points with ``x1 <= x < x2`` and ``t1 < t <= t2``."""
        self.ensure_coverage(x1, x2, t1, t2)
        xs, ts = [], []
        for k in range(math.floor(x1), math.floor(x2) + 1):
            col = self.columns[k]
            m = (col.x >= x1) & (col.x < x2) & (col.t > t1) & (col.t <= t2)
            xs.append(col.x[m])
            ts.append(col.t[m])
        return np.concatenate(xs), np.concatenate(ts)

    def scan_outward(self, x0: float, direction: int, t_hi: float, lower, count: int,
                     served_upto: int | None = None):
        """First ``count`` points beyond ``x0`` in ``direction`` with
        ``lower(x) < t <= t_hi``, sorted by distance from ``x0``.

        Points served at steps ``<= served_upto`` are skipped."""
        found_x, found_t = [], []
        k = math.floor(x0)
        while True:
            col = self._column(k)
            self._extend(col, k, math.ceil(t_hi) - 1)
            beyond = (col.x - x0) * direction > 0
            m = beyond & (col.t <= t_hi)
            if served_upto is not None:
                m &= ~((col.served >= 0) & (col.served <= served_upto))
            m[m] &= col.t[m] > lower(col.x[m])
            found_x.extend(col.x[m])
            found_t.extend(col.t[m])
            if len(found_x) >= count:
                order = np.argsort(np.abs(np.asarray(found_x) - x0), kind="stable")
                fx, ft = np.asarray(found_x)[order], np.asarray(found_t)[order]
                edge = k if direction > 0 else k + 1
                # every column nearer than the count-th point has been read
                if abs(fx[count - 1] - x0) <= abs(edge - x0) or not self.sample:
                    return fx[:count], ft[:count]
            if not self.sample and not self._has_planted_beyond(k, direction):
                raise ValueError("field has too few points")
            k += direction

    def _has_planted_beyond(self, k, direction):
        return any((c - k) * direction > 0 for c in self._planted_cols)

    # -- greedy search -----------------------------------------------------

    def nearest_waiting(self, s: float, c: float):
        """Nearest unserved point to ``s`` among arrivals up to time ``c``.

        Returns ``(x, t, column, index, tie)``.
        """
        row_hi = math.ceil(c) - 1
        best_d, best, tie = math.inf, None, False
        k0 = math.floor(s)
        kl, kr = k0, k0 + 1
        while True:
            dl = 0.0 if kl == k0 else s - (kl + 1)
            dr = kr - s
            d = min(dl, dr)
            if d > best_d:
                break
            if not self.sample and not self._any_planted_left(kl, kr):
                break
            k = kl if dl <= dr else kr
            if dl <= dr:
                kl -= 1
            else:
                kr += 1
            col = self._column(k)
            self._extend(col, k, row_hi)
            m = (col.served < 0) & (col.t <= c)
            if not m.any():
                continue
            idx = np.flatnonzero(m)
            dist = np.abs(col.x[idx] - s)
            j = int(np.argmin(dist))
            if dist[j] < best_d:
                tie = np.count_nonzero(dist == dist[j]) > 1
                best_d, best = float(dist[j]), (k, int(idx[j]))
            elif dist[j] == best_d:
                tie = True
                if col.x[idx[j]] > s:  # ties go to the right
                    best = (k, int(idx[j]))
        if best is None:
            raise ValueError("no waiting customer in the field")
        k, i = best
        col = self.columns[k]
        return float(col.x[i]), float(col.t[i]), k, i, tie

    def _any_planted_left(self, kl, kr):
        return any(c <= kl or c >= kr for c in self._planted_cols)

    # -- export ------------------------------------------------------------

    def snapshot_lines(self):
        """JSON lines: a header with the tile ledger, then one point per line."""
        header = {"lambda": self.lam, "seed": self.seed, "chunk": CHUNK,
                  "baseline": self.baseline.to_json(),
                  "tiles": [list(t) for t in sorted(self.ledger)],
                  "planted": [list(p) for p in self.planted]}
        yield json.dumps(header)
        for k in sorted(self.columns):
            col = self.columns[k]
            for i in np.lexsort((col.t, col.x)):
                st = int(col.served[i])
                yield json.dumps({"x": float(col.x[i]), "t": float(col.t[i]),
                                  "served_step": st if st >= 0 else None})

    def write_snapshot(self, path):
        with open(path, "w") as f:
            for line in self.snapshot_lines():
                f.write(line + "\n")


# ---------------------------------------------------------------------------


@dataclass
class DirectRun:
    """Result of the direct simulation.

    ``search`` holds the time each search was made, ``found`` the space-time
    point served at each step (index 0 unused).
    """

    trajectory: Trajectory
    search: np.ndarray
    found_x: np.ndarray
    found_t: np.ndarray
    ties: list = dc_field(default_factory=list)


def service_times(config: SimConfig, n: int) -> np.ndarray:
    if config.service == "det1":
        return np.ones(n)
    ss = np.random.SeedSequence(config.seed, spawn_key=(_SERVICE_TAG,))
    return np.random.default_rng(ss).exponential(1.0, n)


def direct_simulate(config: SimConfig, field: PointField,
                    horizon: int | None = None) -> DirectRun:
    """Greedy server on ``field``.

    Unit case: searches at times ``0, 1, 2, ...`` and moves instantly.
    General case: serves a customer at the origin first; each search happens
    when a service ends and the server then travels at speed ``v``.
    """
    H = config.horizon if horizon is None else horizon
    T = service_times(config, H)
    S = np.zeros(H + 1)
    t = np.zeros(H + 1)
    c_arr = np.full(H + 1, np.nan)
    fx = np.full(H + 1, np.nan)
    ft = np.full(H + 1, np.nan)
    ties = []
    s, M = 0.0, 0.0
    for n in range(1, H + 1):
        c = M if config.unit else M + T[n - 1]
        x, tt, k, i, tie = field.nearest_waiting(s, c)
        if tie:
            log.warning("distance tie at step %d (seed %d)", n, field.seed)
            ties.append(n)
        field.columns[k].served[i] = n
        z = abs(x - s)
        M = M + 1.0 if config.unit else c + z * config.inv_v
        s = x
        S[n], t[n], c_arr[n], fx[n], ft[n] = s, M, c, x, tt
    nan = np.full(H + 1, np.nan)
    side = np.zeros(H + 1, dtype=np.int8)
    side[1:] = np.where(np.diff(S) < 0, -1, 1)
    traj = Trajectory(config.case, config.lam, config.v, t, S, np.abs(np.diff(S,
                      prepend=np.nan)), side, nan.copy(), nan.copy(), nan.copy(),
                      nan.copy(), np.concatenate([[np.nan], T]))
    return DirectRun(traj, c_arr, fx, ft, ties)


class ScanRecord:
    """Last time each location was scanned, kept as a plain sorted list.

    ``vals[i]`` holds on ``[xs[i-1], xs[i])``. Deliberately simple: this is
    the reference the potential engine is checked against.
    """

    def __init__(self, baseline: BaselineSpec):
        self.xs = list(baseline.breakpoints)
        self.vals = list(baseline.levels)

    def left_of(self, x):
        return self.vals[bisect.bisect_left(self.xs, x)]

    def right_of(self, x):
        return self.vals[bisect.bisect_right(self.xs, x)]

    def area(self, top, lo, hi):
        total = 0.0
        i = bisect.bisect_right(self.xs, lo)
        a = lo
        while True:
            b = self.xs[i] if i < len(self.xs) else math.inf
            b = min(b, hi)
            total += (b - a) * (top - self.vals[i])
            if b >= hi:
                return total
            a = b
            i += 1

    def raise_to(self, lo, hi, c):
        i = bisect.bisect_left(self.xs, lo)
        j = bisect.bisect_right(self.xs, hi)
        self.xs[i:j] = [lo, hi]
        self.vals[i:j + 1] = [self.vals[i], c, self.vals[j]]


@dataclass
class ExplorationRecord:
    E: float
    x: float
    t: float
    a: float
    b: float
    z: float
    U: float


class CouplingError(ValueError):
    pass


def extract_drives(field: PointField, run: DirectRun):
    """Recover the drive triples ``(T, E, U)`` that the exploration of each
    step consumed. Returns ``((T, E, U), records)``."""
    traj = run.trajectory
    scan = ScanRecord(field.baseline)
    H = traj.horizon
    E = np.empty(H)
    U = np.empty(H)
    recs = []
    for n in range(1, H + 1):
        s, c = traj.S[n - 1], run.search[n]
        x, tt = run.found_x[n], run.found_t[n]
        z = abs(x - s)
        lo, hi = s - z, s + z
        e = field.lam * scan.area(c, lo, hi)
        a = c - scan.left_of(lo)
        b = c - scan.right_of(hi)
        sgn = 1.0 if x > s else -1.0
        u = (a + sgn * (c - tt)) / (a + b)
        if not 0.0 < u < 1.0 or not e > 0.0:
            # only reachable for a point on a boundary corner (a null set)
            raise CouplingError(f"step {n}: recovered U={u!r}, E={e!r} outside range")
        E[n - 1], U[n - 1] = e, u
        recs.append(ExplorationRecord(e, x, tt, a, b, z, u))
        scan.raise_to(lo, hi, c)
    return (traj.T[1:].copy(), E, U), recs


@dataclass
class EquivalenceReport:
    passed: bool
    steps: int
    max_error: float
    first_divergence: int | None = None
    detail: str = ""


def equivalence_check(a: Trajectory, b: Trajectory, tol: float = 1e-9,
                      compare_time: bool | None = None) -> EquivalenceReport:
    """Compare positions (and times for the general case) step by step."""
    if a.horizon != b.horizon:
        raise ValueError(f"length mismatch: {a.horizon} vs {b.horizon}")
    if compare_time is None:
        compare_time = a.case == "general"
    err = np.abs(a.S - b.S)
    if compare_time:
        err = np.maximum(err, np.abs(a.t - b.t))
    bad = np.flatnonzero(~(err <= tol))
    max_err = float(np.nanmax(err)) if err.size else 0.0
    if bad.size == 0:
        return EquivalenceReport(True, a.horizon, max_err)
    k = int(bad[0])
    detail = (f"step {k}: S={float(a.S[k])!r} vs {float(b.S[k])!r}, "
              f"t={float(a.t[k])!r} vs {float(b.t[k])!r}")
    return EquivalenceReport(False, a.horizon, max_err, k, detail)


def coupling_check(config: SimConfig, seed: int, tol: float = 1e-9):
    """Direct run on the field of ``seed`` versus the engine replay."""
    cfg = SimConfig(**{**config.__dict__, "seed": seed})
    field = PointField(cfg.lam, seed, cfg.initial)
    run = direct_simulate(cfg, field)
    if run.ties:
        raise CouplingError(f"seed {seed}: distance tie at steps {run.ties}")
    drives, recs = extract_drives(field, run)
    replay = run_walk(cfg, drives, make_initial(cfg.initial))
    return equivalence_check(run.trajectory, replay, tol), run, replay, recs
