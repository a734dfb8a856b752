"""Step operators and the walk driver.

Two conventions are kept side by side:

* ``unit``: service time 1 and infinite speed. The first pick happens at time
  0 before any service, the window is grown under ``top = M`` and the new
  spike sits at ``M + 1`` (the completion time).
* ``general``: random service ``T`` and speed ``v``. The walk starts by
  serving a customer at the origin, the window is grown under ``top = M + T``
  and the new spike sits at ``M + T + z / v`` (the next service start).

With arrival intensity ``lam`` the window solves
``lam * int (top - u) dx = E``.
"""

from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernel
from .potential import BaselineSpec, Potential, center, make_initial

SERVICES = ("det1", "exp")
CASES = ("unit", "general")


@dataclass(frozen=True)
class DriveTriple:
    T: float
    E: float
    U: float

    def __post_init__(self):
        if not (self.T > 0 and self.E > 0 and math.isfinite(self.E)):
            raise ValueError(f"need T > 0 and 0 < E < inf, got {self}")
        if not 0 < self.U < 1:
            raise ValueError(f"need 0 < U < 1, got {self.U}")


@dataclass(frozen=True)
class StepOutcome:
    z: float
    side: str
    a: float
    b: float
    new_pos: float
    new_max: float
    travel_time: float


@dataclass
class SimConfig:
    lam: float = 1.0
    v: float = math.inf
    service: str = "det1"
    case: str = "unit"
    horizon: int = 1000
    seed: int = 0
    initial: BaselineSpec = field(default_factory=BaselineSpec)

    def __post_init__(self):
        self.lam = float(self.lam)
        self.v = float(self.v)
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError("lambda must be a positive finite number")
        if not self.v > 0:
            raise ValueError("speed must be positive (inf allowed)")
        if self.service not in SERVICES:
            raise ValueError(f"service must be one of {SERVICES}")
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}")
        if self.case == "unit" and (self.service != "det1" or self.v != math.inf):
            raise ValueError("unit case requires --service det1 and --v inf")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.initial.validate_initial()
        lv = self.initial.levels
        if self.case == "unit" and lv[0] == 0 and lv[-1] == 0:
            # the first window grows under top = 0 and may never close
            raise ValueError("unit case needs mu > 0 on at least one tail")

    @property
    def unit(self) -> bool:
        return self.case == "unit"

    @property
    def inv_v(self) -> float:
        return 0.0 if self.v == math.inf else 1.0 / self.v

    def to_json(self) -> dict:
        d = asdict(self)
        d["v"] = "inf" if self.v == math.inf else self.v
        d["initial"] = self.initial.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> SimConfig:
        d = dict(d)
        if "v" in d:
            d["v"] = float(d["v"])
        if isinstance(d.get("initial"), dict):
            ini = d["initial"]
            d["initial"] = BaselineSpec(tuple(ini["breakpoints"]), tuple(ini["levels"]))
        return cls(**d)


# ---------------------------------------------------------------------------
# randomness


def open_uniforms(raw: np.ndarray) -> np.ndarray:
    """Map raw 64-bit words to uniforms strictly inside (0, 1)."""
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


class DriveStream:
    """Seeded i.i.d. drive triples.

    Run ``run`` of master seed ``seed`` gets its own substream. Three words
    are consumed per step in the order (T, E, U) whatever the service law, so
    unit and general runs with the same seed see the same E and U.
    """

    def __init__(self, seed: int, run: int = 0, service: str = "det1"):
        if service not in SERVICES:
            raise ValueError(f"unknown service {service!r}")
        self.service = service
        ss = np.random.SeedSequence(int(seed), spawn_key=(int(run),))
        self._bits = np.random.PCG64(ss)

    def take(self, n: int):
        u = open_uniforms(self._bits.random_raw(3 * n)).reshape(n, 3)
        T = np.ones(n) if self.service == "det1" else -np.log(u[:, 0])
        return T, -np.log(u[:, 1]), u[:, 2].copy()

    def triples(self, n: int) -> list[DriveTriple]:
        return [DriveTriple(*x) for x in zip(*self.take(n))]


def as_drive_arrays(drives, n=None):
    """Accept a DriveStream, a ``(T, E, U)`` tuple of arrays or triples."""
    if isinstance(drives, DriveStream):
        return drives.take(n)
    if isinstance(drives, tuple) and len(drives) == 3 and not isinstance(
            drives[0], DriveTriple):
        T, E, U = (np.asarray(x, dtype=float) for x in drives)
    else:
        drives = list(drives)
        T = np.array([d.T for d in drives], dtype=float)
        E = np.array([d.E for d in drives], dtype=float)
        U = np.array([d.U for d in drives], dtype=float)
    if n is not None:
        T, E, U = T[:n], E[:n], U[:n]
    if np.any(E <= 0) or np.any(~np.isfinite(E)):
        raise ValueError("E must be positive and finite")
    if np.any(U <= 0) or np.any(U >= 1):
        raise ValueError("U must lie in (0, 1)")
    if np.any(T <= 0):
        raise ValueError("T must be positive")
    return T, E, U


# ---------------------------------------------------------------------------
# the engine


class Walker:
    """Mutable potential evolving in place; the fast path for long runs."""

    def __init__(self, u0: Potential, unit: bool = True, v: float = math.inf,
                 lam: float = 1.0, capacity: int = 64):
        self.unit = bool(unit)
        self.inv_v = 0.0 if v == math.inf else 1.0 / v
        self.lam = float(lam)
        self.baseline = u0.baseline
        cap = max(capacity, u0.lx.size, u0.rx.size) + 1
        self.lx = np.empty(cap)
        self.lv = np.empty(cap)
        self.rx = np.empty(cap)
        self.rv = np.empty(cap)
        self.nl, self.nr = u0.lx.size, u0.rx.size
        self.lx[:self.nl], self.lv[:self.nl] = u0.lx, u0.lv
        self.rx[:self.nr], self.rv[:self.nr] = u0.rx, u0.rv
        exp = (np.nan, np.nan) if u0.explored is None else u0.explored
        self.state = np.array([u0.spike_pos, u0.spike_val, *exp], dtype=float)
        self.steps = 0

    def _reserve(self, n):
        need = max(self.nl, self.nr) + n + 1
        if need > self.lx.size:
            cap = max(need, 2 * self.lx.size)
            for name in ("lx", "lv", "rx", "rv"):
                old = getattr(self, name)
                new = np.empty(cap)
                new[:old.size] = old
                setattr(self, name, new)

    def run(self, T, E, U) -> np.ndarray:
        """Advance ``len(E)`` steps; returns an ``(n, 7)`` record array."""
        n = len(E)
        self._reserve(n)
        rec = np.empty((n, _kernel.RECORD_WIDTH))
        self.nl, self.nr = _kernel.walk(
            self.lx, self.lv, self.nl, self.rx, self.rv, self.nr, self.state,
            np.ascontiguousarray(T, dtype=float), np.ascontiguousarray(E, dtype=float),
            np.ascontiguousarray(U, dtype=float), self.inv_v, self.lam, self.unit, rec)
        self.steps += n
        return rec

    def run_positions(self, T, E, U):
        n = len(E)
        self._reserve(n)
        pos, times = np.empty(n), np.empty(n)
        self.nl, self.nr = _kernel.walk_positions(
            self.lx, self.lv, self.nl, self.rx, self.rv, self.nr, self.state,
            np.ascontiguousarray(T, dtype=float), np.ascontiguousarray(E, dtype=float),
            np.ascontiguousarray(U, dtype=float), self.inv_v, self.lam, self.unit,
            pos, times)
        self.steps += n
        return pos, times

    def evaluate(self, x):
        """``u(x)`` of the current state without taking a snapshot."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(xs.shape)
        _kernel.evaluate(self.lx, self.lv, self.nl, self.rx, self.rv, self.nr,
                         self.state[0], self.state[1], xs.ravel(), out.ravel())
        return out if np.ndim(x) else float(out[0])

    def potential(self) -> Potential:
        exp = None if np.isnan(self.state[2]) else tuple(self.state[2:])
        return Potential(self.lx[:self.nl], self.lv[:self.nl], self.rx[:self.nr],
                         self.rv[:self.nr], self.state[0], self.state[1],
                         self.baseline, exp)


def solve_halfwidth(u: Potential, top: float, E: float, lam: float = 1.0):
    """Solve ``lam * int_{S-z}^{S+z} (top - u) = E``; returns ``(z, a, b)``.

    ``a`` and ``b`` are ``top - u`` just beyond the left and right ends.
    """
    if not (E > 0 and math.isfinite(E)):
        raise ValueError("E must be positive and finite")
    if top < u.spike_val:
        raise ValueError("top must be at least M(u)")
    z, il, ir = _kernel.solve(u.lx, u.lv, u.lx.size, u.rx, u.rv, u.rx.size,
                              u.spike_pos, float(top), float(E), float(lam))
    return float(z), float(top - u.lv[il]), float(top - u.rv[ir])


def choose_side(a: float, b: float, U: float) -> str:
    """``'L'`` iff ``U <= a / (a + b)``."""
    if not a + b > 0:
        raise ValueError("a + b must be positive")
    if not 0 < U < 1:
        raise ValueError("U must lie in (0, 1)")
    return "L" if U <= a / (a + b) else "R"


def _one_step(u, T, E, U, unit, v, lam):
    DriveTriple(T, E, U)
    w = Walker(u, unit=unit, v=v, lam=lam, capacity=max(u.lx.size, u.rx.size) + 2)
    r = w.run([T], [E], [U])[0]
    r = [float(x) for x in r]
    out = StepOutcome(r[_kernel.Z], "L" if r[_kernel.SIDE] < 0 else "R",
                      r[_kernel.A], r[_kernel.B], r[_kernel.POS], r[_kernel.MAX],
                      r[_kernel.TRAVEL])
    return w.potential(), out


def step_unit(u: Potential, E: float, U: float, lam: float = 1.0):
    """Unit-case operator: service 1, infinite speed."""
    return _one_step(u, 1.0, E, U, True, math.inf, lam)


def step_general(u: Potential, T: float, E: float, U: float, v: float = math.inf,
                 lam: float = 1.0):
    """General operator with service time ``T`` and speed ``v``."""
    if not v > 0:
        raise ValueError("speed must be positive")
    return _one_step(u, T, E, U, False, v, lam)


# ---------------------------------------------------------------------------
# trajectories


@dataclass
class Trajectory:
    """Arrays indexed by step ``n = 0..horizon``; index 0 is the start.

    ``t`` is ``M(u_n)``: completion times ``n`` in the unit case, service
    start times in the general case. Per-step fields are NaN at index 0.
    """

    case: str
    lam: float
    v: float
    t: np.ndarray
    S: np.ndarray
    z: np.ndarray
    side: np.ndarray
    a: np.ndarray
    b: np.ndarray
    E: np.ndarray
    U: np.ndarray
    T: np.ndarray

    @property
    def horizon(self) -> int:
        return self.S.size - 1

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.S.size)

    @property
    def sigma(self) -> int:
        return int(np.sign(self.S[1])) if self.horizon >= 1 else 0

    def drives(self):
        return self.T[1:], self.E[1:], self.U[1:]

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def to_csv(self, f):
        if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
            with open(f, "w", newline="") as fh:
                return self.to_csv(fh)
        f.write("n,t,S,z,side,a,b,E,U,T\n")
        cols = [self.t, self.S, self.z, self.a, self.b, self.E, self.U, self.T]
        cols = [[repr(float(x)) for x in c[1:]] for c in cols]
        sides = ["L" if s < 0 else "R" for s in self.side[1:]]
        for i in range(self.horizon):
            t, S, z, a, b, E, U, T = (c[i] for c in cols)
            f.write(f"{i + 1},{t},{S},{z},{sides[i]},{a},{b},{E},{U},{T}\n")

    @classmethod
    def from_csv(cls, path, case="unit", lam=1.0, v=math.inf, S0=0.0, t0=0.0):
        data = np.genfromtxt(path, delimiter=",", names=True, dtype=None,
                             encoding="utf-8")
        data = np.atleast_1d(data)

        def col(name, first):
            return np.concatenate([[first], np.asarray(data[name], dtype=float)])

        side = np.concatenate([[0], np.where(data["side"] == "L", -1, 1)])
        nan = np.nan
        return cls(case, lam, v, col("t", t0), col("S", S0), col("z", nan), side,
                   col("a", nan), col("b", nan), col("E", nan), col("U", nan),
                   col("T", nan))


def trajectory_from_records(u0, rec, T, E, U, case, lam, v) -> Trajectory:
    nan = np.array([np.nan])

    def head(x, first):
        return np.concatenate([[first], x])

    return Trajectory(
        case, lam, v,
        t=head(rec[:, _kernel.MAX], u0.spike_val),
        S=head(rec[:, _kernel.POS], u0.spike_pos),
        z=head(rec[:, _kernel.Z], np.nan),
        side=head(rec[:, _kernel.SIDE], 0.0).astype(np.int8),
        a=head(rec[:, _kernel.A], np.nan),
        b=head(rec[:, _kernel.B], np.nan),
        E=np.concatenate([nan, E]), U=np.concatenate([nan, U]),
        T=np.concatenate([nan, T]),
    )


def run_walk(config: SimConfig, drives=None, u0: Potential | None = None,
             run: int = 0) -> Trajectory:
    """Run ``config.horizon`` steps of the configured operator.

    ``drives`` defaults to the run's seeded :class:`DriveStream`.
    """
    if u0 is None:
        u0 = make_initial(config.initial)
    if drives is None:
        drives = DriveStream(config.seed, run, config.service)
    T, E, U = as_drive_arrays(drives, config.horizon)
    if len(E) < config.horizon:
        raise ValueError("not enough drives for the horizon")
    w = Walker(u0, unit=config.unit, v=config.v, lam=config.lam,
               capacity=config.horizon + 1)
    rec = w.run(T, E, U)
    return trajectory_from_records(u0, rec, T, E, U, config.case, config.lam,
                                   config.v)


def potential_at(config: SimConfig, drives, k: int, u0: Potential | None = None):
    """``u_k`` of the walk driven by ``drives``."""
    if u0 is None:
        u0 = make_initial(config.initial)
    T, E, U = as_drive_arrays(drives, k)
    w = Walker(u0, unit=config.unit, v=config.v, lam=config.lam, capacity=k + 1)
    w.run(T, E, U)
    return w.potential()


def shift_window(u_k: Potential) -> Potential:
    """Restart state at step ``k``: the centered ``u_k``."""
    return center(u_k)
