"""Potentials: the environment seen from the server.

``u(x)`` is the last time location ``x`` was scanned for customers. It is a
step function with a single spike at the server position ``S(u)`` whose
height ``M(u)`` is the current time. Shifts ``theta_z u + c`` and the
centering map ``u -> theta_{S(u)} u - M(u)`` live here too.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BaselineSpec",
    "Potential",
    "make_initial",
    "translate",
    "center",
]


@dataclass(frozen=True)
class BaselineSpec:
    """Piecewise-constant initial potential away from the spike.

    ``levels[i]`` holds on ``[breakpoints[i-1], breakpoints[i])`` with the
    outermost levels extending to infinity. A constant baseline has no
    breakpoints. The standard start is ``BaselineSpec.constant(-1.0)``; an
    inhomogeneous initial field of intensity ``mu`` is ``from_mu`` (levels
    ``-mu``).
    """

    breakpoints: tuple[float, ...] = ()
    levels: tuple[float, ...] = (-1.0,)

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        lv = tuple(float(v) for v in self.levels)
        if len(lv) != len(bp) + 1:
            raise ValueError("need exactly one more level than breakpoints")
        if any(not math.isfinite(b) for b in bp) or any(
            not math.isfinite(v) for v in lv
        ):
            raise ValueError("baseline must be finite and bounded")
        if any(b1 >= b2 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        # merge equal neighbours
        nbp, nlv = [], [lv[0]]
        for b, v in zip(bp, lv[1:]):
            if v != nlv[-1]:
                nbp.append(b)
                nlv.append(v)
        object.__setattr__(self, "breakpoints", tuple(nbp))
        object.__setattr__(self, "levels", tuple(nlv))

    @classmethod
    def constant(cls, level: float = -1.0) -> BaselineSpec:
        return cls((), (level,))

    @classmethod
    def from_mu(cls, pieces, background: float = 1.0) -> BaselineSpec:
        """Baseline ``-mu`` for ``mu`` given as ``[(level, a, b), ...]`` on
        disjoint intervals ``[a, b)`` and ``background`` elsewhere."""
        pieces = sorted((float(a), float(b), float(m)) for m, a, b in pieces)
        bp, lv = [], [-float(background)]
        last = -math.inf
        for a, b, m in pieces:
            if not a < b:
                raise ValueError(f"empty interval [{a}, {b})")
            if a < last:
                raise ValueError("mu intervals overlap")
            bp += [a, b]
            lv += [-m, -float(background)]
            last = b
        return cls(tuple(bp), tuple(lv))

    @classmethod
    def parse_mu(cls, text: str) -> BaselineSpec:
        """Parse ``"level@a..b,level@a..b[,background]"``.

        A bare number sets the background intensity (default 1).
        """
        pieces, background = [], 1.0
        for tok in filter(None, (t.strip() for t in text.split(","))):
            m = re.fullmatch(r"([^@]+)@([^.]+(?:\.\d+)?)\.\.(.+)", tok)
            if m:
                pieces.append((float(m[1]), float(m[2]), float(m[3])))
            else:
                background = float(tok)
        return cls.from_mu(pieces, background)

    def validate_initial(self):
        if any(v > 0 for v in self.levels):
            raise ValueError("baseline levels must be <= 0 (mu >= 0)")

    def __call__(self, x):
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right")
        return np.asarray(self.levels)[idx]

    def shifted(self, z: float, c: float) -> BaselineSpec:
        bp, lv = [], [self.levels[0] + c]
        for b, v in zip(self.breakpoints, self.levels[1:]):
            b = b - z
            if bp and b <= bp[-1]:
                # rounding collapsed a piece to zero width
                bp.pop()
                lv.pop()
            bp.append(b)
            lv.append(v + c)
        return BaselineSpec(tuple(bp), tuple(lv))

    def integral(self, top: float, x1: float, x2: float) -> float:
        """Exact ``int_{x1}^{x2} (top - baseline)``."""
        edges = [x1] + [b for b in self.breakpoints if x1 < b < x2] + [x2]
        total = 0.0
        for lo, hi in zip(edges, edges[1:]):
            total += (hi - lo) * (top - float(self(lo)))
        return total

    def to_json(self) -> dict:
        return {"breakpoints": list(self.breakpoints), "levels": list(self.levels)}


class Potential:
    """Immutable step-function potential with a distinguished spike.

    Internally two stacks of plateaus, ordered from the outside in (see
    :mod:`greedywalk._kernel`). ``baseline`` is the initial potential carried
    along under shifts and ``explored`` the closed interval swept so far.
    """

    __slots__ = ("lx", "lv", "rx", "rv", "spike_pos", "spike_val", "baseline",
                 "explored")

    def __init__(self, lx, lv, rx, rv, spike_pos, spike_val, baseline,
                 explored=None, check=True):
        self.lx = np.array(lx, dtype=float)
        self.lv = np.array(lv, dtype=float)
        self.rx = np.array(rx, dtype=float)
        self.rv = np.array(rv, dtype=float)
        for arr in (self.lx, self.lv, self.rx, self.rv):
            arr.flags.writeable = False
        self.spike_pos = float(spike_pos)
        self.spike_val = float(spike_val)
        self.baseline = baseline
        self.explored = None if explored is None else (float(explored[0]),
                                                       float(explored[1]))
        if check:
            self.check()

    # -- invariants ------------------------------------------------------

    def check(self):
        lx, lv, rx, rv = self.lx, self.lv, self.rx, self.rv
        if not (lx.size >= 1 and lx.size == lv.size and rx.size >= 1
                and rx.size == rv.size):
            raise ValueError("malformed plateau stacks")
        if lx[0] != -np.inf or rx[0] != np.inf:
            raise ValueError("stacks must end in infinite tails")
        if np.any(np.diff(lx) < 0) or np.any(np.diff(rx) > 0):
            raise ValueError("breakpoints out of order")
        if lx[-1] > self.spike_pos or rx[-1] < self.spike_pos:
            raise ValueError("spike outside its plateaus")
        if np.any(lv[1:] == lv[:-1]) or np.any(rv[1:] == rv[:-1]):
            raise ValueError("adjacent plateaus must have distinct values")
        if not np.all(np.isfinite(lv)) or not np.all(np.isfinite(rv)):
            raise ValueError("unbounded potential")
        # ties occur for a baseline touching 0 and for infinite speed, where
        # the spike is level with the plateau it was raised from
        if self.spike_val < max(lv.max(), rv.max()):
            raise ValueError("spike must be the maximum")
        if self.explored is not None:
            lo, hi = self.explored
            if not lo <= self.spike_pos <= hi:
                raise ValueError("spike must lie in the explored interval")

    # -- basic queries ---------------------------------------------------

    @property
    def S(self) -> float:
        return self.spike_pos

    @property
    def M(self) -> float:
        return self.spike_val

    def max_info(self) -> tuple[float, float]:
        return self.spike_pos, self.spike_val

    def __call__(self, x):
        """Evaluate ``u(x)``; accepts scalars or arrays."""
        x = np.asarray(x, dtype=float)
        s = self.spike_pos
        il = np.searchsorted(self.lx, x, side="right") - 1
        ends = self.rx[::-1]
        ir = np.searchsorted(ends, x, side="left")
        out = np.where(x < s, self.lv[np.clip(il, 0, None)],
                       self.rv[::-1][np.clip(ir, 0, ends.size - 1)])
        out = np.where(x == s, self.spike_val, out)
        return float(out) if out.ndim == 0 else out

    eval = __call__

    def pieces(self):
        """Plateaus as ascending ``(starts, ends, values)`` arrays."""
        s = self.spike_pos
        ls = self.lx
        le = np.append(self.lx[1:], s)
        re_ = self.rx[::-1]
        rs = np.insert(re_[:-1], 0, s)
        return (np.concatenate([ls, rs]), np.concatenate([le, re_]),
                np.concatenate([self.lv, self.rv[::-1]]))

    def area_above(self, top: float, x1: float, x2: float) -> float:
        """Exact ``int_{x1}^{x2} (top - u)``; the spike has measure zero."""
        if x2 < x1:
            raise ValueError("empty interval")
        starts, ends, vals = self.pieces()
        w = np.minimum(ends, x2) - np.maximum(starts, x1)
        hit = w > 0
        if np.any(vals[hit] > top):
            raise ValueError("top lies below the potential on the interval")
        return float(np.sum(w[hit] * (top - vals[hit])))

    def is_unimodal(self) -> bool:
        return bool(np.all(np.diff(self.lv) >= 0) and np.all(np.diff(self.rv) >= 0)
                    and self.spike_val >= max(self.lv[-1], self.rv[-1]))

    def height_range(self) -> float:
        """``m(u) = M(u) - inf u``."""
        return self.spike_val - min(self.lv.min(), self.rv.min())

    @property
    def overlay_steps(self):
        """Plateaus meeting the explored interval as ``(start, value)``."""
        if self.explored is None:
            return []
        lo, hi = self.explored
        starts, ends, vals = self.pieces()
        keep = (ends > lo) & (starts < hi)
        return [(max(a, lo), v) for a, v in zip(starts[keep], vals[keep])]

    # -- comparison / serialisation --------------------------------------

    def allclose(self, other: Potential, tol: float = 1e-12) -> bool:
        if self.lx.size != other.lx.size or self.rx.size != other.rx.size:
            return False
        # relative to the largest magnitude stored in either potential
        nums = np.concatenate([self.lx, self.lv, self.rx, self.rv,
                               other.lx, other.lv, other.rx, other.rv,
                               [self.spike_pos, self.spike_val]])
        scale = 1.0 + float(np.max(np.abs(nums[np.isfinite(nums)])))

        def close(a, b):
            a, b = np.asarray(a), np.asarray(b)
            fin = np.isfinite(a)
            return bool(np.all(fin == np.isfinite(b)) and np.all(a[~fin] == b[~fin])
                        and np.all(np.abs(a[fin] - b[fin]) <= tol * scale))

        return (close(self.lx, other.lx) and close(self.lv, other.lv)
                and close(self.rx, other.rx) and close(self.rv, other.rv)
                and close([self.spike_pos, self.spike_val],
                          [other.spike_pos, other.spike_val]))

    def __eq__(self, other):
        if not isinstance(other, Potential):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __repr__(self):
        return (f"Potential(S={self.spike_pos!r}, M={self.spike_val!r}, "
                f"plateaus={self.lx.size}+{self.rx.size})")

    def to_json(self) -> dict:
        starts, ends, vals = self.pieces()
        return {
            "baseline": self.baseline.to_json(),
            "breakpoints": [float(b) for b in ends[:-1]],
            "values": [float(v) for v in vals],
            "n_left": int(self.lx.size),
            "spike": {"x": self.spike_pos, "M": self.spike_val},
            "explored": None if self.explored is None else list(self.explored),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj) -> Potential:
        if isinstance(obj, str):
            obj = json.loads(obj)
        bp = [float(b) for b in obj["breakpoints"]]
        vals = [float(v) for v in obj["values"]]
        k = int(obj["n_left"])
        lx = [-np.inf] + bp[: k - 1]
        rx = [np.inf] + bp[k:][::-1]
        base = BaselineSpec(tuple(obj["baseline"]["breakpoints"]),
                            tuple(obj["baseline"]["levels"]))
        return cls(lx, vals[:k], rx, vals[k:][::-1], obj["spike"]["x"],
                   obj["spike"]["M"], base, obj.get("explored"))


def make_initial(spec: BaselineSpec | None = None, spike_pos: float = 0.0) -> Potential:
    """Initial potential: ``spec`` everywhere except a spike of height 0.

    With the default ``Constant(-1)`` this is ``delta_0 - 1``.
    """
    spec = BaselineSpec.constant(-1.0) if spec is None else spec
    spec.validate_initial()
    bp = np.asarray(spec.breakpoints, dtype=float)
    lev = list(spec.levels)
    starts = np.concatenate([[-np.inf], bp])
    ends = np.concatenate([bp, [np.inf]])
    lmask = starts < spike_pos
    rmask = ends > spike_pos
    lx, lv = starts[lmask], np.asarray(lev)[lmask]
    rx, rv = ends[rmask][::-1], np.asarray(lev)[rmask][::-1]
    return Potential(lx, lv, rx, rv, spike_pos, 0.0, spec)


def _tidy(xs, vs, spike):
    """Re-normalise a shifted stack: rounding may collapse a plateau to zero
    width or make two neighbouring values equal."""
    xs, vs = list(xs), list(vs)
    while len(xs) > 1 and xs[-1] == spike:
        xs.pop()
        vs.pop()
    ox, ov = [xs[0]], [vs[0]]
    for x, v in zip(xs[1:], vs[1:]):
        if x == ox[-1] and len(ox) > 1:
            ox.pop()
            ov.pop()
        if v == ov[-1]:
            continue
        ox.append(x)
        ov.append(v)
    return ox, ov


def translate(u: Potential, z: float, c: float) -> Potential:
    """``theta_z u + c``, i.e. ``x -> u(z + x) + c``."""
    exp = None if u.explored is None else (u.explored[0] - z, u.explored[1] - z)
    s = u.spike_pos - z
    lx, lv = _tidy(u.lx - z, u.lv + c, s)
    rx, rv = _tidy(u.rx - z, u.rv + c, s)
    return Potential(lx, lv, rx, rv, s, u.spike_val + c,
                     u.baseline.shifted(z, c), exp)


def center(u: Potential) -> Potential:
    """Shift so that the spike sits at the origin with height 0."""
    return translate(u, u.spike_pos, -u.spike_val)
