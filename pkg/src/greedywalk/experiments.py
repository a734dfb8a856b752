"""Ensembles of walks and the statistics read off them.

Run ``i`` of an ensemble is driven by ``DriveStream(config.seed, run=i)``, so
results depend on ``(config, runs)`` only, never on the number of workers.
"""

from __future__ import annotations

import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import _kernel
from .blocks import restart_scan
from .dynamics import DriveStream, SimConfig, Walker, run_walk
from .potential import BaselineSpec, make_initial

PER_DECADE = 8


def checkpoint_grid(horizon: int, per_decade: int = PER_DECADE) -> np.ndarray:
    """Rounded powers of ``10 ** (1 / per_decade)`` up to ``horizon``, plus
    ``horizon`` itself."""
    if horizon < 1:
        return np.zeros(0, dtype=np.int64)
    top = int(math.floor(per_decade * math.log10(horizon) + 1e-9))
    grid = {int(round(10 ** (k / per_decade))) for k in range(top + 1)}
    grid.add(int(horizon))
    return np.array(sorted(g for g in grid if 1 <= g <= horizon), dtype=np.int64)


def slope_estimate(S, t, n, window=(10**4, 10**6), lam: float = 1.0,
                   sigma: int | None = None) -> float:
    """Least-squares slope of ``sigma * S`` against ``log(t) / lam`` over the
    checkpoints ``n`` lying in ``window``.

    ``sigma`` defaults to the sign of the last position.
    """
    S, t, n = (np.asarray(a, dtype=float) for a in (S, t, n))
    keep = (n >= window[0]) & (n <= window[1])
    if np.count_nonzero(keep) < 10:
        raise ValueError("slope window needs at least 10 checkpoints")
    if np.any(t[keep] <= 0):
        raise ValueError("times in the slope window must be positive")
    if sigma is None:
        sigma = 1 if S[-1] >= 0 else -1
    x = np.log(t[keep]) / lam
    if np.ptp(x) == 0:
        raise ValueError("degenerate slope window")
    return float(np.polyfit(x, sigma * S[keep], 1)[0])


@dataclass
class EnsembleSummary:
    """Per-run checkpoint data and the statistics built from it.

    ``ratio`` is ``|S_n| lam / log t_n`` at the last checkpoint (0 when
    ``t_n <= 1``). ``slope`` is NaN for runs whose window is too short.
    """

    case: str
    lam: float
    v: float
    runs: int
    horizon: int
    seed: int
    checkpoints: np.ndarray
    S: np.ndarray
    t: np.ndarray
    final_S: np.ndarray
    final_t: np.ndarray
    sign: np.ndarray
    ratio: np.ndarray
    slope: np.ndarray
    window: tuple[int, int]
    flips: np.ndarray                 # sign changes along the checkpoint grid
    flip_pair: tuple[int, int] | None
    flipped: np.ndarray               # sign differs between the flip pair
    restarts: dict = field(default_factory=dict)
    initial: BaselineSpec = field(default_factory=BaselineSpec)

    @property
    def median_ratio(self) -> float:
        return float(np.median(self.ratio)) if self.runs else 0.0

    @property
    def mean_slope(self) -> float:
        s = self.slope[np.isfinite(self.slope)]
        return float(s.mean()) if s.size else math.nan

    @property
    def positive_fraction(self) -> float:
        return float(np.mean(self.sign > 0)) if self.runs else 0.0

    @property
    def flip_fraction(self) -> float:
        return float(np.mean(self.flipped)) if self.flipped.size else 0.0

    def to_json(self) -> dict:
        def num(x):
            x = float(x)
            return x if math.isfinite(x) else str(x)

        return {
            "case": self.case, "lambda": self.lam, "v": num(self.v),
            "runs": self.runs, "horizon": self.horizon, "seed": self.seed,
            "initial": self.initial.to_json(),
            "checkpoints": self.checkpoints.tolist(),
            "window": list(self.window),
            "median_ratio": num(self.median_ratio),
            "mean_slope": num(self.mean_slope),
            "positive_fraction": self.positive_fraction,
            "flip_pair": None if self.flip_pair is None else list(self.flip_pair),
            "flip_fraction": self.flip_fraction,
            "per_run": [
                {"run": i, "S": num(self.final_S[i]), "t": num(self.final_t[i]),
                 "sign": int(self.sign[i]), "ratio": num(self.ratio[i]),
                 "slope": num(self.slope[i]), "flips": int(self.flips[i])}
                for i in range(self.runs)
            ],
            "restarts": self.restarts,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    def checkpoint_csv(self) -> str:
        buf = io.StringIO()
        buf.write("run,checkpoint_n,t,S\n")
        for i in range(self.runs):
            for k, n in enumerate(self.checkpoints):
                buf.write(f"{i},{int(n)},{float(self.t[i, k])!r},{float(self.S[i, k])!r}\n")
        return buf.getvalue()

    def plot_data(self) -> str:
        """Whitespace columns ``run log_t sigma_S``, one block per run."""
        buf = io.StringIO()
        buf.write("# run log_t sigma_S\n")
        for i in range(self.runs):
            sg = 1 if self.sign[i] >= 0 else -1
            for k in range(len(self.checkpoints)):
                if self.t[i, k] > 0:
                    buf.write(f"{i} {math.log(self.t[i, k])!r} {sg * float(self.S[i, k])!r}\n")
            buf.write("\n")
        return buf.getvalue()

    def write(self, directory, stem="ensemble"):
        import pathlib

        d = pathlib.Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"summary": d / f"{stem}.json", "checkpoints": d / f"{stem}_checkpoints.csv",
                 "plot": d / f"{stem}_plot.dat"}
        paths["summary"].write_text(self.dumps() + "\n")
        paths["checkpoints"].write_text(self.checkpoint_csv())
        paths["plot"].write_text(self.plot_data())
        return {k: str(p) for k, p in paths.items()}


def _one_run(args):
    config, run, checkpoints, eps = args
    H = config.horizon
    if H == 0:
        return np.zeros(0), np.zeros(0), 0.0, 0.0, None
    u0 = make_initial(config.initial)
    T, E, U = DriveStream(config.seed, run, config.service).take(H)
    rest = None
    if eps is None:
        w = Walker(u0, unit=config.unit, v=config.v, lam=config.lam, capacity=H + 1)
        pos, times = w.run_positions(T, E, U)
    else:
        traj = run_walk(config, (T, E, U), u0)
        pos, times = traj.S[1:], traj.t[1:]
        scan = restart_scan(traj, u0, eps, config.v, config.service)
        rest = (len(scan.restarts), scan.n_star)
    idx = checkpoints - 1
    return pos[idx].copy(), times[idx].copy(), float(pos[-1]), float(times[-1]), rest


def run_ensemble(config: SimConfig, runs: int, checkpoints=None,
                 window=None, flip_pair=(10**5, 10**6),
                 restart_eps: float | None = None, workers: int = 1) -> EnsembleSummary:
    """Run ``runs`` seeded walks of ``config.horizon`` steps.

    The slope window defaults to the last two decades, ``[H / 100, H]``.
    With ``restart_eps`` set, every run is also scanned for blocks and the
    restart counts are summarised (this keeps full trajectories in memory).
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    H = config.horizon
    if window is None:
        window = (max(1, H // 100), max(1, H))
    cp = checkpoint_grid(H) if checkpoints is None else np.asarray(checkpoints, np.int64)
    if cp.size and (np.any(np.diff(cp) <= 0) or cp[0] < 1 or cp[-1] > H):
        raise ValueError("checkpoints must increase strictly within [1, horizon]")
    jobs = [(config, i, cp, restart_eps) for i in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_one_run, jobs))
    else:
        out = [_one_run(j) for j in jobs]

    K = cp.size
    S = np.array([o[0] for o in out]).reshape(runs, K)
    t = np.array([o[1] for o in out]).reshape(runs, K)
    fS = np.array([o[2] for o in out])
    ft = np.array([o[3] for o in out])
    sign = np.sign(fS).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(ft > 1, np.abs(fS) * config.lam / np.log(np.maximum(ft, 1)), 0.0)
    slope = np.full(runs, np.nan)
    for i in range(runs):
        try:
            slope[i] = slope_estimate(S[i], t[i], cp, window, config.lam)
        except ValueError:
            pass
    signs = np.sign(S)
    flips = np.count_nonzero(signs[:, 1:] * signs[:, :-1] < 0, axis=1) if K > 1 \
        else np.zeros(runs, dtype=np.int64)
    pair, flipped = None, np.zeros(0, dtype=bool)
    if flip_pair is not None and all(p in cp for p in flip_pair):
        k1, k2 = (int(np.flatnonzero(cp == p)[0]) for p in flip_pair)
        pair, flipped = tuple(flip_pair), signs[:, k1] != signs[:, k2]
    restarts = {}
    if restart_eps is not None:
        counts = np.array([o[4][0] for o in out if o[4] is not None])
        if counts.size:
            top = int(counts.max())
            restarts = {
                "epsilon": restart_eps,
                "counts": counts.tolist(),
                "n_star": [o[4][1] for o in out if o[4] is not None],
                "tail": [float(np.mean(counts >= k)) for k in range(top + 1)],
            }
    return EnsembleSummary(config.case, config.lam, config.v, runs, H, config.seed,
                           cp, S, t, fS, ft, sign, ratio, slope, tuple(window),
                           flips, pair, flipped, restarts, config.initial)


def scaling_coupling(seed: int, lam1: float, lam2: float, steps: int = 10**4,
                     case: str = "unit", v: float = math.inf) -> float:
    """``max_n |S_n(lam2) - (lam1 / lam2) S_n(lam1)|`` on shared drives."""
    if v != math.inf:
        raise ValueError("the rescaling coupling is exact only for infinite speed")
    cfg1 = SimConfig(lam=lam1, v=v, case=case, horizon=steps, seed=seed)
    cfg2 = replace(cfg1, lam=float(lam2))
    drives = DriveStream(seed, 0, cfg1.service).take(steps)
    S1 = run_walk(cfg1, drives).S
    S2 = run_walk(cfg2, drives).S
    return float(np.max(np.abs(S2 - (lam1 / lam2) * S1))) if steps else 0.0


@dataclass(frozen=True)
class FirstStepResult:
    lam: float
    samples: int
    ks_stat: float
    ks_p: float
    left_fraction: float
    binom_p: float
    side_z: float  # standardized deviation of the Left count from n/2


def first_steps(lam: float, samples: int, seed: int = 0):
    """``(S_1, side)`` for ``samples`` independent first steps from the
    standard start."""
    u0 = make_initial()
    T, E, U = DriveStream(seed, 0, "det1").take(samples)
    rec = np.empty((samples, _kernel.RECORD_WIDTH))
    state = np.array([u0.spike_pos, u0.spike_val, np.nan, np.nan])
    _kernel.first_steps(np.array(u0.lx), np.array(u0.lv), u0.lx.size, np.array(u0.rx),
                        np.array(u0.rv), u0.rx.size, state, T, E, U, 0.0, float(lam),
                        True, rec)
    return rec[:, _kernel.POS], rec[:, _kernel.SIDE]


def first_step_law(samples: int = 10**5, lam: float = 1.0, seed: int = 0) -> FirstStepResult:
    """KS test of ``|S_1|`` against Exponential(rate ``2 lam``) and an exact
    binomial test of side fairness."""
    if samples < 10**4:
        raise ValueError("need at least 10^4 samples")
    S1, side = first_steps(lam, samples, seed)
    ks = stats.kstest(np.abs(S1), stats.expon(scale=1.0 / (2 * lam)).cdf)
    left = int(np.count_nonzero(side < 0))
    bt = stats.binomtest(left, samples, 0.5)
    z = (left - samples / 2) / math.sqrt(samples / 4)
    return FirstStepResult(float(lam), samples, float(ks.statistic), float(ks.pvalue),
                           left / samples, float(bt.pvalue), float(z))


def inhomogeneous_run(mu, config: SimConfig, runs: int, **kw) -> EnsembleSummary:
    """Ensemble started from the baseline ``-mu``.

    ``mu`` is a :class:`BaselineSpec`, a spec string (``"3@0..10,1"``) or a
    list of ``(level, a, b)`` pieces on background 1.
    """
    if isinstance(mu, str):
        spec = BaselineSpec.parse_mu(mu)
    elif isinstance(mu, BaselineSpec):
        spec = mu
    else:
        spec = BaselineSpec.from_mu(mu)
    return run_ensemble(replace(config, initial=spec), runs, **kw)


remark2_run = inhomogeneous_run  # name used by the documented interface
