"""Monte Carlo scenarios: deployment, traffic, received signal and the
per-symbol evaluation of every policy on the same realisation."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channel import ChannelParams, ChannelSet, NoiseParams, complex_gaussian, draw_channel
from .constellation import LabeledConstellation, LabeledPoint, mask_to_state
from .predictor import DecisionEngine, PredictorPolicy
from .psf import NonlinearHarvestParams, ReliabilityConfig, dbm_to_watts, harvested_power_nonlinear, watts_to_dbuw
from .traffic import NodeProfile, generate_trace

DEPLOY_STREAM = 2
NOISE_STREAM = 3

AXES = ("N", "p", "L", "D", "alpha")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to run one simulation point.

    Defaults reproduce the reference deployment: 6 nodes at 3-10 m, p = 0.1,
    L = 20, 20 dBm transmit power, -110 dBm receiver noise, -75 dBm
    splitter noise, K = 3 Rician fading at 900 MHz.
    """

    profiles: tuple = tuple(NodeProfile(0.1, 20) for _ in range(6))
    distance_range: tuple = (3.0, 10.0)
    channel: ChannelParams = ChannelParams()
    noise: NoiseParams = NoiseParams(dbm_to_watts(-110.0), dbm_to_watts(-75.0))
    P_t: float = dbm_to_watts(20.0)
    reliability: ReliabilityConfig = ReliabilityConfig()
    policies: tuple = (PredictorPolicy("baseline"), PredictorPolicy("sbp"), PredictorPolicy("genie"))
    M: int = 1000
    repetitions: int = 500
    seed: int = 0
    csi_alpha: float = 0.0
    nonlinear: NonlinearHarvestParams | None = None
    decide: str = "truth"

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        object.__setattr__(self, "policies", tuple(self.policies))
        if self.N < 1:
            raise ValueError("at least one node required")
        if self.M < 1 or self.repetitions < 1:
            raise ValueError("M and repetitions must be >= 1")
        lo, hi = self.distance_range
        if not 0 < lo <= hi:
            raise ValueError("distance_range must satisfy 0 < low <= high")
        if self.P_t <= 0:
            raise ValueError("P_t must be positive")
        if self.csi_alpha < 0:
            raise ValueError("csi_alpha must be >= 0")
        if self.decide not in ("truth", "jd"):
            raise ValueError("decide must be 'truth' or 'jd'")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate policies: {names}")

    @property
    def N(self) -> int:
        return len(self.profiles)

    @property
    def burn_in(self) -> int:
        lags = [p.effective_lag + 1 for p in self.policies]
        return max([pr.L for pr in self.profiles] + lags)

    def with_value(self, axis: str, value) -> "ScenarioConfig":
        """Copy with one sweep axis set to ``value``."""
        if axis == "N":
            n = int(value)
            base = self.profiles[0]
            profiles = self.profiles[:n] + tuple(base for _ in range(n - len(self.profiles)))
            return replace(self, profiles=profiles)
        if axis == "p":
            return replace(self, profiles=tuple(replace(pr, p=float(value)) for pr in self.profiles))
        if axis == "L":
            return replace(self, profiles=tuple(replace(pr, L=int(value)) for pr in self.profiles))
        if axis == "D":
            pols = tuple(replace(p, D=int(value)) if p.kind == "bbp" else p for p in self.policies)
            return replace(self, policies=pols)
        if axis == "alpha":
            return replace(self, csi_alpha=float(value))
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


@dataclass
class RepTotals:
    """Sums over the symbols of one repetition for one policy."""

    harvest: float = 0.0
    nonlinear: float = 0.0
    symbols: int = 0
    violations: int = 0
    rho: float = 0.0
    d0: float = 0.0
    d0_finite: int = 0
    set_size: int = 0
    set_size_max: int = 0
    prediction_errors: int = 0
    wall_time: float = 0.0


@dataclass(frozen=True)
class PolicyMetrics:
    policy: str
    reps: int
    symbols: int
    pharv_w: float
    pharv_nonlinear_w: float
    violation_fraction: float
    mean_rho: float
    mean_d0: float
    mean_set_size: float
    max_set_size: int
    prediction_errors: int
    wall_time: float

    @property
    def pharv_dbuw(self) -> float:
        return float(watts_to_dbuw(self.pharv_w))

    @classmethod
    def aggregate(cls, name: str, reps: Sequence[RepTotals]) -> "PolicyMetrics":
        fs = math.fsum
        n = sum(r.symbols for r in reps)
        nd = sum(r.d0_finite for r in reps)
        return cls(
            policy=name,
            reps=len(reps),
            symbols=n,
            pharv_w=fs(r.harvest for r in reps) / n,
            pharv_nonlinear_w=fs(r.nonlinear for r in reps) / n,
            violation_fraction=sum(r.violations for r in reps) / n,
            mean_rho=fs(r.rho for r in reps) / n,
            mean_d0=fs(r.d0 for r in reps) / nd if nd else math.inf,
            mean_set_size=sum(r.set_size for r in reps) / n,
            max_set_size=max(r.set_size_max for r in reps),
            prediction_errors=sum(r.prediction_errors for r in reps),
            wall_time=fs(r.wall_time for r in reps),
        )


RunMetrics = dict  # policy name -> PolicyMetrics


@dataclass
class Realization:
    """Channels, traffic and received samples of one repetition."""

    channels: ChannelSet  # what the relay believes
    h_true: np.ndarray
    distances: np.ndarray
    trace: object
    y: np.ndarray  # measured intervals only
    z: np.ndarray  # splitter processing noise, used by joint detection
    masks: np.ndarray = field(repr=False)  # all intervals incl. warm-up


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def draw_deployment(cfg: ScenarioConfig, rep: int) -> tuple[ChannelSet, np.ndarray, np.ndarray]:
    """Node distances and channels; node ``n`` uses its own stream.

    Returns ``(channels known to the relay, true gains, distances)``.  The
    unit channel error is always drawn so that an alpha sweep changes only
    its scale.
    """
    lo, hi = cfg.distance_range
    N = cfg.N
    dist = np.empty(N)
    h = np.empty(N, dtype=complex)
    err = np.empty(N, dtype=complex)
    for n in range(N):
        rng = _stream(cfg.seed, rep, DEPLOY_STREAM, n)
        dist[n] = rng.uniform(lo, hi)
        h[n] = draw_channel(dist[n], cfg.channel, rng)
        err[n] = complex_gaussian(rng, None)
    theta2 = cfg.csi_alpha * np.abs(h) ** 2
    h_true = h + np.sqrt(theta2) * err
    return ChannelSet(h, theta2), h_true, dist


def realize(cfg: ScenarioConfig, rep: int) -> Realization:
    channels, h_true, dist = draw_deployment(cfg, rep)
    trace = generate_trace(cfg.profiles, cfg.M, cfg.seed, burn_in=cfg.burn_in, stream_prefix=(rep,))
    rng = _stream(cfg.seed, rep, NOISE_STREAM)
    w = complex_gaussian(rng, cfg.M, cfg.noise.sigma2)
    z = complex_gaussian(rng, cfg.M, cfg.noise.delta2)
    y = math.sqrt(cfg.P_t) * (h_true @ trace.measured_symbols) + w
    return Realization(channels, h_true, dist, trace, y, z, trace.masks())


def _policy_schedule(policy: PredictorPolicy, engine: DecisionEngine, real: Realization, cfg: ScenarioConfig):
    """Per-symbol (decision, retained-set row) using the true past states."""
    M, B = cfg.M, real.trace.burn_in
    thr = policy.prob_threshold
    obs = real.trace.observations(cfg.profiles, policy.history_rule)
    out = [None] * M
    if policy.kind == "baseline":
        dec = engine.baseline()
        full = np.ones(1 << engine.N, dtype=bool)
        return [(dec, full)] * M
    if policy.kind == "genie":
        for m in range(M):
            mask = int(real.masks[B + m])
            out[m] = (engine.genie(mask), None)
        return out
    D = 1 if policy.kind == "sbp" else policy.D
    lag = policy.effective_lag
    for q in range(0, M, D):
        t0 = B + q - lag - 1
        dec, ret = engine.block(obs[:, t0], D, lag, thr, policy.history_rule)
        for j in range(min(D, M - q)):
            out[q + j] = (dec, ret[j])
    if policy.reset_period:
        base = engine.baseline()
        full = np.ones(1 << engine.N, dtype=bool)
        for m in range(0, M, policy.reset_period):
            out[m] = (base, full)
    return out


def jd_detect(y: complex, c: LabeledConstellation, rho: float) -> tuple[int, LabeledPoint]:
    """Nearest point to the post-split sample ``y``; ties go to the lower index."""
    if len(c) == 0:
        raise ValueError("empty constellation")
    k = int(np.argmin(np.abs(math.sqrt(rho) * c.values - y)))
    return k, c[k]


def _run_policy_truth(policy, engine, real, cfg) -> RepTotals:
    sched = _policy_schedule(policy, engine, real, cfg)
    M, B = cfg.M, real.trace.burn_in
    rho = np.array([s[0].rho for s in sched])
    d0 = np.array([s[0].d0 for s in sched])
    feas = np.array([s[0].feasible for s in sched])
    tot = RepTotals()
    true_masks = real.masks[B:B + M]
    sizes = np.ones(M, dtype=np.int64)
    for m, (_, ret) in enumerate(sched):
        if ret is not None:
            sizes[m] = int(ret.sum())
            if not ret[true_masks[m]]:
                tot.prediction_errors += 1
    _fill(tot, cfg, rho, d0, feas, real.y, sizes)
    return tot


def _fill(tot: RepTotals, cfg, rho, d0, feas, y, sizes) -> None:
    y2 = np.abs(y) ** 2
    eta = cfg.reliability.eta
    tot.harvest = math.fsum((1.0 - rho) * eta * y2)
    if cfg.nonlinear is not None:
        tot.nonlinear = math.fsum(harvested_power_nonlinear(rho, y2, cfg.nonlinear))
    tot.symbols = len(rho)
    tot.violations = int(np.count_nonzero(~feas))
    tot.rho = math.fsum(rho)
    fin = np.isfinite(d0)
    tot.d0 = math.fsum(d0[fin])
    tot.d0_finite = int(fin.sum())
    tot.set_size = int(sizes.sum())
    tot.set_size_max = int(sizes.max())


def _run_policy_jd(policy, engine, real, cfg) -> RepTotals:
    """Sequential evaluation where predictors only see jointly-detected states."""
    M, B, N = cfg.M, real.trace.burn_in, engine.N
    thr = policy.prob_threshold
    # decided activity: warm-up taken as observed, then filled by detection
    decided = real.trace.activity.copy()
    decided[:, B:] = 0
    runs = real.trace.runs.copy()
    L = np.array([pr.L for pr in cfg.profiles])
    rho = np.empty(M)
    d0 = np.empty(M)
    feas = np.empty(M, dtype=bool)
    sizes = np.empty(M, dtype=np.int64)
    tot = RepTotals()
    full = np.ones(1 << N, dtype=bool)
    D = 1 if policy.kind == "sbp" else policy.D
    lag = policy.effective_lag
    block = None
    for m in range(M):
        t = B + m
        true_mask = int(real.masks[t])
        if policy.kind == "baseline" or (policy.reset_period and m % policy.reset_period == 0 and policy.kind in ("sbp", "bbp")):
            dec, ret = engine.baseline(), full
        elif policy.kind == "genie":
            dec, ret = engine.genie(true_mask), engine.masks == true_mask
        else:
            if m % D == 0:
                col = runs[:, t - lag - 1]
                if policy.history_rule == "window":
                    o = np.minimum(col, L)
                else:
                    o = (L - col % L) % L
                block = engine.block(o, D, lag, thr, policy.history_rule)
            dec, ret = block[0], block[1][m % D]
        rho[m], d0[m], feas[m] = dec.rho, dec.d0, dec.feasible
        sizes[m] = int(ret.sum())
        states = np.flatnonzero(ret)
        vals = [engine._state_points(int(s)) for s in states]
        c = LabeledConstellation(np.concatenate(vals), np.repeat(states, [len(v) for v in vals]), N)
        r = math.sqrt(dec.rho) * real.y[m] + real.z[m]
        _, pt = jd_detect(r, c, dec.rho)
        got = pt.label
        if got != mask_to_state(true_mask, N):
            tot.prediction_errors += 1
        decided[:, t] = got
        runs[:, t] = np.where(np.array(got, dtype=bool), runs[:, t - 1] + 1, 0)
    _fill(tot, cfg, rho, d0, feas, real.y, sizes)
    return tot


@dataclass(frozen=True)
class DecisionTrace:
    """Per-symbol decisions of one policy in one repetition.

    ``covered[m]`` tells whether the true state of symbol ``m`` was among
    the states the policy planned for.
    """

    rho: np.ndarray
    d0: np.ndarray
    feasible: np.ndarray
    covered: np.ndarray
    true_masks: np.ndarray


def decision_trace(cfg: ScenarioConfig, rep: int, policy: PredictorPolicy) -> DecisionTrace:
    real = realize(cfg, rep)
    engine = DecisionEngine(real.channels, cfg.profiles, cfg.P_t, cfg.noise, cfg.reliability)
    sched = _policy_schedule(policy, engine, real, cfg)
    B = real.trace.burn_in
    true_masks = real.masks[B:B + cfg.M]
    covered = np.array([ret is None or bool(ret[t]) for (_, ret), t in zip(sched, true_masks)])
    return DecisionTrace(
        np.array([s[0].rho for s in sched]),
        np.array([s[0].d0 for s in sched]),
        np.array([s[0].feasible for s in sched]),
        covered,
        true_masks,
    )


def run_scenario(cfg: ScenarioConfig, rep: int = 0) -> dict[str, RepTotals]:
    """One repetition: every policy on the same channels, trace and noise.

    All randomness derives from ``(cfg.seed, rep)``.
    """
    real = realize(cfg, rep)
    engine = DecisionEngine(real.channels, cfg.profiles, cfg.P_t, cfg.noise, cfg.reliability)
    runner = _run_policy_jd if cfg.decide == "jd" else _run_policy_truth
    out = {}
    for pol in cfg.policies:
        t0 = time.perf_counter()
        tot = runner(pol, engine, real, cfg)
        tot.wall_time = time.perf_counter() - t0
        out[pol.name] = tot
    return out


def _run_reps(args) -> list[dict]:
    cfg, reps = args
    return [run_scenario(cfg, r) for r in reps]


def run_experiment(cfg: ScenarioConfig, workers: int = 1) -> RunMetrics:
    """Average over ``cfg.repetitions`` scenarios; the result does not depend
    on ``workers``."""
    reps = list(range(cfg.repetitions))
    if workers > 1:
        chunks = [reps[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_run_reps, [(cfg, c) for c in chunks]))
        by_rep: dict[int, dict] = {}
        for chunk, res in zip(chunks, parts):
            by_rep.update(zip(chunk, res))
        results = [by_rep[r] for r in reps]
    else:
        results = _run_reps((cfg, reps))
    return {p.name: PolicyMetrics.aggregate(p.name, [r[p.name] for r in results]) for p in cfg.policies}


def sweep(cfg: ScenarioConfig, axis: str, values: Sequence, workers: int = 1) -> list[tuple[object, RunMetrics]]:
    """One :func:`run_experiment` per axis value, all with the same seed."""
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    return [(v, run_experiment(cfg.with_value(axis, v), workers)) for v in values]


def average_active_nodes(profiles: Sequence[NodeProfile]) -> float:
    """Expected number of simultaneously active nodes."""
    return float(sum(pr.duty_cycle for pr in profiles))


__all__ = [
    "ScenarioConfig",
    "PolicyMetrics",
    "RepTotals",
    "RunMetrics",
    "Realization",
    "DecisionTrace",
    "average_active_nodes",
    "decision_trace",
    "draw_deployment",
    "jd_detect",
    "realize",
    "run_experiment",
    "run_scenario",
    "sweep",
]
