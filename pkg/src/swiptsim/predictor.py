"""Splitting-factor policies: baseline, genie, symbol-based and block-based
prediction of the next activity states.

Two routes are provided.  The functions (:func:`select_relevant_states`,
:func:`sbp_predict`, :func:`bbp_predict`, ...) enumerate candidate states
one history at a time and are meant for inspection and testing.
:class:`DecisionEngine` produces the same decisions for the simulator; it
uses the fact that nodes are independent, so the most likely path to a
joint state is the product of per-node most likely paths, and caches every
constellation it has already measured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelSet, NoiseParams
from .constellation import (
    LabeledConstellation,
    check_size,
    mask_to_state,
    min_distance,
    min_distance_imperfect_csi,
    points_for_state,
    state_pair_distances,
    union_constellation,
    xor_shrinkage,
)
from .psf import PsfDecision, ReliabilityConfig, psf_from_distance
from .traffic import HISTORY_RULES, NodeHistory, NodeProfile, transition_probability

KINDS = ("baseline", "genie", "sbp", "bbp")

# above this many nodes the 4^N state-pair table is not built
PAIR_TABLE_MAX_NODES = 10


@dataclass(frozen=True)
class PredictorPolicy:
    """One splitting-factor policy.

    ``lag`` is the number of symbols between the last decided state and the
    first symbol of a block, on top of the one-symbol gap of the symbol
    predictor.  It defaults to ``D`` for the block predictor (the time the
    computation itself takes) and is 0 otherwise.  ``history_rule`` is one
    of :data:`~swiptsim.traffic.HISTORY_RULES`.
    """

    kind: str
    D: int = 1
    prob_threshold: float = 1e-8
    reset_period: int | None = None
    lag: int | None = None
    history_rule: str = "window"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.D < 1:
            raise ValueError("D must be >= 1")
        if not 0 < self.prob_threshold < 1:
            raise ValueError("prob_threshold must lie in (0, 1)")
        if self.reset_period is not None and self.reset_period < 1:
            raise ValueError("reset_period must be >= 1")
        if self.lag is not None and self.lag < 0:
            raise ValueError("lag must be >= 0")
        if self.history_rule not in HISTORY_RULES:
            raise ValueError(f"history_rule must be one of {HISTORY_RULES}")

    @property
    def effective_lag(self) -> int:
        if self.lag is not None:
            return self.lag
        return self.D if self.kind == "bbp" else 0

    @property
    def name(self) -> str:
        name = self.kind
        if self.kind == "bbp":
            name += str(self.D)
            if self.lag is not None and self.lag != self.D:
                name += f"lag{self.lag}"
        if self.reset_period:
            name += f"-reset{self.reset_period}"
        if self.prob_threshold != 1e-8:
            name += f"-thr{self.prob_threshold:g}"
        return name if self.history_rule == "window" else name + "-phase"

    @classmethod
    def parse(cls, text: str, **kw) -> "PredictorPolicy":
        """``baseline``, ``genie``, ``sbp`` or ``bbp<D>`` (e.g. ``bbp4``)."""
        t = text.strip().lower()
        if t.startswith("bbp"):
            rest = t[3:].lstrip(":=-")
            return cls("bbp", D=int(rest) if rest else kw.pop("D", 1), **kw)
        return cls(t, **kw)


@dataclass
class PredictionContext:
    """Decided histories of all nodes up to the last decided symbol."""

    histories: list[NodeHistory]
    block_index: int = 0
    stored_states: list[dict] = field(default_factory=list)

    @classmethod
    def from_states(cls, states: Sequence[Sequence[int]], profiles: Sequence[NodeProfile]) -> "PredictionContext":
        """Build histories from decided activity vectors, oldest first."""
        hist = [NodeHistory(pr.L) for pr in profiles]
        for s in states:
            for h, b in zip(hist, s):
                h.push(b)
        return cls(hist)

    @property
    def last_state(self) -> tuple:
        return tuple(h.last for h in self.histories)

    def copy(self) -> "PredictionContext":
        return PredictionContext([h.copy() for h in self.histories], self.block_index, list(self.stored_states))


@dataclass(frozen=True)
class StateSelection:
    states: list  # activity tuples
    probs: list
    filtered_mass: float


def _node_step_probs(profiles: Sequence[NodeProfile], histories: Sequence[NodeHistory], rule: str) -> np.ndarray:
    """(N, 2) table of Pr(next bit | history) for every node."""
    out = np.empty((len(profiles), 2))
    for n, (pr, h) in enumerate(zip(profiles, histories)):
        out[n, 0] = transition_probability(pr, h, h.last, 0, rule)
        out[n, 1] = transition_probability(pr, h, h.last, 1, rule)
    return out


def _state_probs(table: np.ndarray) -> np.ndarray:
    """Product over nodes of the per-node entries for every mask in [0, 2^N)."""
    N = len(table)
    masks = np.arange(1 << N)
    prob = np.ones(1 << N)
    for n in range(N):
        prob *= np.where((masks >> n) & 1, table[n, 1], table[n, 0])
    return prob


def select_relevant_states(
    ctx: PredictionContext,
    prior_state: Sequence[int],
    prior_prob: float,
    profiles: Sequence[NodeProfile],
    prob_threshold: float = 1e-8,
    rule: str = "window",
) -> StateSelection:
    """Candidate next states whose probability exceeds ``prob_threshold``.

    ``ctx`` must end with ``prior_state``; each of the 2^N candidates gets
    ``prod_n Pr(s_n | history_n) * prior_prob``.
    """
    if not 0 < prior_prob <= 1:
        raise ValueError("prior_prob must lie in (0, 1]")
    N = len(profiles)
    check_size(N)
    if tuple(prior_state) != ctx.last_state:
        raise ValueError("context does not end with prior_state")
    prob = _state_probs(_node_step_probs(profiles, ctx.histories, rule)) * prior_prob
    keep = prob > prob_threshold
    kept = np.flatnonzero(keep)
    return StateSelection(
        [mask_to_state(int(m), N) for m in kept],
        prob[kept].tolist(),
        float(prior_prob - prob[kept].sum()),
    )


def constellation_distance(c: LabeledConstellation, channels: ChannelSet, P_t: float) -> float:
    """Minimum distance, shrunk by the channel-uncertainty margin if any."""
    if np.any(channels.theta2):
        return min_distance_imperfect_csi(c, math.sqrt(P_t) * channels.theta)
    return min_distance(c)


def _decide(states, channels, P_t, noise, cfg) -> PsfDecision:
    c = union_constellation(states, channels.h, P_t)
    return psf_from_distance(constellation_distance(c, channels, P_t), noise, cfg)


def sbp_predict(
    ctx: PredictionContext,
    profiles: Sequence[NodeProfile],
    channels: ChannelSet,
    P_t: float,
    noise: NoiseParams,
    cfg: ReliabilityConfig,
    prob_threshold: float = 1e-8,
    rule: str = "window",
) -> PsfDecision:
    """Splitting factor for the symbol right after the last decided one."""
    sel = select_relevant_states(ctx, ctx.last_state, 1.0, profiles, prob_threshold, rule)
    return _decide(sel.states, channels, P_t, noise, cfg)


def chain_state_sets(
    ctx: PredictionContext,
    profiles: Sequence[NodeProfile],
    horizon: int,
    prob_threshold: float = 1e-8,
    rule: str = "window",
) -> list[dict]:
    """Likely states for each of the next ``horizon`` symbols.

    Each retained state is extended with its own predicted history; the
    chained probability is the transition probability times the probability
    of the state it came from.  Entries with the same activity and the same
    future behaviour are merged keeping the larger probability.  Returns one
    ``{activity tuple: probability}`` dict per step.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    frontier = {_ctx_key(ctx): (ctx, 1.0)}
    steps = []
    for _ in range(horizon):
        nxt: dict = {}
        activity: dict = {}
        for c, prior in frontier.values():
            sel = select_relevant_states(c, c.last_state, prior, profiles, prob_threshold, rule)
            for s, pr in zip(sel.states, sel.probs):
                child = c.copy()
                for h, b in zip(child.histories, s):
                    h.push(b)
                key = _ctx_key(child)
                if key not in nxt or nxt[key][1] < pr:
                    nxt[key] = (child, pr)
                activity[s] = max(activity.get(s, 0.0), pr)
        frontier = nxt
        steps.append(activity)
    ctx.stored_states = steps
    return steps


def _ctx_key(ctx: PredictionContext) -> tuple:
    return tuple(h.key() for h in ctx.histories)


def bbp_predict(
    ctx: PredictionContext,
    profiles: Sequence[NodeProfile],
    channels: ChannelSet,
    P_t: float,
    noise: NoiseParams,
    cfg: ReliabilityConfig,
    D: int,
    lag: int | None = None,
    prob_threshold: float = 1e-8,
    rule: str = "window",
) -> PsfDecision:
    """One splitting factor for a block of ``D`` symbols.

    The block starts ``lag + 1`` symbols after the last decided state in
    ``ctx`` (``lag`` defaults to ``D``), so states are chained over
    ``lag + D`` symbols.  The block uses the smallest of its per-symbol
    minimum distances.
    """
    lag = D if lag is None else lag
    steps = chain_state_sets(ctx.copy(), profiles, lag + D, prob_threshold, rule)
    d0 = math.inf
    for s in steps[lag:]:
        c = union_constellation(list(s), channels.h, P_t)
        d0 = min(d0, constellation_distance(c, channels, P_t))
    return psf_from_distance(d0, noise, cfg)


def genie_psf(true_state, channels: ChannelSet, P_t: float, noise: NoiseParams, cfg: ReliabilityConfig) -> PsfDecision:
    """Splitting factor when the set of active nodes is known in advance."""
    c = points_for_state(true_state, channels.h, P_t)
    return psf_from_distance(constellation_distance(c, channels, P_t), noise, cfg)


def baseline_psf(channels: ChannelSet, P_t: float, noise: NoiseParams, cfg: ReliabilityConfig) -> PsfDecision:
    """Constant splitting factor that covers every possible state."""
    check_size(channels.n_nodes)
    return _decide(range(1 << channels.n_nodes), channels, P_t, noise, cfg)


def _successors(obs: int, L: int, rule: str) -> tuple:
    """``(forced, obs if active, obs if idle)`` one step after ``obs``."""
    if rule == "window":
        # obs = trailing run of ones capped at L
        forced = 0 < obs < L
        return forced, min(obs + 1, L), 0
    # obs = symbols still owed by the packet in flight
    if obs:
        return True, obs - 1, 0
    return False, L - 1, 0


def node_path_table(p: float, L: int, obs: int, horizon: int, rule: str = "window") -> np.ndarray:
    """Largest path probability of a node being idle/active ``k`` steps ahead.

    ``obs`` summarises the node's decided history (see
    :meth:`NodeHistory.observation`).  Row ``k - 1`` holds ``(idle, active)``.
    """
    out = np.zeros((horizon, 2))
    paths = {(0, obs): 1.0}  # (activity, observation) -> max probability
    for k in range(horizon):
        nxt: dict = {}
        for (_, o), pr in paths.items():
            forced, on, off = _successors(o, L, rule)
            if forced:
                cand = [((1, on), pr)]
            else:
                cand = [((1, on), pr * p), ((0, off), pr * (1.0 - p))]
            for key, v in cand:
                if v > nxt.get(key, -1.0):
                    nxt[key] = v
        paths = nxt
        for (a, _), pr in paths.items():
            out[k, a] = max(out[k, a], pr)
    return out


class DecisionEngine:
    """Cached splitting-factor decisions for one scenario (fixed channels).

    Decisions depend on the decided past only through one small integer per
    node (:meth:`NodeHistory.observation`), so they are cached on that
    vector; constellations are cached on the set of retained states.
    """

    def __init__(
        self,
        channels: ChannelSet,
        profiles: Sequence[NodeProfile],
        P_t: float,
        noise: NoiseParams,
        cfg: ReliabilityConfig,
    ):
        self.N = channels.n_nodes
        check_size(self.N)
        if len(profiles) != self.N:
            raise ValueError("one profile per node required")
        self.channels = channels
        self.profiles = list(profiles)
        self.P_t = P_t
        self.noise = noise
        self.cfg = cfg
        self.masks = np.arange(1 << self.N)
        self._bits = (self.masks[:, None] >> np.arange(self.N)) & 1
        self._points: dict[int, np.ndarray] = {}
        self._d0_cache: dict[bytes, float] = {}
        self._genie: dict[int, PsfDecision] = {}
        self._tables: dict[tuple, np.ndarray] = {}
        self._blocks: dict[tuple, tuple] = {}
        self._baseline: PsfDecision | None = None
        self._pairs: np.ndarray | None = None

    def _state_points(self, mask: int) -> np.ndarray:
        pts = self._points.get(mask)
        if pts is None:
            pts = points_for_state(mask, self.channels.h, self.P_t).values
            self._points[mask] = pts
        return pts

    @property
    def pair_distances(self) -> np.ndarray:
        """State-pair minimum distances, with the CSI margin already applied."""
        if self._pairs is None:
            d = state_pair_distances(self.channels.h, self.P_t)
            if np.any(self.channels.theta2):
                shrink = xor_shrinkage(np.sqrt(self.P_t) * self.channels.theta, self.N)
                d = np.maximum(d - shrink[self.masks[:, None] ^ self.masks[None, :]], 0.0)
            self._pairs = d
        return self._pairs

    def distance(self, retained: np.ndarray) -> float:
        """Minimum (possibly CSI-shrunk) distance of the union of states."""
        key = np.packbits(retained).tobytes()
        d0 = self._d0_cache.get(key)
        if d0 is None:
            idx = np.flatnonzero(retained)
            if self.N <= PAIR_TABLE_MAX_NODES:
                d0 = float(self.pair_distances[np.ix_(idx, idx)].min())
            else:
                vals = [self._state_points(int(m)) for m in idx]
                c = LabeledConstellation(np.concatenate(vals), np.repeat(idx, [len(v) for v in vals]), self.N)
                d0 = constellation_distance(c, self.channels, self.P_t)
            self._d0_cache[key] = d0
        return d0

    def baseline(self) -> PsfDecision:
        if self._baseline is None:
            d0 = self.distance(np.ones(1 << self.N, dtype=bool))
            self._baseline = psf_from_distance(d0, self.noise, self.cfg)
        return self._baseline

    def genie(self, mask: int) -> PsfDecision:
        dec = self._genie.get(mask)
        if dec is None:
            if self.N <= PAIR_TABLE_MAX_NODES:
                d0 = float(self.pair_distances[mask, mask])
            else:
                # one label only, so the channel-uncertainty margin never applies
                pts = self._state_points(mask)
                d0 = min_distance(LabeledConstellation(pts, np.full(len(pts), mask, dtype=np.int64), self.N))
            dec = psf_from_distance(d0, self.noise, self.cfg)
            self._genie[mask] = dec
        return dec

    def _node_table(self, n: int, obs: int, horizon: int, rule: str) -> np.ndarray:
        pr = self.profiles[n]
        key = (pr.p, pr.L, obs, horizon, rule)
        t = self._tables.get(key)
        if t is None:
            t = node_path_table(pr.p, pr.L, obs, horizon, rule)
            self._tables[key] = t
        return t

    def canonical(self, obs: Sequence[int], horizon: int, rule: str) -> tuple:
        """Map observations that behave alike over ``horizon`` steps to one key."""
        out = []
        for o, pr in zip(obs, self.profiles):
            o = int(o)
            if rule == "window":
                if 0 < o < pr.L:
                    o = max(o, pr.L - horizon)
            else:
                o = min(o, horizon)
            out.append(o)
        return tuple(out)

    def retained_sets(self, obs: Sequence[int], horizon: int, threshold: float, rule: str = "window") -> np.ndarray:
        """Boolean ``(horizon, 2^N)`` array of states kept at each step."""
        tabs = [self._node_table(n, int(o), horizon, rule) for n, o in enumerate(obs)]
        prob = np.ones((horizon, 1 << self.N))
        for n, t in enumerate(tabs):
            prob *= np.where(self._bits[:, n][None, :] == 1, t[:, 1:2], t[:, 0:1])
        return prob > threshold

    def block(
        self, obs: Sequence[int], D: int, lag: int, threshold: float, rule: str = "window"
    ) -> tuple[PsfDecision, np.ndarray]:
        """Decision for a block of ``D`` symbols starting ``lag + 1`` symbols
        after the decided interval summarised by ``obs``.

        Returns the decision and the retained sets of the block symbols.
        With ``D = 1`` and ``lag = 0`` this is the symbol predictor.
        """
        obs = self.canonical(obs, lag + D, rule)
        key = (obs, D, lag, threshold, rule)
        hit = self._blocks.get(key)
        if hit is None:
            ret = self.retained_sets(obs, lag + D, threshold, rule)[lag:]
            d0 = min(self.distance(r) for r in ret)
            hit = (psf_from_distance(d0, self.noise, self.cfg), ret)
            self._blocks[key] = hit
        return hit
