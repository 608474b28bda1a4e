"""Random packet arrivals of the uplink nodes.

Every node runs an independent renewal process: in each free symbol
interval it starts a packet of ``L`` BPSK symbols with probability ``p``,
and a started packet always runs to completion.  Back-to-back packets are
allowed, so a run of ones has a length that is a multiple of ``L``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# spawn_key tag of the per-node traffic streams
TRAFFIC_STREAM = 1

ActivityState = tuple  # tuple of 0/1 ints, bit n set iff node n transmits

# How a predictor decides that the packet in flight has ended:
#   "window" - the last L observed bits are all ones (the L-bit case test);
#              during back-to-back packets this also fires mid-packet, which
#              only ever adds states, never drops the true one
#   "phase"  - the length of the trailing run of ones is a multiple of L
HISTORY_RULES = ("window", "phase")


@dataclass(frozen=True)
class NodeProfile:
    """Transmission probability per free symbol interval and packet length."""

    p: float
    L: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be an integer >= 1, got {self.L}")

    @property
    def duty_cycle(self) -> float:
        return duty_cycle(self.p, self.L)


def duty_cycle(p: float, L: int) -> float:
    """Long-run fraction of intervals in which the node is active."""
    return p * L / (p * L + (1.0 - p))


class NodeHistory:
    """Last ``L`` activity bits of one node.

    The length of the trailing run of ones is kept next to the ring buffer.
    With back-to-back packets the buffer alone is all ones both at a packet
    boundary and in the middle of the second packet; the run length tells
    the two apart.
    """

    __slots__ = ("L", "bits", "run")

    def __init__(self, L: int, bits: Sequence[int] | None = None, run: int | None = None):
        self.L = int(L)
        self.bits: deque[int] = deque([0] * self.L, maxlen=self.L)
        self.run = 0
        for b in bits or ():
            self.push(b)
        if run is not None:
            if run < 0 or (run == 0) != (self.bits[-1] == 0) or min(run, self.L) != self._buffer_run():
                raise ValueError(f"run length {run} inconsistent with bits {list(self.bits)}")
            self.run = int(run)

    def _buffer_run(self) -> int:
        k = 0
        for b in reversed(self.bits):
            if not b:
                break
            k += 1
        return k

    def push(self, bit: int) -> None:
        bit = 1 if bit else 0
        self.bits.append(bit)
        self.run = self.run + 1 if bit else 0

    @property
    def last(self) -> int:
        return self.bits[-1]

    @property
    def packet_complete(self) -> bool:
        """True if the last interval was the final symbol of a packet."""
        return self.run > 0 and self.run % self.L == 0

    @property
    def window_full(self) -> bool:
        """True if all of the last ``L`` bits are ones."""
        return self.run >= self.L

    def boundary(self, rule: str = "window") -> bool:
        """Whether a node that was active may stop now, under ``rule``."""
        if rule == "window":
            return self.window_full
        if rule == "phase":
            return self.packet_complete
        raise ValueError(f"unknown history rule {rule!r}")

    def observation(self, rule: str = "window") -> int:
        """Compact summary of the history that determines future transitions."""
        return min(self.run, self.L) if rule == "window" else self.remaining

    @property
    def mid_packet(self) -> bool:
        return self.run % self.L != 0

    @property
    def remaining(self) -> int:
        """Symbols still owed by the packet in flight (0 if free to decide)."""
        return (self.L - self.run % self.L) % self.L

    def key(self) -> tuple:
        # two histories with equal keys have identical futures
        return tuple(self.bits), self.run % self.L

    def copy(self) -> "NodeHistory":
        h = NodeHistory.__new__(NodeHistory)
        h.L = self.L
        h.bits = deque(self.bits, maxlen=self.L)
        h.run = self.run
        return h

    def __repr__(self) -> str:
        return f"NodeHistory(L={self.L}, bits={list(self.bits)}, run={self.run})"


def step_node(history: NodeHistory, profile: NodeProfile, rng: np.random.Generator) -> tuple[int, int]:
    """Advance one node by one symbol interval.

    Returns ``(bit, symbol)`` with ``symbol`` in {-1, +1} when active and 0
    when idle.  ``history`` is updated in place.
    """
    if history.mid_packet:
        bit = 1
    else:
        bit = int(rng.random() < profile.p)
    symbol = int(2 * rng.integers(0, 2) - 1) if bit else 0
    history.push(bit)
    return bit, symbol


def transition_probability(
    profile: NodeProfile, history: NodeHistory, prev: int, nxt: int, rule: str = "window"
) -> float:
    """Pr(s_n[m] = nxt | s_n[m-1] = prev) given the node's history up to m-1.

    idle -> idle: 1 - p; idle -> active: p; an active node stops with
    1 - p and continues with p at a packet boundary, and continues with
    certainty otherwise.  ``rule`` selects how the boundary is recognised.
    """
    if history.last != prev:
        raise ValueError("history does not end with prev")
    p = profile.p
    if prev == 0 or history.boundary(rule):
        return p if nxt else 1.0 - p
    return 1.0 if nxt else 0.0


def state_transition_probability(
    profiles: Sequence[NodeProfile],
    histories: Sequence[NodeHistory],
    s_prev: Sequence[int],
    s_next: Sequence[int],
    rule: str = "window",
) -> float:
    if not len(profiles) == len(histories) == len(s_prev) == len(s_next):
        raise ValueError("dimension mismatch")
    prob = 1.0
    for prof, hist, a, b in zip(profiles, histories, s_prev, s_next):
        prob *= transition_probability(prof, hist, a, b, rule)
    return prob


@dataclass(frozen=True)
class TrafficTrace:
    """Activity bits and BPSK symbols, ``shape == (N, burn_in + M)``.

    Columns ``[0, burn_in)`` are warm-up intervals that give every node a
    full history before the first measured interval.  ``runs[n, t]`` is the
    length of node ``n``'s run of ones ending at interval ``t``.
    """

    activity: np.ndarray
    symbols: np.ndarray
    runs: np.ndarray
    burn_in: int

    @property
    def n_nodes(self) -> int:
        return self.activity.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.activity.shape[1] - self.burn_in

    @property
    def measured_activity(self) -> np.ndarray:
        return self.activity[:, self.burn_in:]

    @property
    def measured_symbols(self) -> np.ndarray:
        return self.symbols[:, self.burn_in:]

    def observations(self, profiles: Sequence[NodeProfile], rule: str = "window") -> np.ndarray:
        """Per-interval history summaries, see :meth:`NodeHistory.observation`."""
        L = np.array([pr.L for pr in profiles])[:, None]
        if rule == "window":
            return np.minimum(self.runs, L)
        if rule == "phase":
            return (L - self.runs % L) % L
        raise ValueError(f"unknown history rule {rule!r}")

    def masks(self) -> np.ndarray:
        """Activity state of every interval packed into an integer bitmask."""
        weights = (1 << np.arange(self.n_nodes, dtype=np.int64))
        return weights @ self.activity.astype(np.int64)


def node_rng(seed, n: int, *prefix: int) -> np.random.Generator:
    """Independent generator for node ``n``; unaffected by other nodes."""
    ss = np.random.SeedSequence(seed, spawn_key=(*prefix, TRAFFIC_STREAM, n))
    return np.random.default_rng(ss)


def _run_node(p: float, L: int, u: Sequence[float]) -> tuple[list[int], list[int]]:
    bits = [0] * len(u)
    runs = [0] * len(u)
    run = 0
    for t, ut in enumerate(u):
        if run % L or ut < p:
            run += 1
            bits[t] = 1
        else:
            run = 0
        runs[t] = run
    return bits, runs


def generate_trace(
    profiles: Sequence[NodeProfile],
    M: int,
    seed,
    burn_in: int | None = None,
    stream_prefix: tuple[int, ...] = (),
) -> TrafficTrace:
    """Draw ``M`` measured intervals (plus warm-up) for every node.

    The process starts from the all-idle state ``burn_in`` intervals before
    the first measured one (default: the longest packet length).  Node ``n``
    draws from its own stream, so adding nodes leaves existing rows intact.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    if burn_in is None:
        burn_in = max(pr.L for pr in profiles)
    T = burn_in + M
    N = len(profiles)
    activity = np.zeros((N, T), dtype=np.int8)
    symbols = np.zeros((N, T), dtype=np.int8)
    runs = np.zeros((N, T), dtype=np.int64)
    for n, prof in enumerate(profiles):
        rng = node_rng(seed, n, *stream_prefix)
        u = rng.random(T)
        signs = 2 * rng.integers(0, 2, T, dtype=np.int8) - 1
        bits, run = _run_node(prof.p, prof.L, u.tolist())
        activity[n] = bits
        symbols[n] = signs * activity[n]
        runs[n] = run
    return TrafficTrace(activity, symbols, runs, burn_in)


def run_lengths(bits: Sequence[int]) -> np.ndarray:
    """Length of the run of ones ending at every interval."""
    out = np.zeros(len(bits), dtype=np.int64)
    run = 0
    for t, b in enumerate(bits):
        run = run + 1 if b else 0
        out[t] = run
    return out


def consumed_power(profile: NodeProfile, P_t: float) -> float:
    """Average power a node spends transmitting, in watts."""
    if P_t <= 0:
        raise ValueError("P_t must be positive")
    return P_t * profile.duty_cycle
