"""Joint BPSK constellations labelled by activity state, and their minimum
distances under perfect and imperfect channel knowledge.

Activity states are handled internally as integer bitmasks (bit ``n`` set
iff node ``n`` is active); the public functions also accept 0/1 sequences.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.spatial import cKDTree

MAX_NODES = 16


class StateSpaceTooLarge(ValueError):
    """Raised when exhaustive enumeration over 2^N states is refused."""


def check_size(n_nodes: int) -> None:
    if n_nodes > MAX_NODES:
        raise StateSpaceTooLarge(f"N={n_nodes} exceeds the enumeration limit of {MAX_NODES} nodes")


def state_to_mask(state) -> int:
    if isinstance(state, (int, np.integer)):
        return int(state)
    mask = 0
    for n, b in enumerate(state):
        if b:
            mask |= 1 << n
    return mask


def mask_to_state(mask: int, n_nodes: int) -> tuple:
    return tuple((mask >> n) & 1 for n in range(n_nodes))


@lru_cache(maxsize=None)
def _sign_patterns(k: int) -> np.ndarray:
    # row i: BPSK signs of the k active nodes for pattern i
    idx = np.arange(1 << k)[:, None]
    return np.where((idx >> np.arange(k)) & 1, 1.0, -1.0)


@dataclass(frozen=True)
class LabeledPoint:
    value: complex
    label: tuple


@dataclass(frozen=True)
class LabeledConstellation:
    values: np.ndarray  # complex, amplitude in sqrt(W)
    labels: np.ndarray  # int64 activity masks
    n_nodes: int

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[LabeledPoint]:
        for v, lab in zip(self.values, self.labels):
            yield LabeledPoint(complex(v), mask_to_state(int(lab), self.n_nodes))

    def __getitem__(self, i) -> LabeledPoint:
        return LabeledPoint(complex(self.values[i]), mask_to_state(int(self.labels[i]), self.n_nodes))

    def unique(self) -> "LabeledConstellation":
        """Drop exact duplicates (same value and same label)."""
        if len(self) < 2:
            return self
        key = np.stack([self.values.real, self.values.imag, self.labels.astype(float)], axis=1)
        _, idx = np.unique(key, axis=0, return_index=True)
        idx.sort()
        return LabeledConstellation(self.values[idx], self.labels[idx], self.n_nodes)


def _point_values(mask: int, h: np.ndarray, amp: float) -> np.ndarray:
    active = [n for n in range(len(h)) if (mask >> n) & 1]
    if not active:
        return np.zeros(1, dtype=complex)
    return amp * (_sign_patterns(len(active)) @ h[active])


def points_for_state(state, h, P_t: float) -> LabeledConstellation:
    """All 2^k sign combinations of the k active nodes, scaled by sqrt(P_t)."""
    h = np.atleast_1d(np.asarray(h, dtype=complex))
    if not isinstance(state, (int, np.integer)) and len(state) != len(h):
        raise ValueError("state length must equal the number of nodes")
    mask = state_to_mask(state)
    vals = _point_values(mask, h, np.sqrt(P_t))
    return LabeledConstellation(vals, np.full(len(vals), mask, dtype=np.int64), len(h))


def union_constellation(states: Iterable, h, P_t: float) -> LabeledConstellation:
    h = np.atleast_1d(np.asarray(h, dtype=complex))
    parts = [points_for_state(s, h, P_t) for s in states]
    if not parts:
        raise ValueError("need at least one state")
    return LabeledConstellation(
        np.concatenate([c.values for c in parts]),
        np.concatenate([c.labels for c in parts]),
        len(h),
    )


def baseline_constellation(h, P_t: float) -> LabeledConstellation:
    """Every state at once: the 3^N-valued globally joint constellation."""
    h = np.atleast_1d(np.asarray(h, dtype=complex))
    check_size(len(h))
    return union_constellation(range(1 << len(h)), h, P_t)


def min_distance(c: LabeledConstellation) -> float:
    """Smallest distance between two distinct points; +inf below two points."""
    c = c.unique()
    if len(c) < 2:
        return float("inf")
    xy = np.column_stack([c.values.real, c.values.imag])
    # exact nearest neighbour; coincident points from different labels give 0
    dist, _ = cKDTree(xy).query(xy, k=2)
    return float(dist[:, 1].min())


def state_pair_distances(h, P_t: float) -> np.ndarray:
    """Minimum distance between the point sets of every pair of states.

    Entry ``[i, j]`` is the smallest ``|u - v|`` with ``u`` from state ``i``
    and ``v`` from state ``j``; on the diagonal coincident points of the
    same state count as one point, and a state with a single point gets
    +inf.  The minimum distance of any union of states is the minimum of
    this matrix over the corresponding block.
    """
    h = np.atleast_1d(np.asarray(h, dtype=complex))
    N = len(h)
    check_size(N)
    amp = np.sqrt(P_t)
    pts = [_point_values(m, h, amp) for m in range(1 << N)]
    sizes = np.array([len(p) for p in pts])
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    allpts = np.concatenate(pts)
    S = 1 << N
    out = np.full((S, S), np.inf)
    for i in range(S):
        d = np.abs(pts[i][:, None] - allpts[None, starts[i]:])
        own = d[:, : sizes[i]]
        own[own == 0.0] = np.inf
        row = np.minimum.reduceat(d.min(axis=0), starts[i:] - starts[i])
        out[i, i:] = row
        out[i:, i] = row
    return out


def xor_shrinkage(theta, n_nodes: int) -> np.ndarray:
    """4 * sum of theta_n over the set bits of every mask in [0, 2^N)."""
    theta = np.asarray(theta, dtype=float)
    masks = np.arange(1 << n_nodes)
    bits = (masks[:, None] >> np.arange(n_nodes)) & 1
    return 4.0 * (bits @ theta)


def min_distance_imperfect_csi(c: LabeledConstellation, theta: Sequence[float], chunk: int = 2048) -> float:
    """Minimum distance after the channel-uncertainty margin.

    A pair of points loses ``4 * theta_n`` for every node active in exactly
    one of the two labels, clipped at zero.  ``theta`` is in the same
    amplitude units as the constellation values.
    """
    theta = np.asarray(theta, dtype=float)
    if len(theta) != c.n_nodes:
        raise ValueError("theta length must equal the number of nodes")
    if np.any(theta < 0):
        raise ValueError("theta must be non-negative")
    if not np.any(theta):
        return min_distance(c)
    c = c.unique()
    P = len(c)
    if P < 2:
        return float("inf")
    check_size(c.n_nodes)
    shrink = xor_shrinkage(theta, c.n_nodes)
    v, lab = c.values, c.labels
    best = float("inf")
    for start in range(0, P - 1, chunk):
        stop = min(start + chunk, P - 1)
        vi = v[start:stop, None]
        li = lab[start:stop, None]
        # only j > i
        j0 = start + 1
        d = np.abs(vi - v[None, j0:]) - shrink[li ^ lab[None, j0:]]
        tri = np.arange(start, stop)[:, None] < np.arange(j0, P)[None, :]
        d = np.where(tri, d, np.inf)
        best = min(best, float(d.min()))
        if best <= 0.0:
            return 0.0
    return max(best, 0.0)
