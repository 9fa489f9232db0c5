"""Control-node selection and Gaussian-to-node binding."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


def farthest_point_sample(positions, n, seed=0, start=None):
    """Greedy max-min subset of n indices; the first pick is seeded unless
    given explicitly. Deterministic for fixed inputs."""
    positions = np.asarray(positions, dtype=np.float64)
    count = positions.shape[0]
    if n < 1 or n > count:
        raise ValueError(f"cannot sample {n} nodes from {count} points")
    if start is None:
        start = int(np.random.default_rng(seed).integers(count))
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = start
    d2 = np.sum((positions - positions[start]) ** 2, axis=1)
    for i in range(1, n):
        nxt = int(np.argmax(d2))  # first index wins ties
        chosen[i] = nxt
        nd2 = np.sum((positions - positions[nxt]) ** 2, axis=1)
        np.minimum(d2, nd2, out=d2)
    return chosen


@dataclass
class BindingTable:
    """K nearest control nodes per Gaussian with normalized influence weights
    and cached rest-frame offsets."""

    node_indices: np.ndarray   # (N,K) int
    weights: np.ndarray        # (N,K) rows sum to 1
    rest_offsets: np.ndarray   # (N,K,3) gaussian minus node, at rest
    temperature: float


def bind_gaussians(positions, node_positions, k=4, temperature=None,
                   literal_softmax=False):
    """Soft K-nearest binding.

    Weights are softmax(-d/tau) so nearer nodes dominate; tau defaults to the
    mean neighbor distance over the table. literal_softmax switches the sign
    of the distance argument for compatibility experiments.
    """
    positions = np.asarray(positions, dtype=np.float64)
    node_positions = np.asarray(node_positions, dtype=np.float64)
    m = node_positions.shape[0]
    if m < 1:
        raise ValueError("need at least one control node")
    k = min(k, m)
    tree = cKDTree(node_positions)
    d, idx = tree.query(positions, k=k)
    if k == 1:
        d = d[:, None]
        idx = idx[:, None]
    if temperature is None:
        temperature = float(d.mean())
    if temperature <= 0:
        temperature = 1.0
    arg = d / temperature if literal_softmax else -d / temperature
    arg = arg - arg.max(axis=1, keepdims=True)
    w = np.exp(arg)
    w /= w.sum(axis=1, keepdims=True)
    offsets = positions[:, None, :] - node_positions[idx]
    return BindingTable(
        node_indices=idx.astype(np.int64),
        weights=w,
        rest_offsets=offsets,
        temperature=float(temperature),
    )
