"""Spatiotemporal gaze sampling: noisy gaze window -> one point prompt.

The sampler extracts color, depth, location and velocity features for every
sample in the trigger window, clusters them by density in the normalized
feature space, and returns the centroid of the largest cluster -- the area
holding the most attention in recent history.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .config import SamplerConfig

ColorLookup = Callable[[float, float], tuple[int, int, int]]


class NoGazeData(ValueError):
    """No gaze samples available in the selection window."""


@dataclass(frozen=True)
class GazeSample:
    t: float
    x: float
    y: float
    depth: Optional[float] = None
    color: Optional[tuple[int, int, int]] = None
    velocity: float = 0.0

    def to_record(self) -> dict:
        return {"t": self.t, "x": self.x, "y": self.y, "depth": self.depth}

    @classmethod
    def from_record(cls, data: dict) -> "GazeSample":
        depth = data.get("depth")
        return cls(
            t=float(data["t"]),
            x=float(data["x"]),
            y=float(data["y"]),
            depth=None if depth is None else float(depth),
        )


def dump_stream(stream: Sequence[GazeSample]) -> str:
    """One record line per sample: t, x, y, depth (nullable)."""
    return "\n".join(json.dumps(s.to_record(), sort_keys=True) for s in stream)


def load_stream(text: str) -> list[GazeSample]:
    samples = [GazeSample.from_record(json.loads(line)) for line in text.splitlines() if line.strip()]
    return samples


def derive_velocity(stream: Sequence[GazeSample], pixels_per_degree: float) -> list[GazeSample]:
    """Angular velocity in degrees/second from consecutive samples; first is 0."""
    out: list[GazeSample] = []
    prev: Optional[GazeSample] = None
    for sample in stream:
        if prev is None:
            out.append(replace(sample, velocity=0.0))
        else:
            dt = sample.t - prev.t
            if dt <= 0:
                raise ValueError("gaze stream timestamps must be strictly increasing")
            dist_px = float(np.hypot(sample.x - prev.x, sample.y - prev.y))
            velocity = (dist_px / pixels_per_degree) / dt
            out.append(replace(sample, velocity=velocity))
        prev = out[-1]
    return out


def _minmax_column(values: np.ndarray) -> np.ndarray:
    lo = values.min()
    hi = values.max()
    if hi <= lo:
        # degenerate: constant feature carries no information
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def feature_vectors(window: Sequence[GazeSample], config: SamplerConfig) -> np.ndarray:
    """Per-sample [color(3), depth(1), location(2), velocity(1)] vectors.

    Each feature dimension is min-max normalized over the window, then scaled
    by its group weight.  A window with any missing depth zeroes the depth
    dimension entirely.
    """
    if not window:
        raise NoGazeData("empty gaze window")
    n = len(window)
    raw = np.zeros((n, 7), dtype=float)
    depth_ok = all(s.depth is not None for s in window)
    for i, s in enumerate(window):
        color = s.color if s.color is not None else (0, 0, 0)
        raw[i, 0:3] = color
        raw[i, 3] = s.depth if depth_ok else 0.0
        raw[i, 4] = s.x
        raw[i, 5] = s.y
        raw[i, 6] = s.velocity
    vectors = np.zeros_like(raw)
    weights = [
        config.color_weight,
        config.color_weight,
        config.color_weight,
        config.depth_weight if depth_ok else 0.0,
        config.location_weight,
        config.location_weight,
        config.velocity_weight,
    ]
    for col, weight in enumerate(weights):
        if weight > 0:
            vectors[:, col] = _minmax_column(raw[:, col]) * weight
    return vectors


def cluster_labels(vectors: np.ndarray, config: SamplerConfig) -> np.ndarray:
    """Density clustering labels; -1 marks noise, clusters numbered from 0.

    Two vectors are neighbors when their Euclidean distance is at most the
    neighborhood radius.  Core points have at least ``min_cluster_size``
    neighbors (self included); clusters are connected components of core
    points, and border points join the cluster of their nearest core point.
    """
    n = len(vectors)
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    diffs = vectors[:, None, :] - vectors[None, :, :]
    dist = np.sqrt((diffs**2).sum(axis=2))
    adjacency = dist <= config.neighborhood_radius
    neighbor_counts = adjacency.sum(axis=1)
    core = neighbor_counts >= config.min_cluster_size

    # connected components over core points
    next_label = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        stack = [i]
        labels[i] = next_label
        while stack:
            j = stack.pop()
            for k in np.flatnonzero(adjacency[j] & core):
                if labels[k] == -1:
                    labels[k] = next_label
                    stack.append(int(k))
        next_label += 1

    # border points attach to the nearest core point's cluster
    core_idx = np.flatnonzero(core)
    if core_idx.size:
        for i in range(n):
            if core[i] or labels[i] != -1:
                continue
            reachable = core_idx[adjacency[i, core_idx]]
            if reachable.size:
                nearest = reachable[np.argmin(dist[i, reachable])]
                labels[i] = labels[nearest]
    return labels


def cluster_largest(
    vectors: np.ndarray,
    window: Sequence[GazeSample],
    config: SamplerConfig,
) -> tuple[float, float]:
    """Centroid (x, y) of the largest cluster; ties favor the most recent one.

    When no cluster forms, the whole window counts as one cluster.
    """
    if len(window) == 0:
        raise NoGazeData("empty gaze window")
    if len(vectors) != len(window):
        raise ValueError("feature vectors and window lengths differ")
    labels = cluster_labels(vectors, config)
    members_by_label: dict[int, list[int]] = {}
    for i, label in enumerate(labels):
        if label >= 0:
            members_by_label.setdefault(int(label), []).append(i)
    if not members_by_label:
        members = list(range(len(window)))
    else:
        def rank(item: tuple[int, list[int]]) -> tuple[int, float]:
            _, idxs = item
            mean_t = float(np.mean([window[i].t for i in idxs]))
            return (len(idxs), mean_t)

        members = max(members_by_label.items(), key=rank)[1]
    cx = float(np.mean([window[i].x for i in members]))
    cy = float(np.mean([window[i].y for i in members]))
    return (cx, cy)


def extract_window(
    stream: Sequence[GazeSample], select_time: float, delta: float
) -> list[GazeSample]:
    return [s for s in stream if select_time - delta <= s.t <= select_time + delta]


def sample_prompt(
    stream: Sequence[GazeSample],
    color_lookup: ColorLookup,
    select_time: float,
    config: SamplerConfig,
) -> tuple[float, float]:
    """Full sampler: window -> colors -> velocities -> features -> centroid."""
    window = extract_window(stream, select_time, config.window_delta)
    if not window:
        raise NoGazeData(
            f"no gaze samples within {config.window_delta} s of t={select_time}"
        )
    window = derive_velocity(window, config.pixels_per_degree)
    colored = [replace(s, color=_lookup_color(color_lookup, s, config)) for s in window]
    vectors = feature_vectors(colored, config)
    return cluster_largest(vectors, colored, config)


def _lookup_color(
    lookup: ColorLookup, sample: GazeSample, config: SamplerConfig
) -> tuple[int, int, int]:
    xi = int(np.rint(sample.x))
    yi = int(np.rint(sample.y))
    if not config.smooth_color:
        return lookup(xi, yi)
    acc = np.zeros(3, dtype=float)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            acc += lookup(xi + dx, yi + dy)
    return tuple(int(round(v / 9.0)) for v in acc)
