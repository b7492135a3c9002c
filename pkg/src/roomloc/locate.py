"""Position refinement over the cluster grid.

Rather than snapping to the single most probable cluster, the estimator
selects the top clusters under a probability-sum threshold, forms a
preliminary position from their renormalized probabilities, reweights the
clusters and each cluster's 8 box corners by inverse distance to that
preliminary point, and averages the corners into the final position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import ClusterGrid, Doa, cartesian_to_doa, center_of, vertexes_of
from .pnn import ClusterProbs, PnnModel, cluster_probabilities
from .roomsim import CaptureSet


@dataclass(frozen=True)
class LocateConfig:
    """Cluster selection and weighting knobs.

    thr None picks the threshold 16/K, which keeps the selection size near
    16 for a flat probability landscape at any grid resolution. lam and rho
    control how sharply clusters and corners are pulled toward the
    preliminary estimate; both must stay in (0, 1).
    """

    thr: float | None = None
    zeta_max: int = 15
    lam: float = 0.25
    rho: float = 0.25
    dist_floor: float = 1e-6

    def __post_init__(self):
        if self.thr is not None and not (0.0 < self.thr <= 1.0):
            raise ValueError("thr must be in (0, 1]")
        if self.zeta_max < 1:
            raise ValueError("zeta_max must be >= 1")
        if not (0.0 < self.lam < 1.0):
            raise ValueError("lam must be in (0, 1)")
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must be in (0, 1)")
        if self.dist_floor <= 0:
            raise ValueError("dist_floor must be positive")

    def resolve_thr(self, k: int) -> float:
        return self.thr if self.thr is not None else min(1.0, 16.0 / k)


@dataclass(frozen=True)
class SelectedCluster:
    index: int
    prob: float
    weight: float = 0.0


@dataclass(frozen=True)
class LocalizationResult:
    position: np.ndarray
    doa: Doa
    selected: list[SelectedCluster]
    preliminary: np.ndarray

    def __post_init__(self):
        if not self.selected:
            raise ValueError("selected clusters must be non-empty")
        total = sum(s.weight for s in self.selected)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"cluster weights sum to {total}, expected 1")


def select_clusters(probs: ClusterProbs, cfg: LocateConfig) -> list[tuple[int, float]]:
    """Top clusters in descending probability (ties to the lower index).

    Selection stops before the cluster that would push the probability sum
    over the threshold, is capped at zeta_max, and always keeps at least the
    top cluster.
    """
    p = probs.probs
    thr = cfg.resolve_thr(p.size)
    order = np.argsort(-p, kind="stable")
    selected = [(int(order[0]), float(p[order[0]]))]
    total = float(p[order[0]])
    for idx in order[1:]:
        if len(selected) >= cfg.zeta_max or total + p[idx] > thr:
            break
        selected.append((int(idx), float(p[idx])))
        total += float(p[idx])
    return selected


def preliminary_estimate(selected: list[tuple[int, float]], grid: ClusterGrid) -> np.ndarray:
    """Convex combination of selected cluster centers under renormalized
    probabilities (the raw probabilities sum to well under 1 by design)."""
    if not selected:
        raise ValueError("selected clusters must be non-empty")
    probs = np.array([p for _, p in selected])
    centers = np.stack([center_of(grid, i) for i, _ in selected])
    weights = probs / probs.sum()
    return weights @ centers


def _inverse_distance_weights(points: np.ndarray, ref: np.ndarray, exponent: float,
                              floor: float) -> np.ndarray:
    dists = np.maximum(np.linalg.norm(points - ref[None, :], axis=1), floor)
    w = dists ** -exponent
    return w / w.sum()


def cluster_weights(
    selected: list[tuple[int, float]],
    preliminary: np.ndarray,
    grid: ClusterGrid,
    cfg: LocateConfig,
) -> np.ndarray:
    """Weights proportional to (1/distance)^lam from each selected cluster
    center to the preliminary estimate; distances floored, weights sum to 1."""
    if not selected:
        raise ValueError("selected clusters must be non-empty")
    centers = np.stack([center_of(grid, i) for i, _ in selected])
    return _inverse_distance_weights(centers, preliminary, cfg.lam, cfg.dist_floor)


def sample_point_weights(
    cluster_index: int,
    preliminary: np.ndarray,
    grid: ClusterGrid,
    cfg: LocateConfig,
) -> np.ndarray:
    """Weights over the cluster's 8 corners, inverse-distance with exponent rho."""
    corners = vertexes_of(grid, cluster_index)
    return _inverse_distance_weights(corners, preliminary, cfg.rho, cfg.dist_floor)


def finalize(
    selected: list[tuple[int, float]],
    weights: np.ndarray,
    preliminary: np.ndarray,
    grid: ClusterGrid,
    array_center,
    cfg: LocateConfig,
) -> LocalizationResult:
    """Corner-weighted position: sum_a w_a * (sum_t w_at * corner_at), plus
    its direction of arrival seen from the array center."""
    position = np.zeros(3)
    for (idx, _), w in zip(selected, weights):
        corners = vertexes_of(grid, idx)
        cw = sample_point_weights(idx, preliminary, grid, cfg)
        position += w * (cw @ corners)
    return LocalizationResult(
        position=position,
        doa=cartesian_to_doa(position, array_center),
        selected=[
            SelectedCluster(idx, p, float(w))
            for (idx, p), w in zip(selected, weights)
        ],
        preliminary=preliminary,
    )


def localize(model: PnnModel, capture: CaptureSet, cfg: LocateConfig | None = None) -> LocalizationResult:
    """Full pipeline: feature, cluster probabilities, selection, refinement."""
    cfg = cfg or LocateConfig()
    feature = model.recipe.extract(capture)  # validates channels + sample rate
    probs = cluster_probabilities(model, feature)
    selected = select_clusters(probs, cfg)
    prelim = preliminary_estimate(selected, model.grid)
    weights = cluster_weights(selected, prelim, model.grid, cfg)
    center = model.mic_positions.mean(axis=0)
    return finalize(selected, weights, prelim, model.grid, center, cfg)
