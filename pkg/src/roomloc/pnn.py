"""Kernel-density grid classifier and its model file format.

Training stores every feature vector verbatim with its cluster label. A
query evaluates a Gaussian kernel against every stored vector, averages per
cluster, and normalizes the per-cluster scores with a softmax; a hard
decision, if wanted, is the argmax of prior * loss * score.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from .features import FrameSpec, GccFeature, mic_pairs
from .geometry import ClusterGrid

MODEL_MAGIC = b"RLOC"
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FeatureRecipe:
    """Everything needed to recompute a compatible feature at query time."""

    mic_count: int
    sample_rate: int
    frame_len: int = 512
    overlap: float = 0.625
    window: str = "hann"
    gamma: float = 2.0
    lags_per_pair: int = 16
    lag_mode: str = "centered"
    cc_weighting: str = "plain"

    def __post_init__(self):
        if self.mic_count < 2:
            raise ValueError("mic_count must be >= 2")
        self.frame_spec()  # validate framing

    def frame_spec(self) -> FrameSpec:
        return FrameSpec(self.frame_len, self.overlap, self.window)

    @property
    def pair_count(self) -> int:
        return self.mic_count * (self.mic_count - 1) // 2

    @property
    def dim(self) -> int:
        return self.pair_count * self.lags_per_pair

    def extract(self, capture) -> GccFeature:
        from .features import gcc_feature

        if capture.count != self.mic_count:
            raise ValueError(
                f"capture has {capture.count} channels, model expects {self.mic_count}"
            )
        if capture.sample_rate != self.sample_rate:
            raise ValueError(
                f"capture sample rate {capture.sample_rate} != model {self.sample_rate}"
            )
        return gcc_feature(
            capture, self.frame_spec(), self.gamma, self.lags_per_pair,
            self.lag_mode, self.cc_weighting,
        )


@dataclass(frozen=True)
class PnnModel:
    """Stored training features plus kernel width and grid metadata."""

    centers: np.ndarray
    labels: np.ndarray
    sigma: float
    grid: ClusterGrid
    recipe: FeatureRecipe
    mic_positions: np.ndarray
    priors: np.ndarray | None = None
    losses: np.ndarray | None = None

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("centers must be a non-empty (N, D) array")
        if lab.shape != (c.shape[0],):
            raise ValueError("labels must align with centers")
        if lab.min() < 0 or lab.max() >= self.grid.k:
            raise ValueError(f"labels must lie in [0, {self.grid.k})")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        for name in ("priors", "losses"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float)
                if v.shape != (self.grid.k,) or np.any(v <= 0):
                    raise ValueError(f"{name} must be {self.grid.k} positive values")
                object.__setattr__(self, name, v)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(
            self, "mic_positions", np.asarray(self.mic_positions, dtype=float)
        )

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def counts(self) -> np.ndarray:
        """Training samples per cluster (may contain zeros)."""
        return np.bincount(self.labels, minlength=self.grid.k)


@dataclass(frozen=True)
class ClusterProbs:
    """Softmax-normalized per-cluster probabilities."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("probs must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)


def train(
    features: list[GccFeature],
    labels,
    sigma: float,
    grid: ClusterGrid,
    recipe: FeatureRecipe,
    mic_positions,
    priors=None,
    losses=None,
) -> PnnModel:
    """Store the training set; there is no iterative fitting."""
    if len(features) == 0:
        raise ValueError("training set is empty")
    labels = list(labels)
    if len(labels) != len(features):
        raise ValueError(f"{len(features)} features but {len(labels)} labels")
    dims = {f.dim for f in features}
    if len(dims) != 1:
        raise ValueError(f"inconsistent feature dimensions: {sorted(dims)}")
    if dims != {recipe.dim}:
        raise ValueError(f"feature dimension {dims.pop()} != recipe dimension {recipe.dim}")
    centers = np.stack([f.values for f in features])
    return PnnModel(
        centers, np.asarray(labels), sigma, grid, recipe,
        np.asarray(mic_positions, dtype=float), priors, losses,
    )


def kernel(g: GccFeature, center: GccFeature, sigma: float) -> float:
    """Gaussian similarity exp(-||g - center||^2 / (2 sigma^2)), in (0, 1]."""
    if g.dim != center.dim:
        raise ValueError(f"dimension mismatch: {g.dim} vs {center.dim}")
    diff = g.values - center.values
    return float(np.exp(-(diff @ diff) / (2.0 * sigma**2)))


def cluster_scores(model: PnnModel, g: GccFeature) -> np.ndarray:
    """Per-cluster kernel averages (the summation-layer outputs).

    Clusters without training samples score 0. The Gaussian normalization
    constant is omitted: it is common to all clusters, cancels in the
    decision rule, and would underflow at realistic feature dimensions.
    """
    if g.dim != model.dim:
        raise ValueError(f"feature dimension {g.dim} != model dimension {model.dim}")
    diff = model.centers - g.values[None, :]
    k = np.exp(-np.einsum("nd,nd->n", diff, diff) / (2.0 * model.sigma**2))
    sums = np.bincount(model.labels, weights=k, minlength=model.grid.k)
    counts = model.counts
    scores = np.zeros(model.grid.k)
    occupied = counts > 0
    scores[occupied] = sums[occupied] / counts[occupied]
    return scores


def cluster_probabilities(model: PnnModel, g: GccFeature, strict_norm: bool = False) -> ClusterProbs:
    """Softmax of the per-cluster scores.

    strict_norm multiplies the scores by the full Gaussian constant
    1/((2 pi)^(D/2) sigma^D) before the softmax; only usable at toy
    dimensions, where it makes the result comparable against a textbook
    evaluation.
    """
    scores = cluster_scores(model, g)
    if strict_norm:
        scores = scores / ((2.0 * np.pi) ** (model.dim / 2.0) * model.sigma**model.dim)
    shifted = np.exp(scores - scores.max())
    return ClusterProbs(shifted / shifted.sum())


def classify(model: PnnModel, g: GccFeature) -> int:
    """Bayes decision: argmax of prior * loss * score; ties to the lowest index.

    With the default uniform priors and losses this is the argmax score,
    which is also the argmax softmax probability.
    """
    scores = cluster_scores(model, g)
    if model.priors is not None:
        scores = scores * model.priors
    if model.losses is not None:
        scores = scores * model.losses
    return int(np.argmax(scores))


def _header_dict(model: PnnModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "k": model.grid.k,
        "d": model.dim,
        "n_records": int(model.labels.size),
        "sigma": model.sigma,
        "room_dims": list(model.grid.room_dims),
        "cluster_dim": list(model.grid.cluster_dim),
        "grid_counts": list(model.grid.counts),
        "mic_positions": [list(p) for p in model.mic_positions],
        "recipe": asdict(model.recipe),
        "pair_order": mic_pairs(model.recipe.mic_count),
        "priors": None if model.priors is None else list(model.priors),
        "losses": None if model.losses is None else list(model.losses),
    }


def save_model(model: PnnModel, path) -> None:
    """Write the model file atomically (temp file + rename).

    Layout: magic, little-endian uint32 header length, JSON header, then one
    record per stored vector: uint32 label + D little-endian float64 values.
    """
    header = json.dumps(_header_dict(model), sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(np.array(len(header), dtype="<u4").tobytes())
    buf.write(header)
    for label, center in zip(model.labels, model.centers):
        buf.write(np.array(label, dtype="<u4").tobytes())
        buf.write(center.astype("<f8").tobytes())
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_header(f) -> dict:
    magic = f.read(4)
    if magic != MODEL_MAGIC:
        raise ValueError(f"not a model file (bad magic {magic!r})")
    (header_len,) = np.frombuffer(f.read(4), dtype="<u4")
    header = json.loads(f.read(int(header_len)).decode("utf-8"))
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"unsupported model format version {header.get('format_version')}"
        )
    return header


def read_model_header(path) -> dict:
    """Parse and return just the JSON header of a model file."""
    with open(path, "rb") as f:
        return _read_header(f)


def load_model(path) -> PnnModel:
    """Read a model file written by save_model; bit-exact round trip."""
    with open(path, "rb") as f:
        header = _read_header(f)
        payload = f.read()
    n, d = header["n_records"], header["d"]
    record = np.dtype([("label", "<u4"), ("values", "<f8", (d,))])
    records = np.frombuffer(payload, dtype=record, count=n)
    grid = ClusterGrid(
        np.asarray(header["room_dims"], dtype=float),
        np.asarray(header["cluster_dim"], dtype=float),
        tuple(header["grid_counts"]),
    )
    recipe = FeatureRecipe(**header["recipe"])
    return PnnModel(
        centers=records["values"].astype(np.float64, copy=True),
        labels=records["label"].astype(np.int64),
        sigma=header["sigma"],
        grid=grid,
        recipe=recipe,
        mic_positions=np.asarray(header["mic_positions"], dtype=float),
        priors=None if header["priors"] is None else np.asarray(header["priors"]),
        losses=None if header["losses"] is None else np.asarray(header["losses"]),
    )
