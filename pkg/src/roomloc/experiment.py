"""Experiment orchestration: training runs, localization runs, and sweeps.

Every random draw derives from the master seed through tagged seed
sequences, so a config plus seed pins the model file and the reports byte
for byte, independent of worker count. Timings are written to separate
files to keep result files deterministic.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Signal, load_wav, synth_speechband
from .features import GccFeature
from .geometry import (
    MicArray, RoomSpec, axial_mic_array, cartesian_to_doa, make_cluster_grid,
    sphere_grid,
)
from .locate import LocateConfig, localize
from .metrics import (
    EnvTag, Report, TrialOutcome, write_outcomes_csv, write_report_json,
    write_summary_csv,
)
from .pnn import FeatureRecipe, PnnModel, load_model, save_model, train
from .roomsim import AcousticEnv, compute_rirs, simulate_capture

# seed-sequence tags so the independent random streams never collide
_SEED_SOURCE, _SEED_PLACE, _SEED_TRAIN_NOISE, _SEED_TEST_NOISE = 10, 11, 12, 13


def _child_seed(master: int, *tags: int) -> int:
    return int(np.random.SeedSequence([master, *tags]).generate_state(1)[0])


@dataclass(frozen=True)
class TrainingPlan:
    """How many sources to place per cluster and where (uniform in the box)."""

    n_per_cluster: int = 1

    def __post_init__(self):
        if self.n_per_cluster < 0:
            raise ValueError("n_per_cluster must be >= 0")

    def position(self, grid, cluster: int, sample: int, master_seed: int) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([master_seed, _SEED_PLACE, cluster, sample])
        )
        cell = np.asarray(grid.cell_of_index(cluster), dtype=float)
        return (cell + rng.random(3)) * grid.cluster_dim


def _parse_vec(text: str, n: int | None = None) -> tuple[float, ...]:
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    vals = tuple(float(p) for p in parts)
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated values, got {text!r}")
    return vals


def _parse_opt_float(text: str) -> float | None:
    t = text.strip().lower()
    if t in ("", "none", "null"):
        return None
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    return float(t)


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one experiment cell (see README for the
    config-file key reference)."""

    room_dims: tuple[float, float, float] = (4.0, 4.0, 4.0)
    sound_speed: float = 343.0
    sample_rate: int = 8000
    mic_center: tuple[float, float, float] | None = None
    mic_arm: float = 0.2
    mic_positions: tuple[tuple[float, float, float], ...] | None = None
    cluster_dim: tuple[float, float, float] = (0.5, 0.5, 0.5)
    sigma: float = 5.0
    gamma: float = 2.0
    lags_per_pair: int = 16
    lag_mode: str = "centered"
    cc_weighting: str = "plain"
    frame_len: int = 512
    overlap: float = 0.625
    window: str = "hann"
    train_t60: float = 0.0
    train_snr_db: float | None = 10.0
    test_t60: float = 0.0
    test_snr_db: float | None = 10.0
    source_wav: str | None = None
    synth_duration_s: float = 2.7
    radii: tuple[float, ...] = (0.5, 1.0, 1.5)
    n_azimuth: int = 21
    azimuth_span: tuple[float, float] = (-160.0, 160.0)
    n_elevation: int = 9
    elevation_span: tuple[float, float] = (-60.0, 60.0)
    n_per_cluster: int = 1
    thr: float | None = None
    zeta_max: int = 15
    lam: float = 0.25
    rho: float = 0.25
    seed: int = 0
    workers: int = 1
    out_dir: str = "runs"
    report_format: str = "both"
    max_order: int | None = None
    frac_delay: bool = False

    # -- construction from flat key = value text ---------------------------

    _PARSERS = {
        "room_dims": lambda s: _parse_vec(s, 3),
        "sound_speed": float,
        "sample_rate": int,
        "mic_center": lambda s: _parse_vec(s, 3) if s.strip().lower() not in ("", "none") else None,
        "mic_arm": float,
        "mic_positions": lambda s: tuple(
            _parse_vec(part, 3) for part in s.split(";") if part.strip()
        ) or None,
        "cluster_dim": lambda s: _parse_vec(s, 3),
        "sigma": float,
        "gamma": float,
        "lags_per_pair": int,
        "lag_mode": str.strip,
        "cc_weighting": str.strip,
        "frame_len": int,
        "overlap": float,
        "window": str.strip,
        "train_t60": float,
        "train_snr_db": _parse_opt_float,
        "test_t60": float,
        "test_snr_db": _parse_opt_float,
        "source_wav": lambda s: s.strip() or None,
        "synth_duration_s": float,
        "radii": _parse_vec,
        "n_azimuth": int,
        "azimuth_span": lambda s: _parse_vec(s, 2),
        "n_elevation": int,
        "elevation_span": lambda s: _parse_vec(s, 2),
        "n_per_cluster": int,
        "thr": _parse_opt_float,
        "zeta_max": int,
        "lam": float,
        "rho": float,
        "seed": int,
        "workers": int,
        "out_dir": str.strip,
        "report_format": str.strip,
        "max_order": lambda s: None if s.strip().lower() in ("", "none") else int(s),
        "frac_delay": _parse_bool,
    }

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "ExperimentConfig":
        kwargs = {}
        for key, text in raw.items():
            if key not in cls._PARSERS:
                raise ValueError(f"unknown config key {key!r}")
            try:
                kwargs[key] = cls._PARSERS[key](text)
            except ValueError as e:
                raise ValueError(f"config key {key!r}: {e}") from e
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_mapping(parse_config_text(Path(path).read_text()))

    def with_overrides(self, pairs: list[str]) -> "ExperimentConfig":
        """Apply "key=value" strings on top of this config."""
        raw = {}
        for pair in pairs:
            if "=" not in pair:
                raise ValueError(f"override {pair!r} is not of the form key=value")
            key, value = pair.split("=", 1)
            raw[key.strip()] = value
        updates = self.from_mapping(raw)
        changed = {k: getattr(updates, k) for k in raw}
        return dataclasses.replace(self, **changed)

    # -- derived objects ----------------------------------------------------

    def room(self) -> RoomSpec:
        return RoomSpec(np.asarray(self.room_dims), self.sound_speed, self.sample_rate)

    def mic_array(self) -> MicArray:
        if self.mic_positions is not None:
            array = MicArray(np.asarray(self.mic_positions, dtype=float))
        else:
            center = self.mic_center if self.mic_center is not None else self.room().center
            array = axial_mic_array(center, self.mic_arm)
        array.require_inside(self.room())
        return array

    def grid(self):
        return make_cluster_grid(self.room(), np.asarray(self.cluster_dim))

    def recipe(self) -> FeatureRecipe:
        return FeatureRecipe(
            mic_count=self.mic_array().count,
            sample_rate=self.sample_rate,
            frame_len=self.frame_len,
            overlap=self.overlap,
            window=self.window,
            gamma=self.gamma,
            lags_per_pair=self.lags_per_pair,
            lag_mode=self.lag_mode,
            cc_weighting=self.cc_weighting,
        )

    def locate_config(self) -> LocateConfig:
        return LocateConfig(self.thr, self.zeta_max, self.lam, self.rho)

    def train_env(self) -> AcousticEnv:
        return AcousticEnv(t60=self.train_t60, snr_db=self.train_snr_db)

    def test_env(self) -> AcousticEnv:
        return AcousticEnv(t60=self.test_t60, snr_db=self.test_snr_db)

    def source_signal(self) -> Signal:
        if self.source_wav:
            return load_wav(self.source_wav, expect_rate=self.sample_rate)
        return synth_speechband(
            self.synth_duration_s,
            _child_seed(self.seed, _SEED_SOURCE),
            self.sample_rate,
        )

    def source_name(self) -> str:
        return self.source_wav if self.source_wav else f"synth:{self.synth_duration_s}s"

    def test_points(self) -> np.ndarray:
        return sphere_grid(
            self.room(), self.radii, self.n_azimuth, tuple(self.azimuth_span),
            self.n_elevation, tuple(self.elevation_span),
        )

    def env_tag(self) -> EnvTag:
        return EnvTag(
            train_t60=self.train_t60, train_snr_db=self.train_snr_db,
            test_t60=self.test_t60, test_snr_db=self.test_snr_db,
            k=self.grid().k, source=self.source_name(),
        )


def parse_config_text(text: str) -> dict[str, str]:
    """Flat "key = value" lines; # starts a comment; blank lines ignored."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno}: expected key = value, got {line!r}")
        key, value = stripped.split("=", 1)
        key = key.strip()
        if key in raw:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        raw[key] = value.strip()
    return raw


# -- worker tasks (module level so they pickle) ------------------------------

_WORKER: dict = {}


def _init_capture_worker(cfg: ExperimentConfig, model_path: str | None) -> None:
    _WORKER["cfg"] = cfg
    _WORKER["room"] = cfg.room()
    _WORKER["mics"] = cfg.mic_array().positions
    _WORKER["source"] = cfg.source_signal()
    _WORKER["recipe"] = cfg.recipe()
    _WORKER["model"] = load_model(model_path) if model_path else None


def _train_sample_task(item: tuple[int, int, tuple[float, float, float]]):
    cluster, sample, position = item
    cfg: ExperimentConfig = _WORKER["cfg"]
    try:
        t0 = time.perf_counter()
        env = dataclasses.replace(
            cfg.train_env(),
            noise_seed=_child_seed(cfg.seed, _SEED_TRAIN_NOISE, cluster, sample),
        )
        rirs = compute_rirs(
            _WORKER["room"], env, np.asarray(position), _WORKER["mics"],
            cfg.max_order, cfg.frac_delay,
        )
        t1 = time.perf_counter()
        capture = simulate_capture(_WORKER["source"], rirs, env)
        feature = _WORKER["recipe"].extract(capture)
        t2 = time.perf_counter()
    except Exception as e:
        raise RuntimeError(
            f"training capture failed at cluster {cluster}, sample {sample}: {e}"
        ) from e
    return cluster, feature.values, (t1 - t0, t2 - t1)


def _test_point_task(item: tuple[int, tuple[float, float, float]]):
    index, point = item
    cfg: ExperimentConfig = _WORKER["cfg"]
    model: PnnModel = _WORKER["model"]
    env = dataclasses.replace(
        cfg.test_env(), noise_seed=_child_seed(cfg.seed, _SEED_TEST_NOISE, index)
    )
    point = np.asarray(point)
    rirs = compute_rirs(
        _WORKER["room"], env, point, _WORKER["mics"], cfg.max_order, cfg.frac_delay
    )
    capture = simulate_capture(_WORKER["source"], rirs, env)
    result = localize(model, capture, cfg.locate_config())
    center = model.mic_positions.mean(axis=0)
    outcome = TrialOutcome.from_pair(
        point, cartesian_to_doa(point, center),
        result.position, result.doa, n_selected=len(result.selected),
    )
    return index, outcome


def _run_tasks(task, items, cfg: ExperimentConfig, model_path: str | None):
    """Map task over items, in order, optionally across processes."""
    if cfg.workers <= 1:
        _init_capture_worker(cfg, model_path)
        return [task(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=cfg.workers,
        initializer=_init_capture_worker,
        initargs=(cfg, model_path),
    ) as pool:
        chunk = max(1, len(items) // (8 * cfg.workers))
        return list(pool.map(task, items, chunksize=chunk))


# -- pipelines ---------------------------------------------------------------


def train_pipeline(cfg: ExperimentConfig, out_dir=None) -> Path:
    """Simulate one capture per planned training position, extract features,
    store the model. Returns the model file path; timings go to a sibling
    train_timings.json."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.grid()
    plan = TrainingPlan(cfg.n_per_cluster)
    items = []
    for cluster in range(grid.k):
        for sample in range(plan.n_per_cluster):
            pos = plan.position(grid, cluster, sample, cfg.seed)
            items.append((cluster, sample, tuple(pos)))
    if not items:
        raise ValueError("training plan is empty (n_per_cluster = 0)")

    wall_start = time.perf_counter()
    results = _run_tasks(_train_sample_task, items, cfg, None)
    rir_s = sum(r[2][0] for r in results)
    feature_s = sum(r[2][1] for r in results)

    store_start = time.perf_counter()
    recipe = cfg.recipe()
    features = [
        GccFeature(values, recipe.pair_count, recipe.lags_per_pair)
        for _, values, _ in results
    ]
    labels = [cluster for cluster, _, _ in results]
    model = train(
        features, labels, cfg.sigma, grid, recipe, cfg.mic_array().positions
    )
    model_path = out / "model.rloc"
    save_model(model, model_path)
    store_s = time.perf_counter() - store_start

    timings = {
        "phase_seconds": {"rir": rir_s, "feature": feature_s, "store": store_s},
        "wall_seconds": time.perf_counter() - wall_start,
        "cpu_seconds": time.process_time(),
        "n_samples": len(items),
    }
    (out / "train_timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    return model_path


def _check_model_matches(model: PnnModel, cfg: ExperimentConfig) -> None:
    array = cfg.mic_array()
    if model.recipe.mic_count != array.count:
        raise ValueError(
            f"model/config mismatch on mic count: {model.recipe.mic_count} vs {array.count}"
        )
    if not np.allclose(model.mic_positions, array.positions):
        raise ValueError("model/config mismatch on mic positions")
    if model.recipe.sample_rate != cfg.sample_rate:
        raise ValueError(
            f"model/config mismatch on sample rate: {model.recipe.sample_rate} vs {cfg.sample_rate}"
        )
    if not np.allclose(model.grid.room_dims, np.asarray(cfg.room_dims)):
        raise ValueError(
            f"model/config mismatch on room dims: {list(model.grid.room_dims)} vs {list(cfg.room_dims)}"
        )


def localize_pipeline(cfg: ExperimentConfig, model_path, out_dir=None) -> Report:
    """Localize every test-grid point under the test environment and write
    outcomes.csv, summary.csv, and report.json."""
    model_path = Path(model_path)
    if not model_path.is_file():
        raise FileNotFoundError(f"model file not found: {model_path}")
    model = load_model(model_path)
    _check_model_matches(model, cfg)
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.report_format not in ("csv", "json", "both"):
        raise ValueError(f"report_format must be csv, json, or both, not {cfg.report_format!r}")
    points = cfg.test_points()
    items = [(i, tuple(p)) for i, p in enumerate(points)]
    wall_start = time.perf_counter()
    results = _run_tasks(_test_point_task, items, cfg, str(model_path))
    outcomes = [outcome for _, outcome in results]
    report = Report(cfg.env_tag(), outcomes)

    if cfg.report_format in ("csv", "both"):
        write_outcomes_csv(out / "outcomes.csv", report)
        write_summary_csv(out / "summary.csv", [report])
    if cfg.report_format in ("json", "both"):
        write_report_json(out / "report.json", [report])
    timings = {
        "wall_seconds": time.perf_counter() - wall_start,
        "cpu_seconds": time.process_time(),
        "n_tests": report.n,
    }
    (out / "localize_timings.json").write_text(json.dumps(timings, indent=2) + "\n")
    return report


def _cell_name(t60: float, snr_db: float | None) -> str:
    snr = "none" if snr_db is None else f"{snr_db:g}"
    return f"t60_{t60:g}_snr_{snr}"


def sweep(
    cfg: ExperimentConfig,
    t60_list,
    snr_list,
    robust: bool = False,
    out_dir=None,
) -> list[Report]:
    """Run the cartesian product of environments.

    Matched mode (default) trains and tests in the same environment per
    cell. Robust mode trains once, at cfg.train_t60/cfg.train_snr_db, and
    varies only the test environment, reusing the same model bytes.
    """
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports: list[Report] = []
    model_cache: dict[str, Path] = {}
    for snr in snr_list:
        for t60 in t60_list:
            if robust:
                cell_cfg = dataclasses.replace(cfg, test_t60=t60, test_snr_db=snr)
            else:
                cell_cfg = dataclasses.replace(
                    cfg, train_t60=t60, train_snr_db=snr,
                    test_t60=t60, test_snr_db=snr,
                )
            train_key = _cell_name(cell_cfg.train_t60, cell_cfg.train_snr_db)
            if train_key not in model_cache:
                model_dir = out / f"model_{train_key}"
                model_cache[train_key] = train_pipeline(cell_cfg, model_dir)
            cell_dir = out / _cell_name(t60, snr)
            reports.append(
                localize_pipeline(cell_cfg, model_cache[train_key], cell_dir)
            )
    if cfg.report_format in ("csv", "both"):
        write_summary_csv(out / "sweep_summary.csv", reports)
        _write_matrix_csv(out / "sweep_matrix.csv", reports, t60_list, snr_list)
    if cfg.report_format in ("json", "both"):
        write_report_json(out / "sweep_report.json", reports)
    return reports


def _write_matrix_csv(path, reports: list[Report], t60_list, snr_list) -> None:
    """Wide layout: one row per (snr, metric), one column per test t60."""
    by_cell = {(r.tag.test_snr_db, r.tag.test_t60): r for r in reports}
    metrics = [name for name, _ in reports[0].metric_rows()]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["snr_db", "metric", *(f"t60_{t:g}" for t in t60_list)])
        for snr in snr_list:
            for metric in metrics:
                row = [("" if snr is None else snr), metric]
                for t60 in t60_list:
                    report = by_cell.get((snr, t60))
                    row.append(repr(dict(report.metric_rows())[metric]) if report else "")
                writer.writerow(row)
