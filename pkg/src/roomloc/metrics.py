"""Error metrics and per-environment reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .geometry import ClusterGrid, Doa, cluster_of, wrap_azimuth_deg

SUCCESS_THRESHOLDS_DEG = (10.0, 20.0, 30.0)


def localization_error(truth, estimate) -> float:
    """Euclidean distance between true and estimated positions, meters."""
    t = np.asarray(truth, dtype=float)
    e = np.asarray(estimate, dtype=float)
    return float(np.linalg.norm(t - e))


def doa_error(truth: Doa, estimate: Doa) -> tuple[float, float]:
    """(azimuth_error, elevation_error) in degrees, both >= 0.

    Azimuth differences wrap across the +/-180 seam. When the true direction
    is a pole the azimuth is undefined and its error is reported as 0.
    """
    theta_err = abs(truth.elevation_deg - estimate.elevation_deg)
    if abs(truth.elevation_deg) == 90.0:
        phi_err = 0.0
    else:
        phi_err = abs(wrap_azimuth_deg(truth.azimuth_deg - estimate.azimuth_deg))
    return phi_err, theta_err


@dataclass(frozen=True)
class TrialOutcome:
    """One localization trial: truth, estimate, and their errors."""

    truth_position: np.ndarray
    truth_doa: Doa
    est_position: np.ndarray
    est_doa: Doa
    eps_m: float
    phi_err_deg: float
    theta_err_deg: float
    n_selected: int = 0

    @classmethod
    def from_pair(cls, truth_position, truth_doa: Doa, est_position, est_doa: Doa,
                  n_selected: int = 0) -> "TrialOutcome":
        phi_err, theta_err = doa_error(truth_doa, est_doa)
        return cls(
            np.asarray(truth_position, dtype=float), truth_doa,
            np.asarray(est_position, dtype=float), est_doa,
            localization_error(truth_position, est_position),
            phi_err, theta_err, n_selected,
        )


def doa_success_rate(outcomes: list[TrialOutcome], alpha_deg: float) -> float:
    """Fraction of outcomes with both azimuth and elevation errors <= alpha."""
    if not outcomes:
        raise ValueError("no outcomes")
    hits = sum(
        1 for o in outcomes
        if o.phi_err_deg <= alpha_deg and o.theta_err_deg <= alpha_deg
    )
    return hits / len(outcomes)


def bound_check(outcome: TrialOutcome, grid: ClusterGrid) -> bool:
    """Same-cluster truth and estimate must lie within one cluster diagonal.

    A failure indicates a cluster-mapping bug, not a bad localization: two
    points in one box cannot be farther apart than the box diagonal.
    """
    truth_cluster = cluster_of(grid, outcome.truth_position)
    est_cluster = cluster_of(grid, outcome.est_position)
    if truth_cluster != est_cluster:
        return True
    return outcome.eps_m <= float(np.linalg.norm(grid.cluster_dim)) + 1e-12


@dataclass(frozen=True)
class EnvTag:
    """Identifies one experiment cell."""

    train_t60: float
    train_snr_db: float | None
    test_t60: float
    test_snr_db: float | None
    k: int
    source: str

    def as_dict(self) -> dict:
        return {
            "train_t60_s": self.train_t60,
            "train_snr_db": self.train_snr_db,
            "test_t60_s": self.test_t60,
            "test_snr_db": self.test_snr_db,
            "k": self.k,
            "source": self.source,
        }


@dataclass(frozen=True)
class Report:
    """Summary metrics for one environment cell."""

    tag: EnvTag
    outcomes: list[TrialOutcome]

    def __post_init__(self):
        if not self.outcomes:
            raise ValueError("report needs at least one outcome")

    @property
    def n(self) -> int:
        return len(self.outcomes)

    def success_rate(self, alpha_deg: float) -> float:
        return doa_success_rate(self.outcomes, alpha_deg)

    def metric_rows(self) -> list[tuple[str, float]]:
        """(metric, value) pairs; rates appear as fraction and as a
        one-decimal percentage."""
        phi = np.array([o.phi_err_deg for o in self.outcomes])
        theta = np.array([o.theta_err_deg for o in self.outcomes])
        eps = np.array([o.eps_m for o in self.outcomes])
        rows = [
            ("az_err_mean_deg", float(phi.mean())),
            ("az_err_std_deg", float(phi.std())),
            ("el_err_mean_deg", float(theta.mean())),
            ("el_err_std_deg", float(theta.std())),
            ("mean_eps_m", float(eps.mean())),
        ]
        for alpha in SUCCESS_THRESHOLDS_DEG:
            rate = self.success_rate(alpha)
            rows.append((f"success_{alpha:.0f}deg", rate))
            rows.append((f"success_{alpha:.0f}deg_pct", round(100.0 * rate, 1)))
        rows.append(("n_tests", float(self.n)))
        return rows

    def as_dict(self) -> dict:
        return {
            "environment": self.tag.as_dict(),
            "n_tests": self.n,
            "metrics": {name: value for name, value in self.metric_rows()},
        }


SUMMARY_COLUMNS = [
    "train_t60_s", "train_snr_db", "test_t60_s", "test_snr_db", "k", "source",
    "metric", "value",
]

OUTCOME_COLUMNS = [
    "index", "truth_x_m", "truth_y_m", "truth_z_m",
    "est_x_m", "est_y_m", "est_z_m",
    "truth_az_deg", "truth_el_deg", "truth_r_m",
    "est_az_deg", "est_el_deg", "est_r_m",
    "eps_m", "az_err_deg", "el_err_deg", "n_selected",
]


def write_summary_csv(path, reports: list[Report]) -> None:
    """Long-format summary: one row per (environment, metric)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(SUMMARY_COLUMNS)
        for report in reports:
            env = report.tag.as_dict()
            for metric, value in report.metric_rows():
                writer.writerow([*(env[c] for c in SUMMARY_COLUMNS[:6]), metric, repr(value)])


def write_outcomes_csv(path, report: Report) -> None:
    """One row per test position."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(OUTCOME_COLUMNS)
        for i, o in enumerate(report.outcomes):
            row = [
                i, *o.truth_position, *o.est_position,
                o.truth_doa.azimuth_deg, o.truth_doa.elevation_deg, o.truth_doa.range_m,
                o.est_doa.azimuth_deg, o.est_doa.elevation_deg, o.est_doa.range_m,
                o.eps_m, o.phi_err_deg, o.theta_err_deg, o.n_selected,
            ]
            writer.writerow([row[0]] + [repr(float(v)) for v in row[1:-1]] + [row[-1]])


def write_report_json(path, reports: list[Report]) -> None:
    with open(path, "w") as f:
        json.dump([r.as_dict() for r in reports], f, indent=2, sort_keys=True)
        f.write("\n")
