"""Verification and morph-robustness metrics.

One decision rule is used everywhere: a comparison at threshold tau is
a match iff its similarity score is strictly greater than tau. So
FNMR(tau) is the fraction of genuine scores <= tau, FMR(tau) the
fraction of impostor scores > tau, and a morph counts as a successful
attack iff the minimum of its per-subject scores exceeds tau.

All curves are piecewise constant between observed scores, so the
candidate threshold grid (distinct scores plus the sentinels -1 and +1)
captures every attainable value; operating points are taken on that
grid without interpolation, ties broken toward the smallest threshold.
Every rate is computed as an integer count divided by the pool size,
which makes outputs reproducible bit-for-bit by direct enumeration.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericInputError, UnattainableOperatingPointError

FROM_BELOW = "from_below"
FROM_ABOVE = "from_above"


def _scores_array(scores, name: str) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size and (not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > 1.0)):
        raise NumericInputError(f"{name} must be finite similarity scores in [-1, 1]")
    return arr


@dataclass(frozen=True)
class VerificationSet:
    """Genuine and impostor similarity scores of a 1-1 protocol."""

    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "genuine", _scores_array(self.genuine, "genuine scores"))
        object.__setattr__(self, "impostor", _scores_array(self.impostor, "impostor scores"))


@dataclass(frozen=True)
class MorphTrial:
    """One morph's similarity scores against its contributing subjects."""

    morph_id: int
    subject_scores: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "subject_scores", _scores_array(self.subject_scores, "subject scores")
        )
        if self.subject_scores.size < 2:
            raise ConfigError(
                f"morph trial {self.morph_id} needs scores for at least 2 subjects"
            )


@dataclass(frozen=True)
class ThresholdCurve:
    """A rate evaluated over a strictly increasing threshold grid."""

    thresholds: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        thr = np.asarray(self.thresholds, dtype=np.float64)
        val = np.asarray(self.values, dtype=np.float64)
        if thr.shape != val.shape or thr.ndim != 1 or thr.size == 0:
            raise ConfigError("curve needs matching nonempty threshold/value vectors")
        if np.any(np.diff(thr) <= 0):
            raise ConfigError("curve thresholds must be strictly increasing")
        if np.any((val < 0) | (val > 1)):
            raise ConfigError("curve values must lie in [0, 1]")
        object.__setattr__(self, "thresholds", thr)
        object.__setattr__(self, "values", val)


def cosine_similarity(e1, e2) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    a = np.asarray(e1, dtype=np.float64).ravel()
    b = np.asarray(e2, dtype=np.float64).ravel()
    for name, vec in (("e1", a), ("e2", b)):
        if not np.all(np.isfinite(vec)):
            raise NumericInputError(f"{name} contains non-finite values")
        if abs(np.linalg.norm(vec) - 1.0) > 1e-9:
            raise NumericInputError(f"{name} is not unit-norm within 1e-9")
    return float(np.clip(a @ b, -1.0, 1.0))


def _candidate_grid(*score_groups) -> np.ndarray:
    parts = [np.asarray(g, dtype=np.float64).ravel() for g in score_groups]
    return np.unique(np.concatenate(parts + [np.array([-1.0, 1.0])]))


def _fnmr_at(genuine_sorted: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    counts = np.searchsorted(genuine_sorted, thresholds, side="right")
    return counts / genuine_sorted.size


def _fmr_at(impostor_sorted: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    counts = impostor_sorted.size - np.searchsorted(impostor_sorted, thresholds, side="right")
    return counts / impostor_sorted.size


def fnmr_fmr_curves(verification: VerificationSet):
    """FNMR and FMR over the union of all scores plus sentinels."""
    if verification.genuine.size == 0 or verification.impostor.size == 0:
        raise ConfigError("curves need nonempty genuine and impostor score lists")
    grid = _candidate_grid(verification.genuine, verification.impostor)
    genuine_sorted = np.sort(verification.genuine)
    impostor_sorted = np.sort(verification.impostor)
    fnmr = ThresholdCurve(grid, _fnmr_at(genuine_sorted, grid))
    fmr = ThresholdCurve(grid, _fmr_at(impostor_sorted, grid))
    return fnmr, fmr


def threshold_at(curve: ThresholdCurve, target: float, direction: str):
    """Smallest threshold whose value satisfies the target.

    direction FROM_BELOW: the value must have risen to >= target (use
    for non-decreasing curves such as FNMR, approaching the target from
    below). direction FROM_ABOVE: the value must have dropped to
    <= target (use for non-increasing curves such as FMR). Returns
    (threshold, achieved value); raises if the curve never satisfies
    the target, carrying the closest achievable value.
    """
    if not (0.0 <= target <= 1.0):
        raise ConfigError(f"target rate must lie in [0, 1], got {target}")
    if direction == FROM_BELOW:
        mask = curve.values >= target
        closest = float(curve.values.max())
    elif direction == FROM_ABOVE:
        mask = curve.values <= target
        closest = float(curve.values.min())
    else:
        raise ConfigError(f"unknown direction {direction!r}")
    if not mask.any():
        raise UnattainableOperatingPointError(
            f"no threshold reaches target {target} ({direction})", closest
        )
    idx = int(np.argmax(mask))
    return float(curve.thresholds[idx]), float(curve.values[idx])


def mmpmr(trials, tau: float) -> float:
    """Fraction of morphs whose weakest subject score still exceeds tau."""
    if len(trials) == 0:
        raise ConfigError("need at least one morph trial")
    mins = np.array([trial.subject_scores.min() for trial in trials])
    return int((mins > tau).sum()) / len(trials)


def mmpmr_curve(trials, thresholds) -> ThresholdCurve:
    """Pointwise match rate over a sorted threshold grid."""
    grid = np.asarray(thresholds, dtype=np.float64)
    if len(trials) == 0:
        raise ConfigError("need at least one morph trial")
    mins = np.sort(np.array([trial.subject_scores.min() for trial in trials]))
    counts = mins.size - np.searchsorted(mins, grid, side="right")
    return ThresholdCurve(grid, counts / len(trials))


def rmmr(mmpmr_value: float, fnmr_value: float) -> float:
    """Combined robustness/recognition rate: match rate plus FNMR.

    Algebraically identical to 1 + (match rate - true match rate).
    """
    for name, v in (("mmpmr", mmpmr_value), ("fnmr", fnmr_value)):
        if not (0.0 <= v <= 1.0):
            raise ConfigError(f"{name} value must lie in [0, 1], got {v}")
    return mmpmr_value + fnmr_value


def min_rmmr(trials, verification: VerificationSet):
    """Minimize mmpmr(tau) + fnmr(tau) over the candidate grid.

    Both terms are piecewise constant between observed scores, so the
    grid of all distinct scores plus sentinels contains a global
    minimizer; ties resolve to the smallest threshold.
    """
    if len(trials) == 0:
        raise ConfigError("need at least one morph trial")
    if verification.genuine.size == 0:
        raise ConfigError("need nonempty genuine scores")
    subject_scores = np.concatenate([trial.subject_scores for trial in trials])
    grid = _candidate_grid(verification.genuine, verification.impostor, subject_scores)
    mins = np.sort(np.array([trial.subject_scores.min() for trial in trials]))
    match_rate = (mins.size - np.searchsorted(mins, grid, side="right")) / len(trials)
    fnmr = _fnmr_at(np.sort(verification.genuine), grid)
    values = match_rate + fnmr
    idx = int(np.argmin(values))
    return float(grid[idx]), float(values[idx])


@dataclass(frozen=True)
class OperatingPoint:
    """One row of an operating-point report."""

    metric: str
    target: float
    achieved: float
    threshold: float
    value: float


def mmpmr_at_fnmr(trials, verification: VerificationSet, fnmr_targets) -> list[OperatingPoint]:
    """Morph match rate at thresholds pinned by FNMR targets."""
    fnmr, _ = fnmr_fmr_curves(verification)
    points = []
    for target in fnmr_targets:
        if not (0.0 < target < 1.0):
            raise ConfigError(f"FNMR target must lie in (0, 1), got {target}")
        try:
            tau, achieved = threshold_at(fnmr, target, FROM_BELOW)
        except UnattainableOperatingPointError as exc:
            raise UnattainableOperatingPointError(
                f"FNMR target {target} unattainable for this verification set", exc.closest
            ) from exc
        points.append(
            OperatingPoint(
                metric="mmpmr_at_fnmr",
                target=float(target),
                achieved=achieved,
                threshold=tau,
                value=mmpmr(trials, tau),
            )
        )
    return points


def fnmr_at_fmr(verification: VerificationSet, fmr_targets) -> list[OperatingPoint]:
    """Verification FNMR at thresholds pinned by FMR targets."""
    fnmr, fmr = fnmr_fmr_curves(verification)
    points = []
    for target in fmr_targets:
        if not (0.0 < target < 1.0):
            raise ConfigError(f"FMR target must lie in (0, 1), got {target}")
        tau, achieved = threshold_at(fmr, target, FROM_ABOVE)
        idx = int(np.searchsorted(fmr.thresholds, tau))
        points.append(
            OperatingPoint(
                metric="fnmr_at_fmr",
                target=float(target),
                achieved=achieved,
                threshold=tau,
                value=float(fnmr.values[idx]),
            )
        )
    return points


# --- serialization ---------------------------------------------------------


def save_curve_csv(curve: ThresholdCurve, path):
    """Write a curve as `threshold,value` rows with full float precision."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("threshold,value\n")
        for t, v in zip(curve.thresholds, curve.values):
            fh.write(f"{float(t)!r},{float(v)!r}\n")


def load_curve_csv(path) -> ThresholdCurve:
    thresholds, values = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            thresholds.append(float(row["threshold"]))
            values.append(float(row["value"]))
    return ThresholdCurve(np.array(thresholds), np.array(values))


def save_operating_points_csv(points, path):
    """Write `metric,target,achieved,threshold,value` rows.

    Fields without a meaningful value for a metric (e.g. the target of
    min_rmmr) are left empty.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("metric,target,achieved,threshold,value\n")
        for p in points:
            fields = [
                p.metric,
                "" if p.target is None else repr(float(p.target)),
                "" if p.achieved is None else repr(float(p.achieved)),
                "" if p.threshold is None else repr(float(p.threshold)),
                repr(float(p.value)),
            ]
            fh.write(",".join(fields) + "\n")


def load_operating_points_csv(path):
    points = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            points.append(
                OperatingPoint(
                    metric=row["metric"],
                    target=float(row["target"]) if row["target"] else None,
                    achieved=float(row["achieved"]) if row["achieved"] else None,
                    threshold=float(row["threshold"]) if row["threshold"] else None,
                    value=float(row["value"]),
                )
            )
    return points


def save_scores_csv(verification: VerificationSet, path):
    """Write scores as `label,score` rows, genuine first."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("label,score\n")
        for score in verification.genuine:
            fh.write(f"genuine,{float(score)!r}\n")
        for score in verification.impostor:
            fh.write(f"impostor,{float(score)!r}\n")


def load_scores_csv(path) -> VerificationSet:
    genuine, impostor = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["label"] == "genuine":
                genuine.append(float(row["score"]))
            elif row["label"] == "impostor":
                impostor.append(float(row["score"]))
            else:
                raise DataError(f"unknown score label {row['label']!r}")
    return VerificationSet(np.array(genuine), np.array(impostor))


def save_trials_json(trials, path):
    """Write morph trials as a JSON array of id/score objects."""
    records = [
        {"morph_id": trial.morph_id, "subject_scores": [float(s) for s in trial.subject_scores]}
        for trial in trials
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=1)
        fh.write("\n")


def load_trials_json(path) -> list[MorphTrial]:
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    try:
        return [
            MorphTrial(morph_id=int(r["morph_id"]), subject_scores=np.asarray(r["subject_scores"]))
            for r in records
        ]
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed trials file {path}") from exc
