"""Dataset construction and persistence.

Three corpora feed the pipeline: "basic" records sampled from the
aggregate baseline model (contextual codes zeroed), a synthetic
stated-choice corpus standing in for collected VR trips, and the
GMM-augmented corpus built from it (see `routekd.gmm`). All of them share
the CSV layout in `schema.CSV_COLUMNS`.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from routekd import schema
from routekd.errors import CsvParseError, ShapeError, ValidationError
from routekd.schema import (
    CSV_COLUMNS,
    DEFAULT_TRAVEL_TIMES,
    FEATURE_DIM,
    N_EXITS,
    ORDINAL_VARIABLES,
    DrivingRecord,
)

# basic-data urgency rule: latent scale 1..60, codes 1 iff latent <= 13
URGENCY_SCALE = 60
URGENCY_CUTOFF = 13

TRAVEL_TIME_COL = FEATURE_DIM - 1  # last feature column


@dataclass
class Dataset:
    """Encoded records: raw feature matrix (n x 12), 0-indexed exit labels."""

    features: np.ndarray
    labels: np.ndarray
    provenance: str = "vr"

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[1] != FEATURE_DIM:
            raise ShapeError(f"features must be (n, {FEATURE_DIM}), got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError("labels length must match feature rows")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= N_EXITS):
            raise ValidationError("labels must be 0-indexed exits")

    def __len__(self):
        return self.features.shape[0]

    def subset(self, indices):
        return Dataset(self.features[indices], self.labels[indices], self.provenance)

    def record_matrix(self):
        """(n, 13) matrix of [features..., choice] used for GMM fitting."""
        return np.column_stack([self.features, (self.labels + 1).astype(np.float64)])

    def to_records(self):
        out = []
        for i in range(len(self)):
            row = list(self.features[i]) + [int(self.labels[i]) + 1]
            out.append(schema.record_from_row(row))
        return out

    @classmethod
    def from_records(cls, records, provenance):
        feats = np.array([r.feature_vector() for r in records], dtype=np.float64)
        labels = np.array([r.label for r in records], dtype=np.int64)
        if not records:
            feats = np.empty((0, FEATURE_DIM))
            labels = np.empty(0, dtype=np.int64)
        return cls(feats, labels, provenance)

    def validate(self):
        """Every row must satisfy the record schema (0 = absent allowed)."""
        for i, rec in enumerate(self.to_records()):
            try:
                rec.validate(allow_absent=True)
            except ValidationError as exc:
                raise ValidationError(f"record {i}: {exc}") from None
        return self


def datasets_equal(a, b):
    return (
        a.provenance == b.provenance
        and a.features.shape == b.features.shape
        and np.array_equal(a.features, b.features)
        and np.array_equal(a.labels, b.labels)
    )


# ---------------------------------------------------------------------------
# splitting and encoding


def split(dataset, train_fraction, seed):
    """Seeded shuffle, then partition into floor(n*f) train rows + the rest."""
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n < 2:
        raise ValidationError("need at least 2 records to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    cut = int(n * train_fraction)
    return dataset.subset(order[:cut]), dataset.subset(order[cut:])


class TravelTimeScaler:
    """Standardizes the travel-time column by training-split statistics.

    The categorical codes are fed to the networks as raw ordinals; travel
    time is the single feature on a physical scale, so it is the only one
    standardized.
    """

    def __init__(self, mean=0.0, std=1.0):
        self.mean = float(mean)
        self.std = float(std)

    @classmethod
    def fit(cls, dataset):
        col = dataset.features[:, TRAVEL_TIME_COL]
        if col.size == 0:
            raise ValidationError("cannot fit a scaler on an empty dataset")
        std = float(col.std())
        return cls(float(col.mean()), std if std > 0 else 1.0)

    def transform(self, features):
        out = np.array(features, dtype=np.float64, copy=True)
        out[:, TRAVEL_TIME_COL] = (out[:, TRAVEL_TIME_COL] - self.mean) / self.std
        return out

    def to_json(self):
        return {
            "format": "routekd-scaler",
            "version": 1,
            "mean": float.hex(self.mean),
            "std": float.hex(self.std),
        }

    @classmethod
    def from_json(cls, doc):
        return cls(float.fromhex(doc["mean"]), float.fromhex(doc["std"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def encode_record(record):
    """Record -> (12 raw features, 0-indexed label)."""
    record.validate(allow_absent=True)
    return record.feature_vector(), record.label


def decode_record(features, label):
    """Inverse of `encode_record`; exact for the categorical codes."""
    row = list(np.asarray(features, dtype=np.float64)) + [int(label) + 1]
    return schema.record_from_row(row)


def encode_dataset(dataset, scaler=None):
    """Dataset -> (X, y) model matrices, standardizing travel time."""
    x = scaler.transform(dataset.features) if scaler else dataset.features.copy()
    return x, dataset.labels.copy()


# ---------------------------------------------------------------------------
# generators


def validate_distribution(p, name="distribution"):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (N_EXITS,):
        raise ShapeError(f"{name} must have {N_EXITS} entries, got shape {p.shape}")
    if (p < 0).any() or (p > 1).any() or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValidationError(f"{name} is not a probability distribution: {p}")
    return p


def baseline_distribution(travel_times, alpha=0.601, transform="inverse"):
    """Aggregate exit probabilities from the four alternative-route times.

    The raw per-exit weight is alpha*T (literal), alpha/T (inverse,
    default: a shorter alternative route attracts more drivers), or
    exp(-alpha*T/mean(T)) (neg_exp); weights are then normalized into a
    distribution.
    """
    t = np.asarray(travel_times, dtype=np.float64)
    if t.shape != (N_EXITS,):
        raise ShapeError(f"need {N_EXITS} travel times, got shape {t.shape}")
    if (t <= 0).any():
        raise ValidationError(f"travel times must be positive, got {t}")
    if transform == "literal":
        w = alpha * t
    elif transform == "inverse":
        w = alpha / t
    elif transform == "neg_exp":
        w = np.exp(-alpha * t / t.mean())
    else:
        raise ValidationError(f"unknown transform {transform!r}")
    return w / w.sum()


def real_probabilities(volumes):
    """Exit shares from observed traffic volumes: p_e = V_e / sum(V)."""
    v = np.asarray(volumes, dtype=np.float64)
    if v.shape != (N_EXITS,):
        raise ShapeError(f"need {N_EXITS} volumes, got shape {v.shape}")
    if (v < 0).any():
        raise ValidationError(f"volumes must be nonnegative, got {v}")
    total = v.sum()
    if total <= 0:
        raise ValidationError("at least one volume must be positive")
    return v / total


def sample_basic_data(dist, n, travel_times=DEFAULT_TRAVEL_TIMES, seed=0):
    """Draw n records from the aggregate baseline distribution.

    Exit choices follow `dist`; each record gets the travel time of its
    chosen exit. Urgency comes from a latent 1..60 draw (code 1 iff the
    draw is <= 13); every other contextual variable is absent (0).
    """
    dist = validate_distribution(dist)
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    times = np.asarray(travel_times, dtype=np.float64)
    rng = np.random.default_rng(seed)
    labels = rng.choice(N_EXITS, size=n, p=dist)
    latent = rng.integers(1, URGENCY_SCALE + 1, size=n)
    urgency = np.where(latent <= URGENCY_CUTOFF, 1.0, 2.0)
    feats = np.zeros((n, FEATURE_DIM))
    feats[:, 1] = urgency
    feats[:, TRAVEL_TIME_COL] = times[labels]
    return Dataset(feats, labels, provenance="basic")


# -- synthetic stated-choice corpus -----------------------------------------


@dataclass
class LogitCoefficients:
    """Ground-truth choice model for the synthetic stated-choice corpus.

    Per-exit utility =
        exit_bias[e]
        + time_weight * (-(T_e - mean(T)) / std(T))
        + heavy_shift[e]  if traffic is heavy
        + medium_shift[e] if traffic is medium
        + urgent_shift[e] if the trip is urgent
        + social_shift[e] if other drivers' choices are visible

    Defaults give each exit a distinct context niche: heavy traffic sends
    drivers off at the first exit, medium traffic favors the second,
    visible herding pulls toward the third, and free-flowing traffic
    leaves the time-preferred fourth exit dominant.
    """

    exit_bias: tuple = (0.0, 0.4, -0.8, 0.0)
    time_weight: float = 1.0
    heavy_shift: tuple = (4.0, 0.0, 0.0, 0.0)
    medium_shift: tuple = (0.0, 1.2, 0.0, 0.0)
    urgent_shift: tuple = (0.8, 0.3, 0.0, 0.0)
    social_shift: tuple = (0.0, 0.0, 4.2, 0.0)
    version: int = 1

    def to_json(self):
        return {
            "version": self.version,
            "exit_bias": list(self.exit_bias),
            "time_weight": self.time_weight,
            "heavy_shift": list(self.heavy_shift),
            "medium_shift": list(self.medium_shift),
            "urgent_shift": list(self.urgent_shift),
            "social_shift": list(self.social_shift),
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            exit_bias=tuple(doc["exit_bias"]),
            time_weight=doc["time_weight"],
            heavy_shift=tuple(doc["heavy_shift"]),
            medium_shift=tuple(doc["medium_shift"]),
            urgent_shift=tuple(doc["urgent_shift"]),
            social_shift=tuple(doc["social_shift"]),
            version=doc.get("version", 1),
        )


def default_scenarios():
    """Ten contextual settings: traffic x urgency, social impact only
    added away from normal traffic."""
    scenarios = [
        {"traffic": 1, "urgency": 1, "social_impact": 1},
        {"traffic": 1, "urgency": 2, "social_impact": 1},
    ]
    for traffic in (2, 3):
        for urgency in (1, 2):
            for social in (1, 2):
                scenarios.append(
                    {"traffic": traffic, "urgency": urgency, "social_impact": social}
                )
    return scenarios


@dataclass
class ScenarioSpec:
    scenarios: list = field(default_factory=default_scenarios)
    coefficients: LogitCoefficients = field(default_factory=LogitCoefficients)
    travel_times: tuple = DEFAULT_TRAVEL_TIMES

    def to_json(self):
        return {
            "version": 1,
            "scenarios": self.scenarios,
            "coefficients": self.coefficients.to_json(),
            "travel_times": list(self.travel_times),
        }

    @classmethod
    def from_json(cls, doc):
        return cls(
            scenarios=list(doc["scenarios"]),
            coefficients=LogitCoefficients.from_json(doc["coefficients"]),
            travel_times=tuple(doc["travel_times"]),
        )


def _scenario_utilities(spec):
    """Per-scenario exit utilities under the ground-truth logit."""
    c = spec.coefficients
    t = np.asarray(spec.travel_times, dtype=np.float64)
    t_std = t.std() if t.std() > 0 else 1.0
    time_term = c.time_weight * (-(t - t.mean()) / t_std)
    utilities = []
    for sc in spec.scenarios:
        u = np.asarray(c.exit_bias, dtype=np.float64) + time_term
        if sc["traffic"] == 3:
            u = u + np.asarray(c.heavy_shift)
        elif sc["traffic"] == 2:
            u = u + np.asarray(c.medium_shift)
        if sc["urgency"] == 1:
            u = u + np.asarray(c.urgent_shift)
        if sc["social_impact"] == 2:
            u = u + np.asarray(c.social_shift)
        utilities.append(u)
    return utilities


def generate_synthetic_vr(spec, n_participants, seed=0):
    """Simulate a stated-choice experiment: one record per participant per
    scenario, demographics drawn once per participant."""
    if not spec.scenarios:
        raise ValidationError("scenario list is empty")
    if n_participants < 1:
        raise ValidationError(f"n_participants must be >= 1, got {n_participants}")
    for sc in spec.scenarios:
        for key in ("traffic", "urgency", "social_impact"):
            if key not in sc:
                raise ValidationError(f"scenario missing {key!r}: {sc}")
    rng = np.random.default_rng(seed)
    times = np.asarray(spec.travel_times, dtype=np.float64)
    utilities = _scenario_utilities(spec)
    probs = []
    for u in utilities:
        e = np.exp(u - u.max())
        probs.append(e / e.sum())
    demo_his = [hi for _, hi in ORDINAL_VARIABLES[3:]]  # age .. financial
    rows = []
    labels = []
    for _ in range(n_participants):
        demo = [rng.integers(1, hi + 1) for hi in demo_his]
        for sc, p in zip(spec.scenarios, probs):
            exit_idx = rng.choice(N_EXITS, p=p)
            feats = (
                [sc["traffic"], sc["urgency"], sc["social_impact"]]
                + list(demo)
                + [times[exit_idx]]
            )
            rows.append(feats)
            labels.append(exit_idx)
    return Dataset(np.array(rows, dtype=np.float64), np.array(labels), provenance="synthetic-vr")


def empirical_exit_distribution(dataset):
    """Observed per-exit choice shares of a corpus."""
    if len(dataset) == 0:
        raise ValidationError("empty dataset")
    counts = np.bincount(dataset.labels, minlength=N_EXITS)
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# CSV persistence


def _format_cell(value, column):
    if column == "travel_time":
        return repr(float(value))
    return str(int(value))


def save_csv(dataset, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i in range(len(dataset)):
            row = [
                _format_cell(dataset.features[i, j], CSV_COLUMNS[j])
                for j in range(FEATURE_DIM)
            ]
            row.append(str(int(dataset.labels[i]) + 1))
            writer.writerow(row)


def load_csv(path, provenance="vr"):
    """Parse a record CSV; malformed cells raise CsvParseError with the
    file line number and column name."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("file is empty (no header)", row=1) from None
        if tuple(header) != CSV_COLUMNS:
            missing = set(CSV_COLUMNS) - set(header)
            detail = f"missing columns {sorted(missing)}" if missing else f"got {header}"
            raise CsvParseError(f"header mismatch: {detail}", row=1)
        rows = []
        for line_no, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(CSV_COLUMNS):
                raise CsvParseError(
                    f"expected {len(CSV_COLUMNS)} cells, got {len(cells)}", row=line_no
                )
            rows.append(_parse_row(cells, line_no))
    if not rows:
        return Dataset(np.empty((0, FEATURE_DIM)), np.empty(0, dtype=np.int64), provenance)
    mat = np.array(rows, dtype=np.float64)
    return Dataset(mat[:, :FEATURE_DIM], mat[:, FEATURE_DIM].astype(np.int64) - 1, provenance)


def _parse_row(cells, line_no):
    values = []
    for (name, hi), cell in zip(ORDINAL_VARIABLES, cells):
        try:
            v = int(cell)
        except ValueError:
            raise CsvParseError(f"non-integer code {cell!r}", row=line_no, column=name) from None
        if not 0 <= v <= hi:
            raise CsvParseError(f"code {v} outside [0, {hi}]", row=line_no, column=name)
        values.append(float(v))
    try:
        tt = float(cells[11])
    except ValueError:
        raise CsvParseError(
            f"non-numeric travel time {cells[11]!r}", row=line_no, column="travel_time"
        ) from None
    if not tt > 0 or not np.isfinite(tt):
        raise CsvParseError(f"travel time {tt} must be positive", row=line_no, column="travel_time")
    values.append(tt)
    try:
        choice = int(cells[12])
    except ValueError:
        raise CsvParseError(
            f"non-integer choice {cells[12]!r}", row=line_no, column="choice"
        ) from None
    if not 1 <= choice <= N_EXITS:
        raise CsvParseError(
            f"choice {choice} outside [1, {N_EXITS}]", row=line_no, column="choice"
        )
    values.append(float(choice))
    return values
