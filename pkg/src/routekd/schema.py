"""Record schema for encoded driving records.

A record is one trip: eleven contextual/demographic variables coded as
small positive integers, the travel time (minutes) of the alternative
route for the exit taken, and the chosen exit. Code 0 is reserved for
"variable absent", used by the baseline-derived data where contextual
factors simply do not occur.
"""

from dataclasses import dataclass, fields

import numpy as np

from routekd.errors import ValidationError

N_EXITS = 4
FEATURE_DIM = 12  # 11 contextual/demographic codes + travel time

# alternative-route travel times (minutes) for the four exits
DEFAULT_TRAVEL_TIMES = (31.7, 18.9, 17.8, 13.9)

# (name, highest code) for the ordinal variables, in record order
ORDINAL_VARIABLES = (
    ("traffic", 3),
    ("urgency", 2),
    ("social_impact", 2),
    ("age", 2),
    ("gender", 2),
    ("race", 3),
    ("education", 3),
    ("employment", 4),
    ("concern", 4),
    ("familiarity", 5),
    ("financial", 5),
)

CSV_COLUMNS = tuple(name for name, _ in ORDINAL_VARIABLES) + ("travel_time", "choice")

# contextual variables that may be coded 0 ("absent") outside VR-style data
_CONTEXTUAL = frozenset(name for name, _ in ORDINAL_VARIABLES)


@dataclass
class DrivingRecord:
    traffic: int
    urgency: int
    social_impact: int
    age: int
    gender: int
    race: int
    education: int
    employment: int
    concern: int
    familiarity: int
    financial: int
    travel_time: float
    choice: int

    def validate(self, allow_absent=True):
        """Check every field against its code range.

        With allow_absent, contextual codes may also be 0.
        """
        for name, hi in ORDINAL_VARIABLES:
            v = getattr(self, name)
            lo = 0 if allow_absent else 1
            if not (isinstance(v, (int, np.integer)) and lo <= v <= hi):
                raise ValidationError(f"{name}={v!r} outside [{lo}, {hi}]")
        if not self.travel_time > 0:
            raise ValidationError(f"travel_time={self.travel_time!r} must be > 0")
        if not (isinstance(self.choice, (int, np.integer)) and 1 <= self.choice <= N_EXITS):
            raise ValidationError(f"choice={self.choice!r} outside [1, {N_EXITS}]")
        return self

    def feature_vector(self):
        """The 12 raw model inputs (travel time unscaled)."""
        return np.array(
            [float(getattr(self, name)) for name, _ in ORDINAL_VARIABLES]
            + [float(self.travel_time)]
        )

    @property
    def label(self):
        """0-indexed exit."""
        return self.choice - 1


def record_from_row(values):
    """Build a DrivingRecord from a 13-value row in CSV column order."""
    kwargs = {}
    for (name, _), v in zip(ORDINAL_VARIABLES, values):
        kwargs[name] = int(v)
    kwargs["travel_time"] = float(values[11])
    kwargs["choice"] = int(values[12])
    return DrivingRecord(**kwargs)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str  # "ordinal" | "continuous"
    lo: float
    hi: float


class OrdinalSchema:
    """Column-wise ranges for the 13-column record space the GMM models.

    Ordinal columns round to the nearest integer code and clip to
    [lo, hi]; the travel-time column clips to its continuous range.
    """

    def __init__(self, columns):
        self.columns = tuple(columns)

    @property
    def dim(self):
        return len(self.columns)

    def round_clip(self, mat):
        """Map raw Gaussian samples onto valid records (copy)."""
        out = np.array(mat, dtype=np.float64, copy=True)
        if out.ndim != 2 or out.shape[1] != self.dim:
            raise ValidationError(f"expected (n, {self.dim}) matrix, got {out.shape}")
        for j, col in enumerate(self.columns):
            if col.kind == "ordinal":
                out[:, j] = np.clip(np.rint(out[:, j]), col.lo, col.hi)
            else:
                out[:, j] = np.clip(out[:, j], col.lo, col.hi)
        return out

    def validate_matrix(self, mat, allow_absent=False):
        mat = np.asarray(mat, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[1] != self.dim:
            raise ValidationError(f"expected (n, {self.dim}) matrix, got {mat.shape}")
        for j, col in enumerate(self.columns):
            vals = mat[:, j]
            if col.kind == "ordinal":
                ok = (vals == np.rint(vals)) & (vals >= col.lo) & (vals <= col.hi)
                if allow_absent:
                    ok |= vals == 0.0
            else:
                ok = (vals >= col.lo) & (vals <= col.hi)
            if not ok.all():
                i = int(np.flatnonzero(~ok)[0])
                raise ValidationError(
                    f"column {col.name!r}: value {vals[i]!r} at row {i} out of range"
                )
        return mat


def vr_schema(travel_times=DEFAULT_TRAVEL_TIMES):
    """The canonical 13-column schema; travel time spans the route times."""
    cols = [ColumnSpec(name, "ordinal", 1, hi) for name, hi in ORDINAL_VARIABLES]
    cols.append(ColumnSpec("travel_time", "continuous", min(travel_times), max(travel_times)))
    cols.append(ColumnSpec("choice", "ordinal", 1, N_EXITS))
    return OrdinalSchema(cols)


def records_equal(a, b):
    return all(
        getattr(a, f.name) == getattr(b, f.name) for f in fields(DrivingRecord)
    )
