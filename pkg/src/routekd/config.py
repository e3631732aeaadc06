"""Run configuration: one JSON document drives the whole pipeline.

Every knob a command needs lives here so reruns are reproducible from the
file alone; `--seed` and `--out` can override the two most common fields.
"""

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from routekd.data import ScenarioSpec
from routekd.distill import STUDENT_ARCHITECTURE, TEACHER_ARCHITECTURE, DistillationConfig
from routekd.errors import ValidationError
from routekd.schema import DEFAULT_TRAVEL_TIMES

CONFIG_ENV_VAR = "ROUTEKD_CONFIG"
CONFIG_VERSION = 1

# stage tags: every pipeline stage derives its own RNG stream from the
# master seed so commands stay independent and reruns are byte-identical
STAGE_BASIC = 1
STAGE_VR = 2
STAGE_GMM_FIT = 3
STAGE_GMM_SAMPLE = 4
STAGE_SPLIT_VR = 5
STAGE_TEACHER = 6
STAGE_SPLIT_BASIC = 7
STAGE_STUDENT = 8


def stage_seed(master_seed, stage):
    """A well-mixed 32-bit seed for one pipeline stage."""
    return int(np.random.SeedSequence((master_seed, stage)).generate_state(1)[0])


@dataclass(frozen=True)
class GmmConfig:
    components: int | None = None  # None: pick k in [1, max_components] by BIC
    max_components: int = 10
    max_iter: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.components is not None and self.components < 1:
            raise ValidationError("gmm components must be >= 1")
        if self.max_components < 1 or self.max_iter < 1 or self.tol < 0:
            raise ValidationError("invalid gmm settings")


@dataclass(frozen=True)
class TeacherConfig:
    architecture: str = TEACHER_ARCHITECTURE
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValidationError("invalid teacher settings")


@dataclass(frozen=True)
class StudentConfig:
    architecture: str = STUDENT_ARCHITECTURE
    alpha: float = 0.5
    beta: float = 0.5
    temperature: float = 2.0
    epochs: int = 25
    batch_size: int = 32
    learning_rate: float = 0.01

    def __post_init__(self):
        # delegate range checks
        self.to_distillation_config(0)

    def to_distillation_config(self, seed):
        return DistillationConfig(
            alpha=self.alpha,
            beta=self.beta,
            temperature=self.temperature,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=seed,
        )


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "artifacts"
    travel_times: tuple = DEFAULT_TRAVEL_TIMES
    baseline_alpha: float = 0.601
    baseline_transform: str = "inverse"
    n_basic: int = 10_000
    n_participants: int = 41
    n_augmented: int = 10_000
    train_fraction: float = 0.8
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    gmm: GmmConfig = field(default_factory=GmmConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    student: StudentConfig = field(default_factory=StudentConfig)
    reference_volumes: tuple = (2150, 2750, 2430, 2670)
    aggregation: str = "argmax_count"

    def __post_init__(self):
        if len(self.travel_times) != 4 or any(t <= 0 for t in self.travel_times):
            raise ValidationError("travel_times must be 4 positive values")
        if self.baseline_transform not in ("literal", "inverse", "neg_exp"):
            raise ValidationError(f"unknown baseline transform {self.baseline_transform!r}")
        if min(self.n_basic, self.n_participants, self.n_augmented) < 1:
            raise ValidationError("record counts must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValidationError("train_fraction must be in (0, 1)")
        if len(self.reference_volumes) != 4 or any(v < 0 for v in self.reference_volumes):
            raise ValidationError("reference_volumes must be 4 nonnegative counts")
        if self.aggregation not in ("argmax_count", "mean_prob"):
            raise ValidationError(f"unknown aggregation {self.aggregation!r}")
        # keep the generator's travel times in lock step with the pipeline's
        self.scenario = replace(self.scenario, travel_times=tuple(self.travel_times))

    # -- JSON ------------------------------------------------------------------

    def to_json(self):
        return {
            "version": CONFIG_VERSION,
            "seed": self.seed,
            "out_dir": self.out_dir,
            "travel_times": list(self.travel_times),
            "baseline": {"alpha": self.baseline_alpha, "transform": self.baseline_transform},
            "basic": {"n_records": self.n_basic},
            "vr": {
                "n_participants": self.n_participants,
                "scenario": self.scenario.to_json(),
            },
            "augment": {
                "n_records": self.n_augmented,
                "components": self.gmm.components,
                "max_components": self.gmm.max_components,
                "max_iter": self.gmm.max_iter,
                "tol": self.gmm.tol,
            },
            "split": {"train_fraction": self.train_fraction},
            "teacher": {
                "architecture": self.teacher.architecture,
                "epochs": self.teacher.epochs,
                "batch_size": self.teacher.batch_size,
                "learning_rate": self.teacher.learning_rate,
            },
            "student": {
                "architecture": self.student.architecture,
                "alpha": self.student.alpha,
                "beta": self.student.beta,
                "temperature": self.student.temperature,
                "epochs": self.student.epochs,
                "batch_size": self.student.batch_size,
                "learning_rate": self.student.learning_rate,
            },
            "evaluation": {
                "reference_volumes": list(self.reference_volumes),
                "aggregation": self.aggregation,
            },
        }

    @classmethod
    def from_json(cls, doc):
        if doc.get("version") != CONFIG_VERSION:
            raise ValidationError(f"unsupported config version {doc.get('version')!r}")
        return cls(
            seed=doc.get("seed", 0),
            out_dir=doc.get("out_dir", "artifacts"),
            travel_times=tuple(doc.get("travel_times", DEFAULT_TRAVEL_TIMES)),
            baseline_alpha=doc.get("baseline", {}).get("alpha", 0.601),
            baseline_transform=doc.get("baseline", {}).get("transform", "inverse"),
            n_basic=doc.get("basic", {}).get("n_records", 10_000),
            n_participants=doc.get("vr", {}).get("n_participants", 41),
            n_augmented=doc.get("augment", {}).get("n_records", 10_000),
            train_fraction=doc.get("split", {}).get("train_fraction", 0.8),
            scenario=(
                ScenarioSpec.from_json(doc["vr"]["scenario"])
                if "vr" in doc and "scenario" in doc["vr"]
                else ScenarioSpec()
            ),
            gmm=GmmConfig(
                components=doc.get("augment", {}).get("components"),
                max_components=doc.get("augment", {}).get("max_components", 10),
                max_iter=doc.get("augment", {}).get("max_iter", 200),
                tol=doc.get("augment", {}).get("tol", 1e-6),
            ),
            teacher=TeacherConfig(**doc.get("teacher", {})),
            student=StudentConfig(**doc.get("student", {})),
            reference_volumes=tuple(
                doc.get("evaluation", {}).get("reference_volumes", (2150, 2750, 2430, 2670))
            ),
            aggregation=doc.get("evaluation", {}).get("aggregation", "argmax_count"),
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)
            fh.write("\n")


def resolve_config(path=None, seed=None, out_dir=None):
    """Load the config from `path`, the ROUTEKD_CONFIG env var, or defaults;
    apply CLI overrides."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    cfg = RunConfig.load(path) if path else RunConfig()
    if seed is not None:
        cfg.seed = seed
    if out_dir is not None:
        cfg.out_dir = out_dir
    return cfg
