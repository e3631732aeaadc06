"""Teacher pretraining and teacher-guided student training.

The student minimizes a two-term objective per batch: the supervised
cross-entropy against ground-truth labels, weighted alpha, plus the
cross-entropy between the softened (temperature T) softmax outputs of
student and teacher, weighted beta. Gradients flow through the student
only; the teacher is a frozen soft-target source.
"""

import copy
import csv
from dataclasses import dataclass, field, replace

import numpy as np

from routekd import nn
from routekd.data import TravelTimeScaler, encode_dataset
from routekd.errors import ShapeError, ValidationError
from routekd.schema import N_EXITS

# stream tag separating the batch-shuffle RNG from layer-init streams
_SHUFFLE_STREAM = 999983


@dataclass(frozen=True)
class DistillationConfig:
    alpha: float = 0.5
    beta: float = 0.5
    temperature: float = 2.0
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ValidationError("need alpha, beta >= 0 with alpha + beta > 0")
        if self.temperature <= 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass
class EpochStats:
    epoch: int
    hard_loss: float
    soft_loss: float
    total_loss: float
    train_acc: float
    test_acc: float


@dataclass
class TrainingTrace:
    epochs: list = field(default_factory=list)

    def append(self, stats):
        self.epochs.append(stats)

    def best_epoch(self):
        """Index (1-based) and stats of the highest test accuracy; ties go
        to the earliest epoch."""
        if not self.epochs:
            raise ValidationError("empty trace")
        best = max(self.epochs, key=lambda s: (s.test_acc, -s.epoch))
        return best.epoch, best

    def best_test_accuracy(self):
        return self.best_epoch()[1].test_acc

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "hard_loss", "soft_loss", "total_loss", "train_acc", "test_acc"])
            for s in self.epochs:
                writer.writerow(
                    [s.epoch]
                    + [repr(v) for v in (s.hard_loss, s.soft_loss, s.total_loss, s.train_acc, s.test_acc)]
                )

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                trace.append(EpochStats(int(row[0]), *(float(v) for v in row[1:])))
        return trace


@dataclass
class DistillLoss:
    total: float
    grad: np.ndarray  # d total / d student logits
    hard: float
    soft: float


def distillation_loss(student_logits, teacher_logits, labels, alpha, beta, temperature):
    """Combined hard/soft loss and its exact gradient w.r.t. student logits.

    total = alpha * CE(softmax(s, 1), one_hot(labels))
          + beta  * CE(softmax(s, T), softmax(t, T))

    The teacher term is treated as a constant. `teacher_logits` may be
    None when beta is 0.
    """
    s = np.asarray(student_logits, dtype=np.float64)
    n, k = s.shape
    y = nn.one_hot(labels, k)
    p1 = nn.softmax(s, 1.0)
    hard = nn.cross_entropy(p1, y)
    grad = alpha * (p1 - y) / n
    if beta != 0.0:
        if teacher_logits is None:
            raise ValidationError("beta > 0 requires teacher logits")
        t = np.asarray(teacher_logits, dtype=np.float64)
        if t.shape != s.shape:
            raise ShapeError(f"teacher logits {t.shape} != student logits {s.shape}")
        p_soft = nn.softmax(s, temperature)
        q_soft = nn.softmax(t, temperature)
        soft = nn.cross_entropy(p_soft, q_soft)
        grad = grad + beta * (p_soft - q_soft) / (n * temperature)
    else:
        soft = 0.0
    return DistillLoss(alpha * hard + beta * soft, grad, hard, soft)


def _eval_accuracy(model, x, y):
    model.eval()
    logits = model.forward(x)
    return float((logits.argmax(axis=1) == y).mean())


def _run_epochs(model, x_train, y_train, x_test, y_test, config, batch_grad):
    """Shared epoch loop: shuffle, step, per-epoch eval, best-epoch snapshot."""
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, _SHUFFLE_STREAM)))
    state = nn.SgdState(config.learning_rate, config.momentum)
    trace = TrainingTrace()
    best_snapshot, best_key = None, None
    n = x_train.shape[0]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        hard_sum = soft_sum = total_sum = 0.0
        model.train()
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits = model.forward(x_train[idx])
            loss = batch_grad(logits, y_train[idx], x_train[idx])
            grads = model.backward(loss.grad)
            nn.sgd_step(model, grads, state)
            hard_sum += loss.hard * idx.size
            soft_sum += loss.soft * idx.size
            total_sum += loss.total * idx.size
        train_acc = _eval_accuracy(model, x_train, y_train)
        test_acc = _eval_accuracy(model, x_test, y_test) if x_test is not None else train_acc
        trace.append(
            EpochStats(epoch, hard_sum / n, soft_sum / n, total_sum / n, train_acc, test_acc)
        )
        if best_key is None or test_acc > best_key:
            best_key = test_acc
            best_snapshot = copy.deepcopy(model).eval()
        model.train()
    model.eval()
    return model, best_snapshot, trace


@dataclass
class TrainResult:
    model: "nn.MlpModel"  # final state, eval mode
    best_model: "nn.MlpModel"  # snapshot at the best test-accuracy epoch
    trace: TrainingTrace
    scaler: TravelTimeScaler


def _prepare(train, test, scaler):
    if scaler is None:
        scaler = TravelTimeScaler.fit(train)
    x_train, y_train = encode_dataset(train, scaler)
    if test is not None and len(test):
        x_test, y_test = encode_dataset(test, scaler)
    else:
        x_test = y_test = None
    return scaler, x_train, y_train, x_test, y_test


def pretrain_teacher(architecture, train, config, test=None, scaler=None, input_dim=None):
    """Train an MLP on hard labels with plain cross-entropy and SGD."""
    scaler, x_train, y_train, x_test, y_test = _prepare(train, test, scaler)
    if input_dim is None:
        input_dim = x_train.shape[1]
    if x_train.shape[1] != input_dim:
        raise ValidationError(f"dataset has {x_train.shape[1]} features, expected {input_dim}")
    model = nn.build_mlp(input_dim, architecture, N_EXITS, seed=config.seed)

    def batch_grad(logits, yb, _xb):
        y = nn.one_hot(yb, N_EXITS)
        probs, grad = nn.softmax_cross_entropy_grad(logits, y)
        hard = nn.cross_entropy(probs, y)
        return DistillLoss(hard, grad, hard, 0.0)

    model, best, trace = _run_epochs(model, x_train, y_train, x_test, y_test, config, batch_grad)
    return TrainResult(model, best, trace, scaler)


def distill(teacher, student_arch, train, test, config, scaler=None):
    """Train a student per the combined objective, guided by a frozen teacher.

    Per epoch and seeded shuffled batch: forward both networks on the
    batch, compute the loss, backpropagate through the student only, take
    one SGD step. Test accuracy is recorded every epoch and the
    best-epoch snapshot kept. With beta = 0 the teacher is unused and the
    run is identical to standalone supervised training of the student.
    """
    if config.beta != 0.0:
        if teacher is None:
            raise ValidationError("beta > 0 requires a teacher model")
        if teacher.mode != nn.EVAL:
            raise ValidationError("teacher must be in eval mode (trained, frozen)")
    scaler, x_train, y_train, x_test, y_test = _prepare(train, test, scaler)
    if teacher is not None and teacher.input_dim != x_train.shape[1]:
        raise ValidationError(
            f"teacher expects {teacher.input_dim} inputs, data has {x_train.shape[1]}"
        )
    student = nn.build_mlp(x_train.shape[1], student_arch, N_EXITS, seed=config.seed)

    use_teacher = config.beta != 0.0

    def batch_grad(logits, yb, xb):
        t_logits = teacher.forward(xb) if use_teacher else None
        return distillation_loss(
            logits, t_logits, yb, config.alpha, config.beta, config.temperature
        )

    student, best, trace = _run_epochs(student, x_train, y_train, x_test, y_test, config, batch_grad)
    return TrainResult(student, best, trace, scaler)


def train_student(student_arch, train, test, config, scaler=None):
    """The beta = 0 baseline: the same loop and seeds, no teacher signal."""
    return distill(None, student_arch, train, test, replace(config, beta=0.0), scaler=scaler)


# default architectures

TEACHER_ARCHITECTURE = "10n-0.25DP-30n-0.35DP-20n-0.25DP-50n-0.45DP"
STUDENT_ARCHITECTURE = "10n-20n-BN"
