"""Accuracy and aggregate exit-probability evaluation.

Produces the final three-way comparison: the aggregate baseline, the
distilled model, and the reference shares computed from configured
traffic volumes, plus the empirical shares of the stated-choice corpus.
"""

import csv
from dataclasses import dataclass

import numpy as np

from routekd import nn
from routekd.data import encode_dataset, validate_distribution
from routekd.errors import ValidationError
from routekd.schema import N_EXITS

SERIES = ("baseline", "model", "reference", "vr")


def predictions(model, x):
    """Argmax exits for a feature matrix; ties resolve to the lowest index."""
    return model.forward(x).argmax(axis=1)


def accuracy_from_matrices(model, x, y):
    if x.shape[0] == 0:
        raise ValidationError("empty dataset")
    return float((predictions(model, x) == y).mean())


def accuracy(model, dataset, scaler=None):
    """Fraction of records whose predicted exit equals the label."""
    if model.mode != nn.EVAL:
        raise ValidationError("model must be in eval mode")
    x, y = encode_dataset(dataset, scaler)
    return accuracy_from_matrices(model, x, y)


def predicted_exit_distribution(model, dataset, mode="argmax_count", scaler=None):
    """Aggregate a model's per-record predictions into exit shares.

    argmax_count (default): each record contributes its predicted exit,
    so entries are exact multiples of 1/n. mean_prob: the mean softmax
    probability per exit.
    """
    if model.mode != nn.EVAL:
        raise ValidationError("model must be in eval mode")
    if len(dataset) == 0:
        raise ValidationError("empty dataset")
    x, _ = encode_dataset(dataset, scaler)
    if mode == "argmax_count":
        counts = np.bincount(predictions(model, x), minlength=N_EXITS)
        return counts / counts.sum()
    if mode == "mean_prob":
        return nn.softmax(model.forward(x), 1.0).mean(axis=0)
    raise ValidationError(f"unknown aggregation mode {mode!r}")


def l1_distance(p, q):
    return float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass
class ComparisonReport:
    baseline: np.ndarray
    model: np.ndarray
    reference: np.ndarray
    vr: np.ndarray
    accuracies: dict  # teacher / student / distilled
    l1_baseline: float = None
    l1_model: float = None

    def __post_init__(self):
        for name in SERIES:
            setattr(self, "vr" if name == "vr" else name,
                    validate_distribution(getattr(self, name), name))
        for key in ("teacher", "student", "distilled"):
            if key not in self.accuracies:
                raise ValidationError(f"missing accuracy entry {key!r}")
        if self.l1_baseline is None:
            self.l1_baseline = l1_distance(self.baseline, self.reference)
        if self.l1_model is None:
            self.l1_model = l1_distance(self.model, self.reference)


def build_report(baseline, model_dist, reference, vr_empirical, accuracies):
    """Assemble the comparison, including each candidate's L1 distance to
    the reference shares."""
    return ComparisonReport(
        baseline=np.asarray(baseline, dtype=np.float64),
        model=np.asarray(model_dist, dtype=np.float64),
        reference=np.asarray(reference, dtype=np.float64),
        vr=np.asarray(vr_empirical, dtype=np.float64),
        accuracies=dict(accuracies),
    )


def report_to_csv(report, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["section", "key", "baseline", "model", "reference", "vr"])
        for e in range(N_EXITS):
            writer.writerow(
                ["exit", e + 1]
                + [repr(float(getattr(report, "vr" if s == "vr" else s)[e])) for s in SERIES]
            )
        for key in ("teacher", "student", "distilled"):
            writer.writerow(["accuracy", key, repr(float(report.accuracies[key])), "", "", ""])
        writer.writerow(["l1", "baseline", repr(float(report.l1_baseline)), "", "", ""])
        writer.writerow(["l1", "model", repr(float(report.l1_model)), "", "", ""])


def report_from_csv(path):
    cols = {name: np.zeros(N_EXITS) for name in SERIES}
    accuracies = {}
    l1 = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            section, key = row[0], row[1]
            if section == "exit":
                e = int(key) - 1
                for j, name in enumerate(SERIES):
                    cols[name][e] = float(row[2 + j])
            elif section == "accuracy":
                accuracies[key] = float(row[2])
            elif section == "l1":
                l1[key] = float(row[2])
    return ComparisonReport(
        baseline=cols["baseline"],
        model=cols["model"],
        reference=cols["reference"],
        vr=cols["vr"],
        accuracies=accuracies,
        l1_baseline=l1.get("baseline"),
        l1_model=l1.get("model"),
    )


# ---------------------------------------------------------------------------
# SVG rendering (no plotting dependency; byte-deterministic output)

_COLORS = {"baseline": "#4878cf", "model": "#d65f5f", "reference": "#6acc65", "vr": "#b47cc7"}
_LABELS = {"baseline": "Baseline", "model": "Distilled", "reference": "Reference", "vr": "VR data"}

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 40, 50


def _fmt(v):
    return f"{v:.2f}"


def report_to_svg(report):
    """Grouped bar chart of the four exit-probability series."""
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB
    values = {s: getattr(report, "vr" if s == "vr" else s) for s in SERIES}
    ymax = max(0.1, max(float(np.max(v)) for v in values.values()))
    ymax = np.ceil(ymax * 10.0) / 10.0
    group_w = plot_w / N_EXITS
    bar_w = group_w / (len(SERIES) + 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">Exit probabilities: baseline vs distilled vs reference</text>',
    ]
    # axes and y ticks every 0.1
    x0, y0 = _ML, _H - _MB
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{_W - _MR}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{_MT}" stroke="black"/>')
    tick = 0.0
    while tick <= ymax + 1e-9:
        y = y0 - plot_h * (tick / ymax)
        parts.append(
            f'<line x1="{x0 - 4}" y1="{_fmt(y)}" x2="{x0}" y2="{_fmt(y)}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{x0 - 8}" y="{_fmt(y + 4)}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11">{tick:.1f}</text>'
        )
        tick += 0.1
    for e in range(N_EXITS):
        gx = x0 + e * group_w
        for j, s in enumerate(SERIES):
            v = float(values[s][e])
            h = plot_h * (v / ymax)
            bx = gx + bar_w * (j + 0.5)
            parts.append(
                f'<rect x="{_fmt(bx)}" y="{_fmt(y0 - h)}" width="{_fmt(bar_w)}" '
                f'height="{_fmt(h)}" fill="{_COLORS[s]}"/>'
            )
        parts.append(
            f'<text x="{_fmt(gx + group_w / 2)}" y="{y0 + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">Exit {e + 1}</text>'
        )
    # legend
    lx = _ML + 10
    for j, s in enumerate(SERIES):
        ly = _MT + 14 * j
        parts.append(f'<rect x="{lx}" y="{ly}" width="10" height="10" fill="{_COLORS[s]}"/>')
        parts.append(
            f'<text x="{lx + 16}" y="{ly + 9}" font-family="sans-serif" font-size="11">'
            f"{_LABELS[s]}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_report_svg(report, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report_to_svg(report))
