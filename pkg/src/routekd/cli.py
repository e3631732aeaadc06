"""Command-line pipeline: data generation through the final report.

Subcommands: gen-basic, gen-vr, augment, train-teacher, distill, eval,
run-all. Every artifact gets a sibling ``<name>.manifest.json`` recording
its checksum, its stage seed, and the checksums of the inputs it was
derived from, so a stale or foreign input is detectable. All outputs are
byte-deterministic for a fixed config and seed.
"""

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from routekd import config as cfg_mod
from routekd import data, distill, evaluate, gmm, schema, serialize
from routekd.backend import BACKEND
from routekd.config import RunConfig, resolve_config, stage_seed
from routekd.errors import CsvParseError, MissingArtifactError, ValidationError

# artifact filenames, relative to the run directory
F_CONFIG = "config.resolved.json"
F_BASIC = "basic.csv"
F_VR = "vr_seed.csv"
F_GMM = "gmm.json"
F_AUGMENTED = "vr_augmented.csv"
F_SCALER = "scaler.json"
F_TEACHER = "teacher.json"
F_TEACHER_TRACE = "teacher_trace.csv"
F_STUDENT = "student_standalone.json"
F_STUDENT_TRACE = "student_standalone_trace.csv"
F_DISTILLED = "student_distilled.json"
F_DISTILLED_TRACE = "student_distilled_trace.csv"
F_REPORT = "report.csv"
F_REPORT_SVG = "report.svg"

_PRODUCERS = {
    F_BASIC: "gen-basic",
    F_VR: "gen-vr",
    F_GMM: "augment",
    F_AUGMENTED: "augment",
    F_SCALER: "train-teacher",
    F_TEACHER: "train-teacher",
    F_STUDENT: "distill",
    F_DISTILLED: "distill",
}


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir, name, seed=None, rows=None, inputs=()):
    doc = {
        "artifact": name,
        "sha256": _sha256(out_dir / name),
        "inputs": {inp: _sha256(out_dir / inp) for inp in inputs},
    }
    if seed is not None:
        doc["seed"] = seed
    if rows is not None:
        doc["rows"] = rows
    path = out_dir / f"{name}.manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _require(out_dir, name):
    path = out_dir / name
    if not path.exists():
        raise MissingArtifactError(str(path), _PRODUCERS.get(name, "run-all"))
    return path


def _prepare_out(cfg):
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / F_CONFIG)
    return out_dir


# ---------------------------------------------------------------------------
# commands


def cmd_gen_basic(cfg):
    out_dir = _prepare_out(cfg)
    dist = data.baseline_distribution(
        cfg.travel_times, cfg.baseline_alpha, cfg.baseline_transform
    )
    seed = stage_seed(cfg.seed, cfg_mod.STAGE_BASIC)
    ds = data.sample_basic_data(dist, cfg.n_basic, cfg.travel_times, seed=seed)
    data.save_csv(ds, out_dir / F_BASIC)
    _write_manifest(out_dir, F_BASIC, seed=seed, rows=len(ds), inputs=[F_CONFIG])
    print(f"wrote {out_dir / F_BASIC} ({len(ds)} rows)")


def cmd_gen_vr(cfg):
    out_dir = _prepare_out(cfg)
    seed = stage_seed(cfg.seed, cfg_mod.STAGE_VR)
    ds = data.generate_synthetic_vr(cfg.scenario, cfg.n_participants, seed=seed)
    data.save_csv(ds, out_dir / F_VR)
    _write_manifest(out_dir, F_VR, seed=seed, rows=len(ds), inputs=[F_CONFIG])
    print(f"wrote {out_dir / F_VR} ({len(ds)} rows)")


def cmd_augment(cfg):
    out_dir = _prepare_out(cfg)
    vr_path = _require(out_dir, F_VR)
    corpus = data.load_csv(vr_path, provenance="synthetic-vr")
    mat = corpus.record_matrix()
    fit_seed = stage_seed(cfg.seed, cfg_mod.STAGE_GMM_FIT)
    if cfg.gmm.components is not None:
        model = gmm.fit_em(
            mat, cfg.gmm.components, max_iter=cfg.gmm.max_iter, tol=cfg.gmm.tol, seed=fit_seed
        )
    else:
        model = gmm.fit_em_bic(
            mat,
            k_range=range(1, cfg.gmm.max_components + 1),
            max_iter=cfg.gmm.max_iter,
            tol=cfg.gmm.tol,
            seed=fit_seed,
        )
    serialize.save_gmm(model, out_dir / F_GMM)
    _write_manifest(out_dir, F_GMM, seed=fit_seed, inputs=[F_VR, F_CONFIG])
    sample_seed = stage_seed(cfg.seed, cfg_mod.STAGE_GMM_SAMPLE)
    augmented = gmm.sample(
        model, cfg.n_augmented, schema.vr_schema(cfg.travel_times), seed=sample_seed
    )
    augmented.validate()
    data.save_csv(augmented, out_dir / F_AUGMENTED)
    _write_manifest(
        out_dir, F_AUGMENTED, seed=sample_seed, rows=len(augmented), inputs=[F_GMM, F_CONFIG]
    )
    print(f"wrote {out_dir / F_AUGMENTED} ({len(augmented)} rows, k={model.k})")


def cmd_train_teacher(cfg):
    out_dir = _prepare_out(cfg)
    aug_path = _require(out_dir, F_AUGMENTED)
    corpus = data.load_csv(aug_path, provenance="vr")
    train, test = data.split(
        corpus, cfg.train_fraction, seed=stage_seed(cfg.seed, cfg_mod.STAGE_SPLIT_VR)
    )
    train_cfg = distill.DistillationConfig(
        alpha=1.0,
        beta=0.0,
        epochs=cfg.teacher.epochs,
        batch_size=cfg.teacher.batch_size,
        learning_rate=cfg.teacher.learning_rate,
        seed=stage_seed(cfg.seed, cfg_mod.STAGE_TEACHER),
    )
    result = distill.pretrain_teacher(cfg.teacher.architecture, train, train_cfg, test=test)
    result.scaler.save(out_dir / F_SCALER)
    serialize.save_mlp(result.best_model, out_dir / F_TEACHER)
    result.trace.to_csv(out_dir / F_TEACHER_TRACE)
    _write_manifest(out_dir, F_SCALER, inputs=[F_AUGMENTED, F_CONFIG])
    _write_manifest(out_dir, F_TEACHER, seed=train_cfg.seed, inputs=[F_AUGMENTED, F_CONFIG])
    _write_manifest(out_dir, F_TEACHER_TRACE, inputs=[F_TEACHER])
    best_epoch, best = result.trace.best_epoch()
    print(
        f"wrote {out_dir / F_TEACHER} "
        f"(best epoch {best_epoch}, test accuracy {best.test_acc:.4f})"
    )


def _load_basic_split(cfg, out_dir):
    basic_path = _require(out_dir, F_BASIC)
    corpus = data.load_csv(basic_path, provenance="basic")
    return data.split(
        corpus, cfg.train_fraction, seed=stage_seed(cfg.seed, cfg_mod.STAGE_SPLIT_BASIC)
    )


def cmd_distill(cfg):
    out_dir = _prepare_out(cfg)
    teacher_path = _require(out_dir, F_TEACHER)
    scaler = data.TravelTimeScaler.load(_require(out_dir, F_SCALER))
    teacher = serialize.load_mlp(teacher_path).eval()
    train, test = _load_basic_split(cfg, out_dir)
    student_cfg = cfg.student.to_distillation_config(
        stage_seed(cfg.seed, cfg_mod.STAGE_STUDENT)
    )
    distilled = distill.distill(
        teacher, cfg.student.architecture, train, test, student_cfg, scaler=scaler
    )
    standalone = distill.train_student(
        cfg.student.architecture, train, test, student_cfg, scaler=scaler
    )
    serialize.save_mlp(distilled.best_model, out_dir / F_DISTILLED)
    distilled.trace.to_csv(out_dir / F_DISTILLED_TRACE)
    serialize.save_mlp(standalone.best_model, out_dir / F_STUDENT)
    standalone.trace.to_csv(out_dir / F_STUDENT_TRACE)
    inputs = [F_BASIC, F_TEACHER, F_SCALER, F_CONFIG]
    _write_manifest(out_dir, F_DISTILLED, seed=student_cfg.seed, inputs=inputs)
    _write_manifest(out_dir, F_DISTILLED_TRACE, inputs=[F_DISTILLED])
    _write_manifest(out_dir, F_STUDENT, seed=student_cfg.seed, inputs=inputs)
    _write_manifest(out_dir, F_STUDENT_TRACE, inputs=[F_STUDENT])
    print(
        f"wrote {out_dir / F_DISTILLED} (best test accuracy "
        f"{distilled.trace.best_test_accuracy():.4f}; standalone "
        f"{standalone.trace.best_test_accuracy():.4f})"
    )


def cmd_eval(cfg):
    out_dir = _prepare_out(cfg)
    scaler = data.TravelTimeScaler.load(_require(out_dir, F_SCALER))
    teacher = serialize.load_mlp(_require(out_dir, F_TEACHER)).eval()
    standalone = serialize.load_mlp(_require(out_dir, F_STUDENT)).eval()
    distilled = serialize.load_mlp(_require(out_dir, F_DISTILLED)).eval()
    vr_corpus = data.load_csv(_require(out_dir, F_VR), provenance="synthetic-vr")
    _, basic_test = _load_basic_split(cfg, out_dir)
    accuracies = {
        "teacher": evaluate.accuracy(teacher, basic_test, scaler=scaler),
        "student": evaluate.accuracy(standalone, basic_test, scaler=scaler),
        "distilled": evaluate.accuracy(distilled, basic_test, scaler=scaler),
    }
    baseline = data.baseline_distribution(
        cfg.travel_times, cfg.baseline_alpha, cfg.baseline_transform
    )
    model_dist = evaluate.predicted_exit_distribution(
        distilled, basic_test, mode=cfg.aggregation, scaler=scaler
    )
    reference = data.real_probabilities(cfg.reference_volumes)
    vr_empirical = data.empirical_exit_distribution(vr_corpus)
    report = evaluate.build_report(baseline, model_dist, reference, vr_empirical, accuracies)
    evaluate.report_to_csv(report, out_dir / F_REPORT)
    evaluate.save_report_svg(report, out_dir / F_REPORT_SVG)
    inputs = [F_BASIC, F_VR, F_TEACHER, F_STUDENT, F_DISTILLED, F_CONFIG]
    _write_manifest(out_dir, F_REPORT, inputs=inputs)
    _write_manifest(out_dir, F_REPORT_SVG, inputs=[F_REPORT])
    print(
        f"wrote {out_dir / F_REPORT} (distilled L1 {report.l1_model:.4f} "
        f"vs baseline L1 {report.l1_baseline:.4f})"
    )


_PIPELINE = ("gen-basic", "gen-vr", "augment", "train-teacher", "distill", "eval")


def cmd_run_all(cfg):
    for name in _PIPELINE:
        _COMMANDS[name](cfg)


def _run_one_seed(args):
    cfg_doc, seed = args
    cfg = RunConfig.from_json(cfg_doc)
    cfg.seed = seed
    cfg.out_dir = str(Path(cfg.out_dir) / f"seed-{seed}")
    cmd_run_all(cfg)
    return seed


def cmd_run_sweep(cfg, seeds):
    jobs = [(cfg.to_json(), s) for s in seeds]
    with ProcessPoolExecutor(max_workers=min(4, len(jobs))) as pool:
        for seed in pool.map(_run_one_seed, jobs):
            print(f"seed {seed} pipeline complete")


_COMMANDS = {
    "gen-basic": cmd_gen_basic,
    "gen-vr": cmd_gen_vr,
    "augment": cmd_augment,
    "train-teacher": cmd_train_teacher,
    "distill": cmd_distill,
    "eval": cmd_eval,
    "run-all": cmd_run_all,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="routekd",
        description="Exit-choice knowledge-distillation pipeline "
        f"(kernel backend: {BACKEND})",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", help=f"config JSON (or ${cfg_mod.CONFIG_ENV_VAR})")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", help="override the output directory")
        if name == "run-all":
            p.add_argument(
                "--seeds",
                help="comma-separated master seeds; runs one pipeline per seed "
                "in parallel under OUT/seed-<s>/",
            )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.config, args.seed, args.out)
        if args.command == "run-all" and getattr(args, "seeds", None):
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
            cmd_run_sweep(cfg, seeds)
        else:
            _COMMANDS[args.command](cfg)
    except (ValidationError, CsvParseError, MissingArtifactError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
