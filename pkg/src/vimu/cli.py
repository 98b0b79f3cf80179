"""Command-line interface.

Subcommands: synth, preprocess, train-gan, generate-imu, train-clf,
evaluate, run, report. Exit codes: 0 success, 1 usage error, 2 data error,
3 training divergence. The VIMU_SEED environment variable overrides any
configured seed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import data as vdata
from . import fusion, gan, pipeline, sigproc
from .errors import ConfigError, DataError, DivergenceError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_preproc_flags(p):
    p.add_argument("--window-ms", type=float, default=200.0)
    p.add_argument("--step-ms", type=float, default=10.0)
    p.add_argument("--decimation", type=int, default=20)
    p.add_argument("--rms-ms", type=float, default=100.0)
    p.add_argument("--mavg-ms", type=float, default=100.0)
    p.add_argument("--butter-cutoff-hz", type=float, default=1.0)


def _preproc_from_args(args) -> sigproc.PreprocSpec:
    return sigproc.PreprocSpec(
        window_ms=args.window_ms, step_ms=args.step_ms, decimation=args.decimation,
        rms_ms=args.rms_ms, mavg_ms=args.mavg_ms, butter_cutoff_hz=args.butter_cutoff_hz,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="vimu", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--gestures", type=int, default=4)
    p.add_argument("--trials", type=int, default=4)
    p.add_argument("--rate", type=float, default=200.0)
    p.add_argument("--semg-channels", type=int, default=8)
    p.add_argument("--imu-channels", type=int, default=3)
    p.add_argument("--imu-kind", choices=("acc", "euler"), default="acc")
    p.add_argument("--trial-seconds", type=float, default=6.0)

    p = sub.add_parser("preprocess", help="extract windows through both chains")
    p.add_argument("--dataset", required=True)
    p.add_argument("--profile", default="synthetic")
    p.add_argument("--out", required=True, help="output .npz window table")
    _add_preproc_flags(p)

    p = sub.add_parser("train-gan", help="train the virtual-motion generator")
    p.add_argument("--windows", required=True, help="window table from preprocess")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--epochs", type=int, default=10000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=2e-4)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--loss-variant", choices=("nonsaturating", "minimax"), default="nonsaturating")
    p.add_argument("--max-pairs", type=int, default=None)
    p.add_argument("--generator-maps", default="32,16,1")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("generate-imu", help="synthesize virtual motion windows")
    p.add_argument("--generator", required=True, help="bundle directory from train-gan")
    p.add_argument("--windows", required=True)
    p.add_argument("--out", required=True, help="output .npz with a virtual_imu array")

    p = sub.add_parser("train-clf", help="train a recognition model")
    p.add_argument("--windows", required=True)
    p.add_argument("--virtual", default=None, help="optional virtual windows .npz")
    p.add_argument("--stream", choices=("semg", "semg+imu", "semg+virtual"), default="semg")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.add_argument("--epochs", type=int, default=28)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--conv-maps", type=int, default=64)
    p.add_argument("--lc-maps", type=int, default=64)
    p.add_argument("--dense-units", type=int, default=512)
    p.add_argument("--fusion-hidden", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("evaluate", help="predict windows and emit a CSV")
    p.add_argument("--model", required=True, help="bundle directory from train-clf")
    p.add_argument("--windows", required=True)
    p.add_argument("--virtual", default=None)
    p.add_argument("--out", required=True, help="output predictions CSV")

    p = sub.add_parser("run", help="full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--arms", default=None, help="comma-separated arm list")
    p.add_argument("--experiment", choices=("exp1", "exp2"), default=None)

    p = sub.add_parser("report", help="re-emit formats from a report JSON")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--formats", default="json,csv,svg")
    return parser


def _cmd_synth(args) -> int:
    cfg = vdata.SynthConfig(
        subjects=args.subjects, gestures=args.gestures, trials=args.trials,
        sample_rate_hz=args.rate, semg_channels=args.semg_channels,
        imu_channels=args.imu_channels, imu_kind=args.imu_kind,
        trial_seconds=args.trial_seconds, seed=args.seed,
    )
    manifest = vdata.synth_generate(cfg, args.out)
    print(f"wrote {len(manifest.index)} trials to {args.out}")
    return 0


def _cmd_preprocess(args) -> int:
    dataset = vdata.Dataset(args.dataset)
    profile = vdata.resolve_profile(args.profile, dataset.manifest)
    table = pipeline.extract_windows(dataset, profile, _preproc_from_args(args))
    pipeline.save_window_table(args.out, table)
    print(f"wrote {len(table)} windows to {args.out}")
    return 0


def _cmd_train_gan(args) -> int:
    table = pipeline.load_window_table(args.windows)
    if table.imu is None:
        raise DataError("generator training needs motion windows in the table")
    maps = tuple(int(v) for v in args.generator_maps.split(","))
    cfg = gan.GanTrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.learning_rate,
        dropout=args.dropout, loss_variant=args.loss_variant, seed=args.seed,
        max_pairs=args.max_pairs, generator_maps=maps,
    )
    semg_stats = sigproc.fit_stats(table.semg_gan.reshape(-1, table.semg_gan.shape[-1]))
    imu_stats = sigproc.fit_stats(table.imu.reshape(-1, table.imu.shape[-1]))
    semg_norm = sigproc.apply_norm(table.semg_gan, semg_stats, "zscore").astype(np.float32)
    imu_norm = sigproc.apply_norm(table.imu, imu_stats, "minmax_pm1").astype(np.float32)
    gen_params, disc_params, history = gan.train_gan(semg_norm, imu_norm, cfg)
    k, c1 = table.semg_gan.shape[1], table.semg_gan.shape[2]
    c2 = table.imu.shape[2]
    bundle = gan.GeneratorBundle(
        cfg=gan.GeneratorConfig(k, c1, c2, tconv_maps=maps, skip_final_bn=cfg.skip_final_bn),
        params=gen_params, semg_stats=semg_stats, imu_stats=imu_stats, seed=cfg.seed,
        data_fingerprint=gan.data_fingerprint(semg_norm, imu_norm),
    )
    gan.save_generator_bundle(
        args.out, bundle, disc_params,
        gan.DiscriminatorConfig(k, c2, conv_maps=cfg.discriminator_maps, dropout=cfg.dropout),
    )
    Path(args.out, "history.json").write_text(json.dumps(history, indent=2) + "\n", encoding="utf-8")
    print(f"trained generator on {semg_norm.shape[0]} pairs; bundle in {args.out}")
    return 0


def _cmd_generate_imu(args) -> int:
    bundle = gan.load_generator_bundle(args.generator)
    table = pipeline.load_window_table(args.windows)
    semg_norm = gan.normalize_generator_inputs(bundle, table.semg_gan)
    virtual = gan.generate_virtual(bundle, semg_norm.astype(np.float32))
    np.savez(args.out, virtual_imu=virtual.astype(np.float32))
    print(f"wrote {virtual.shape[0]} virtual windows to {args.out}")
    return 0


def _load_virtual(path) -> np.ndarray:
    with np.load(path, allow_pickle=False) as z:
        if "virtual_imu" not in z.files:
            raise DataError(f"{path} holds no virtual_imu array")
        return z["virtual_imu"]


def _cmd_train_clf(args) -> int:
    table = pipeline.load_window_table(args.windows)
    streams = {"semg": table.semg_hgr}
    if args.stream == "semg+imu":
        if table.imu is None:
            raise DataError("table has no real motion windows")
        streams["imu"] = table.imu
    elif args.stream == "semg+virtual":
        if args.virtual is None:
            raise DataError("--virtual is required for the semg+virtual stream layout")
        streams["imu"] = _load_virtual(args.virtual)
    classes = int(table.labels.max()) + 1
    stats = {name: sigproc.fit_stats(arr.reshape(-1, arr.shape[-1])) for name, arr in streams.items()}
    normalized = [sigproc.apply_norm(arr, stats[name], "zscore").astype(np.float32)
                  for name, arr in streams.items()]
    k = table.semg_hgr.shape[1]
    spec = pipeline.ClassifierSpec(conv_maps=args.conv_maps, lc_maps=args.lc_maps,
                                   dense_units=args.dense_units, fusion_hidden=args.fusion_hidden)
    fusion_cfg = fusion.FusionConfig(classes=classes, hidden_units=spec.fusion_hidden)
    if len(streams) == 1:
        model = fusion.build_unimodal(spec.stream(k, table.semg_hgr.shape[2]), fusion_cfg, args.seed)
    else:
        model = fusion.build_multimodal(
            spec.stream(k, table.semg_hgr.shape[2]),
            spec.stream(k, streams["imu"].shape[2]),
            fusion_cfg, args.seed,
        )
    decay = tuple(d for d in (16, 24) if d < args.epochs)
    cfg = fusion.ClfTrainConfig(batch_size=args.batch_size, epochs=args.epochs,
                                decay_epochs=decay, seed=args.seed)
    _, history = fusion.train_classifier(model, normalized, table.labels, cfg)
    fusion.save_classifier_bundle(args.out, model, stats, args.seed,
                                  extra={"train_accuracy": history["accuracy"][-1] if history["accuracy"] else None})
    print(f"trained classifier ({len(streams)} stream(s), {classes} classes); bundle in {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    model, stats, _meta = fusion.load_classifier_bundle(args.model)
    table = pipeline.load_window_table(args.windows)
    streams = {"semg": table.semg_hgr}
    if "imu" in model.stream_cfgs:
        if args.virtual is not None:
            streams["imu"] = _load_virtual(args.virtual)
        elif table.imu is not None:
            streams["imu"] = table.imu
        else:
            raise DataError("model expects a motion stream but none was supplied")
    normalized = [sigproc.apply_norm(streams[name], stats[name], "zscore").astype(np.float32)
                  for name in model.stream_cfgs]
    preds, probs = fusion.predict(model, normalized)
    lines = ["window_id,true_label,predicted_label,max_prob"]
    for i in range(len(preds)):
        wid = f"s{table.subjects[i]}_g{table.labels[i]}_t{table.trials[i]}_o{table.origins[i]}"
        lines.append(f"{wid},{table.labels[i]},{preds[i]},{probs[i].max():.6f}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    acc = pipeline.compute_accuracy(preds, table.labels)
    print(f"accuracy {acc:.4f} over {len(preds)} windows; predictions in {args.out}")
    return 0


def _cmd_run(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if args.dataset is not None:
        raw["dataset"] = args.dataset
    if args.out is not None:
        raw["out_dir"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.arms is not None:
        raw["arms"] = [a.strip() for a in args.arms.split(",") if a.strip()]
    if args.experiment is not None:
        raw["experiment"] = args.experiment
    if "VIMU_SEED" in os.environ:
        raw["seed"] = int(os.environ["VIMU_SEED"])
    cfg = pipeline.ExperimentConfig.from_dict(raw)
    report = pipeline.run_experiment(cfg)
    for arm, stats in sorted(report.arm_summary.items()):
        print(f"{arm}: mean {stats['mean']:.4f} std {stats['std']:.4f}")
    print(f"report written under {cfg.out_dir}")
    return 0


def _cmd_report(args) -> int:
    with open(args.report, "r", encoding="utf-8") as fh:
        report = pipeline.MetricsReport.from_dict(json.load(fh))
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    written = pipeline.emit_report(report, args.out, formats)
    print("wrote " + ", ".join(str(p) for p in written))
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "train-gan": _cmd_train_gan,
    "generate-imu": _cmd_generate_imu,
    "train-clf": _cmd_train_clf,
    "evaluate": _cmd_evaluate,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (_UsageError, ConfigError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
