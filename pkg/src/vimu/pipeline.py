"""Experiment orchestration: preprocessing, splits, training, and reports.

``run_experiment`` drives the full comparison on one dataset: preprocess
every usable trial through both signal chains, build the experiment split,
train the adversarial generator on its cohort, synthesize virtual motion
windows for the recognition subjects, then train and evaluate the requested
arms (muscle-only, muscle + virtual motion, muscle + real motion) per
subject. A leakage guard checks every training batch's (subject, trial)
tags against the split plan.
"""
from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sigproc
from .data import Dataset, DatabaseProfile, SplitPlan, make_split, resolve_profile
from .errors import ConfigError, DataError, LeakageError
from .fusion import (
    ClfTrainConfig,
    FusionConfig,
    StreamConfig,
    build_multimodal,
    build_unimodal,
    predict,
    save_classifier_bundle,
    train_classifier,
)
from .gan import (
    GanTrainConfig,
    GeneratorBundle,
    GeneratorConfig,
    data_fingerprint,
    generate_virtual,
    save_generator_bundle,
    train_gan,
)
from .sigproc import PreprocSpec, apply_norm, fit_stats

ARMS = ("unimodal", "virtual_multimodal", "real_multimodal")


def derive_seed(base: int, *parts) -> int:
    """Stable child seed from a base seed and a role path."""
    key = tuple(zlib.crc32(str(p).encode("utf-8")) for p in parts)
    seq = np.random.SeedSequence(entropy=int(base), spawn_key=key)
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ClassifierSpec:
    """Network widths for the recognition models (full scale by default)."""

    conv_maps: int = 64
    lc_maps: int = 64
    dense_units: int = 512
    fusion_hidden: int = 512
    dropout: float = 0.5

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierSpec":
        return cls(**d)

    def stream(self, window_frames: int, channels: int) -> StreamConfig:
        return StreamConfig(window_frames, channels, self.conv_maps, self.lc_maps,
                            self.dense_units, self.dropout)


@dataclass
class ExperimentConfig:
    """Everything one ``run`` needs; serializable to a flat JSON document."""

    dataset: str
    out_dir: str = "out"
    profile: str = "synthetic"
    experiment: str = "exp2"
    arms: tuple = ARMS
    seed: int = 0
    preproc: PreprocSpec = field(default_factory=PreprocSpec)
    gan: GanTrainConfig = field(default_factory=GanTrainConfig)
    classifier: ClfTrainConfig = field(default_factory=ClfTrainConfig)
    network: ClassifierSpec = field(default_factory=ClassifierSpec)
    report_formats: tuple = ("json", "csv", "svg")

    def __post_init__(self):
        if not self.arms:
            raise ConfigError("at least one arm is required")
        for arm in self.arms:
            if arm not in ARMS:
                raise ConfigError(f"unknown arm {arm!r}")
        if self.experiment not in ("exp1", "exp2"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "out_dir": self.out_dir,
            "profile": self.profile,
            "experiment": self.experiment,
            "arms": list(self.arms),
            "seed": self.seed,
            "preproc": self.preproc.to_dict(),
            "gan": self.gan.to_dict(),
            "classifier": self.classifier.to_dict(),
            "network": self.network.to_dict(),
            "report_formats": list(self.report_formats),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {
            "dataset", "out_dir", "profile", "experiment", "arms", "seed",
            "preproc", "gan", "classifier", "network", "report_formats",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("config needs a 'dataset' path")
        return cls(
            dataset=d["dataset"],
            out_dir=d.get("out_dir", "out"),
            profile=d.get("profile", "synthetic"),
            experiment=d.get("experiment", "exp2"),
            arms=tuple(d.get("arms", ARMS)),
            seed=int(d.get("seed", 0)),
            preproc=PreprocSpec.from_dict(d["preproc"]) if "preproc" in d else PreprocSpec(),
            gan=GanTrainConfig.from_dict(d["gan"]) if "gan" in d else GanTrainConfig(),
            classifier=ClfTrainConfig.from_dict(d["classifier"]) if "classifier" in d else ClfTrainConfig(),
            network=ClassifierSpec.from_dict(d["network"]) if "network" in d else ClassifierSpec(),
            report_formats=tuple(d.get("report_formats", ("json", "csv", "svg"))),
        )

    def fingerprint(self) -> str:
        # Output location does not define the experiment.
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def desk_config(dataset: str, out_dir: str = "out", seed: int = 0,
                arms: tuple = ARMS) -> ExperimentConfig:
    """Desk-scale defaults sized for the seeded synthetic dataset.

    Slimmer network widths and a subsampled generator cohort keep a full
    three-arm run within a single-core budget of a couple of minutes; the
    protocol (split rules, schedules, epochs) is unchanged.
    """
    return ExperimentConfig(
        dataset=dataset,
        out_dir=out_dir,
        profile="synthetic",
        experiment="exp2",
        arms=tuple(arms),
        seed=seed,
        preproc=PreprocSpec(window_ms=200.0, step_ms=100.0, decimation=4),
        gan=GanTrainConfig(epochs=300, batch_size=16, max_pairs=384,
                           generator_maps=(8, 4, 1), snapshot_every=10, seed=seed),
        classifier=ClfTrainConfig(seed=seed),
        network=ClassifierSpec(conv_maps=8, lc_maps=8, dense_units=32, fusion_hidden=32),
    )


# ---------------------------------------------------------------------------
# window extraction

@dataclass
class WindowTable:
    """All windows of a dataset, both chains, with (subject, trial) tags."""

    semg_gan: np.ndarray        # (n, k, c1) generation-chain muscle windows
    semg_hgr: np.ndarray        # (n, k, c1) recognition-chain muscle windows
    imu: np.ndarray | None      # (n, k, c2) motion windows, if recorded
    labels: np.ndarray
    subjects: np.ndarray
    trials: np.ndarray
    origins: np.ndarray
    meta: dict = field(default_factory=dict)

    def select(self, mask: np.ndarray) -> "WindowTable":
        return WindowTable(
            semg_gan=self.semg_gan[mask],
            semg_hgr=self.semg_hgr[mask],
            imu=self.imu[mask] if self.imu is not None else None,
            labels=self.labels[mask],
            subjects=self.subjects[mask],
            trials=self.trials[mask],
            origins=self.origins[mask],
            meta=self.meta,
        )

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def extract_windows(dataset: Dataset, profile: DatabaseProfile, spec: PreprocSpec,
                    subjects=None, trials=None) -> WindowTable:
    """Trim, filter, decimate, and segment every requested trial."""
    from .data import trim_trial

    manifest = dataset.manifest
    subjects = sorted(manifest.subjects) if subjects is None else sorted(subjects)
    trials = list(profile.usable_trials) if trials is None else list(trials)
    gan_parts, hgr_parts, imu_parts = [], [], []
    labels, subj_tags, trial_tags, origins = [], [], [], []
    for subject in subjects:
        for gesture in range(manifest.gestures):
            for trial in trials:
                record = dataset.load_trial(subject, gesture, trial)
                if profile.trim is not None:
                    record, _ = trim_trial(
                        record, profile.trim.rest_lead_s, profile.trim.action_s,
                        profile.trim.rest_keep_s,
                    )
                semg_gan = sigproc.segment_series(sigproc.gan_chain_semg(record.semg, spec), spec)
                semg_hgr = sigproc.segment_series(sigproc.hgr_chain_semg(record.semg, spec), spec)
                if len(semg_gan) != len(semg_hgr):
                    raise DataError("chain window counts diverged")
                gan_parts.append(sigproc.stack_windows(semg_gan))
                hgr_parts.append(sigproc.stack_windows(semg_hgr))
                if record.imu is not None:
                    imu_windows = sigproc.segment_series(sigproc.imu_chain(record.imu, spec), spec)
                    if len(imu_windows) != len(semg_gan):
                        raise DataError("motion window count diverged from muscle windows")
                    imu_parts.append(sigproc.stack_windows(imu_windows))
                count = len(semg_gan)
                labels.extend([gesture] * count)
                subj_tags.extend([subject] * count)
                trial_tags.extend([trial] * count)
                origins.extend(w.origin_frame for w in semg_gan)
    if not labels:
        raise DataError("no windows extracted")
    return WindowTable(
        semg_gan=np.concatenate(gan_parts, axis=0).astype(np.float32),
        semg_hgr=np.concatenate(hgr_parts, axis=0).astype(np.float32),
        imu=np.concatenate(imu_parts, axis=0).astype(np.float32) if imu_parts else None,
        labels=np.asarray(labels, dtype=np.int32),
        subjects=np.asarray(subj_tags, dtype=np.int32),
        trials=np.asarray(trial_tags, dtype=np.int32),
        origins=np.asarray(origins, dtype=np.int64),
        meta={"preproc": spec.to_dict(), "dataset": manifest.name, "profile": profile.name},
    )


def save_window_table(path, table: WindowTable):
    arrays = {
        "semg_gan": table.semg_gan,
        "semg_hgr": table.semg_hgr,
        "labels": table.labels,
        "subjects": table.subjects,
        "trials": table.trials,
        "origins": table.origins,
        "meta_json": np.str_(json.dumps(table.meta, sort_keys=True)),
    }
    if table.imu is not None:
        arrays["imu"] = table.imu
    np.savez(path, **arrays)


def load_window_table(path) -> WindowTable:
    with np.load(path, allow_pickle=False) as z:
        return WindowTable(
            semg_gan=z["semg_gan"],
            semg_hgr=z["semg_hgr"],
            imu=z["imu"] if "imu" in z.files else None,
            labels=z["labels"],
            subjects=z["subjects"],
            trials=z["trials"],
            origins=z["origins"],
            meta=json.loads(str(z["meta_json"])),
        )


# ---------------------------------------------------------------------------
# leakage guard

def validate_plan(plan: SplitPlan):
    if set(plan.clf_train_trials) & set(plan.clf_test_trials):
        raise LeakageError("split plan has overlapping train and test trials")


def assert_no_leakage(plan: SplitPlan, subjects: np.ndarray, trials: np.ndarray, role: str):
    """Check window tags against the plan before a training or eval step."""
    validate_plan(plan)
    pairs = set(zip(subjects.tolist(), trials.tolist()))
    test_pairs = {
        (s, t) for s in plan.recognition_subjects for t in plan.clf_test_trials
    }
    if role == "gan":
        allowed = {(s, t) for s in plan.gan_subjects for t in plan.gan_train_trials}
        if not pairs <= allowed:
            raise LeakageError(f"generator training touches out-of-plan trials: {sorted(pairs - allowed)[:4]}")
        if pairs & test_pairs:
            raise LeakageError("generator training touches recognition test trials")
    elif role == "clf_train":
        allowed = {(s, t) for s in plan.recognition_subjects for t in plan.clf_train_trials}
        if not pairs <= allowed:
            raise LeakageError(f"classifier training touches out-of-plan trials: {sorted(pairs - allowed)[:4]}")
    elif role == "clf_test":
        if not pairs <= test_pairs:
            raise LeakageError("evaluation touches non-test trials")
    else:
        raise ConfigError(f"unknown leakage role {role!r}")


# ---------------------------------------------------------------------------
# metrics

def compute_accuracy(predictions, labels) -> float:
    """Fraction of windows whose predicted class matches the truth."""
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape or p.size == 0:
        raise DataError("predictions and labels must be equal-length and non-empty")
    return float(np.mean(p == y))


def trial_majority_accuracy(predictions, labels, gestures, trials) -> float:
    """Majority vote over each recorded trial; ties go to the lowest class."""
    p = np.asarray(predictions)
    y = np.asarray(labels)
    keys = list(zip(np.asarray(gestures).tolist(), np.asarray(trials).tolist()))
    votes = {}
    truth = {}
    for key, pred, lab in zip(keys, p.tolist(), y.tolist()):
        votes.setdefault(key, []).append(pred)
        truth[key] = lab
    correct = 0
    for key, preds in votes.items():
        counts = np.bincount(preds)
        correct += int(counts.argmax() == truth[key])
    return correct / len(votes)


def aggregate(values) -> tuple:
    """Mean and sample standard deviation (n - 1); std is 0 for one value."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise DataError("nothing to aggregate")
    mean = float(arr.mean())
    std = 0.0 if arr.size == 1 else float(arr.std(ddof=1))
    return mean, std


@dataclass
class MetricsReport:
    """Per-subject accuracies, per-arm summaries, and arm deltas."""

    per_subject: dict
    arm_summary: dict
    deltas: dict
    config_fingerprint: str
    seed: int
    dataset: str
    profile: str
    experiment: str

    def to_dict(self) -> dict:
        return {
            "vimu_report": 1,
            "per_subject": self.per_subject,
            "arm_summary": self.arm_summary,
            "deltas": self.deltas,
            "config_fingerprint": self.config_fingerprint,
            "seed": self.seed,
            "dataset": self.dataset,
            "profile": self.profile,
            "experiment": self.experiment,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        if d.get("vimu_report") != 1:
            raise DataError(f"unsupported report version {d.get('vimu_report')!r}")
        return cls(
            per_subject=d["per_subject"],
            arm_summary=d["arm_summary"],
            deltas=d["deltas"],
            config_fingerprint=d["config_fingerprint"],
            seed=d["seed"],
            dataset=d["dataset"],
            profile=d["profile"],
            experiment=d["experiment"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _summarize(per_subject: dict) -> dict:
    summary = {}
    for arm, rows in per_subject.items():
        mean, std = aggregate([r["window_accuracy"] for r in rows.values()])
        summary[arm] = {"mean": mean, "std": std}
    return summary


def _deltas(summary: dict) -> dict:
    deltas = {}
    if "virtual_multimodal" in summary and "unimodal" in summary:
        deltas["virtual_minus_unimodal"] = summary["virtual_multimodal"]["mean"] - summary["unimodal"]["mean"]
    if "real_multimodal" in summary and "virtual_multimodal" in summary:
        deltas["real_minus_virtual"] = summary["real_multimodal"]["mean"] - summary["virtual_multimodal"]["mean"]
    return deltas


# ---------------------------------------------------------------------------
# report emission

def emit_report(report: MetricsReport, out_dir, formats=("json", "csv", "svg")) -> list:
    """Write the report as JSON, CSV rows, and/or a grouped-bar SVG chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "json":
            path = out_dir / "report.json"
            path.write_text(report.to_json(), encoding="utf-8")
        elif fmt == "csv":
            path = out_dir / "report.csv"
            lines = ["arm,subject,window_accuracy,trial_majority_accuracy"]
            for arm in sorted(report.per_subject):
                for subject in sorted(report.per_subject[arm], key=int):
                    row = report.per_subject[arm][subject]
                    lines.append(
                        f"{arm},{subject},{row['window_accuracy']:.6f},{row['trial_majority_accuracy']:.6f}"
                    )
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        elif fmt == "svg":
            path = out_dir / "report.svg"
            path.write_text(render_report_svg(report), encoding="utf-8")
        else:
            raise ConfigError(f"unknown report format {fmt!r}")
        written.append(path)
    return written


def render_report_svg(report: MetricsReport) -> str:
    """Static grouped bars with std whiskers and a real-motion reference line."""
    arms = [a for a in ARMS if a in report.arm_summary]
    width, height = 480, 300
    left, bottom, top = 60, 40, 20
    plot_w, plot_h = width - left - 20, height - bottom - top
    bar_w = plot_w / max(len(arms), 1) * 0.6
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{left}" y="14" font-size="12">{report.dataset} / {report.experiment} '
        f'window accuracy (mean +/- std over subjects)</text>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = top + plot_h * (1.0 - frac)
        parts.append(f'<text x="{left - 38}" y="{y + 4}" font-size="10">{frac:.2f}</text>')
        parts.append(f'<line x1="{left - 4}" y1="{y}" x2="{left}" y2="{y}" stroke="black"/>')
    for i, arm in enumerate(arms):
        stats = report.arm_summary[arm]
        cx = left + plot_w * (i + 0.5) / len(arms)
        x = cx - bar_w / 2
        h = plot_h * stats["mean"]
        y = top + plot_h - h
        parts.append(f'<g class="bar-group" id="{arm}">')
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w:.1f}" height="{h:.1f}" fill="#5b8db8"/>')
        lo = top + plot_h * (1.0 - max(stats["mean"] - stats["std"], 0.0))
        hi = top + plot_h * (1.0 - min(stats["mean"] + stats["std"], 1.0))
        parts.append(f'<line x1="{cx:.1f}" y1="{lo:.1f}" x2="{cx:.1f}" y2="{hi:.1f}" stroke="black"/>')
        parts.append(f'<text x="{cx:.1f}" y="{height - 22}" font-size="10" text-anchor="middle">{arm}</text>')
        parts.append(f'<text x="{cx:.1f}" y="{y - 4:.1f}" font-size="10" text-anchor="middle">{stats["mean"]:.3f}</text>')
        parts.append("</g>")
    if "real_multimodal" in report.arm_summary:
        ref = report.arm_summary["real_multimodal"]["mean"]
        y = top + plot_h * (1.0 - ref)
        parts.append(
            f'<line class="reference" x1="{left}" y1="{y:.1f}" x2="{left + plot_w}" y2="{y:.1f}" '
            f'stroke="red" stroke-dasharray="6,3"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# the full pipeline

def _fit_stream_stats(arrays: np.ndarray):
    return fit_stats(arrays.reshape(-1, arrays.shape[-1]))


def run_experiment(cfg: ExperimentConfig, write_outputs: bool = True) -> MetricsReport:
    """Run the requested arms end to end and aggregate per-subject accuracy."""
    dataset = Dataset(cfg.dataset)
    profile = resolve_profile(cfg.profile, dataset.manifest)
    plan = make_split(dataset.manifest, cfg.experiment, profile)
    validate_plan(plan)
    out_dir = Path(cfg.out_dir)
    if write_outputs:
        out_dir.mkdir(parents=True, exist_ok=True)

    need_real = "real_multimodal" in cfg.arms
    need_virtual = "virtual_multimodal" in cfg.arms
    if (need_real or need_virtual) and dataset.manifest.imu_channels < 1:
        raise DataError("the requested arms need motion channels, dataset has none")

    table = extract_windows(dataset, profile, cfg.preproc)
    if table.imu is None and (need_real or need_virtual):
        raise DataError("motion windows missing for the requested arms")
    k = table.semg_hgr.shape[1]

    # Generator training on its cohort, then virtual-window synthesis.
    bundle = None
    virtual = None
    if need_virtual:
        gan_mask = np.isin(table.subjects, plan.gan_subjects) & np.isin(table.trials, plan.gan_train_trials)
        gan_table = table.select(gan_mask)
        assert_no_leakage(plan, gan_table.subjects, gan_table.trials, "gan")
        semg_stats = _fit_stream_stats(gan_table.semg_gan)
        imu_stats = _fit_stream_stats(gan_table.imu)
        semg_norm = apply_norm(gan_table.semg_gan, semg_stats, "zscore").astype(np.float32)
        imu_norm = apply_norm(gan_table.imu, imu_stats, "minmax_pm1").astype(np.float32)
        gan_cfg = GanTrainConfig.from_dict({**cfg.gan.to_dict(), "seed": derive_seed(cfg.seed, "gan")})
        gen_params, disc_params, gan_history = train_gan(semg_norm, imu_norm, gan_cfg)
        bundle = GeneratorBundle(
            cfg=GeneratorConfig(k, table.semg_gan.shape[2], table.imu.shape[2],
                                tconv_maps=gan_cfg.generator_maps,
                                skip_final_bn=gan_cfg.skip_final_bn),
            params=gen_params,
            semg_stats=semg_stats,
            imu_stats=imu_stats,
            seed=gan_cfg.seed,
            data_fingerprint=data_fingerprint(semg_norm, imu_norm),
            extra={"epochs": gan_cfg.epochs, "pairs": int(semg_norm.shape[0])},
        )
        if write_outputs:
            from .gan import DiscriminatorConfig

            save_generator_bundle(out_dir / "gan", bundle, disc_params,
                                  DiscriminatorConfig(k, table.imu.shape[2],
                                                      conv_maps=gan_cfg.discriminator_maps,
                                                      dropout=gan_cfg.dropout))
            (out_dir / "gan" / "history.json").write_text(
                json.dumps(gan_history, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )
        semg_for_generator = apply_norm(table.semg_gan, semg_stats, "zscore").astype(np.float32)
        virtual = generate_virtual(bundle, semg_for_generator).astype(np.float32)

    rec_mask = np.isin(table.subjects, plan.recognition_subjects)
    train_mask = rec_mask & np.isin(table.trials, plan.clf_train_trials)
    test_mask = rec_mask & np.isin(table.trials, plan.clf_test_trials)
    classes = dataset.manifest.gestures

    per_subject = {}
    for arm in cfg.arms:
        if arm == "unimodal":
            stream_data = {"semg": table.semg_hgr}
        elif arm == "virtual_multimodal":
            stream_data = {"semg": table.semg_hgr, "imu": virtual}
        else:
            stream_data = {"semg": table.semg_hgr, "imu": table.imu}

        # Per-arm input normalization, fitted on the training cohort only.
        stream_stats = {name: _fit_stream_stats(arr[train_mask]) for name, arr in stream_data.items()}
        normalized = {
            name: apply_norm(arr, stream_stats[name], "zscore").astype(np.float32)
            for name, arr in stream_data.items()
        }
        names = list(normalized)

        pretrained = None
        if cfg.classifier.pretrain:
            assert_no_leakage(plan, table.subjects[train_mask], table.trials[train_mask], "clf_train")
            pretrained = _build_model(cfg, names, normalized, k, classes,
                                      derive_seed(cfg.seed, arm, "pretrain"))
            pool_cfg = ClfTrainConfig.from_dict(
                {**cfg.classifier.to_dict(), "seed": derive_seed(cfg.seed, arm, "pretrain", "sgd"), "pretrain": False}
            )
            train_classifier(pretrained, [normalized[n][train_mask] for n in names],
                             table.labels[train_mask], pool_cfg)

        arm_rows = {}
        for subject in plan.recognition_subjects:
            s_train = train_mask & (table.subjects == subject)
            s_test = test_mask & (table.subjects == subject)
            assert_no_leakage(plan, table.subjects[s_train], table.trials[s_train], "clf_train")
            assert_no_leakage(plan, table.subjects[s_test], table.trials[s_test], "clf_test")
            seed = derive_seed(cfg.seed, arm, "subject", subject)
            if pretrained is not None:
                model = pretrained.clone()
            else:
                model = _build_model(cfg, names, normalized, k, classes, seed)
            subj_cfg = ClfTrainConfig.from_dict(
                {**cfg.classifier.to_dict(), "seed": derive_seed(cfg.seed, arm, "sgd", subject), "pretrain": False}
            )
            train_classifier(model, [normalized[n][s_train] for n in names],
                             table.labels[s_train], subj_cfg)
            preds, _ = predict(model, [normalized[n][s_test] for n in names])
            arm_rows[str(subject)] = {
                "window_accuracy": compute_accuracy(preds, table.labels[s_test]),
                "trial_majority_accuracy": trial_majority_accuracy(
                    preds, table.labels[s_test], table.labels[s_test], table.trials[s_test]
                ),
            }
            if write_outputs:
                save_classifier_bundle(
                    out_dir / "classifiers" / arm / f"subject_{subject:02d}",
                    model, stream_stats, seed,
                    extra={"arm": arm, "subject": subject},
                )
        per_subject[arm] = arm_rows

    summary = _summarize(per_subject)
    report = MetricsReport(
        per_subject=per_subject,
        arm_summary=summary,
        deltas=_deltas(summary),
        config_fingerprint=cfg.fingerprint(),
        seed=cfg.seed,
        dataset=dataset.manifest.name,
        profile=profile.name,
        experiment=cfg.experiment,
    )
    if write_outputs:
        emit_report(report, out_dir, cfg.report_formats)
    return report


def _build_model(cfg: ExperimentConfig, names, normalized, k, classes, seed):
    fusion_cfg = FusionConfig(classes=classes, hidden_units=cfg.network.fusion_hidden)
    semg_stream = cfg.network.stream(k, normalized["semg"].shape[2])
    if names == ["semg"]:
        return build_unimodal(semg_stream, fusion_cfg, seed)
    imu_stream = cfg.network.stream(k, normalized["imu"].shape[2])
    return build_multimodal(semg_stream, imu_stream, fusion_cfg, seed)
