"""Adversarial generator: muscle windows in, virtual motion windows out.

The generator upsamples the channel axis with three transposed convolutions
(stride (1, 2) doubles the width per layer, the time axis stays put) and a
tanh dense head sized to the target window. The discriminator is a single
strided convolution plus a sigmoid unit. Training alternates one
discriminator step and one generator step per batch.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DivergenceError, StatsMismatchError
from .nn import checkpoint
from .nn.layers import LayerSpec, ParamSet, backprop, init_stack_params, run_stack
from .nn.losses import CLAMP_EPS, bce_loss, generator_adversarial_loss
from .nn.optim import AdamState, adam_step
from .nn.tensor import Tensor, add, no_grad, reshape
from .sigproc import ChannelStats, apply_norm, invert_norm


@dataclass(frozen=True)
class GeneratorConfig:
    """Geometry of the window-to-window generator.

    ``tconv_maps`` defaults to the full-scale stack (32, 16, 1); smaller
    desk-scale runs may narrow the first two stages, the final stage is
    always a single map. The dense head always has
    ``window_frames * imu_channels`` units.
    """

    window_frames: int
    semg_channels: int
    imu_channels: int
    tconv_maps: tuple = (32, 16, 1)
    skip_final_bn: bool = False

    def __post_init__(self):
        if min(self.window_frames, self.semg_channels, self.imu_channels) < 1:
            raise ConfigError("generator geometry fields must be >= 1")
        if len(self.tconv_maps) != 3 or self.tconv_maps[-1] != 1 or min(self.tconv_maps) < 1:
            raise ConfigError("tconv_maps must be three positive widths ending in 1")

    @property
    def dense_units(self) -> int:
        return self.window_frames * self.imu_channels

    def to_dict(self) -> dict:
        return {
            "window_frames": self.window_frames,
            "semg_channels": self.semg_channels,
            "imu_channels": self.imu_channels,
            "tconv_maps": list(self.tconv_maps),
            "skip_final_bn": self.skip_final_bn,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        d = dict(d)
        d["tconv_maps"] = tuple(d.get("tconv_maps", (32, 16, 1)))
        return cls(**d)


def generator_layers(cfg: GeneratorConfig) -> list:
    layers = []
    for i, maps in enumerate(cfg.tconv_maps, start=1):
        layers.append(
            LayerSpec(
                "tconv2d", f"up{i}", maps=maps, kernel=(3, 3), stride=(1, 2),
                padding=(1, 1), output_padding=(0, 1),
            )
        )
        last = i == len(cfg.tconv_maps)
        if not (last and cfg.skip_final_bn):
            layers.append(LayerSpec("batchnorm", f"bn{i}"))
        layers.append(LayerSpec("relu", f"relu{i}"))
    layers.append(LayerSpec("flatten", "flatten"))
    layers.append(LayerSpec("dense", "head", units=cfg.dense_units))
    layers.append(LayerSpec("tanh", "out"))
    return layers


def build_generator(cfg: GeneratorConfig, seed: int) -> ParamSet:
    """Initialize generator parameters (weights ~ N(0, 0.02))."""
    return init_stack_params(
        generator_layers(cfg), (1, cfg.window_frames, cfg.semg_channels),
        seed=seed, scheme="normal002",
    )


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Geometry of the real-vs-generated window critic."""

    window_frames: int
    imu_channels: int
    conv_maps: int = 16
    dropout: float = 0.2
    leaky_slope: float = 0.2

    def __post_init__(self):
        if (self.window_frames - 3) // 3 + 1 < 1 or (self.imu_channels - 3) // 3 + 1 < 1:
            raise ConfigError(
                f"window {self.window_frames}x{self.imu_channels} too small for a "
                "3x3 stride-3 valid convolution"
            )

    def to_dict(self) -> dict:
        return {
            "window_frames": self.window_frames,
            "imu_channels": self.imu_channels,
            "conv_maps": self.conv_maps,
            "dropout": self.dropout,
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminatorConfig":
        return cls(**d)


def discriminator_layers(cfg: DiscriminatorConfig) -> list:
    return [
        LayerSpec("conv2d", "conv", maps=cfg.conv_maps, kernel=(3, 3), stride=(3, 3), padding=(0, 0)),
        LayerSpec("batchnorm", "bn"),
        LayerSpec("leaky_relu", "lrelu", slope=cfg.leaky_slope),
        LayerSpec("dropout", "drop", rate=cfg.dropout),
        LayerSpec("flatten", "flatten"),
        LayerSpec("dense", "head", units=1),
        LayerSpec("sigmoid", "out"),
    ]


def build_discriminator(cfg: DiscriminatorConfig, seed: int) -> ParamSet:
    return init_stack_params(
        discriminator_layers(cfg), (1, cfg.window_frames, cfg.imu_channels),
        seed=seed, scheme="normal002",
    )


def generator_forward(cfg: GeneratorConfig, params: ParamSet, windows, mode: str,
                      update_stats: bool = True) -> Tensor:
    """(n, k, c1) or (n, 1, k, c1) windows -> (n, 1, k, c2) tensor in [-1, 1]."""
    x = np.asarray(windows)
    if x.ndim == 3:
        x = x[:, None, :, :]
    if x.shape[2:] != (cfg.window_frames, cfg.semg_channels):
        raise DataError(f"generator expects k x c1 = {cfg.window_frames} x {cfg.semg_channels} windows")
    out = run_stack(generator_layers(cfg), params, x, mode=mode, update_stats=update_stats)
    return reshape(out, (x.shape[0], 1, cfg.window_frames, cfg.imu_channels))


def discriminator_forward(cfg: DiscriminatorConfig, params: ParamSet, windows, mode: str,
                          rng=None, update_stats: bool = True) -> Tensor:
    x = windows if isinstance(windows, Tensor) else Tensor(np.asarray(windows))
    if x.data.ndim == 3:
        x = reshape(x, (x.data.shape[0], 1, x.data.shape[1], x.data.shape[2]))
    return run_stack(discriminator_layers(cfg), params, x, mode=mode, rng=rng,
                     update_stats=update_stats)


def gan_value(d_real, d_fake) -> float:
    """Mean log D(real) + mean log(1 - D(fake)), probabilities clamped."""
    dr = np.clip(np.asarray(d_real, dtype=np.float64), CLAMP_EPS, 1.0 - CLAMP_EPS)
    df = np.clip(np.asarray(d_fake, dtype=np.float64), CLAMP_EPS, 1.0 - CLAMP_EPS)
    return float(np.mean(np.log(dr)) + np.mean(np.log1p(-df)))


@dataclass
class GanTrainConfig:
    """Adversarial training hyperparameters.

    ``max_pairs`` optionally subsamples the training pairs (desk-scale runs);
    the full-scale default uses every pair for 10000 epochs.

    ``snapshot_every`` enables generator iterate selection: the loop keeps a
    snapshot every N epochs and returns the one whose outputs best correlate
    with the paired training targets. The adversarial objective alone pins
    the conditional map only up to rearrangements that preserve the window
    distribution, so the game keeps drifting through aligned and misaligned
    maps; selection on the training pairs (never test data) returns an
    aligned iterate. Off by default, matching plain final-iterate training.
    """

    epochs: int = 10000
    batch_size: int = 64
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    dropout: float = 0.2
    loss_variant: str = "nonsaturating"
    seed: int = 0
    max_pairs: int | None = None
    generator_maps: tuple = (32, 16, 1)
    discriminator_maps: int = 16
    skip_final_bn: bool = False
    snapshot_every: int | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch size must be >= 2 (batchnorm needs batch statistics)")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.loss_variant not in ("nonsaturating", "minimax"):
            raise ConfigError(f"unknown generator loss variant {self.loss_variant!r}")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1 when set")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["generator_maps"] = list(self.generator_maps)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GanTrainConfig":
        d = dict(d)
        if "generator_maps" in d:
            d["generator_maps"] = tuple(d["generator_maps"])
        return cls(**d)


def _seed_of(seq: np.random.SeedSequence) -> int:
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def train_gan(semg_windows, imu_windows, cfg: GanTrainConfig,
              gen_cfg: GeneratorConfig | None = None,
              disc_cfg: DiscriminatorConfig | None = None):
    """Alternating adversarial training on normalized window pairs.

    Inputs must already be normalized (muscle windows z-scored, motion
    windows in [-1, 1]). Per batch the discriminator maximizes the
    adversarial value via cross-entropy on real (label 1) and generated
    (label 0) windows, then the generator takes one step on its own loss.
    A step of one network never touches the other's parameters or running
    statistics. Returns (generator params, discriminator params, history).
    """
    semg = np.asarray(semg_windows, dtype=np.float32)
    imu = np.asarray(imu_windows, dtype=np.float32)
    if semg.ndim != 3 or imu.ndim != 3 or semg.shape[0] != imu.shape[0] or semg.shape[1] != imu.shape[1]:
        raise DataError("paired windows must share (count, frames) and be (n, k, C) arrays")
    n, k, c1 = semg.shape
    c2 = imu.shape[2]
    if gen_cfg is None:
        gen_cfg = GeneratorConfig(k, c1, c2, tconv_maps=cfg.generator_maps,
                                  skip_final_bn=cfg.skip_final_bn)
    if disc_cfg is None:
        disc_cfg = DiscriminatorConfig(k, c2, conv_maps=cfg.discriminator_maps,
                                       dropout=cfg.dropout)
    if (gen_cfg.window_frames, gen_cfg.semg_channels, gen_cfg.imu_channels) != (k, c1, c2):
        raise DataError("generator config geometry does not match the window pairs")

    root = np.random.SeedSequence(cfg.seed)
    s_gen, s_disc, s_shuffle, s_dropout = root.spawn(4)
    gen = build_generator(gen_cfg, _seed_of(s_gen))
    disc = build_discriminator(disc_cfg, _seed_of(s_disc))
    shuffle_rng = np.random.default_rng(s_shuffle)
    dropout_rng = np.random.default_rng(s_dropout)

    if cfg.max_pairs is not None and n > cfg.max_pairs:
        keep = shuffle_rng.choice(n, size=cfg.max_pairs, replace=False)
        semg, imu = semg[keep], imu[keep]
        n = cfg.max_pairs
    if n < cfg.batch_size:
        raise DataError(f"{n} training pairs but batch size {cfg.batch_size}")

    adam_g = AdamState(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
    adam_d = AdamState(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
    history = {"d_loss": [], "g_loss": [], "d_real": [], "d_fake": [], "value": []}
    snapshots = []

    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        sums = np.zeros(5)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            if idx.size < 2:
                continue
            real = imu[idx][:, None, :, :]
            cond = semg[idx][:, None, :, :]

            # Discriminator step on real (1) and detached generated (0) windows.
            with no_grad():
                fake_data = generator_forward(gen_cfg, gen, cond, mode="train",
                                              update_stats=False).data
            d_real = discriminator_forward(disc_cfg, disc, real, mode="train",
                                           rng=dropout_rng, update_stats=True)
            d_fake = discriminator_forward(disc_cfg, disc, Tensor(fake_data), mode="train",
                                           rng=dropout_rng, update_stats=True)
            d_loss = add(bce_loss(d_real, np.ones_like(d_real.data)),
                         bce_loss(d_fake, np.zeros_like(d_fake.data)))
            backprop(d_loss, disc)
            adam_step(adam_d, disc)

            # Generator step through a fresh discriminator pass.
            fake = generator_forward(gen_cfg, gen, cond, mode="train", update_stats=True)
            d_on_fake = discriminator_forward(disc_cfg, disc, fake, mode="train",
                                              rng=dropout_rng, update_stats=False)
            g_loss = generator_adversarial_loss(d_on_fake, cfg.loss_variant)
            backprop(g_loss, gen)
            adam_step(adam_g, gen)

            sums += (
                float(d_loss.data),
                float(g_loss.data),
                float(d_real.data.mean()),
                float(d_fake.data.mean()),
                gan_value(d_real.data, d_fake.data),
            )
            batches += 1
        if batches == 0:
            raise DataError("no usable batches (need at least 2 pairs per batch)")
        means = sums / batches
        if not np.all(np.isfinite(means)):
            raise DivergenceError(f"non-finite adversarial loss at epoch {epoch}")
        for key, value in zip(("d_loss", "g_loss", "d_real", "d_fake", "value"), means):
            history[key].append(float(value))
        if cfg.snapshot_every is not None and (epoch + 1) % cfg.snapshot_every == 0:
            snapshots.append((epoch + 1, {k: v.copy() for k, v in gen.state_dict().items()}))

    if cfg.snapshot_every is not None and cfg.epochs > 0:
        if not snapshots or snapshots[-1][0] != cfg.epochs:
            snapshots.append((cfg.epochs, {k: v.copy() for k, v in gen.state_dict().items()}))
        chosen, log = _select_generator_iterate(gen_cfg, gen, snapshots, semg, imu)
        gen.load_state_dict(chosen)
        history["selection"] = log
    return gen, disc, history


def _training_pair_correlation(gen_cfg, params, semg, imu, batch_size=1024) -> float:
    """Mean per-channel correlation of eval-mode outputs vs paired targets."""
    outs = []
    with no_grad():
        for start in range(0, semg.shape[0], batch_size):
            out = generator_forward(gen_cfg, params, semg[start : start + batch_size][:, None],
                                    mode="eval")
            outs.append(out.data[:, 0])
    virt = np.concatenate(outs, axis=0)
    corrs = []
    for c in range(imu.shape[2]):
        a = virt[:, :, c].ravel().astype(np.float64)
        b = imu[:, :, c].ravel().astype(np.float64)
        if a.std() == 0 or b.std() == 0:
            corrs.append(0.0)
        else:
            corrs.append(float(np.corrcoef(a, b)[0, 1]))
    return float(np.mean(corrs))


def _select_generator_iterate(gen_cfg, gen, snapshots, semg, imu):
    scratch = build_generator(gen_cfg, seed=0)
    best_state, best_epoch, best_corr = None, -1, -np.inf
    epochs, corrs = [], []
    for epoch, state in snapshots:
        scratch.load_state_dict(state)
        corr = _training_pair_correlation(gen_cfg, scratch, semg, imu)
        epochs.append(epoch)
        corrs.append(corr)
        if corr > best_corr:
            best_state, best_epoch, best_corr = state, epoch, corr
    log = {"epochs": epochs, "train_corr": corrs,
           "chosen_epoch": int(best_epoch), "chosen_corr": float(best_corr)}
    return best_state, log


# ---------------------------------------------------------------------------
# trained-generator bundle: parameters + the stats they were trained with

@dataclass
class GeneratorBundle:
    """Everything needed to synthesize motion windows from muscle windows."""

    cfg: GeneratorConfig
    params: ParamSet
    semg_stats: ChannelStats
    imu_stats: ChannelStats
    seed: int = 0
    data_fingerprint: str = ""
    extra: dict = field(default_factory=dict)


def data_fingerprint(*arrays) -> str:
    digest = hashlib.sha256()
    for arr in arrays:
        a = np.ascontiguousarray(arr, dtype="<f8")
        digest.update(str(a.shape).encode())
        digest.update(a.tobytes())
    return digest.hexdigest()


def normalize_generator_inputs(bundle_or_stats, semg_windows) -> np.ndarray:
    stats = bundle_or_stats.semg_stats if isinstance(bundle_or_stats, GeneratorBundle) else bundle_or_stats
    return apply_norm(np.asarray(semg_windows), stats, "zscore")


def generate_virtual(bundle: GeneratorBundle, semg_windows, batch_size: int = 1024) -> np.ndarray:
    """Synthesize physical-unit motion windows from normalized muscle windows.

    ``semg_windows`` must be (n, k, c1) windows already normalized with the
    bundle's training stats; the tanh output is mapped back through the
    stored motion-channel min/max. Runs the generator in eval mode, so the
    result is deterministic.
    """
    x = np.asarray(semg_windows, dtype=np.float32)
    if x.ndim != 3:
        raise DataError("expected (n, k, c1) muscle windows")
    if x.shape[1] != bundle.cfg.window_frames or x.shape[2] != bundle.cfg.semg_channels:
        raise StatsMismatchError(
            f"windows of shape {x.shape[1:]} do not match the generator's "
            f"{bundle.cfg.window_frames} x {bundle.cfg.semg_channels} training geometry"
        )
    if bundle.imu_stats.channels != bundle.cfg.imu_channels:
        raise StatsMismatchError("stored motion stats do not match the generator geometry")
    outputs = []
    with no_grad():
        for start in range(0, x.shape[0], batch_size):
            chunk = x[start : start + batch_size]
            out = generator_forward(bundle.cfg, bundle.params, chunk, mode="eval")
            outputs.append(out.data[:, 0, :, :])
    normalized = np.concatenate(outputs, axis=0)
    return invert_norm(normalized, bundle.imu_stats, "minmax_pm1")


def save_generator_bundle(directory, bundle: GeneratorBundle, disc_params: ParamSet | None = None,
                          disc_cfg: DiscriminatorConfig | None = None):
    """Write generator (and optionally discriminator) checkpoints + sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    checkpoint.save_tensors(directory / "generator.ckpt", bundle.params.state_dict())
    meta = {
        "generator": bundle.cfg.to_dict(),
        "semg_stats": bundle.semg_stats.to_dict(),
        "imu_stats": bundle.imu_stats.to_dict(),
        "seed": bundle.seed,
        "data_fingerprint": bundle.data_fingerprint,
        "init_record": bundle.params.init_record,
        "extra": bundle.extra,
    }
    if disc_params is not None:
        checkpoint.save_tensors(directory / "discriminator.ckpt", disc_params.state_dict())
        if disc_cfg is not None:
            meta["discriminator"] = disc_cfg.to_dict()
    with open(directory / "generator.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_generator_bundle(directory) -> GeneratorBundle:
    directory = Path(directory)
    with open(directory / "generator.json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    cfg = GeneratorConfig.from_dict(meta["generator"])
    params = build_generator(cfg, seed=0)
    params.load_state_dict(checkpoint.load_tensors(directory / "generator.ckpt"))
    params.init_record = meta.get("init_record", {})
    return GeneratorBundle(
        cfg=cfg,
        params=params,
        semg_stats=ChannelStats.from_dict(meta["semg_stats"]),
        imu_stats=ChannelStats.from_dict(meta["imu_stats"]),
        seed=meta.get("seed", 0),
        data_fingerprint=meta.get("data_fingerprint", ""),
        extra=meta.get("extra", {}),
    )
