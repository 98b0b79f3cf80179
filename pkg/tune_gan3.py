# scratch: concatenated-batch discriminator step variant, alignment trajectory
import time
import tempfile
import numpy as np

from vimu.data import SynthConfig, synth_generate, Dataset, synthetic_profile, make_split
from vimu.pipeline import extract_windows, _fit_stream_stats
from vimu.sigproc import PreprocSpec, apply_norm
from vimu.gan import (GanTrainConfig, GeneratorConfig, DiscriminatorConfig, GeneratorBundle,
                      build_generator, build_discriminator, generator_forward,
                      discriminator_forward, generate_virtual)
from vimu.nn.layers import backprop
from vimu.nn.losses import bce_loss, generator_adversarial_loss
from vimu.nn.optim import AdamState, adam_step
from vimu.nn.tensor import Tensor, no_grad


def train_gan_concat(semg, imu, cfg, probe=None, probe_every=50):
    n, k, c1 = semg.shape
    c2 = imu.shape[2]
    gen_cfg = GeneratorConfig(k, c1, c2, tconv_maps=cfg.generator_maps)
    disc_cfg = DiscriminatorConfig(k, c2, conv_maps=cfg.discriminator_maps, dropout=cfg.dropout)
    root = np.random.SeedSequence(cfg.seed)
    s_gen, s_disc, s_shuffle, s_drop = root.spawn(4)
    seed_of = lambda s: int(s.generate_state(1, dtype=np.uint64)[0])
    gen = build_generator(gen_cfg, seed_of(s_gen))
    disc = build_discriminator(disc_cfg, seed_of(s_disc))
    shuffle_rng = np.random.default_rng(s_shuffle)
    drop_rng = np.random.default_rng(s_drop)
    if cfg.max_pairs is not None and n > cfg.max_pairs:
        keep = shuffle_rng.choice(n, size=cfg.max_pairs, replace=False)
        semg, imu = semg[keep], imu[keep]
        n = cfg.max_pairs
    adam_g = AdamState(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
    adam_d = AdamState(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2)
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            if idx.size < 2:
                continue
            real = imu[idx][:, None]
            cond = semg[idx][:, None]
            with no_grad():
                fake = generator_forward(gen_cfg, gen, cond, mode="train", update_stats=False).data
            both = np.concatenate([real, fake], axis=0)
            targets = np.concatenate([np.ones((idx.size, 1)), np.zeros((idx.size, 1))], axis=0)
            d_all = discriminator_forward(disc_cfg, disc, Tensor(both), mode="train", rng=drop_rng)
            d_loss = bce_loss(d_all, targets)
            backprop(d_loss, disc)
            adam_step(adam_d, disc)
            fake_t = generator_forward(gen_cfg, gen, cond, mode="train", update_stats=True)
            d_on_fake = discriminator_forward(disc_cfg, disc, fake_t, mode="train",
                                              rng=drop_rng, update_stats=False)
            g_loss = generator_adversarial_loss(d_on_fake, cfg.loss_variant)
            backprop(g_loss, gen)
            adam_step(adam_g, gen)
        if probe is not None and (epoch + 1) % probe_every == 0:
            probe(epoch + 1, gen_cfg, gen)
    return gen_cfg, gen


def main():
    with tempfile.TemporaryDirectory() as d:
        synth_generate(SynthConfig(), d)
        ds = Dataset(d)
        profile = synthetic_profile(ds.manifest)
        spec = PreprocSpec(window_ms=200.0, step_ms=100.0, decimation=4)
        table = extract_windows(ds, profile, spec)
        plan = make_split(ds.manifest, "exp2", profile)
        mask = np.isin(table.subjects, plan.gan_subjects) & np.isin(table.trials, plan.gan_train_trials)
        test_mask = np.isin(table.trials, plan.clf_test_trials)
        gt = table.select(mask)
        held = table.select(test_mask)
        ss = _fit_stream_stats(gt.semg_gan)
        si = _fit_stream_stats(gt.imu)
        semg = apply_norm(gt.semg_gan, ss, "zscore").astype(np.float32)
        imu = apply_norm(gt.imu, si, "minmax_pm1").astype(np.float32)
        held_norm = apply_norm(held.semg_gan, ss, "zscore").astype(np.float32)

        def probe(epoch, gen_cfg, gen):
            bundle = GeneratorBundle(gen_cfg, gen, ss, si)
            virt = generate_virtual(bundle, held_norm)
            corrs = [np.corrcoef(virt[:, :, c].ravel(), held.imu[:, :, c].ravel())[0, 1]
                     for c in range(3)]
            print(f"    epoch {epoch}: mean corr {np.mean(corrs):.3f}", flush=True)

        for seed in range(3):
            print(f"concat-D seed {seed}:", flush=True)
            t0 = time.time()
            cfg = GanTrainConfig(epochs=300, batch_size=64, max_pairs=384,
                                 generator_maps=(8, 4, 1), seed=seed)
            train_gan_concat(semg, imu, cfg, probe=probe, probe_every=50)
            print(f"  ({time.time()-t0:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
