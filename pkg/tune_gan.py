# scratch tuning script, not part of the package
import sys
import time
import tempfile
import numpy as np

from vimu.data import SynthConfig, synth_generate, Dataset, synthetic_profile, make_split
from vimu.pipeline import extract_windows, _fit_stream_stats
from vimu.sigproc import PreprocSpec, apply_norm
from vimu.gan import GanTrainConfig, GeneratorConfig, GeneratorBundle, train_gan, generate_virtual


def corr_for(seed, epochs, lr, pairs, skip_bn, table, plan):
    mask = np.isin(table.subjects, plan.gan_subjects) & np.isin(table.trials, plan.gan_train_trials)
    test_mask = np.isin(table.trials, plan.clf_test_trials)
    gt = table.select(mask)
    held = table.select(test_mask)
    ss = _fit_stream_stats(gt.semg_gan)
    si = _fit_stream_stats(gt.imu)
    semg = apply_norm(gt.semg_gan, ss, "zscore").astype(np.float32)
    imu = apply_norm(gt.imu, si, "minmax_pm1").astype(np.float32)
    cfg = GanTrainConfig(epochs=epochs, batch_size=64, learning_rate=lr, max_pairs=pairs,
                         generator_maps=(8, 4, 1), seed=seed, skip_final_bn=skip_bn)
    t0 = time.time()
    gen, disc, hist = train_gan(semg, imu, cfg)
    dt = time.time() - t0
    k, c1, c2 = gt.semg_gan.shape[1], gt.semg_gan.shape[2], gt.imu.shape[2]
    bundle = GeneratorBundle(GeneratorConfig(k, c1, c2, tconv_maps=(8, 4, 1), skip_final_bn=skip_bn),
                             gen, ss, si)
    held_norm = apply_norm(held.semg_gan, ss, "zscore").astype(np.float32)
    virt = generate_virtual(bundle, held_norm)
    corrs = [np.corrcoef(virt[:, :, c].ravel(), held.imu[:, :, c].ravel())[0, 1] for c in range(c2)]
    return float(np.mean(corrs)), corrs, dt


def main():
    with tempfile.TemporaryDirectory() as d:
        synth_generate(SynthConfig(), d)
        ds = Dataset(d)
        profile = synthetic_profile(ds.manifest)
        spec = PreprocSpec(window_ms=200.0, step_ms=100.0, decimation=4)
        table = extract_windows(ds, profile, spec)
        plan = make_split(ds.manifest, "exp2", profile)
        combos = [
            (200, 2e-4, 384, False),
            (200, 5e-4, 384, False),
            (200, 1e-3, 384, False),
            (200, 5e-4, 384, True),
            (400, 5e-4, 384, False),
        ]
        for epochs, lr, pairs, skip in combos:
            means = []
            for seed in range(3):
                mean, corrs, dt = corr_for(seed, epochs, lr, pairs, skip, table, plan)
                means.append(mean)
            print(f"epochs={epochs} lr={lr} skip_bn={skip}: per-seed mean corr "
                  f"{[f'{m:.3f}' for m in means]} (last run {dt:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
