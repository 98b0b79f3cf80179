# scratch: small-batch desk GAN sweep with correlation trajectory
import sys
import time
import tempfile
import numpy as np

from vimu.data import SynthConfig, synth_generate, Dataset, synthetic_profile, make_split
from vimu.pipeline import extract_windows, _fit_stream_stats
from vimu.sigproc import PreprocSpec, apply_norm
from vimu.gan import GanTrainConfig, GeneratorConfig, GeneratorBundle, train_gan, generate_virtual


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

        def corr_of(gen, maps):
            bundle = GeneratorBundle(GeneratorConfig(10, 8, 3, tconv_maps=maps), gen, ss, si)
            virt = generate_virtual(bundle, held_norm)
            return float(np.mean([np.corrcoef(virt[:, :, c].ravel(), held.imu[:, :, c].ravel())[0, 1]
                                  for c in range(3)]))

        for bs, lr in ((16, 2e-4), (16, 4e-4)):
            for seed in range(3):
                marks = []
                t0 = time.time()
                for total in (200, 400, 800):
                    cfg = GanTrainConfig(epochs=total, batch_size=bs, learning_rate=lr,
                                         max_pairs=384, generator_maps=(8, 4, 1), seed=seed)
                    gen, _, _ = train_gan(semg, imu, cfg)
                    marks.append((total, corr_of(gen, (8, 4, 1))))
                print(f"bs={bs} lr={lr} seed={seed}: " +
                      " ".join(f"e{t}:{c:.3f}" for t, c in marks) +
                      f" ({time.time()-t0:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
