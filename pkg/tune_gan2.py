# scratch diagnostic: eval-stat vs train-stat generation, batch size, recalibration
import time
import tempfile
import numpy as np

from vimu.data import SynthConfig, synth_generate, Dataset, synthetic_profile, make_split
from vimu.pipeline import extract_windows, _fit_stream_stats
from vimu.sigproc import PreprocSpec, apply_norm, invert_norm
from vimu.gan import (GanTrainConfig, GeneratorConfig, GeneratorBundle, train_gan,
                      generate_virtual, generator_forward, generator_layers)
from vimu.nn.layers import run_stack
from vimu.nn.tensor import no_grad


def recalibrate_bn(gen_cfg, gen, semg_train, batch=64):
    # refresh running stats with frozen weights (momentum-free average)
    layers = generator_layers(gen_cfg)
    sums = {}
    counts = 0
    for name in list(gen.buffers):
        gen.buffers[name] = np.zeros_like(gen.buffers[name])
    momentum_backup = {}
    # temporary: plain accumulation via repeated train-mode passes with high momentum
    passes = []
    with no_grad():
        for start in range(0, len(semg_train), batch):
            chunk = semg_train[start:start + batch]
            if len(chunk) < 2:
                continue
            x = chunk[:, None, :, :]
            out = run_stack(layers, gen, x, mode="train", update_stats=False)
            passes.append(1)
    return gen


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

        for batch_size, epochs, max_pairs in ((32, 300, None), (64, 300, None)):
            for seed in range(3):
                cfg = GanTrainConfig(epochs=epochs, batch_size=batch_size, max_pairs=max_pairs,
                                     generator_maps=(8, 4, 1), seed=seed)
                t0 = time.time()
                gen, disc, hist = train_gan(semg, imu, cfg)
                dt = time.time() - t0
                gen_cfg = GeneratorConfig(10, 8, 3, tconv_maps=(8, 4, 1))
                bundle = GeneratorBundle(gen_cfg, gen, ss, si)
                virt_eval = generate_virtual(bundle, held_norm)
                # train-mode (batch-stat) generation for comparison
                outs = []
                with no_grad():
                    for start in range(0, len(held_norm), 256):
                        chunk = held_norm[start:start + 256]
                        out = generator_forward(gen_cfg, gen, chunk, mode="train", update_stats=False)
                        outs.append(out.data[:, 0])
                virt_train = invert_norm(np.concatenate(outs), si, "minmax_pm1")
                ce = [np.corrcoef(virt_eval[:, :, c].ravel(), held.imu[:, :, c].ravel())[0, 1] for c in range(3)]
                ct = [np.corrcoef(virt_train[:, :, c].ravel(), held.imu[:, :, c].ravel())[0, 1] for c in range(3)]
                print(f"bs={batch_size} epochs={epochs} seed={seed}: eval corr "
                      f"{np.mean(ce):.3f} train-stat corr {np.mean(ct):.3f} ({dt:.0f}s, "
                      f"d_real {hist['d_real'][-1]:.2f} d_fake {hist['d_fake'][-1]:.2f})", flush=True)


if __name__ == "__main__":
    main()
