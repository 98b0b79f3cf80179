# scratch diagnostic: generator failure mode after desk-scale training
import tempfile

import numpy as np

from vimu.data import SynthConfig, synth_generate, Dataset, synthetic_profile, make_split
from vimu.pipeline import extract_windows, _fit_stream_stats
from vimu.sigproc import PreprocSpec, apply_norm
from vimu.gan import GanTrainConfig, GeneratorConfig, GeneratorBundle, train_gan, generate_virtual

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
    cfg = GanTrainConfig(epochs=150, batch_size=64, max_pairs=384, generator_maps=(8, 4, 1), seed=1)
    gen, disc, hist = train_gan(semg, imu, cfg)
    bundle = GeneratorBundle(GeneratorConfig(10, 8, 3, tconv_maps=(8, 4, 1)), gen, ss, si)
    held_norm = apply_norm(held.semg_gan, ss, "zscore").astype(np.float32)
    virt_norm = apply_norm(generate_virtual(bundle, held_norm), si, "minmax_pm1")
    real_norm = apply_norm(held.imu, si, "minmax_pm1")
    print("real std across windows:", real_norm.std(axis=(0, 1)).round(3))
    print("gen  std across windows:", virt_norm.std(axis=(0, 1)).round(3))
    print("real mean:", real_norm.mean(axis=(0, 1)).round(3), " gen mean:", virt_norm.mean(axis=(0, 1)).round(3))
    for g in range(4):
        m = held.labels == g
        print(f"gesture {g}: real {real_norm[m].mean(axis=(0, 1)).round(2)}, gen {virt_norm[m].mean(axis=(0, 1)).round(2)}")
    rl = real_norm.std(axis=(1, 2))
    gl = virt_norm.std(axis=(1, 2))
    print("window-energy corr:", np.corrcoef(rl, gl)[0, 1].round(3))
    print("d_real tail:", [f"{v:.2f}" for v in hist["d_real"][-3:]],
          "d_fake tail:", [f"{v:.2f}" for v in hist["d_fake"][-3:]])
