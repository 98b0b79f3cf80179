# scratch: how much class signal does each stream carry on its own?
import tempfile

import numpy as np

from vimu.data import SynthConfig, synth_generate, Dataset, synthetic_profile, make_split
from vimu.fusion import ClfTrainConfig, FusionConfig, build_unimodal, predict, train_classifier
from vimu.gan import GanTrainConfig, GeneratorBundle, GeneratorConfig, train_gan, generate_virtual
from vimu.pipeline import ClassifierSpec, extract_windows, _fit_stream_stats
from vimu.sigproc import PreprocSpec, apply_norm

with tempfile.TemporaryDirectory() as d:
    synth_generate(SynthConfig(seed=0), d)
    ds = Dataset(d)
    profile = synthetic_profile(ds.manifest)
    spec = PreprocSpec(window_ms=200.0, step_ms=100.0, decimation=4)
    table = extract_windows(ds, profile, spec)
    plan = make_split(ds.manifest, "exp2", profile)
    gan_mask = np.isin(table.subjects, plan.gan_subjects) & np.isin(table.trials, plan.gan_train_trials)
    train_mask = np.isin(table.trials, plan.clf_train_trials)
    test_mask = np.isin(table.trials, plan.clf_test_trials)

    ss = _fit_stream_stats(table.semg_gan[gan_mask])
    si = _fit_stream_stats(table.imu[gan_mask])
    semg_norm_train = apply_norm(table.semg_gan[gan_mask], ss, "zscore").astype(np.float32)
    imu_norm_train = apply_norm(table.imu[gan_mask], si, "minmax_pm1").astype(np.float32)
    cfg = GanTrainConfig(epochs=300, batch_size=16, max_pairs=384, generator_maps=(8, 4, 1),
                         snapshot_every=10, seed=0)
    gen, _, hist = train_gan(semg_norm_train, imu_norm_train, cfg)
    print("gan selection:", hist["selection"]["chosen_epoch"], f"{hist['selection']['chosen_corr']:.3f}")
    bundle = GeneratorBundle(GeneratorConfig(10, 8, 3, tconv_maps=(8, 4, 1)), gen, ss, si)
    virtual = generate_virtual(bundle, apply_norm(table.semg_gan, ss, "zscore").astype(np.float32))

    held = test_mask
    corr = np.mean([np.corrcoef(virtual[held][:, :, c].ravel(), table.imu[held][:, :, c].ravel())[0, 1]
                    for c in range(3)])
    print(f"held-out corr of this generator: {corr:.3f}")

    streams = {
        "semg_hgr": table.semg_hgr,
        "real_imu": table.imu,
        "virtual_imu": virtual.astype(np.float32),
    }
    net = ClassifierSpec(conv_maps=8, lc_maps=8, dense_units=32, fusion_hidden=32)
    for name, arr in streams.items():
        stats = _fit_stream_stats(arr[train_mask])
        norm = apply_norm(arr, stats, "zscore").astype(np.float32)
        accs_test, accs_train = [], []
        for subject in plan.recognition_subjects:
            m_tr = train_mask & (table.subjects == subject)
            m_te = test_mask & (table.subjects == subject)
            model = build_unimodal(net.stream(10, arr.shape[2]),
                                   FusionConfig(classes=4, hidden_units=32), seed=subject)
            train_classifier(model, [norm[m_tr]], table.labels[m_tr],
                             ClfTrainConfig(seed=subject))
            preds_te, _ = predict(model, [norm[m_te]])
            preds_tr, _ = predict(model, [norm[m_tr]])
            accs_test.append(np.mean(preds_te == table.labels[m_te]))
            accs_train.append(np.mean(preds_tr == table.labels[m_tr]))
        print(f"{name:12s}: train-set acc {np.mean(accs_train):.3f}, test acc {np.mean(accs_test):.3f}")
