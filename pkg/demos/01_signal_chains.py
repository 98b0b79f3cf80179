"""Walk a raw muscle recording through both preprocessing chains.

Builds a short synthetic two-channel burst, then shows what each stage of
the generation chain (moving RMS -> decimate) and the recognition chain
(rectify -> 1 Hz Butterworth -> decimate) does to it, ending with the
sliding-window segmentation used everywhere downstream.
"""
import numpy as np

from vimu.sigproc import (
    MultichannelSeries,
    PreprocSpec,
    butter_lowpass1,
    decimate,
    gan_chain_semg,
    hgr_chain_semg,
    moving_rms,
    rectify,
    segment_series,
)

rng = np.random.default_rng(0)
rate = 200.0
t = np.arange(int(4.0 * rate)) / rate
envelope = np.clip(np.sin(np.pi * (t - 0.5) / 3.0), 0.0, None) ** 2
raw = envelope[:, None] * rng.standard_normal((t.size, 2)) + 0.1 * rng.standard_normal((t.size, 2))
series = MultichannelSeries(raw, rate, "semg")
print(f"raw series: {series.frames} frames x {series.channel_count} channels at {rate:.0f} Hz")

spec = PreprocSpec(window_ms=200.0, step_ms=50.0, decimation=4)

smoothed = moving_rms(series, spec.rms_ms)
print(f"moving RMS (100 ms): peak level {smoothed.data.max():.3f} vs raw peak {abs(raw).max():.3f}")

low = butter_lowpass1(rectify(series), spec.butter_cutoff_hz)
print(f"rectified + 1 Hz Butterworth: final value {low.data[-1, 0]:.4f}")

gan_ready = gan_chain_semg(series, spec)
hgr_ready = hgr_chain_semg(series, spec)
print(f"generation chain output: {gan_ready.frames} frames at {gan_ready.sample_rate_hz:.0f} Hz")
print(f"recognition chain output: {hgr_ready.frames} frames at {hgr_ready.sample_rate_hz:.0f} Hz")

windows = segment_series(hgr_ready, spec)
print(f"segmentation: {len(windows)} windows of {windows[0].data.shape[0]} frames "
      f"(200 ms window, 50 ms step)")
print(f"first three window origins: {[w.origin_frame for w in windows[:3]]}")

plain = decimate(series, 4)
print(f"plain decimation keeps every 4th frame: {plain.frames} frames")
