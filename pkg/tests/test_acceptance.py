"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import time

import numpy as np
import pytest

from ddlink.chanest import PilotConfig, embed_pilot, estimate_channel
from ddlink.channel import (ChannelTap, LtvChannel, apply_channel,
                            build_dd_matrix, draw_noise, linearized_io,
                            make_channel)
from ddlink.config import ExperimentSpec, ImpairSettings, SyncSettings
from ddlink.equalize import equalize_iterative, equalize_mmse
from ddlink.frame import FrameConfig
from ddlink.harness import link_trial, run
from ddlink.modem import (DelayDopplerGrid, TimeSignal, Waveform,
                          demodulate_direct, demodulate_spread,
                          modulate_direct, modulate_spread)
from ddlink.multiuser import (Allocation, UserBins, compound_matrix,
                              compound_uplink, detect_users, extract_user)
from ddlink.sync import Impairments, fine_timing, metric_peak_set, timing_metric
from ddlink.transforms import coupling_phases

BOTH = (Waveform.OTFS, Waveform.SC_IFDMA)


def report(num, name, ok, detail=""):
    print(f"[acceptance] criterion {num:>2}: {name}: "
          f"{'PASS' if ok else 'FAIL'}  {detail}".rstrip())
    return ok


def random_grid(frame, rng):
    d = rng.standard_normal((frame.M, frame.N)) + 1j * rng.standard_normal((frame.M, frame.N))
    return DelayDopplerGrid(d, frame)


def random_channel(frame, rng, n_taps=3):
    delays = rng.choice(frame.cp_len + 1, size=n_taps, replace=False)
    taps = tuple(ChannelTap(int(d),
                            complex(rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2),
                            float(rng.uniform(-2, 2)))
                 for d in delays)
    return LtvChannel(taps, frame)


def test_criterion_1_structural_equivalence():
    rng = np.random.default_rng(1)
    t0 = time.monotonic()
    worst = 0.0
    for (M, N) in [(4, 4), (8, 16), (16, 8), (5, 7)]:
        frame = FrameConfig(M, N, cp_len=min(4, M * N - 1))
        for _ in range(3):
            grid = random_grid(frame, rng)
            sig = TimeSignal(rng.standard_normal(frame.frame_len)
                             + 1j * rng.standard_normal(frame.frame_len), frame)
            for w in BOTH:
                worst = max(worst, np.max(np.abs(
                    modulate_direct(grid, w).samples - modulate_spread(grid, w).samples)))
                worst = max(worst, np.max(np.abs(
                    demodulate_direct(sig, w).data - demodulate_spread(sig, w).data)))
    elapsed = time.monotonic() - t0
    ok = worst <= 1e-10 and elapsed < 1.0
    assert report(1, "structural equivalence", ok,
                  f"max err {worst:.2e}, {elapsed:.2f}s")


def test_criterion_2_round_trip_identity():
    rng = np.random.default_rng(2)
    frame = FrameConfig(8, 16, cp_len=6)
    t0 = time.monotonic()
    worst = 0.0
    for w in BOTH:
        for _ in range(100):
            grid = random_grid(frame, rng)
            back = demodulate_direct(modulate_direct(grid, w), w)
            worst = max(worst, np.max(np.abs(back.data - grid.data)))
    elapsed = time.monotonic() - t0
    ok = worst <= 1e-10 and elapsed < 1.0
    assert report(2, "round-trip identity", ok,
                  f"max err {worst:.2e}, {elapsed:.2f}s")


def test_criterion_3_waveform_phase_identity():
    rng = np.random.default_rng(3)
    frame = FrameConfig(8, 8, cp_len=6)
    wv = coupling_phases(8, 8).flatten(order="F")
    t0 = time.monotonic()
    worst_rel, worst_mag = 0.0, 0.0
    for _ in range(20):
        ch = random_channel(frame, rng)
        Ho = build_dd_matrix(ch, Waveform.OTFS).matrix
        Hs = build_dd_matrix(ch, Waveform.SC_IFDMA).matrix
        rel = np.linalg.norm(Hs - wv[:, None] * Ho * np.conj(wv)[None, :]) / np.linalg.norm(Ho)
        worst_rel = max(worst_rel, rel)
        worst_mag = max(worst_mag, np.max(np.abs(np.abs(Hs) - np.abs(Ho))))
    elapsed = time.monotonic() - t0
    ok = worst_rel <= 1e-9 and worst_mag <= 1e-9 and elapsed < 10.0
    assert report(3, "equivalent-channel phase identity", ok,
                  f"rel {worst_rel:.2e}, |.| {worst_mag:.2e}, {elapsed:.1f}s")


def test_criterion_4_linear_model_consistency():
    rng = np.random.default_rng(4)
    frame = FrameConfig(8, 8, cp_len=6)
    worst = 0.0
    for i in range(50):
        w = BOTH[i % 2]
        ch = random_channel(frame, rng)
        grid = random_grid(frame, rng)
        rx, H = linearized_io(grid, ch, None, w)
        err = np.linalg.norm(rx.vec - H.matrix @ grid.vec) / np.linalg.norm(rx.vec)
        worst = max(worst, err)
    assert report(4, "linear-model consistency", worst <= 1e-9,
                  f"max rel err {worst:.2e}")


def test_criterion_5_paired_ber_equality():
    frame = FrameConfig(32, 16, cp_len=8)
    pilot = PilotConfig(4, 8, 1000.0, 4, 4)
    spec = ExperimentSpec(kind="ber_vs_snr", frame=frame, waveforms=BOTH,
                          constellation="16qam", snr_db=(5.0, 10.0, 15.0),
                          trials=78, seed=5, channel_profile="eva3",
                          velocity_kmh=500.0, pilot=pilot, csi="estimated")
    t0 = time.monotonic()
    mismatches = symbols = 0
    ber_equal = True
    for si, snr in enumerate(spec.snr_db):
        for t in range(spec.trials):
            out = link_trial(spec, si * spec.trials + t, snr)
            a, b = out["otfs"], out["sc_ifdma"]
            mismatches += int(np.count_nonzero(a["decisions"] != b["decisions"]))
            symbols += a["decisions"].size
            ber_equal &= a["bit_errors"] == b["bit_errors"]
    elapsed = time.monotonic() - t0
    rate = mismatches / symbols
    ok = symbols >= 100_000 and rate <= 1e-4 and elapsed < 120.0
    assert report(5, "paired BER equality", ok,
                  f"{mismatches}/{symbols} decision mismatches "
                  f"({rate:.1e}), per-trial BER equal: {ber_equal}, {elapsed:.0f}s")


def test_criterion_6_timing_metric_waveform_equivalence():
    frame = FrameConfig(32, 16, cp_len=8)
    pilot = PilotConfig(4, 8, 100.0, 4, 4)
    grid = embed_pilot(DelayDopplerGrid.zeros(frame), pilot)
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(600 + seed)
        ch = random_channel(frame, rng)
        imp = Impairments(timing_delay=int(rng.integers(0, 8)),
                          cfo=float(rng.uniform(-0.4, 0.4)))
        metrics = {}
        for w in BOTH:
            x = modulate_direct(grid, w)
            r = apply_channel(x, ch, impair=imp, record_len=2 * frame.grid_size)
            _, metrics[w] = timing_metric(r.samples, frame)
        scale = np.max(np.abs(metrics[Waveform.OTFS]))
        diff = np.max(np.abs(np.abs(metrics[Waveform.OTFS])
                             - np.abs(metrics[Waveform.SC_IFDMA])))
        worst = max(worst, diff / scale)
    assert report(6, "timing-metric waveform equivalence", worst <= 1e-10,
                  f"max rel err {worst:.2e}")


def test_criterion_7_fine_timing_estimator():
    frame = FrameConfig(32, 16, cp_len=8)
    pilot = PilotConfig(4, 8, 1000.0, 4, 4)
    grid = embed_pilot(DelayDopplerGrid.zeros(frame), pilot)
    noise_var = 10 ** (-1.5)
    ladder = (1.0, 0.8, 0.6, 0.5, 0.4, 0.2, 0.1, 0.05)
    coarse_errs, fine_errs = [], []
    monotone = True
    for trial in range(500):
        rng = np.random.default_rng(7000 + trial)
        ch = make_channel("two_tap_biased", frame, 0.0, rng)
        true = int(rng.integers(0, 8))
        x = modulate_direct(grid, Waveform.OTFS)
        r = apply_channel(x, ch, impair=Impairments(timing_delay=true),
                          record_len=true + 2 * frame.grid_size)
        record = r.samples + draw_noise(rng, noise_var, r.samples.size)
        _, metric = timing_metric(record, frame)
        coarse = fine_timing(metric, 1.0, pilot.pilot_delay, frame.cp_len)
        fine = fine_timing(metric, 0.5, pilot.pilot_delay, frame.cp_len)
        coarse_errs.append(abs(coarse - true))
        fine_errs.append(abs(fine - true))
        firsts = [int(metric_peak_set(metric, ts).min()) for ts in ladder]
        monotone &= all(a >= b for a, b in zip(firsts, firsts[1:]))
    mc, mf = float(np.mean(coarse_errs)), float(np.mean(fine_errs))
    ok = mc >= 2.5 and mf <= 0.2 and monotone
    assert report(7, "fine timing estimator", ok,
                  f"coarse mean |err| {mc:.2f}, fine {mf:.3f}, "
                  f"threshold monotone: {monotone}")


def test_criterion_8_cfo_estimation():
    frame = FrameConfig(32, 16, cp_len=8)
    pilot = PilotConfig(4, 8, 1000.0, 4, 4)
    spec = ExperimentSpec(kind="sync_vs_snr", frame=frame,
                          waveforms=(Waveform.OTFS,), constellation="16qam",
                          snr_db=(0.0, 10.0, 20.0), trials=1000, seed=8,
                          channel_profile="single_tap", pilot=pilot,
                          sync=SyncSettings(enabled=True),
                          impair=ImpairSettings(epsilon=("uniform", -0.4, 0.4)))
    rows = run(spec)
    mse = {r.snr_db: r.value for r in rows if r.metric == "CFO_MSE"}
    ok = mse[0.0] > mse[10.0] > mse[20.0] and mse[20.0] <= 1e-3
    assert report(8, "CFO estimation trend", ok,
                  f"MSE {mse[0.0]:.2e} -> {mse[10.0]:.2e} -> {mse[20.0]:.2e}")


def test_criterion_9_estimation_equalization_closure():
    frame = FrameConfig(32, 16, cp_len=8)
    pilot = PilotConfig(4, 8, 1000.0, 4, 4)
    taps = ((0.0, 0.0, 0.0), (130.3, -1.4, 15000.0), (390.7, -0.6, -30000.0))
    # part 1: noiseless single-frame estimation recovers the taps exactly
    true_ch = LtvChannel((ChannelTap(0, 0.9 - 0.3j, 0.0),
                          ChannelTap(1, 0.45j, 1.0),
                          ChannelTap(3, 0.3 + 0.2j, -2.0)), frame)
    grid = embed_pilot(DelayDopplerGrid.zeros(frame), pilot)
    worst_gain = 0.0
    for w in BOTH:
        rx = demodulate_direct(apply_channel(modulate_direct(grid, w), true_ch), w)
        est = estimate_channel(rx, pilot, w, noise_std=1e-9)
        got = {(t.delay, t.doppler): t.gain for t in est.taps}
        ok_taps = len(got) == 3
        for t in true_ch.taps:
            ok_taps &= (t.delay, int(t.doppler)) in got
            worst_gain = max(worst_gain,
                             abs(got[(t.delay, int(t.doppler))] - t.gain))
    # part 2: estimated-CSI BER within a factor of 3 of genie-CSI BER
    def ber(csi):
        spec = ExperimentSpec(kind="ber_vs_snr", frame=frame,
                              waveforms=(Waveform.OTFS,), constellation="16qam",
                              snr_db=(15.0,), trials=1, seed=9,
                              channel_profile="custom", custom_taps=taps,
                              pilot=pilot, csi=csi)
        e = b = 0
        for t in range(60):
            out = link_trial(spec, t, 15.0)
            e += out["otfs"]["bit_errors"]
            b += out["otfs"]["bits"]
        return e / b
    genie, estimated = ber("genie"), ber("estimated")
    ratio = estimated / genie
    ok = ok_taps and worst_gain <= 1e-6 and ratio <= 3.0
    assert report(9, "estimation + equalization closure", ok,
                  f"gain err {worst_gain:.1e}, BER genie {genie:.4f} vs "
                  f"estimated {estimated:.4f} (x{ratio:.2f})")


def test_criterion_10_iterative_vs_direct_equalizer():
    rng = np.random.default_rng(10)
    frame = FrameConfig(16, 16, cp_len=8)
    worst = 0.0
    for _ in range(20):
        ch = random_channel(frame, rng)
        grid = random_grid(frame, rng)
        from ddlink.channel import NoiseSpec
        rx, H = linearized_io(grid, ch, NoiseSpec(0.05, rng), Waveform.OTFS)
        direct = equalize_mmse(rx, H, 0.05)
        it = equalize_iterative(rx, H, 0.05, max_iter=600, tol=1e-12)
        err = np.linalg.norm(it.grid.vec - direct.vec) / np.linalg.norm(direct.vec)
        worst = max(worst, err)
    assert report(10, "iterative vs direct equalizer", worst <= 1e-6,
                  f"max rel err {worst:.2e}")


def test_criterion_11_multiuser_reduction():
    frame = FrameConfig(8, 8, cp_len=6)
    rng = np.random.default_rng(11)
    wv = coupling_phases(8, 8).flatten(order="F")
    # single user on the full grid reduces to the point-to-point model
    full = Allocation((UserBins(tuple(range(8)), tuple(range(8))),), 8, 8)
    ch = random_channel(frame, rng)
    data = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    from ddlink.channel import NoiseSpec
    rx_mu, H_mu = compound_uplink([(data, ch)], full, Waveform.OTFS, frame,
                                  noise=NoiseSpec(0.02, np.random.default_rng(99)))
    rx_su, H_su = linearized_io(DelayDopplerGrid(data, frame), ch,
                                NoiseSpec(0.02, np.random.default_rng(99)),
                                Waveform.OTFS)
    exact = bool(np.array_equal(rx_mu.data, rx_su.data)
                 and np.array_equal(H_mu.matrix, H_su.matrix))
    # two users: noiseless joint detection recovers both symbol sets
    alloc = Allocation((UserBins((0, 1, 2, 3), (0, 1, 2, 3)),
                        UserBins((4, 5, 6, 7), (4, 5, 6, 7))), 8, 8)
    users = [(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)),
              random_channel(frame, rng)) for _ in range(2)]
    rx2, H2 = compound_uplink(users, alloc, Waveform.OTFS, frame)
    det = detect_users(rx2, H2, alloc, 0.0)
    rec_err = max(np.max(np.abs(extract_user(det, alloc, q) - users[q][0]))
                  for q in range(2))
    # compound matrices keep the waveform phase relation
    Hs2 = compound_matrix([u[1] for u in users], alloc, Waveform.SC_IFDMA).matrix
    rel = np.linalg.norm(Hs2 - wv[:, None] * H2.matrix * np.conj(wv)[None, :]) \
        / np.linalg.norm(H2.matrix)
    ok = exact and rec_err <= 1e-8 and rel <= 1e-9
    assert report(11, "multiuser reduction", ok,
                  f"single-user exact: {exact}, recovery err {rec_err:.1e}, "
                  f"compound relation {rel:.1e}")


def test_criterion_12_reproducibility(tmp_path):
    frame = FrameConfig(32, 16, cp_len=8)
    pilot = PilotConfig(4, 8, 1000.0, 4, 4)
    spec = ExperimentSpec(kind="ber_vs_snr", frame=frame, waveforms=BOTH,
                          constellation="16qam", snr_db=(10.0,), trials=3,
                          seed=12, channel_profile="eva3", pilot=pilot,
                          csi="estimated")
    run(spec, out_dir=tmp_path / "a")
    run(spec, out_dir=tmp_path / "b")
    same = (tmp_path / "a/results.csv").read_bytes() == \
           (tmp_path / "b/results.csv").read_bytes()
    assert report(12, "reproducibility", same, "bit-identical results.csv")
