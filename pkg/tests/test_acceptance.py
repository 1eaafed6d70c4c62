"""The ten acceptance criteria, each at its fixed tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import csv
import time

import numpy as np

from pathaug.audio import (AudioBuffer, CompressionParams, StftConfig, compress, decompress, istft,
                           load_wav, stft)
from pathaug.augment import (PITCH_SEMITONES, SPECMIX_FIXED_GAMMAS, STRETCH_RATES, PitchShiftSpec,
                             SpecMixSpec, TimeStretchSpec, pitch_shift, sample_tf_mask, spec_mix,
                             time_stretch)
from pathaug.corpus import (GROUPS, ManifestEntry, PlanError, build_folds, mix_corpus,
                            plan_augmentation, prepare_corpus)
from pathaug.metrics import fwssnr
from pathaug.noise import NoiseCorpus, measured_snr, mix_at_snr, sample_mix_spec

from conftest import ACCEPTANCE_RESULTS, SR, tone
from oracles import brute_fwssnr, fft_peak_hz
from pipeline import full_pipeline

TONES = (110.0, 220.0, 330.0, 440.0, 550.0, 660.0, 770.0, 880.0)


def record(name, passed, detail):
    ACCEPTANCE_RESULTS.append((name, bool(passed), detail))
    print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    assert passed, detail


def test_01_snr_fidelity(fixture_root):
    corpus = NoiseCorpus(fixture_root / "noise", sample_rate=SR)
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(SR // 4, 2 * SR))
        clean = AudioBuffer(rng.standard_normal(n) * rng.uniform(0.01, 0.5), SR)
        spec = sample_mix_spec(rng, corpus)
        noisy, _ = mix_at_snr(clean, corpus, spec)
        worst = max(worst, abs(measured_snr(clean, noisy) - spec.snr_db))
    elapsed = time.perf_counter() - start
    record("1 SNR fidelity", worst < 0.01 and elapsed < 60,
           f"max |error| {worst:.2e} dB (< 0.01), {elapsed:.1f} s (< 60)")


def test_02_stft_round_trip():
    rng = np.random.default_rng(102)
    cfg = StftConfig(510, 128)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal(int(rng.integers(1000, 48000))) * rng.uniform(0.01, 10)
        y = istft(stft(AudioBuffer(x, SR), cfg)).samples
        worst = max(worst, np.linalg.norm(y - x) / np.linalg.norm(x))
    record("2 STFT round trip", worst < 1e-4, f"max relative L2 {worst:.2e} (< 1e-4)")


def test_03_compression():
    rng = np.random.default_rng(103)
    cfg = StftConfig()
    params = CompressionParams(0.5, 0.33)
    worst = 0.0
    for _ in range(20):
        spec = stft(AudioBuffer(rng.standard_normal(8000) * rng.uniform(1e-3, 10), SR), cfg)
        for back in (decompress(compress(spec, params), params),
                     compress(decompress(spec, params), params)):
            nz = np.abs(spec.bins) > 0
            rel = np.abs(back.bins[nz] - spec.bins[nz]) / np.abs(spec.bins[nz])
            worst = max(worst, float(rel.max()))
    probe = spec.with_bins(np.full(spec.shape, 4.0 + 0j))
    spot = float(np.abs(compress(probe, params).bins).max())
    record("3 compression", worst < 1e-6 and abs(spot - 0.66) < 1e-12,
           f"max relative inverse error {worst:.2e} (< 1e-6), |X|=4 -> {spot:.12f}")


def test_04_pitch_oracle():
    worst = 0.0
    for s in PITCH_SEMITONES:
        for f in TONES:
            out = pitch_shift(tone(f), PitchShiftSpec(s))
            worst = max(worst, abs(fft_peak_hz(out.samples, SR) / f / 2 ** (s / 12) - 1))
    record("4 pitch oracle", worst < 0.03, f"max relative ratio error {worst:.2e} (< 3%)")


def test_05_stretch_oracle():
    len_err = freq_err = 0.0
    for r in STRETCH_RATES:
        for f in TONES:
            out = time_stretch(tone(f), TimeStretchSpec(r))
            len_err = max(len_err, abs(len(out) / (SR / r) - 1))
            freq_err = max(freq_err, abs(fft_peak_hz(out.samples, SR) / f - 1))
    record("5 stretch oracle", len_err < 0.02 and freq_err < 0.03,
           f"max length error {len_err:.2e} (< 2%), max frequency error {freq_err:.2e} (< 3%)")


def test_06_specmix_invariants():
    rng = np.random.default_rng(106)
    K, L = 256, 160
    violations = 0
    for gamma_kind in (*SPECMIX_FIXED_GAMMAS, "random"):
        for _ in range(2500):
            gamma = float(rng.uniform()) if gamma_kind == "random" else gamma_kind
            m = sample_tf_mask((K, L), SpecMixSpec(gamma), rng)
            freq = [b for b in m.bands if b.axis == "freq"]
            time_ = [b for b in m.bands if b.axis == "time"]
            ok = 1 <= len(freq) <= 3 and 1 <= len(time_) <= 3
            ok &= all(b.width <= gamma * K for b in freq) and all(b.width <= gamma * L for b in time_)
            violations += not ok
    x = AudioBuffer(rng.standard_normal(20000), SR)
    y = AudioBuffer(rng.standard_normal(20000), SR)
    a = (stft(x), stft(AudioBuffer(x.samples * 2, SR)))
    b = (stft(y), stft(AudioBuffer(y.samples * 2, SR)))
    exact = True
    for _ in range(20):
        c, n = spec_mix(a, b, sample_tf_mask(a[0].shape, SpecMixSpec(0.0), rng))
        exact &= np.array_equal(c.bins, a[0].bins) and np.array_equal(n.bins, a[1].bins)
    record("6 SpecMix invariants", violations == 0 and exact,
           f"{violations} violations in 10000 masks, gamma=0 bit-exact: {exact}")


def test_07_fold_protocol():
    speakers = [(f"spk{i:03d}", GROUPS[i % 2]) for i in range(100)]
    groups = dict(speakers)
    split = build_folds(speakers, 10, seed=107)
    tests = [s for f in split.folds for s in f.test]
    ok = len(split.folds) == 10 and len(tests) == 100 and set(tests) == set(groups)
    sizes, imbalance = set(), 0
    for f in split.folds:
        sizes.add((len(f.train), len(f.validation), len(f.test)))
        parts = [set(f.train), set(f.validation), set(f.test)]
        ok &= not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
        for part in parts:
            nt = sum(groups[s] == "Neurotypical" for s in part)
            imbalance = max(imbalance, abs(nt - (len(part) - nt)))
    ok &= sizes == {(80, 10, 10)} and imbalance <= 1
    record("7 fold protocol", ok, f"sizes {sorted(sizes)}, max group imbalance {imbalance}")


def test_08_ratio_accounting():
    speakers = [(f"spk{i:02d}", GROUPS[i % 2]) for i in range(20)]
    manifest = [ManifestEntry(f"{s}_{j:02d}", s, g, f"clean/{s}_{j:02d}.wav")
                for s, g in speakers for j in range(12)]
    folds = build_folds(speakers, 10, seed=108)
    seen = {}
    for strategy in ("PitchShift", "TimeStretch", "SpecMix", "NoiseAdd"):
        for ratio in (25, 100, 400):
            plan = plan_augmentation(manifest, folds, 0, strategy, ratio, seed=108)
            seen.setdefault(ratio, set()).update(len(v) for v in plan.per_speaker().values())
    try:
        plan_augmentation(manifest, folds, 0, "Synthetic", 400, seed=108)
        rejected = False
    except PlanError:
        rejected = True
    ok = seen == {25: {3}, 100: {12}, 400: {48}} and rejected
    record("8 ratio accounting", ok,
           f"per-speaker counts {dict((k, sorted(v)) for k, v in seen.items())}, Synthetic@400 rejected: {rejected}")


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_09_end_to_end(tmp_path):
    start = time.perf_counter()
    ws_a = full_pipeline(tmp_path / "a", seed=42)
    elapsed = time.perf_counter() - start
    ws_b = full_pipeline(tmp_path / "b", seed=42)
    identity = _read(ws_a / "enhanced/Identity/deltas.csv")
    identity_zero = len(identity) == 40 and all(float(r["delta"]) == 0.0 for r in identity)
    wiener = {r["group"]: float(r["mean"]) for r in _read(ws_a / "enhanced/Wiener/report.csv")
              if r["metric"] == "fwSSNR"}
    positive = set(wiener) == set(GROUPS) and all(v > 0 for v in wiener.values())
    names = ["manifest.jsonl", "folds.json", "manifest_fold0_NoiseAdd100.jsonl"]
    names += [f"enhanced/{m}/{f}" for m in ("Identity", "Wiener")
              for f in ("deltas.csv", "report.csv", "report.txt")]
    identical = all((ws_a / n).read_bytes() == (ws_b / n).read_bytes() for n in names)
    record("9 end-to-end run", elapsed < 120 and identity_zero and positive and identical,
           f"{elapsed:.1f} s (< 120), Identity delta 0: {identity_zero}, Wiener mean dfwSSNR "
           + ", ".join(f"{g} {v:+.3f}" for g, v in sorted(wiener.items()))
           + f", byte-identical outputs: {identical}")


def test_10_fwssnr_oracle(fixture_root, tmp_path):
    entries = prepare_corpus(fixture_root / "corpus", tmp_path)
    corpus = NoiseCorpus(fixture_root / "noise", sample_rate=SR)
    entries = mix_corpus(entries, corpus, tmp_path, seed=110)
    worst = 0.0
    for e in entries:
        clean, noisy = load_wav(tmp_path / e.clean_path), load_wav(tmp_path / e.noisy_path)
        ours = fwssnr(clean, noisy).value
        worst = max(worst, abs(ours - brute_fwssnr(clean.samples, noisy.samples, SR)))
    record("10 fwSSNR oracle", len(entries) == 20 and worst < 1.0,
           f"{len(entries)} pairs, max |difference| {worst:.2e} dB (< 1)")
