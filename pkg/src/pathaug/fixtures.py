"""Synthetic desk-scale corpus: speech-like utterances and typed noises.

The utterances are harmonic "syllables" with formant shaping separated by
pauses; pathological mock speakers get a lower, flatter pitch contour,
jitter and a breathy noise component.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.signal import lfilter, butter

from .audio import AudioBuffer, save_wav
from .noise import NOISE_TYPES

RAW_RATE = 44100
NOISE_RATE = 16000

SPEAKERS = (
    ("nt01", "Neurotypical", 120.0),
    ("nt02", "Neurotypical", 210.0),
    ("pd01", "Pathological", 105.0),
    ("pd02", "Pathological", 190.0),
)

FORMANTS = ((700, 1200, 2600), (400, 2000, 2800), (300, 900, 2400), (550, 1700, 2500))


def _resonator(x, freq, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    return lfilter([1 - r], [1, -2 * r * np.cos(theta), r * r], x)


def speech_like(rng: np.random.Generator, sr: int, f0: float, pathological: bool = False,
                duration: float = 1.2) -> np.ndarray:
    lead, tail = int(0.15 * sr), int(0.1 * sr)
    body = []
    t_used = 0.0
    while t_used < duration - 0.25:
        syl = rng.uniform(0.12, 0.28)
        n = int(syl * sr)
        t = np.arange(n) / sr
        spread = 0.04 if pathological else 0.2
        contour = f0 * (1 + spread * np.sin(np.pi * t / syl + rng.uniform(0, np.pi)))
        if pathological:
            contour *= 1 + 0.03 * rng.standard_normal(n).cumsum() / np.sqrt(np.arange(1, n + 1))
        phase = 2 * np.pi * np.cumsum(contour) / sr
        voiced = sum(np.sin(h * phase) / h for h in range(1, int(4000 / f0)))
        if pathological:
            voiced = voiced + 0.3 * rng.standard_normal(n)
        shaped = sum(_resonator(voiced, f, 80 + 0.05 * f, sr)
                     for f in FORMANTS[int(rng.integers(len(FORMANTS)))])
        env = np.sin(np.pi * t / syl) ** 0.6
        body.append(shaped * env)
        gap = int(rng.uniform(0.05, 0.14) * sr)
        body.append(np.zeros(gap))
        t_used += syl + gap / sr
    x = np.concatenate([np.zeros(lead), *body, np.zeros(tail)])
    return 0.05 * x / np.sqrt(np.mean(x ** 2))


def noise_signal(kind: str, rng: np.random.Generator, sr: int, seconds: float = 4.0) -> np.ndarray:
    n = int(seconds * sr)
    white = rng.standard_normal(n)
    t = np.arange(n) / sr
    if kind == "BUS":
        b, a = butter(2, 400 / (sr / 2))
        x = lfilter(b, a, white) + 0.3 * sum(np.sin(2 * np.pi * 55 * k * t) / k for k in range(1, 6))
    elif kind == "CAF":
        x = sum(np.roll(speech_like(rng, sr, rng.uniform(100, 230), duration=seconds)[:n], i * 997)
                for i in range(6))
        if x.shape[0] < n:
            x = np.pad(x, (0, n - x.shape[0]))
        x = x + 0.05 * white
    elif kind == "STR":
        pink = lfilter([0.049922035, -0.095993537, 0.050612699, -0.004408786],
                       [1, -2.494956002, 2.017265875, -0.522189400], white)
        x = pink * (1 + 0.3 * np.sin(2 * np.pi * 0.5 * t))
    elif kind == "PED":
        b, a = butter(2, [300 / (sr / 2), 5000 / (sr / 2)], btype="band")
        x = lfilter(b, a, white) + 0.2 * white
    else:
        raise ValueError(f"unknown noise type {kind!r}")
    return 0.1 * x / np.sqrt(np.mean(x ** 2))


def make_fixture_corpus(root, seed: int = 0, utterances_per_speaker: int = 5) -> Path:
    """Write ``root/corpus`` (raw 44.1 kHz clean speech) and ``root/noise``."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    corpus = root / "corpus"
    with_rows = []
    for spk, group, f0 in SPEAKERS:
        with_rows.append((spk, group))
        for i in range(utterances_per_speaker):
            x = speech_like(rng, RAW_RATE, f0, group == "Pathological", rng.uniform(0.9, 1.3))
            save_wav(corpus / "clean" / spk / f"{spk}_u{i:02d}.wav", AudioBuffer(x, RAW_RATE))
    with open(corpus / "speakers.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("speaker_id", "group"))
        w.writerows(with_rows)
    for kind in NOISE_TYPES:
        save_wav(root / "noise" / kind / f"{kind.lower()}_0.wav",
                 AudioBuffer(noise_signal(kind, rng, NOISE_RATE), NOISE_RATE))
    return root
