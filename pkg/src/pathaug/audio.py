"""Audio buffers, WAV I/O, resampling, STFT analysis/synthesis and
magnitude compression."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

log = logging.getLogger(__name__)

# Kaiser beta for the anti-aliasing filter; ~86 dB stopband.
KAISER_BETA = 8.6


class AudioError(ValueError):
    """Raised for unreadable, unsupported or degenerate audio."""


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise AudioError("audio contains non-finite samples")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise AudioError(f"invalid sample rate {self.sample_rate!r}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def with_samples(self, samples) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate)


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 510
    hop: int = 128
    window_kind: str = "sqrt_hann"

    def __post_init__(self):
        if self.window_len < 2 or not 0 < self.hop <= self.window_len:
            raise ValueError(f"invalid STFT geometry {self.window_len}/{self.hop}")
        if self.window_kind not in WINDOWS:
            raise ValueError(f"unknown window kind {self.window_kind!r}")
        # Every sample must be covered by a window with non-negligible energy.
        w2 = self.window() ** 2
        cover = np.zeros(self.hop)
        for start in range(0, self.window_len, self.hop):
            seg = w2[start:start + self.hop]
            cover[: seg.shape[0]] += seg
        if cover.min() < 1e-6:
            raise ValueError("window/hop combination is not invertible")

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1

    def window(self) -> np.ndarray:
        return WINDOWS[self.window_kind](self.window_len)


def _periodic_hann(n):
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


WINDOWS = {
    "hann": _periodic_hann,
    "sqrt_hann": lambda n: np.sqrt(_periodic_hann(n)),
    "rect": np.ones,
}


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Complex STFT, ``bins[k, l]`` with frequency index k and frame index l."""

    bins: np.ndarray
    config: StftConfig
    sample_rate: int
    original_len: int

    def __post_init__(self):
        b = np.asarray(self.bins)
        if b.ndim != 2 or b.shape[0] != self.config.n_bins:
            raise ValueError(
                f"bins shape {b.shape} does not match {self.config.n_bins} frequency bins")
        object.__setattr__(self, "bins", b.astype(np.complex128, copy=False))

    @property
    def shape(self) -> tuple[int, int]:
        return self.bins.shape

    def with_bins(self, bins, original_len=None) -> "Spectrogram":
        return Spectrogram(bins, self.config, self.sample_rate,
                           self.original_len if original_len is None else original_len)


@dataclass(frozen=True)
class CompressionParams:
    alpha: float = 0.5
    beta: float = 0.33

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("compression alpha and beta must be positive")


# -- WAV I/O -----------------------------------------------------------------

def load_wav(path) -> AudioBuffer:
    """Read a PCM16 or float32 WAV file, averaging channels to mono."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise AudioError(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise AudioError(f"{path}: unsupported sample format {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.shape[0] == 0:
        raise AudioError(f"{path}: zero-length audio")
    return AudioBuffer(x, rate)


def save_wav(path, audio: AudioBuffer) -> int:
    """Write mono PCM16; returns the number of samples that had to be clipped."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scaled = np.round(audio.samples * 32768.0)
    clipped = int(np.count_nonzero((scaled > 32767) | (scaled < -32768)))
    if clipped:
        log.warning("clipped %d samples writing %s", clipped, path)
    wavfile.write(path, audio.sample_rate, np.clip(scaled, -32768, 32767).astype(np.int16))
    return clipped


# -- resampling --------------------------------------------------------------

def resample_ratio(samples: np.ndarray, ratio: float, max_denominator: int = 1000) -> np.ndarray:
    """Polyphase resampling by ``ratio`` (output/input), rationalised."""
    frac = Fraction(ratio).limit_denominator(max_denominator)
    if frac == 1:
        return np.array(samples, dtype=np.float64)
    return resample_poly(samples, frac.numerator, frac.denominator,
                         window=("kaiser", KAISER_BETA))


def resample(audio: AudioBuffer, target_rate: int) -> AudioBuffer:
    if int(target_rate) != target_rate or target_rate <= 0:
        raise ValueError(f"invalid target rate {target_rate!r}")
    target_rate = int(target_rate)
    if target_rate == audio.sample_rate:
        return audio
    frac = Fraction(target_rate, audio.sample_rate)
    y = resample_poly(audio.samples, frac.numerator, frac.denominator,
                      window=("kaiser", KAISER_BETA))
    return AudioBuffer(y, target_rate)


# -- STFT --------------------------------------------------------------------

def n_frames(length: int, config: StftConfig) -> int:
    return max(1, math.ceil(length / config.hop))


def stft(audio: AudioBuffer, config: StftConfig = StftConfig()) -> Spectrogram:
    """Centered STFT with reflect padding of ``window_len // 2`` on each side."""
    x = audio.samples
    if x.shape[0] < 1:
        raise AudioError("cannot transform empty audio")
    n = config.window_len
    pad = n // 2
    frames = n_frames(x.shape[0], config)
    total = (frames - 1) * config.hop + n
    mode = "reflect" if x.shape[0] > 1 else "constant"
    xp = np.pad(x, (pad, pad), mode=mode)
    if xp.shape[0] < total:
        xp = np.pad(xp, (0, total - xp.shape[0]))
    idx = np.arange(n)[None, :] + config.hop * np.arange(frames)[:, None]
    segs = xp[idx] * config.window()
    bins = np.fft.rfft(segs, n=n, axis=1).T
    return Spectrogram(bins, config, audio.sample_rate, x.shape[0])


def istft(spec: Spectrogram) -> AudioBuffer:
    """Least-squares overlap-add inverse of :func:`stft`."""
    cfg = spec.config
    n, hop = cfg.window_len, cfg.hop
    pad = n // 2
    frames = spec.bins.shape[1]
    win = cfg.window()
    segs = np.fft.irfft(spec.bins.T, n=n, axis=1) * win
    total = max((frames - 1) * hop + n, spec.original_len + 2 * pad)
    out = np.zeros(total)
    norm = np.zeros(total)
    w2 = win ** 2
    for l in range(frames):
        start = l * hop
        out[start:start + n] += segs[l]
        norm[start:start + n] += w2
    nz = norm > 1e-10
    out[nz] /= norm[nz]
    out[~nz] = 0.0
    return AudioBuffer(out[pad:pad + spec.original_len], spec.sample_rate)


# -- compression -------------------------------------------------------------

def compress(spec: Spectrogram, p: CompressionParams = CompressionParams()) -> Spectrogram:
    """Map each bin X to beta * |X|**alpha * exp(i arg X)."""
    mag = np.abs(spec.bins)
    return spec.with_bins(p.beta * mag ** p.alpha * np.exp(1j * np.angle(spec.bins)))


def decompress(spec: Spectrogram, p: CompressionParams = CompressionParams()) -> Spectrogram:
    mag = np.abs(spec.bins)
    return spec.with_bins((mag / p.beta) ** (1.0 / p.alpha) * np.exp(1j * np.angle(spec.bins)))
