"""Transformative augmentations: pitch shift, time stretch and SpecMix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBuffer, AudioError, Spectrogram, StftConfig, istft, resample_ratio, stft

PITCH_SEMITONES = (-2.5, -1.5, 1.5, 2.5)
STRETCH_RATES = (0.81, 0.93, 1.07, 1.23)
SPECMIX_FIXED_GAMMAS = (0.1, 0.3, 0.5)
MAX_BANDS = 3

# Analysis geometry of the phase vocoder (independent of the enhancement STFT).
VOCODER_CONFIG = StftConfig(window_len=1024, hop=256, window_kind="hann")


@dataclass(frozen=True)
class PitchShiftSpec:
    semitones: float

    def __post_init__(self):
        if not np.isfinite(self.semitones) or abs(self.semitones) > 24:
            raise ValueError(f"semitones out of range: {self.semitones}")


@dataclass(frozen=True)
class TimeStretchSpec:
    ratio: float

    def __post_init__(self):
        if not 0.25 <= self.ratio <= 4:
            raise ValueError(f"stretch ratio out of range: {self.ratio}")


@dataclass(frozen=True)
class SpecMixSpec:
    gamma: float
    seed: int = 0
    max_freq_bands: int = MAX_BANDS
    max_time_bands: int = MAX_BANDS

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not (1 <= self.max_freq_bands <= MAX_BANDS and 1 <= self.max_time_bands <= MAX_BANDS):
            raise ValueError("band maxima must be between 1 and 3")


@dataclass(frozen=True)
class Band:
    axis: str  # "freq" or "time"
    start: int
    width: int


@dataclass(frozen=True, eq=False)
class TfMask:
    mask: np.ndarray
    bands: tuple[Band, ...] = field(default_factory=tuple)

    @property
    def shape(self):
        return self.mask.shape


def _check_length(audio: AudioBuffer, config: StftConfig):
    if len(audio) < config.window_len:
        raise AudioError(
            f"audio of {len(audio)} samples is shorter than one {config.window_len}-sample window")


def phase_vocoder(spec: Spectrogram, rate: float, out_len: int) -> Spectrogram:
    """Resynthesise ``spec`` at ``rate`` times the original frame rate.

    Magnitudes are linearly interpolated between neighbouring frames; phases
    are propagated with the per-bin instantaneous frequency.
    """
    cfg = spec.config
    D = spec.bins
    n_bins, n_in = D.shape
    steps = np.arange(0.0, n_in, rate)
    D = np.concatenate([D, np.zeros((n_bins, 2), dtype=D.dtype)], axis=1)
    advance = 2.0 * np.pi * cfg.hop * np.arange(n_bins) / cfg.window_len

    lo = steps.astype(int)
    frac = steps - lo
    left, right = D[:, lo], D[:, lo + 1]
    mag = (1.0 - frac) * np.abs(left) + frac * np.abs(right)

    dphase = np.angle(right) - np.angle(left) - advance[:, None]
    dphase -= 2.0 * np.pi * np.round(dphase / (2.0 * np.pi))
    increments = advance[:, None] + dphase
    phase = np.empty_like(mag)
    phase[:, 0] = np.angle(D[:, 0])
    if steps.shape[0] > 1:
        phase[:, 1:] = phase[:, :1] + np.cumsum(increments[:, :-1], axis=1)
    return spec.with_bins(mag * np.exp(1j * phase), original_len=out_len)


def time_stretch(audio: AudioBuffer, spec: TimeStretchSpec,
                 config: StftConfig = VOCODER_CONFIG) -> AudioBuffer:
    """Change duration by 1/ratio without changing pitch (ratio > 1 shortens)."""
    _check_length(audio, config)
    out_len = int(round(len(audio) / spec.ratio))
    stretched = phase_vocoder(stft(audio, config), spec.ratio, out_len)
    return istft(stretched)


def pitch_shift(audio: AudioBuffer, spec: PitchShiftSpec,
                config: StftConfig = VOCODER_CONFIG) -> AudioBuffer:
    """Scale all frequencies by 2**(semitones/12), keeping the length."""
    _check_length(audio, config)
    rate = 2.0 ** (-spec.semitones / 12.0)
    stretched = time_stretch(audio, TimeStretchSpec(rate), config)
    y = resample_ratio(stretched.samples, rate)
    n = len(audio)
    if y.shape[0] < n:
        y = np.pad(y, (0, n - y.shape[0]))
    return audio.with_samples(y[:n])


def make_variants(audio: AudioBuffer, strategy: str) -> list[AudioBuffer]:
    """The four fixed-parameter variants of ``audio`` for PitchShift or TimeStretch."""
    if strategy == "PitchShift":
        return [pitch_shift(audio, PitchShiftSpec(s)) for s in PITCH_SEMITONES]
    if strategy == "TimeStretch":
        return [time_stretch(audio, TimeStretchSpec(r)) for r in STRETCH_RATES]
    raise ValueError(f"make_variants does not handle strategy {strategy!r}")


def specmix_gammas(rng: np.random.Generator) -> list[float]:
    return [*SPECMIX_FIXED_GAMMAS, float(rng.uniform(0.0, 1.0))]


def sample_tf_mask(geometry: tuple[int, int], spec: SpecMixSpec,
                   rng: np.random.Generator | None = None) -> TfMask:
    """Union of up to three full-width frequency bands and up to three
    full-height time bands, each at most ``gamma * dim`` wide."""
    K, L = geometry
    if K < 1 or L < 1:
        raise ValueError(f"invalid mask geometry {geometry}")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    mask = np.zeros((K, L), dtype=np.uint8)
    bands = []
    for axis, dim, most in (("freq", K, spec.max_freq_bands), ("time", L, spec.max_time_bands)):
        max_width = int(np.floor(spec.gamma * dim))
        for _ in range(int(rng.integers(1, most + 1))):
            width = int(rng.integers(0, max_width + 1))
            start = int(rng.integers(0, dim - width + 1))
            bands.append(Band(axis, start, width))
            if axis == "freq":
                mask[start:start + width, :] = 1
            else:
                mask[:, start:start + width] = 1
    return TfMask(mask, tuple(bands))


def _pad_frames(spec: Spectrogram, frames: int) -> np.ndarray:
    b = spec.bins
    return np.pad(b, ((0, 0), (0, frames - b.shape[1]))) if b.shape[1] < frames else b


def spec_mix(pair_a: tuple[Spectrogram, Spectrogram], pair_b: tuple[Spectrogram, Spectrogram],
             mask: TfMask) -> tuple[Spectrogram, Spectrogram]:
    """Mix (clean, noisy) pair B into pair A wherever ``mask`` is 1.

    The same mask is applied to the clean and the noisy spectrograms so
    the mixed pair stays aligned.
    """
    specs = [*pair_a, *pair_b]
    n_bins = {s.shape[0] for s in specs}
    if len(n_bins) != 1:
        raise ValueError(f"frequency dimensions differ: {sorted(n_bins)}")
    frames = max(s.shape[1] for s in specs)
    if mask.shape != (specs[0].shape[0], frames):
        raise ValueError(f"mask shape {mask.shape} does not match ({specs[0].shape[0]}, {frames})")
    m = mask.mask.astype(bool)
    out_len = max(s.original_len for s in specs)
    mixed = []
    for a, b in zip(pair_a, pair_b):
        bins = np.where(m, _pad_frames(b, frames), _pad_frames(a, frames))
        mixed.append(a.with_bins(bins, original_len=out_len))
    return mixed[0], mixed[1]
