"""Noise corpus indexing and SNR-controlled additive mixing."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, load_wav

NOISE_TYPES = ("BUS", "CAF", "STR", "PED")
SNR_RANGE = (-6.0, 14.0)
MAX_OFFSET_RETRIES = 8


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class MixSpec:
    """Parameters of one mixture; after mixing also its provenance."""

    noise_type: str
    snr_db: float
    noise_offset: int = 0
    seed: int = 0
    noise_path: str | None = None
    gain: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MixSpec":
        return cls(**d)


class NoiseCorpus:
    """Read-only index of noise recordings keyed by noise type.

    Files are loaded once at construction; ``entries`` holds
    ``(noise_type, relative path)`` tuples in sorted order.
    """

    def __init__(self, root, types=NOISE_TYPES, sample_rate: int | None = None):
        self.root = Path(root)
        self.types = tuple(types)
        entries, audio = [], {}
        for t in self.types:
            files = sorted((self.root / t).glob("*.wav"))
            if not files:
                raise NoiseError(f"noise corpus {self.root} has no files for type {t!r}")
            for f in files:
                rel = f.relative_to(self.root).as_posix()
                buf = load_wav(f)
                entries.append((t, rel))
                audio[rel] = buf
        rates = {b.sample_rate for b in audio.values()}
        if len(rates) != 1:
            raise NoiseError(f"noise files have mixed sample rates {sorted(rates)}")
        self.sample_rate = rates.pop()
        if sample_rate is not None and sample_rate != self.sample_rate:
            raise NoiseError(f"noise corpus is at {self.sample_rate} Hz, expected {sample_rate}")
        self.entries = tuple(entries)
        self._audio = audio

    def files(self, noise_type: str) -> list[str]:
        return [p for t, p in self.entries if t == noise_type]

    def audio(self, rel_path: str) -> AudioBuffer:
        return self._audio[rel_path]


def rms(audio) -> float:
    x = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio, dtype=np.float64)
    if x.shape[0] < 1:
        raise ValueError("rms of empty signal")
    return float(np.sqrt(np.mean(x * x)))


def active_rms(audio, frame: int = 320, floor_db: float = 40.0) -> float:
    """RMS over frames whose energy lies within ``floor_db`` of the loudest frame."""
    x = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio, dtype=np.float64)
    n = max(1, x.shape[0] // frame)
    energy = np.array([np.mean(x[i * frame:(i + 1) * frame] ** 2) for i in range(n)])
    if energy.max() <= 0:
        return 0.0
    keep = energy >= energy.max() * 10 ** (-floor_db / 10)
    return float(np.sqrt(energy[keep].mean()))


LEVELS = {"rms": rms, "active": active_rms}


def scale_for_snr(clean: AudioBuffer, noise: AudioBuffer, snr_db: float, level: str = "rms") -> float:
    """Gain g with 20*log10(level(clean) / level(g * noise)) == snr_db."""
    if len(clean) != len(noise):
        raise ValueError(f"length mismatch: clean {len(clean)} vs noise {len(noise)}")
    measure = LEVELS[level]
    c, n = measure(clean), measure(noise)
    if c == 0:
        raise NoiseError("clean signal is silent")
    if n == 0:
        raise NoiseError("noise signal is silent")
    return (c / n) * 10.0 ** (-snr_db / 20.0)


def noise_segment(noise: np.ndarray, offset: int, length: int) -> np.ndarray:
    """``length`` samples starting at ``offset``, looping over the noise file."""
    idx = (offset + np.arange(length)) % noise.shape[0]
    return noise[idx]


def sample_mix_spec(rng: np.random.Generator, corpus: NoiseCorpus | None = None) -> MixSpec:
    """Draw noise type, file, offset and SNR (uniform in [-6, 14] dB)."""
    types = corpus.types if corpus is not None else NOISE_TYPES
    noise_type = types[int(rng.integers(len(types)))]
    snr = float(rng.uniform(*SNR_RANGE))
    seed = int(rng.integers(2**63))
    path, offset = None, 0
    if corpus is not None:
        files = corpus.files(noise_type)
        path = files[int(rng.integers(len(files)))]
        offset = int(rng.integers(len(corpus.audio(path))))
    return MixSpec(noise_type, snr, offset, seed, path)


def mix_at_snr(clean: AudioBuffer, corpus: NoiseCorpus, spec: MixSpec,
               level: str = "rms") -> tuple[AudioBuffer, MixSpec]:
    """Add a looped noise segment to ``clean`` at ``spec.snr_db``.

    Returns the noisy signal and the spec completed with the file, offset
    and gain actually used.
    """
    if spec.noise_type not in corpus.types:
        raise NoiseError(f"noise type {spec.noise_type!r} not in corpus")
    if clean.sample_rate != corpus.sample_rate:
        raise NoiseError(f"clean rate {clean.sample_rate} != noise rate {corpus.sample_rate}")
    path = spec.noise_path
    if path is None:
        files = corpus.files(spec.noise_type)
        path = files[spec.seed % len(files)]
    noise = corpus.audio(path).samples
    retry_rng = np.random.default_rng(spec.seed)
    offset = spec.noise_offset % noise.shape[0]
    for _ in range(MAX_OFFSET_RETRIES + 1):
        segment = noise_segment(noise, offset, len(clean))
        if np.any(segment):
            break
        offset = int(retry_rng.integers(noise.shape[0]))
    else:
        raise NoiseError(f"no non-silent segment found in {path}")
    seg = AudioBuffer(segment, clean.sample_rate)
    gain = scale_for_snr(clean, seg, spec.snr_db, level)
    noisy = clean.with_samples(clean.samples + gain * segment)
    return noisy, replace(spec, noise_path=path, noise_offset=offset, gain=gain)


def noise_augment(clean: AudioBuffer, corpus: NoiseCorpus, count: int,
                  rng: np.random.Generator, level: str = "rms") -> list[tuple[AudioBuffer, MixSpec]]:
    """``count`` independent mixtures of the same clean signal."""
    if count < 1:
        raise ValueError("count must be at least 1")
    return [mix_at_snr(clean, corpus, sample_mix_spec(rng, corpus), level) for _ in range(count)]


def measured_snr(clean: AudioBuffer, noisy: AudioBuffer) -> float:
    return 20.0 * np.log10(rms(clean) / rms(noisy.samples - clean.samples))
