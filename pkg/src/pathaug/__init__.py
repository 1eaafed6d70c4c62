"""Data augmentation, noisy-mixture generation and objective evaluation for
speech enhancement on small pathological-speech corpora."""

from .audio import (AudioBuffer, CompressionParams, Spectrogram, StftConfig, compress,
                    decompress, istft, load_wav, resample, save_wav, stft)
from .augment import (PitchShiftSpec, SpecMixSpec, TfMask, TimeStretchSpec, make_variants,
                      pitch_shift, sample_tf_mask, spec_mix, specmix_gammas, time_stretch)
from .enhance import EnhancerConfig, enhance
from .metrics import aggregate, delta, fwssnr, ingest_external_scores, seg_snr
from .noise import MixSpec, NoiseCorpus, mix_at_snr, noise_augment, rms, sample_mix_spec, scale_for_snr

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "CompressionParams", "Spectrogram", "StftConfig", "compress", "decompress",
    "istft", "load_wav", "resample", "save_wav", "stft",
    "PitchShiftSpec", "SpecMixSpec", "TfMask", "TimeStretchSpec", "make_variants", "pitch_shift",
    "sample_tf_mask", "spec_mix", "specmix_gammas", "time_stretch",
    "EnhancerConfig", "enhance",
    "aggregate", "delta", "fwssnr", "ingest_external_scores", "seg_snr",
    "MixSpec", "NoiseCorpus", "mix_at_snr", "noise_augment", "rms", "sample_mix_spec", "scale_for_snr",
]
