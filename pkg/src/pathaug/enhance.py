"""Classical single-channel enhancers standing in for trained SE models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import minimum_filter1d, uniform_filter1d

from .audio import AudioBuffer, AudioError, StftConfig, istft, stft

METHODS = ("SpectralSubtraction", "Wiener", "Identity")
_EPS = 1e-12


@dataclass(frozen=True)
class EnhancerConfig:
    method: str = "Wiener"
    noise_frames: int = 6
    floor: float = 0.002
    smoothing: float = 0.98
    # minimum-statistics tracker
    psd_smoothing: float = 0.7
    min_window_s: float = 1.5
    min_bias: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown enhancer {self.method!r}; choose from {METHODS}")
        if not 0 <= self.floor <= 1:
            raise ValueError("floor must lie in [0, 1]")
        if not 0 <= self.smoothing < 1:
            raise ValueError("smoothing must lie in [0, 1)")
        if self.noise_frames < 1:
            raise ValueError("noise_frames must be positive")


def estimate_noise_psd(power: np.ndarray, cfg: EnhancerConfig, frame_rate: float) -> np.ndarray:
    """Noise PSD per (bin, frame): initial-frame mean, then minimum statistics.

    The smoothed periodogram starts from the mean of the first
    ``noise_frames`` frames; its sliding minimum over ``min_window_s``
    seconds, bias-corrected, tracks the noise floor. The initial estimate
    bounds the tracker from below for the leading frames.
    """
    init = power[:, : cfg.noise_frames].mean(axis=1)
    smoothed = np.empty_like(power)
    prev = init
    a = cfg.psd_smoothing
    for l in range(power.shape[1]):
        prev = a * prev + (1 - a) * power[:, l]
        smoothed[:, l] = prev
    width = max(1, int(round(cfg.min_window_s * frame_rate)))
    tracked = cfg.min_bias * minimum_filter1d(smoothed, size=width, axis=1, mode="nearest")
    lead = min(cfg.noise_frames, power.shape[1])
    tracked[:, :lead] = np.maximum(tracked[:, :lead], init[:, None])
    return uniform_filter1d(tracked, size=5, axis=1, mode="nearest")


def _wiener_gain(power, noise, cfg):
    post = power / np.maximum(noise, _EPS)
    gain = np.empty_like(power)
    g_prev = np.ones(power.shape[0])
    post_prev = post[:, 0]
    a = cfg.smoothing
    for l in range(power.shape[1]):
        prior = a * g_prev ** 2 * post_prev + (1 - a) * np.maximum(post[:, l] - 1, 0)
        g = prior / (1 + prior)
        gain[:, l] = g
        g_prev, post_prev = g, post[:, l]
    return gain


def _subtraction_gain(power, noise, cfg):
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.sqrt(np.maximum(1 - noise / power, 0))
    return np.nan_to_num(g)


def min_length(config: StftConfig, cfg: EnhancerConfig) -> int:
    return config.window_len + (cfg.noise_frames - 1) * config.hop


def enhance(noisy: AudioBuffer, cfg: EnhancerConfig = EnhancerConfig(),
            config: StftConfig = StftConfig()) -> AudioBuffer:
    if cfg.method == "Identity":
        return noisy
    if len(noisy) < min_length(config, cfg):
        raise AudioError(f"audio of {len(noisy)} samples is too short to estimate noise")
    spec = stft(noisy, config)
    power = np.abs(spec.bins) ** 2
    noise = estimate_noise_psd(power, cfg, noisy.sample_rate / config.hop)
    gain = _wiener_gain(power, noise, cfg) if cfg.method == "Wiener" else _subtraction_gain(power, noise, cfg)
    gain = np.clip(gain, cfg.floor, 1.0)
    out = istft(spec.with_bins(spec.bins * gain))
    return out
