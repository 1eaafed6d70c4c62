"""Objective metrics, delta scores and per-group aggregation."""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .audio import AudioBuffer

log = logging.getLogger(__name__)

FWSSNR = "fwSSNR"
SEGSNR = "segSNR"
PESQ = "ExternalPESQ"
METRICS = (FWSSNR, SEGSNR, PESQ)
GROUP_ORDER = ("Neurotypical", "Pathological")

SNR_FLOOR, SNR_CEIL = -10.0, 35.0
N_BANDS = 25
BAND_FMIN = 50.0
FRAME_MS, HOP_MS = 32, 16
WEIGHT_EXPONENT = 0.2
ACTIVE_DB = 40.0


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricValue:
    metric: str
    value: float
    utt_id: str


@dataclass(frozen=True)
class DeltaValue:
    metric: str
    delta: float
    utt_id: str


@dataclass(frozen=True)
class GroupReport:
    group: str
    metric: str
    mean: float
    ci_halfwidth: float
    n: int


def _align(clean: AudioBuffer, test: AudioBuffer) -> tuple[np.ndarray, np.ndarray]:
    if clean.sample_rate != test.sample_rate:
        raise MetricError(f"sample rates differ: {clean.sample_rate} vs {test.sample_rate}")
    c, t = clean.samples, test.samples
    if t.shape[0] < c.shape[0]:
        t = np.pad(t, (0, c.shape[0] - t.shape[0]))
    return c, t[: c.shape[0]]


def _frames(x: np.ndarray, n: int, hop: int) -> np.ndarray:
    if x.shape[0] < n:
        x = np.pad(x, (0, n - x.shape[0]))
    count = 1 + (x.shape[0] - n) // hop
    idx = np.arange(n)[None, :] + hop * np.arange(count)[:, None]
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    return x[idx] * win


def _active(clean_frames: np.ndarray) -> np.ndarray:
    energy = np.sum(clean_frames ** 2, axis=1)
    if energy.max() <= 0:
        raise MetricError("clean reference is silent")
    return (energy > 0) & (energy >= energy.max() * 10 ** (-ACTIVE_DB / 10))


def mel_filterbank(n_fft: int, sr: int, n_bands: int = N_BANDS, fmin: float = BAND_FMIN) -> np.ndarray:
    """Triangular filters equally spaced on the mel scale over [fmin, sr/2]."""
    mel = lambda f: 2595.0 * np.log10(1.0 + f / 700.0)
    imel = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    edges = imel(np.linspace(mel(fmin), mel(sr / 2), n_bands + 2))
    f = np.arange(n_fft // 2 + 1) * sr / n_fft
    left, centre, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (f > left) & (f <= centre)
    falling = (f > centre) & (f < right)
    return np.where(rising, (f - left) / (centre - left), 0.0) + \
        np.where(falling, (right - f) / (right - centre), 0.0)


def fwssnr_frames(clean: AudioBuffer, test: AudioBuffer) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame frequency-weighted SNR in dB and the speech-activity mask."""
    c, t = _align(clean, test)
    sr = clean.sample_rate
    n = int(round(FRAME_MS * sr / 1000))
    hop = int(round(HOP_MS * sr / 1000))
    cf, tf = _frames(c, n, hop), _frames(t, n, hop)
    active = _active(cf)
    fb = mel_filterbank(n, sr)
    cb = np.abs(np.fft.rfft(cf, axis=1)) @ fb.T
    tb = np.abs(np.fft.rfft(tf, axis=1)) @ fb.T
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = 10 * np.log10(cb ** 2 / (cb - tb) ** 2)
    snr = np.where(cb == tb, SNR_CEIL, snr)
    snr = np.clip(snr, SNR_FLOOR, SNR_CEIL)
    w = np.where(cb > 0, cb, 0.0) ** WEIGHT_EXPONENT
    den = w.sum(axis=1)
    with np.errstate(invalid="ignore"):
        per_frame = np.where(den > 0, (w * snr).sum(axis=1) / np.where(den > 0, den, 1), SNR_FLOOR)
    return np.clip(per_frame, SNR_FLOOR, SNR_CEIL), active


def fwssnr(clean: AudioBuffer, test: AudioBuffer, utt_id: str = "") -> MetricValue:
    per_frame, active = fwssnr_frames(clean, test)
    return MetricValue(FWSSNR, float(per_frame[active].mean()), utt_id)


def seg_snr(clean: AudioBuffer, test: AudioBuffer, utt_id: str = "") -> MetricValue:
    """Time-domain segmental SNR over speech-active frames."""
    c, t = _align(clean, test)
    sr = clean.sample_rate
    n = int(round(FRAME_MS * sr / 1000))
    hop = int(round(HOP_MS * sr / 1000))
    cf, tf = _frames(c, n, hop), _frames(t, n, hop)
    active = _active(cf)
    sig = np.sum(cf ** 2, axis=1)
    err = np.sum((cf - tf) ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = 10 * np.log10(sig / err)
    snr = np.clip(np.where(err == 0, SNR_CEIL, snr), SNR_FLOOR, SNR_CEIL)
    return MetricValue(SEGSNR, float(snr[active].mean()), utt_id)


INTERNAL_METRICS = {FWSSNR: fwssnr, SEGSNR: seg_snr}


def delta(metric_enh: MetricValue, metric_noisy: MetricValue) -> DeltaValue:
    """Improvement of the enhanced signal over the noisy one."""
    if metric_enh.metric != metric_noisy.metric:
        raise MetricError(f"metric mismatch: {metric_enh.metric} vs {metric_noisy.metric}")
    if metric_enh.utt_id != metric_noisy.utt_id:
        raise MetricError(f"utterance mismatch: {metric_enh.utt_id} vs {metric_noisy.utt_id}")
    return DeltaValue(metric_enh.metric, metric_enh.value - metric_noisy.value, metric_enh.utt_id)


def aggregate(values, groups_by_utt: dict[str, str], level: float = 0.95,
              require_groups=None) -> list[GroupReport]:
    """Mean and normal-approximation CI half-width per (group, metric).

    ``groups_by_utt`` maps utterance ids to speaker groups; a manifest
    (list of entries) is accepted as well.
    """
    if not isinstance(groups_by_utt, dict):
        groups_by_utt = {e.utt_id: e.group for e in groups_by_utt}
    z = NormalDist().inv_cdf(0.5 + level / 2)
    buckets = defaultdict(list)
    for v in values:
        if v.utt_id not in groups_by_utt:
            raise MetricError(f"utterance {v.utt_id!r} has no speaker group")
        buckets[(groups_by_utt[v.utt_id], v.metric)].append(v.delta)
    for g in require_groups or ():
        if not any(k[0] == g for k in buckets):
            raise MetricError(f"group {g!r} has no values")
    if not buckets:
        raise MetricError("nothing to aggregate")

    def order(key):
        g, m = key
        return (GROUP_ORDER.index(g) if g in GROUP_ORDER else len(GROUP_ORDER), g,
                METRICS.index(m) if m in METRICS else len(METRICS), m)

    reports = []
    for key in sorted(buckets, key=order):
        xs = np.sort(np.asarray(buckets[key]))
        n = xs.shape[0]
        mean = float(np.mean(xs))
        ci = float(z * np.std(xs, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        reports.append(GroupReport(key[0], key[1], mean, ci, n))
    return reports


def ingest_external_scores(csv_path, known_ids=None) -> list[MetricValue]:
    """Read ``utt_id,metric,value`` rows of externally computed PESQ scores."""
    out, seen = [], set()
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["utt_id", "metric", "value"]:
            raise MetricError(f"{csv_path}: expected header utt_id,metric,value")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise MetricError(f"{csv_path}:{lineno}: expected 3 fields, got {len(row)}")
            utt, metric, raw = (f.strip() for f in row)
            if metric.lower() not in ("pesq", PESQ.lower()):
                raise MetricError(f"{csv_path}:{lineno}: unsupported metric {metric!r}")
            try:
                value = float(raw)
            except ValueError:
                raise MetricError(f"{csv_path}:{lineno}: bad value {raw!r}") from None
            if not np.isfinite(value):
                raise MetricError(f"{csv_path}:{lineno}: non-finite value")
            if utt in seen:
                raise MetricError(f"{csv_path}: duplicate utt_id {utt!r}")
            seen.add(utt)
            if known_ids is not None and utt not in known_ids:
                log.warning("skipping score for unknown utterance %s", utt)
                continue
            out.append(MetricValue(PESQ, value, utt))
    return out


REPORT_COLUMNS = ("group", "metric", "mean", "ci", "n")


def write_report_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([r.group, r.metric, f"{r.mean:.6f}", f"{r.ci_halfwidth:.6f}", r.n])


def read_report_csv(path) -> list[GroupReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [GroupReport(r["group"], r["metric"], float(r["mean"]), float(r["ci"]), int(r["n"]))
                for r in csv.DictReader(fh)]


def format_table(reports) -> str:
    rows = [("group", "metric", "mean", "ci", "n")]
    rows += [(r.group, "Δ" + r.metric, f"{r.mean:.3f}", f"±{r.ci_halfwidth:.3f}", str(r.n))
             for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(5)]
    lines = ["  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in rows]
    return "\n".join(lines) + "\n"
