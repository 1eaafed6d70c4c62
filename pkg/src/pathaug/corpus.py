"""Manifests, speaker-independent folds, augmentation planning and
materialization of augmented corpora.

All paths stored in a manifest are POSIX paths relative to the workspace
directory that holds the manifest.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from . import augment as aug
from .audio import StftConfig, istft, load_wav, resample, save_wav, stft
from .noise import MixSpec, NoiseCorpus, mix_at_snr, sample_mix_spec
from .seeds import context, derive_rng, derive_seed, parallel_map

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
GROUPS = ("Neurotypical", "Pathological")
STRATEGIES = ("None", "PitchShift", "TimeStretch", "SpecMix", "Synthetic", "NoiseAdd")
RATIOS = (25, 100, 400)
VARIANTS_PER_PARENT = 4
SYNTHETIC_MAX_RATIO = 100
DEFAULT_RATE = 16000

_TAGS = {"PitchShift": "ps", "TimeStretch": "ts", "SpecMix": "sm", "NoiseAdd": "na"}


class CorpusError(ValueError):
    pass


class FoldError(CorpusError):
    pass


class PlanError(CorpusError):
    pass


# -- manifest ----------------------------------------------------------------

@dataclass(frozen=True)
class Augmentation:
    strategy: str = "None"
    params: dict = field(default_factory=dict)
    parent_utt_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise CorpusError(f"unknown strategy {self.strategy!r}")
        object.__setattr__(self, "parent_utt_ids", tuple(self.parent_utt_ids))


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    speaker_id: str
    group: str
    clean_path: str
    noisy_path: str | None = None
    mix: MixSpec | None = None
    augmentation: Augmentation = Augmentation()
    duration: float = 0.0

    def __post_init__(self):
        if self.group not in GROUPS:
            raise CorpusError(f"{self.utt_id}: unknown group {self.group!r}")

    @property
    def is_original(self) -> bool:
        return self.augmentation.strategy == "None"

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "utt_id": self.utt_id,
            "speaker_id": self.speaker_id,
            "group": self.group,
            "clean_path": self.clean_path,
            "noisy_path": self.noisy_path,
            "mix": None if self.mix is None else self.mix.to_dict(),
            "augmentation": {
                "strategy": self.augmentation.strategy,
                "params": self.augmentation.params,
                "parent_utt_ids": list(self.augmentation.parent_utt_ids),
            },
            "duration": self.duration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise CorpusError(f"unsupported manifest schema_version {version!r}")
        a = d["augmentation"]
        return cls(
            utt_id=d["utt_id"], speaker_id=d["speaker_id"], group=d["group"],
            clean_path=d["clean_path"], noisy_path=d.get("noisy_path"),
            mix=None if d.get("mix") is None else MixSpec.from_dict(d["mix"]),
            augmentation=Augmentation(a["strategy"], a.get("params", {}), a.get("parent_utt_ids", ())),
            duration=d["duration"],
        )


def dumps_entry(entry: ManifestEntry) -> str:
    return json.dumps(entry.to_dict(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_manifest(entries, path) -> None:
    entries = sorted(entries, key=lambda e: e.utt_id)
    check_manifest(entries)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for e in entries:
            fh.write(dumps_entry(e) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                entries.append(ManifestEntry.from_dict(json.loads(line)))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed entry ({exc})") from exc
    check_manifest(entries)
    return entries


def check_manifest(entries) -> None:
    """Unique ids, resolvable parents, and provenance chains ending at originals."""
    by_id = {}
    for e in entries:
        if e.utt_id in by_id:
            raise CorpusError(f"duplicate utt_id {e.utt_id!r}")
        by_id[e.utt_id] = e
    for e in entries:
        if e.augmentation.strategy == "Synthetic" and "generator" not in e.augmentation.params:
            raise CorpusError(f"{e.utt_id}: synthetic entry lacks a generator name")
        provenance_roots(by_id, e.utt_id)


def provenance_roots(by_id: dict, utt_id: str) -> set[str]:
    """Original utterances that ``utt_id`` derives from."""
    roots, stack, seen = set(), [utt_id], set()
    while stack:
        uid = stack.pop()
        if uid in seen:
            raise CorpusError(f"provenance cycle through {uid!r}")
        seen.add(uid)
        if uid not in by_id:
            raise CorpusError(f"{utt_id}: parent {uid!r} is not in the manifest")
        e = by_id[uid]
        if e.is_original:
            roots.add(uid)
        elif not e.augmentation.parent_utt_ids:
            raise CorpusError(f"augmented entry {uid!r} has no parents")
        stack.extend(e.augmentation.parent_utt_ids)
    return roots


def speakers_of(entries) -> list[tuple[str, str]]:
    return sorted({(e.speaker_id, e.group) for e in entries if e.is_original})


def round_half_up(x: float) -> int:
    return int(Decimal(str(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


# -- corpus preparation ------------------------------------------------------

def read_speakers(path) -> list[tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(r["speaker_id"].strip(), r["group"].strip()) for r in csv.DictReader(fh)]
    for spk, group in rows:
        if group not in GROUPS:
            raise CorpusError(f"speaker {spk}: unknown group {group!r}")
    return rows


def prepare_corpus(raw_root, root, rate: int = DEFAULT_RATE, peak: float = 0.5) -> list[ManifestEntry]:
    """Resample ``raw_root/clean/{speaker}/{utt}.wav`` into ``root/clean``.

    A single corpus-wide gain keeps the loudest original at or below
    ``peak``, leaving headroom for low-SNR mixtures while preserving
    relative levels.
    """
    raw_root, root = Path(raw_root), Path(root)
    speakers = read_speakers(raw_root / "speakers.csv")
    files = []
    for spk, group in speakers:
        found = sorted((raw_root / "clean" / spk).glob("*.wav"))
        if not found:
            raise CorpusError(f"speaker {spk} has no recordings under {raw_root / 'clean' / spk}")
        files += [(spk, group, f) for f in found]
    loudest = max(float(np.max(np.abs(load_wav(f).samples))) for _, _, f in files)
    scale = min(1.0, peak / loudest) if loudest > 0 else 1.0
    entries = []
    for spk, group, f in files:
        src = load_wav(f)
        res = resample(src, rate)
        out = res.with_samples(res.samples * scale)
        rel = f"clean/{spk}/{f.stem}.wav"
        save_wav(root / rel, out)
        entries.append(ManifestEntry(
            utt_id=f.stem, speaker_id=spk, group=group, clean_path=rel,
            augmentation=Augmentation("None", {"level_scale": scale, "source_rate": src.sample_rate}),
            duration=len(out) / rate))
    return sorted(entries, key=lambda e: e.utt_id)


def _mix_original(entry: ManifestEntry) -> ManifestEntry:
    ctx = context()
    root = Path(ctx["root"])
    clean = load_wav(root / entry.clean_path)
    rng = derive_rng(ctx["seed"], "mix", entry.utt_id)
    noisy, prov = mix_at_snr(clean, ctx["corpus"], sample_mix_spec(rng, ctx["corpus"]), ctx["level"])
    rel = f"noisy/{entry.speaker_id}/{entry.utt_id}.wav"
    save_wav(root / rel, noisy)
    log.info("event=mix utt=%s type=%s snr=%.4f offset=%d seed=%d",
             entry.utt_id, prov.noise_type, prov.snr_db, prov.noise_offset, prov.seed)
    return replace(entry, noisy_path=rel, mix=prov)


def mix_corpus(entries, corpus: NoiseCorpus, root, seed: int, jobs: int = 1,
               level: str = "rms") -> list[ManifestEntry]:
    """Create the noisy counterpart of every original entry that lacks one."""
    todo = [e for e in entries if e.is_original and e.noisy_path is None]
    done = parallel_map(_mix_original, todo, jobs,
                        {"root": str(root), "seed": seed, "corpus": corpus, "level": level})
    by_id = {e.utt_id: e for e in entries}
    by_id.update({e.utt_id: e for e in done})
    return sorted(by_id.values(), key=lambda e: e.utt_id)


# -- folds -------------------------------------------------------------------

@dataclass(frozen=True)
class Fold:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def partition_of(self, speaker_id: str) -> str | None:
        for name in ("train", "validation", "test"):
            if speaker_id in getattr(self, name):
                return name
        return None


@dataclass(frozen=True)
class FoldSplit:
    fold_count: int
    folds: tuple[Fold, ...]
    seed: int = 0

    def to_json(self) -> str:
        doc = {"fold_count": self.fold_count, "seed": self.seed,
               "folds": [{"train": list(f.train), "validation": list(f.validation),
                          "test": list(f.test)} for f in self.folds]}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FoldSplit":
        doc = json.loads(text)
        folds = tuple(Fold(tuple(f["train"]), tuple(f["validation"]), tuple(f["test"]))
                      for f in doc["folds"])
        return cls(doc["fold_count"], folds, doc.get("seed", 0))


def build_folds(speakers, k: int = 10, seed: int = 0) -> FoldSplit:
    """Group-stratified, speaker-independent k-fold split.

    Speakers are shuffled within each group and dealt round-robin onto the
    folds, groups one after another. Fold i tests on its own speakers and
    validates on fold (i + k//2) % k; the rest train.
    """
    speakers = sorted(set(speakers))
    if k < 2:
        raise FoldError("need at least 2 folds")
    if len(speakers) < k:
        raise FoldError(f"{len(speakers)} speakers cannot fill {k} folds")
    if len({s for s, _ in speakers}) != len(speakers):
        raise FoldError("a speaker is listed under more than one group")
    rng = np.random.default_rng(seed)
    buckets: list[list[str]] = [[] for _ in range(k)]
    pos = 0
    for group in sorted({g for _, g in speakers}):
        ids = [s for s, g in speakers if g == group]
        for i in rng.permutation(len(ids)):
            buckets[pos % k].append(ids[i])
            pos += 1
    folds = []
    for i in range(k):
        val = (i + k // 2) % k
        train = [s for j, b in enumerate(buckets) if j not in (i, val) for s in b]
        folds.append(Fold(tuple(sorted(train)), tuple(sorted(buckets[val])), tuple(sorted(buckets[i]))))
    return FoldSplit(k, tuple(folds), seed)


# -- planning ----------------------------------------------------------------

@dataclass(frozen=True)
class PlanItem:
    utt_id: str
    speaker_id: str
    parent_utt_id: str
    variant: int
    params: dict
    seed: int


@dataclass(frozen=True)
class AugPlan:
    strategy: str
    ratio: int
    fold: int
    items: tuple[PlanItem, ...]

    def per_speaker(self) -> dict[str, list[PlanItem]]:
        out: dict[str, list[PlanItem]] = {}
        for it in self.items:
            out.setdefault(it.speaker_id, []).append(it)
        return out

    def to_lines(self) -> list[str]:
        return [json.dumps({"utt_id": it.utt_id, "speaker_id": it.speaker_id,
                            "parent": it.parent_utt_id, "variant": it.variant,
                            "params": it.params, "seed": it.seed}, sort_keys=True)
                for it in self.items]


def _candidates(strategy, parents, train_ids, pool_by_speaker, speaker, seed, fold):
    if strategy == "Synthetic":
        return [(e.augmentation.parent_utt_ids[0], i, {"pool_utt_id": e.utt_id}, e.utt_id)
                for i, e in enumerate(pool_by_speaker.get(speaker, []))]
    out = []
    for p in parents:
        if strategy == "SpecMix":
            gammas = aug.specmix_gammas(derive_rng(seed, "specmix-gamma", p))
            others = [u for u in train_ids if u != p]
            if not others:
                raise PlanError("SpecMix needs at least two training utterances")
        for v in range(VARIANTS_PER_PARENT):
            if strategy == "PitchShift":
                params = {"semitones": aug.PITCH_SEMITONES[v]}
            elif strategy == "TimeStretch":
                params = {"ratio": aug.STRETCH_RATES[v]}
            elif strategy == "NoiseAdd":
                params = {"version": v}
            else:
                prng = derive_rng(seed, "specmix-partner", fold, p, v)
                params = {"gamma": gammas[v], "partner": others[int(prng.integers(len(others)))]}
            out.append((p, v, params, f"{p}__{_TAGS[strategy]}{v}"))
    return out


def plan_augmentation(manifest, folds: FoldSplit, fold: int, strategy: str, ratio: int,
                      seed: int, synthetic_pool=()) -> AugPlan:
    """Choose the augmented items for one (fold, strategy, ratio).

    Each training speaker gets round(ratio/100 * #originals) items. When
    that equals the number of generated variants all are used; otherwise a
    uniform subset without replacement is drawn per speaker.
    """
    if strategy not in STRATEGIES or strategy == "None":
        raise PlanError(f"unknown augmentation strategy {strategy!r}")
    if ratio not in RATIOS:
        raise PlanError(f"ratio must be one of {RATIOS}, got {ratio}")
    if strategy == "Synthetic" and ratio > SYNTHETIC_MAX_RATIO:
        raise PlanError(f"Synthetic augmentation is capped at {SYNTHETIC_MAX_RATIO}% "
                        f"(more synthetic data did not help and costs far more); got {ratio}%")
    if not 0 <= fold < folds.fold_count:
        raise PlanError(f"fold {fold} out of range 0..{folds.fold_count - 1}")
    train = set(folds.folds[fold].train)
    originals = sorted((e for e in manifest if e.is_original and e.speaker_id in train),
                       key=lambda e: e.utt_id)
    train_ids = [e.utt_id for e in originals]
    pool_by_speaker: dict[str, list[ManifestEntry]] = {}
    for e in sorted(synthetic_pool, key=lambda e: e.utt_id):
        if e.speaker_id in train:
            pool_by_speaker.setdefault(e.speaker_id, []).append(e)

    items = []
    for speaker in sorted(train):
        parents = [e.utt_id for e in originals if e.speaker_id == speaker]
        if not parents:
            continue
        wanted = round_half_up(ratio / 100 * len(parents))
        cands = _candidates(strategy, parents, train_ids, pool_by_speaker, speaker, seed, fold)
        if wanted > len(cands):
            raise PlanError(f"speaker {speaker}: {ratio}% needs {wanted} items but only "
                            f"{len(cands)} {strategy} variants exist")
        if wanted == len(cands):
            chosen = range(len(cands))
        else:
            rng = derive_rng(seed, "subset", fold, strategy, ratio, speaker)
            chosen = sorted(rng.choice(len(cands), size=wanted, replace=False))
        for i in chosen:
            parent, v, params, uid = cands[i]
            items.append(PlanItem(uid, speaker, parent, v, params,
                                  derive_seed(seed, strategy, uid, fold)))
    return AugPlan(strategy, ratio, fold, tuple(items))


# -- synthetic ingestion -----------------------------------------------------

def ingest_synthetic(directory, generator_name: str, manifest, root,
                     rate: int = DEFAULT_RATE) -> list[ManifestEntry]:
    """Import externally synthesised speech laid out as ``directory/{speaker}/*.wav``.

    Audio is resampled to ``rate`` and copied to
    ``root/synthetic/{generator}/{speaker}``. The reference utterance used
    for voice cloning is read from ``{speaker}/reference.txt`` if present,
    otherwise the speaker's first original utterance is assumed.
    """
    directory, root = Path(directory), Path(root)
    known = {}
    for e in manifest:
        if e.is_original:
            known.setdefault(e.speaker_id, []).append(e)
    by_id = {e.utt_id: e for e in manifest}
    out = []
    if not directory.is_dir():
        return out
    for spk_dir in sorted(p for p in directory.iterdir() if p.is_dir()):
        spk = spk_dir.name
        if spk not in known:
            raise CorpusError(f"synthetic speaker directory {spk!r} is not in the manifest")
        ref_file = spk_dir / "reference.txt"
        if ref_file.exists():
            reference = ref_file.read_text(encoding="utf-8").strip()
            if reference not in by_id:
                raise CorpusError(f"{ref_file}: unknown reference utterance {reference!r}")
        else:
            reference = min(e.utt_id for e in known[spk])
        group = known[spk][0].group
        for f in sorted(spk_dir.glob("*.wav")):
            audio = resample(load_wav(f), rate)
            rel = f"synthetic/{generator_name}/{spk}/{f.stem}.wav"
            save_wav(root / rel, audio)
            out.append(ManifestEntry(
                utt_id=f"{generator_name}_{spk}_{f.stem}", speaker_id=spk, group=group,
                clean_path=rel,
                augmentation=Augmentation("Synthetic", {"generator": generator_name,
                                                        "reference_utt_id": reference},
                                          (reference,)),
                duration=len(audio) / rate))
    return out


# -- materialization ---------------------------------------------------------

def _materialize_item(item: PlanItem) -> ManifestEntry:
    ctx = context()
    root, out_dir = Path(ctx["root"]), ctx["out_dir"]
    strategy, by_id, corpus = ctx["strategy"], ctx["by_id"], ctx["corpus"]
    parent = by_id[item.parent_utt_id]
    params = dict(item.params, fold=ctx["fold"], seed=item.seed)
    base = f"{out_dir}/{item.speaker_id}/{item.utt_id}"
    rng = np.random.default_rng(item.seed)

    if strategy == "SpecMix":
        partner = by_id[item.params["partner"]]
        for e in (parent, partner):
            if e.noisy_path is None:
                raise CorpusError(f"SpecMix parent {e.utt_id} has no noisy mixture; run mix first")
        cfg = ctx["stft"]
        a = (stft(load_wav(root / parent.clean_path), cfg), stft(load_wav(root / parent.noisy_path), cfg))
        b = (stft(load_wav(root / partner.clean_path), cfg), stft(load_wav(root / partner.noisy_path), cfg))
        geometry = (cfg.n_bins, max(s.shape[1] for s in (*a, *b)))
        mask = aug.sample_tf_mask(geometry, aug.SpecMixSpec(item.params["gamma"]), rng)
        clean_spec, noisy_spec = aug.spec_mix(a, b, mask)
        clean, noisy = istft(clean_spec), istft(noisy_spec)
        params["mask_bands"] = [[b.axis, b.start, b.width] for b in mask.bands]
        clean_rel, noisy_rel = f"{base}_clean.wav", f"{base}_noisy.wav"
        save_wav(root / clean_rel, clean)
        save_wav(root / noisy_rel, noisy)
        entry = ManifestEntry(item.utt_id, item.speaker_id, parent.group, clean_rel, noisy_rel, None,
                              Augmentation("SpecMix", params, (parent.utt_id, partner.utt_id)),
                              len(clean) / clean.sample_rate)
    else:
        if strategy == "Synthetic":
            source = ctx["pool"][item.params["pool_utt_id"]]
            clean, clean_rel = load_wav(root / source.clean_path), source.clean_path
            params.update(source.augmentation.params)
        elif strategy == "NoiseAdd":
            clean, clean_rel = load_wav(root / parent.clean_path), parent.clean_path
        else:
            src = load_wav(root / parent.clean_path)
            if strategy == "PitchShift":
                clean = aug.pitch_shift(src, aug.PitchShiftSpec(item.params["semitones"]))
            else:
                clean = aug.time_stretch(src, aug.TimeStretchSpec(item.params["ratio"]))
            clean_rel = f"{base}_clean.wav"
            save_wav(root / clean_rel, clean)
            # mix against what was actually stored
            clean = load_wav(root / clean_rel)
        noisy, prov = mix_at_snr(clean, corpus, sample_mix_spec(rng, corpus), ctx["level"])
        noisy_rel = f"{base}_noisy.wav"
        save_wav(root / noisy_rel, noisy)
        parents = (parent.utt_id,)
        entry = ManifestEntry(item.utt_id, item.speaker_id, parent.group, clean_rel, noisy_rel, prov,
                              Augmentation(strategy, params, parents), len(clean) / clean.sample_rate)
    log.info("event=augment strategy=%s utt=%s parent=%s variant=%d seed=%d",
             strategy, item.utt_id, item.parent_utt_id, item.variant, item.seed)
    return entry


def materialize(plan: AugPlan, manifest, corpus: NoiseCorpus, root, out_dir: str,
                synthetic_pool=(), jobs: int = 1, level: str = "rms",
                stft_config: StftConfig = StftConfig()) -> list[ManifestEntry]:
    """Render every planned item to ``root/out_dir`` and return the grown manifest."""
    by_id = {e.utt_id: e for e in manifest}
    pool = {e.utt_id: e for e in synthetic_pool}
    for it in plan.items:
        if it.parent_utt_id not in by_id:
            raise PlanError(f"plan references unknown parent {it.parent_utt_id!r}")
    ctx = {"root": str(root), "out_dir": out_dir.strip("/"), "strategy": plan.strategy,
           "by_id": by_id, "corpus": corpus, "fold": plan.fold, "pool": pool,
           "level": level, "stft": stft_config}
    new = parallel_map(_materialize_item, plan.items, jobs, ctx)
    merged = {e.utt_id: e for e in manifest}
    for e in new:
        if e.utt_id in merged:
            raise CorpusError(f"augmented id {e.utt_id!r} collides with an existing entry")
        merged[e.utt_id] = e
    return sorted(merged.values(), key=lambda e: e.utt_id)


def leakage(manifest, folds: FoldSplit, fold: int) -> list[str]:
    """Augmented entries of ``fold`` that derive from non-training speakers."""
    by_id = {e.utt_id: e for e in manifest}
    train = set(folds.folds[fold].train)
    bad = []
    for e in manifest:
        if e.is_original or e.augmentation.params.get("fold") != fold:
            continue
        if any(by_id[r].speaker_id not in train for r in provenance_roots(by_id, e.utt_id)):
            bad.append(e.utt_id)
    return bad
