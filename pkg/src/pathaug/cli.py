"""Command-line pipeline: resample -> split -> mix -> augment -> enhance -> evaluate -> report.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import corpus as cm
from . import metrics as mt
from .audio import CompressionParams, StftConfig, load_wav, save_wav
from .enhance import EnhancerConfig, enhance
from .fixtures import make_fixture_corpus
from .noise import LEVELS, NoiseCorpus
from .seeds import context, parallel_map

log = logging.getLogger("pathaug")

STRATEGY_TOKENS = {
    "noise": "NoiseAdd",
    "pitch": "PitchShift",
    "stretch": "TimeStretch",
    "specmix": "SpecMix",
    "synthetic": "Synthetic",
}
METHOD_TOKENS = {"wiener": "Wiener", "specsub": "SpectralSubtraction", "identity": "Identity"}
METRIC_TOKENS = {"fwssnr": mt.FWSSNR, "segsnr": mt.SEGSNR}

MANIFEST = "manifest.jsonl"
FOLDS = "folds.json"


class ConfigError(Exception):
    """Bad usage or configuration; exit code 2."""


@dataclass
class RunConfig:
    seed: int | None = None
    workspace: str | None = None
    corpus: str | None = None
    noise: str | None = None
    rate: int = 16000
    folds: int = 10
    fold: int = 0
    stft: dict = field(default_factory=lambda: {"window_len": 510, "hop": 128})
    compression: dict = field(default_factory=lambda: {"alpha": 0.5, "beta": 0.33})
    strategies: list = field(default_factory=list)
    enhancer: dict = field(default_factory=lambda: {"method": "Wiener"})
    metrics: list = field(default_factory=lambda: ["fwssnr", "segsnr"])
    level: str = "rms"
    ci_level: float = 0.95
    jobs: int | None = None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**doc)

    def stft_config(self) -> StftConfig:
        return StftConfig(**self.stft)

    def compression_params(self) -> CompressionParams:
        return CompressionParams(**self.compression)

    def enhancer_config(self) -> EnhancerConfig:
        d = dict(self.enhancer)
        d["method"] = METHOD_TOKENS.get(str(d.get("method", "Wiener")).lower(), d.get("method"))
        return EnhancerConfig(**d)

    def validate(self):
        if self.seed is None:
            raise ConfigError("a master seed is required (--seed or config 'seed')")
        if int(self.seed) < 0:
            raise ConfigError("seed must be non-negative")
        if self.level not in LEVELS:
            raise ConfigError(f"level must be one of {sorted(LEVELS)}")
        try:
            self.stft_config()
            self.compression_params()
            self.enhancer_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        for m in self.metrics:
            if m.lower() not in METRIC_TOKENS:
                raise ConfigError(f"unknown metric {m!r}")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for name in ("seed", "workspace", "corpus", "noise", "rate", "folds", "fold", "jobs", "level"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "method", None):
        cfg.enhancer = dict(cfg.enhancer, method=args.method)
    if getattr(args, "metric", None):
        cfg.metrics = args.metric
    cfg.validate()
    return cfg


def _jobs(cfg) -> int:
    return cfg.jobs if cfg.jobs else (os.cpu_count() or 1)


def _dir(path, what, must_exist=True) -> Path:
    if path is None:
        raise ConfigError(f"--{what} is required")
    p = Path(path)
    if must_exist and not p.is_dir():
        raise ConfigError(f"{what} directory {p} does not exist")
    return p


def _file(path, what) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} {p} does not exist")
    return p


def _workspace_manifest(ws: Path, name=None) -> Path:
    return _file(ws / (name or MANIFEST), "manifest")


# -- commands ----------------------------------------------------------------

def cmd_fixture(args, cfg):
    root = make_fixture_corpus(args.out, seed=cfg.seed)
    print(f"fixture corpus written to {root}")


def cmd_resample(args, cfg):
    raw = _dir(cfg.corpus, "corpus")
    _file(raw / "speakers.csv", "speaker list")
    ws = _dir(cfg.workspace, "workspace", must_exist=False)
    entries = cm.prepare_corpus(raw, ws, cfg.rate)
    cm.write_manifest(entries, ws / MANIFEST)
    print(f"{len(entries)} utterances resampled to {cfg.rate} Hz -> {ws / MANIFEST}")


def cmd_split(args, cfg):
    ws = _dir(cfg.workspace, "workspace")
    entries = cm.read_manifest(_workspace_manifest(ws))
    split = cm.build_folds(cm.speakers_of(entries), cfg.folds, cfg.seed)
    (ws / FOLDS).write_text(split.to_json(), encoding="utf-8")
    print(f"{split.fold_count} folds -> {ws / FOLDS}")


def cmd_mix(args, cfg):
    ws = _dir(cfg.workspace, "workspace")
    noise_root = _dir(cfg.noise, "noise")
    path = _workspace_manifest(ws)
    entries = cm.read_manifest(path)
    corpus = NoiseCorpus(noise_root, sample_rate=cfg.rate)
    mixed = cm.mix_corpus(entries, corpus, ws, cfg.seed, _jobs(cfg), cfg.level)
    cm.write_manifest(mixed, path)
    print(f"{sum(e.noisy_path is not None for e in mixed)} noisy mixtures in {path}")


def _strategy(token) -> str:
    if token in STRATEGY_TOKENS:
        return STRATEGY_TOKENS[token]
    if token in STRATEGY_TOKENS.values() and token != "None":
        return token
    raise ConfigError(f"unknown strategy {token!r}; choose from {', '.join(STRATEGY_TOKENS)}")


def augmented_manifest_name(fold, strategy, ratio) -> str:
    return f"manifest_fold{fold}_{strategy}{ratio}.jsonl"


def cmd_augment(args, cfg):
    ws = _dir(cfg.workspace, "workspace")
    noise_root = _dir(cfg.noise, "noise")
    if args.strategy:
        if args.ratio is None:
            raise ConfigError("--ratio is required with --strategy")
        runs = [(args.strategy, args.ratio)]
    else:
        runs = [tuple(r) for r in cfg.strategies]
    if not runs:
        raise ConfigError("no strategy given (--strategy or config 'strategies')")
    runs = [(_strategy(s), int(r)) for s, r in runs]
    for s, r in runs:
        if r not in cm.RATIOS:
            raise ConfigError(f"ratio must be one of {cm.RATIOS}, got {r}")
        if s == "Synthetic" and (not args.synthetic_dir or not args.generator):
            raise ConfigError("synthetic augmentation needs --synthetic-dir and --generator")
    if args.synthetic_dir:
        _dir(args.synthetic_dir, "synthetic-dir")
    entries = cm.read_manifest(_workspace_manifest(ws))
    split = cm.FoldSplit.from_json(_file(ws / FOLDS, "fold file").read_text(encoding="utf-8"))
    corpus = NoiseCorpus(noise_root, sample_rate=cfg.rate)
    for strategy, ratio in runs:
        pool = []
        if strategy == "Synthetic":
            src = Path(args.synthetic_dir) / args.generator
            if args.dry_run:
                raise ConfigError("--dry-run is not supported for synthetic ingestion")
            pool = cm.ingest_synthetic(src, args.generator, entries, ws, cfg.rate)
        plan = cm.plan_augmentation(entries, split, cfg.fold, strategy, ratio, cfg.seed, pool)
        if args.dry_run:
            for line in plan.to_lines():
                print(line)
            continue
        out_dir = f"aug/fold{cfg.fold}/{strategy}{ratio}"
        grown = cm.materialize(plan, entries, corpus, ws, out_dir, pool, _jobs(cfg), cfg.level,
                               cfg.stft_config())
        bad = cm.leakage(grown, split, cfg.fold)
        if bad:
            raise RuntimeError(f"augmented entries leak from held-out speakers: {bad[:5]}")
        name = augmented_manifest_name(cfg.fold, strategy, ratio)
        cm.write_manifest(grown, ws / name)
        print(f"{strategy}@{ratio}%: +{len(plan.items)} entries -> {ws / name}")


def _select(entries, split, fold, partition):
    chosen = [e for e in entries if e.noisy_path is not None and e.is_original]
    if partition != "all":
        if split is None:
            raise ConfigError("--partition needs a fold file (run split first)")
        keep = set(getattr(split.folds[fold], partition))
        chosen = [e for e in chosen if e.speaker_id in keep]
    return chosen


def _enhance_one(entry):
    ctx = context()
    root = Path(ctx["root"])
    noisy = load_wav(root / entry.noisy_path)
    out = enhance(noisy, ctx["enhancer"], ctx["stft"])
    save_wav(root / ctx["out"] / f"{entry.utt_id}.wav", out)
    return entry.utt_id


def _split_or_none(ws):
    p = ws / FOLDS
    return cm.FoldSplit.from_json(p.read_text(encoding="utf-8")) if p.exists() else None


def cmd_enhance(args, cfg):
    ws = _dir(cfg.workspace, "workspace")
    entries = cm.read_manifest(_workspace_manifest(ws, args.manifest))
    ecfg = cfg.enhancer_config()
    out = args.out or f"enhanced/{ecfg.method}"
    todo = _select(entries, _split_or_none(ws), cfg.fold, args.partition)
    if not todo:
        raise ConfigError("no noisy utterances to enhance (run mix first)")
    parallel_map(_enhance_one, todo, _jobs(cfg),
                 {"root": str(ws), "enhancer": ecfg, "stft": cfg.stft_config(), "out": out})
    print(f"{len(todo)} utterances enhanced with {ecfg.method} -> {ws / out}")


def _score_one(entry):
    ctx = context()
    root = Path(ctx["root"])
    clean = load_wav(root / entry.clean_path)
    noisy = load_wav(root / entry.noisy_path)
    enhanced = load_wav(root / ctx["enhanced"] / f"{entry.utt_id}.wav")
    rows = []
    for name in ctx["metrics"]:
        fn = mt.INTERNAL_METRICS[name]
        rows.append((fn(clean, enhanced, entry.utt_id), fn(clean, noisy, entry.utt_id)))
    return rows


def evaluate(entries, ws: Path, enhanced_dir: str, metrics, jobs=1, allow_partial=False,
             external=None, ci_level=0.95):
    """Score enhanced vs noisy against clean; returns (per-utterance rows, reports)."""
    missing = [e.utt_id for e in entries if not (ws / enhanced_dir / f"{e.utt_id}.wav").is_file()]
    if missing:
        msg = f"{len(missing)} enhanced files missing: {', '.join(missing[:10])}"
        if not allow_partial:
            raise RuntimeError(msg)
        log.warning(msg)
        entries = [e for e in entries if e.utt_id not in set(missing)]
    if not entries:
        raise RuntimeError("nothing to evaluate")
    scored = parallel_map(_score_one, entries, jobs,
                          {"root": str(ws), "enhanced": enhanced_dir, "metrics": list(metrics)})
    pairs = [p for rows in scored for p in rows]
    if external:
        enh = {v.utt_id: v for v in mt.ingest_external_scores(external[0], {e.utt_id for e in entries})}
        noi = {v.utt_id: v for v in mt.ingest_external_scores(external[1], {e.utt_id for e in entries})}
        for uid in sorted(set(enh) & set(noi)):
            pairs.append((enh[uid], noi[uid]))
    deltas = [mt.delta(a, b) for a, b in pairs]
    reports = mt.aggregate(deltas, entries, level=ci_level)
    rows = [(a.utt_id, a.metric, a.value, b.value, d.delta) for (a, b), d in zip(pairs, deltas)]
    return rows, reports


def write_deltas(rows, entries, path):
    by_id = {e.utt_id: e for e in entries}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("utt_id", "speaker_id", "group", "metric", "enhanced", "noisy", "delta"))
        for uid, metric, enh, noi, d in sorted(rows, key=lambda r: (r[0], r[1])):
            e = by_id[uid]
            w.writerow((uid, e.speaker_id, e.group, metric, repr(enh), repr(noi), repr(d)))


def cmd_evaluate(args, cfg):
    ws = _dir(cfg.workspace, "workspace")
    entries = cm.read_manifest(_workspace_manifest(ws, args.manifest))
    enhanced_dir = args.enhanced
    _dir(ws / enhanced_dir, "enhanced")
    external = None
    if args.external_enhanced or args.external_noisy:
        if not (args.external_enhanced and args.external_noisy):
            raise ConfigError("--external-enhanced and --external-noisy go together")
        external = (_file(args.external_enhanced, "score file"), _file(args.external_noisy, "score file"))
    todo = _select(entries, _split_or_none(ws), cfg.fold, args.partition)
    metrics = [METRIC_TOKENS[m.lower()] for m in cfg.metrics]
    rows, reports = evaluate(todo, ws, enhanced_dir, metrics, _jobs(cfg), args.allow_partial,
                             external, cfg.ci_level)
    out = ws / (args.out or enhanced_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_deltas(rows, entries, out / "deltas.csv")
    mt.write_report_csv(reports, out / "report.csv")
    (out / "report.txt").write_text(mt.format_table(reports), encoding="utf-8")
    sys.stdout.write(mt.format_table(reports))


def cmd_report(args, cfg):
    if args.deltas:
        with open(_file(args.deltas, "deltas file"), newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        groups = {r["utt_id"]: r["group"] for r in rows}
        deltas = [mt.DeltaValue(r["metric"], float(r["delta"]), r["utt_id"]) for r in rows]
        reports = mt.aggregate(deltas, groups, level=cfg.ci_level)
    elif args.input:
        reports = mt.read_report_csv(_file(args.input, "report"))
    else:
        raise ConfigError("report needs --input report.csv or --deltas deltas.csv")
    sys.stdout.write(mt.format_table(reports))


# -- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its fields")
    common.add_argument("--seed", type=int, help="master seed (mandatory here or in the config)")
    common.add_argument("--jobs", type=int, help="worker processes (default: logical cores)")
    common.add_argument("--dry-run", action="store_true", help="print the augmentation plan only")
    common.add_argument("--workspace", help="working directory holding manifest and audio")
    common.add_argument("-v", "--verbose", action="store_true", help="per-item log lines")

    p = argparse.ArgumentParser(prog="pathaug", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("make-fixture", parents=[common], help="write the desk-scale fixture corpus")
    s.add_argument("out")
    s.set_defaults(func=cmd_fixture)

    s = sub.add_parser("resample", parents=[common], help="import and resample a raw corpus")
    s.add_argument("--corpus", help="raw corpus root (speakers.csv, clean/{speaker}/*.wav)")
    s.add_argument("--rate", type=int)
    s.set_defaults(func=cmd_resample)

    s = sub.add_parser("split", parents=[common], help="speaker-independent folds")
    s.add_argument("--folds", type=int)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("mix", parents=[common], help="mix every original with noise")
    s.add_argument("--noise", help="noise corpus root with one directory per type")
    s.add_argument("--level", choices=sorted(LEVELS))
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser("augment", parents=[common], help="plan and render one augmentation")
    s.add_argument("--noise")
    s.add_argument("--strategy", help="noise | pitch | stretch | specmix | synthetic")
    s.add_argument("--ratio", type=int, help="25, 100 or 400")
    s.add_argument("--fold", type=int)
    s.add_argument("--synthetic-dir", help="root holding {generator}/{speaker}/*.wav")
    s.add_argument("--generator", help="name of the TTS system that produced the files")
    s.add_argument("--level", choices=sorted(LEVELS))
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("enhance", parents=[common], help="run a baseline enhancer")
    s.add_argument("--method", choices=sorted(METHOD_TOKENS))
    s.add_argument("--manifest", help="manifest file name inside the workspace")
    s.add_argument("--partition", default="all", choices=("all", "train", "validation", "test"))
    s.add_argument("--fold", type=int)
    s.add_argument("--out", help="output directory relative to the workspace")
    s.set_defaults(func=cmd_enhance)

    s = sub.add_parser("evaluate", parents=[common], help="delta metrics per speaker group")
    s.add_argument("--enhanced", required=True, help="enhanced directory relative to the workspace")
    s.add_argument("--manifest")
    s.add_argument("--partition", default="all", choices=("all", "train", "validation", "test"))
    s.add_argument("--fold", type=int)
    s.add_argument("--metric", action="append", choices=sorted(METRIC_TOKENS))
    s.add_argument("--external-enhanced", help="utt_id,metric,value CSV for enhanced signals")
    s.add_argument("--external-noisy", help="utt_id,metric,value CSV for noisy signals")
    s.add_argument("--allow-partial", action="store_true")
    s.add_argument("--out", help="report directory relative to the workspace")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", parents=[common], help="print a report table")
    s.add_argument("--input", help="report.csv")
    s.add_argument("--deltas", help="deltas.csv to re-aggregate")
    s.set_defaults(func=cmd_report, seed_optional=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s %(message)s", stream=sys.stderr)
    try:
        if getattr(args, "seed_optional", False) and args.seed is None and not args.config:
            args.seed = 0
        cfg = _config(args)
        args.func(args, cfg)
    except (ConfigError, cm.FoldError, cm.PlanError) as exc:
        print(f"pathaug {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("failure", exc_info=True)
        print(f"pathaug {args.command}: failed: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
