"""Batch command-line front end.

Exit codes: 0 success, 2 configuration or usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import (
    AlignmentError,
    BoxUndefined,
    InvalidParams,
    PoseFuseError,
    ResolutionMismatch,
)
from .ingest import FORMATS, parse_document
from .metrics import (
    DEFAULT_BIN_EDGES,
    EvalConfig,
    confidence_error_pairs,
    evaluate,
    histogram_from_pairs,
    joint_errors,
    mpjpe_from_errors,
)
from .pipeline import fuse_video
from .pseudo_gt import (
    export_training_targets,
    fit_anchor_codebook,
    normalize_pose_for_similarity,
)
from .skeleton import PoseSequence, dumps_sequences, loads_sequences
from .sst import AggregationConfig
from .synthetic import (
    DEFAULT_PROFILES,
    CorruptionProfile,
    bundles_to_sequence,
    generate_trace,
    run_trial,
    simulate_estimator,
    summarize_trials,
    trial_seeds,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3
MANIFEST = "manifest.json"

log = logging.getLogger("posefuse")


class UsageError(Exception):
    pass


class JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        out = {
            "ts": round(record.created, 3),
            "level": record.levelname.lower(),
            "msg": record.getMessage(),
        }
        out.update(getattr(record, "fields", {}))
        return json.dumps(out, sort_keys=True)


def setup_logging() -> None:
    level = os.environ.get("POSEFUSE_LOG", "WARNING").upper()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    log.handlers[:] = [handler]
    log.setLevel(getattr(logging, level, logging.WARNING))
    log.propagate = False


def _info(msg: str, **fields) -> None:
    log.info(msg, extra={"fields": fields})


# -- config -----------------------------------------------------------------

DEFAULTS = {
    "aggregation": {"gamma": 0.18, "epsilon": 1e-12, "persons": "all", "tau_match": None},
    "ingest": {"estimators": None, "format": "canonical_json", "formats": {}, "resolution": None},
    "pseudo": {"expand": 0.10, "anchors": 20, "seed": 0},
    "eval": {"alpha": 0.5, "extra_alphas": [2.0], "bins": list(DEFAULT_BIN_EDGES)},
    "bench": {"trials": 100, "frames": 100, "seed": 0, "videos": 1, "profiles": None},
    "run": {"jobs": 1},
}


def load_config(path: str | None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS))
    if path is None:
        return cfg
    try:
        with open(path, "rb") as fh:
            user = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid TOML in {path}: {exc}") from None
    for section, values in user.items():
        if section not in cfg or not isinstance(values, dict):
            raise UsageError(f"unknown config section [{section}]")
        for key, value in values.items():
            if key not in cfg[section]:
                raise UsageError(f"unknown config key {section}.{key}")
            cfg[section][key] = value
    return cfg


def _override(cfg: dict, section: str, key: str, value) -> None:
    if value is not None:
        cfg[section][key] = value


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def _sha256(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()


def _parse_resolution(text) -> tuple[int, int] | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return int(text[0]), int(text[1])
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise UsageError(f"resolution must look like 640x480, got {text!r}") from None


def _agg_config(cfg: dict, m: int) -> AggregationConfig:
    a = cfg["aggregation"]
    try:
        return AggregationConfig(gamma=float(a["gamma"]), epsilon=float(a["epsilon"]),
                                 estimator_count_M=m)  # fmt: skip
    except InvalidParams as exc:
        raise UsageError(str(exc)) from None


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if jobs == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _write(path: Path, text: str) -> str:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return _sha256(text)


def _read_sequence_dir(folder: Path) -> dict[str, list[PoseSequence]]:
    if not folder.is_dir():
        raise PoseFuseError(f"not a directory: {folder}")
    out = {}
    for f in sorted(folder.glob("*.json")):
        if f.name == MANIFEST:
            continue
        seqs = loads_sequences(f.read_bytes())
        video = seqs[0].video if seqs and seqs[0].video else f.stem
        out[f.stem] = [replace(s, video=video) for s in seqs]
    return out


# -- aggregate --------------------------------------------------------------


def _estimator_formats(cfg: dict, estimators: Sequence[str]) -> dict[str, str]:
    ing = cfg["ingest"]
    out = {}
    for name in estimators:
        fmt = ing["formats"].get(name, ing["format"])
        if fmt not in FORMATS:
            raise UsageError(f"unknown format {fmt!r} for estimator {name}")
        out[name] = fmt
    return out


def _aggregate_one(job: tuple) -> tuple[str, str, str, dict]:
    video, folder, estimators, formats, cfg = job
    streams, resolutions = [], {}
    for k, name in enumerate(estimators, start=1):
        path = Path(folder) / f"{name}.json"
        if not path.is_file():
            raise PoseFuseError(f"missing estimator file: {path}")
        parsed = parse_document(path.read_bytes(), formats[name], k)
        streams.append(parsed.bundles)
        if parsed.resolution is not None:
            resolutions[name] = parsed.resolution
    if len(set(resolutions.values())) > 1:
        raise ResolutionMismatch(f"video {video}: estimators disagree on resolution {resolutions}")
    resolution = next(iter(resolutions.values()), None) or _parse_resolution(
        cfg["ingest"]["resolution"]
    )
    if resolution is None:
        raise PoseFuseError(f"video {video}: no resolution in inputs; pass --resolution")
    agg = _agg_config(cfg, len(estimators))
    a = cfg["aggregation"]
    seqs = fuse_video(streams, agg, resolution, a["tau_match"], a["persons"], video)
    refined = dumps_sequences([s.retained_only() for s in seqs], video, resolution)
    scored = dumps_sequences(seqs, video, resolution)
    stats = {
        "resolution": list(resolution),
        "persons": [
            {
                "id": s.person,
                "frames": len(s.frames),
                "retained": sum(f.retained for f in s.frames),
                "discarded": sum(not f.retained for f in s.frames),
                "discarded_frames": [f.frame for f in s.frames if not f.retained],
                "mean_confidence": (
                    sum(f.confidence for f in s.frames) / len(s.frames) if s.frames else None
                ),
            }
            for s in seqs
        ],
    }
    return video, refined, scored, stats


def cmd_aggregate(args, cfg: dict) -> int:
    _override(cfg, "aggregation", "gamma", args.gamma)
    _override(cfg, "aggregation", "epsilon", args.epsilon)
    _override(cfg, "aggregation", "persons", args.persons)
    _override(cfg, "aggregation", "tau_match", args.tau_match)
    _override(cfg, "ingest", "resolution", args.resolution)
    _override(cfg, "run", "jobs", args.jobs)
    for item in args.format or ():
        if "=" in item:
            name, fmt = item.split("=", 1)
            cfg["ingest"]["formats"][name] = fmt
        else:
            cfg["ingest"]["format"] = item
    if args.estimators:
        cfg["ingest"]["estimators"] = args.estimators.split(",")

    root = Path(args.input)
    if not root.is_dir():
        raise PoseFuseError(f"input directory not found: {root}")
    videos = sorted(p for p in root.iterdir() if p.is_dir())
    estimators = cfg["ingest"]["estimators"]
    if not estimators:
        estimators = sorted({f.stem for v in videos for f in v.glob("*.json")})
    if len(estimators) < 2:
        raise UsageError(f"at least two estimators are required, found {estimators}")
    formats = _estimator_formats(cfg, estimators)
    _agg_config(cfg, len(estimators))

    eff = {"command": "aggregate", "input": str(root), "estimators": estimators, **cfg}
    out = Path(args.out)
    jobs = [(v.name, str(v), estimators, formats, cfg) for v in videos]
    results = _pmap(_aggregate_one, jobs, int(cfg["run"]["jobs"]))

    manifest = {"config": eff, "config_hash": config_hash(eff), "videos": {}, "outputs": {}}
    for video, refined, scored, stats in results:
        manifest["outputs"][f"{video}.json"] = _write(out / f"{video}.json", refined)
        manifest["outputs"][f"scored/{video}.json"] = _write(out / "scored" / f"{video}.json", scored)
        manifest["videos"][video] = stats
        _info("aggregated", video=video, persons=len(stats["persons"]))
    _write(out / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# -- pseudo-gt --------------------------------------------------------------


def cmd_pseudo_gt(args, cfg: dict) -> int:
    _override(cfg, "pseudo", "expand", args.expand)
    _override(cfg, "pseudo", "anchors", args.anchors)
    _override(cfg, "pseudo", "seed", args.seed)
    _override(cfg, "aggregation", "gamma", args.gamma)
    p = cfg["pseudo"]
    if int(p["anchors"]) < 1 or float(p["expand"]) < 0:
        raise UsageError("--anchors must be >= 1 and --expand >= 0")

    by_video = _read_sequence_dir(Path(args.input))
    seqs = [replace(s, frames=tuple(f for f in s.frames if f.retained))
            for v in sorted(by_video) for s in by_video[v]]  # fmt: skip
    normalized = []
    for s in seqs:
        for f in s.frames:
            try:
                normalized.append(normalize_pose_for_similarity(f.joints))
            except BoxUndefined:
                continue
    codebook = fit_anchor_codebook(normalized, int(p["anchors"]), int(p["seed"]))
    out = Path(args.out)
    _write(out / "codebook.json", codebook.to_json())
    text = export_training_targets(seqs, codebook, float(p["expand"]), cfg["aggregation"]["gamma"])
    _write(out / "annotations.jsonl", text)
    _info("pseudo-gt written", records=text.count("\n") - 1, anchors=codebook.B)
    return EXIT_OK


# -- evaluate ---------------------------------------------------------------


def _pair_persons(preds: list[PoseSequence], gts: list[PoseSequence]):
    """Match prediction tracks to GT tracks: equal ids first, then greedily by
    mean error over shared frames. Unmatched GT tracks pair with None."""
    pairs = []
    pred_by_id = {p.person: p for p in preds}
    free_preds = [p for p in preds if p.person not in {g.person for g in gts}]
    rest = []
    for g in gts:
        if g.person in pred_by_id:
            pairs.append((pred_by_id[g.person], g))
        else:
            rest.append(g)
    cands = []
    for gi, g in enumerate(rest):
        for pi, p in enumerate(free_preds):
            err = mpjpe_from_errors(joint_errors(p, g)) if g.frames else math.nan
            if not math.isnan(err):
                cands.append((err, gi, pi))
    cands.sort()
    used_g, used_p = set(), set()
    for _, gi, pi in cands:
        if gi in used_g or pi in used_p:
            continue
        used_g.add(gi)
        used_p.add(pi)
        pairs.append((free_preds[pi], rest[gi]))
    pairs += [(None, g) for gi, g in enumerate(rest) if gi not in used_g]
    return pairs


def _align(gt: dict, pred: dict, method: str) -> list:
    missing = sorted(set(gt) - set(pred))
    extra = sorted(set(pred) - set(gt))
    if missing or extra or not gt:
        offenders = [f"{method}: missing {v}" for v in missing] + [f"{method}: unknown {v}" for v in extra]
        raise AlignmentError(
            f"video ids do not line up for {method}: " + (", ".join(offenders) or "no videos"),
            offenders,
        )
    pairs = []
    for v in sorted(gt):
        pairs += _pair_persons(pred[v], gt[v])
    return pairs


def cmd_evaluate(args, cfg: dict) -> int:
    _override(cfg, "eval", "alpha", args.alpha)
    if args.extra_alpha is not None:
        cfg["eval"]["extra_alphas"] = args.extra_alpha
    _override(cfg, "aggregation", "gamma", args.gamma)
    e = cfg["eval"]
    try:
        ecfg = EvalConfig(float(e["alpha"]), tuple(float(b) for b in e["bins"]),
                          float(cfg["aggregation"]["gamma"]))  # fmt: skip
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    gt = _read_sequence_dir(Path(args.gt))
    methods = []
    for item in args.pred:
        if "=" not in item:
            raise UsageError(f"--pred expects NAME=DIR, got {item!r}")
        name, folder = item.split("=", 1)
        methods.append((name, _read_sequence_dir(Path(folder))))

    report = {"alpha": ecfg.alpha, "methods": {}}
    rows = []
    for name, pred in methods:
        rep = evaluate(_align(gt, pred, name), ecfg, [float(a) for a in e["extra_alphas"]])
        report["methods"][name] = rep.to_dict()
        rows.append((name, f"PCKh@{ecfg.alpha:g}", rep.pckh))
        for a, v in rep.extra_pckh.items():
            rows.append((name, f"PCKh@{a}", v))
        rows.append((name, "MPJPE", rep.mpjpe))
        rows.append((name, "miss_rate", rep.miss_rate))

    out = Path(args.out)
    if args.scored:
        scored = _read_sequence_dir(Path(args.scored))
        pairs = _align(gt, scored, "scored")
        hist = histogram_from_pairs(
            confidence_error_pairs([p for p, _ in pairs if p is not None],
                                   [g for p, g in pairs if p is not None]),
            ecfg,
        )  # fmt: skip
        report["histogram"] = {
            "edges": list(hist.edges),
            "gamma": hist.gamma,
            "retained": hist.retained,
            "discarded": hist.discarded,
        }
        _write(out / "histogram.csv", hist.to_csv())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "metric", "value"])
    for name, metric, value in rows:
        w.writerow([name, metric, "" if math.isnan(value) else repr(value)])
    _write(out / "report.csv", buf.getvalue())
    _write(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# -- bench / simulate -------------------------------------------------------


def _profiles(cfg: dict, path: str | None) -> list[CorruptionProfile]:
    raw = cfg["bench"]["profiles"]
    if path:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh).get("profiles")
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise UsageError(f"cannot read profiles {path}: {exc}") from None
    if not raw:
        return list(DEFAULT_PROFILES)
    try:
        profiles = [CorruptionProfile.from_dict(p) for p in raw]
    except (TypeError, InvalidParams) as exc:
        raise UsageError(f"invalid profile: {exc}") from None
    if len(profiles) < 2:
        raise UsageError("at least two profiles are required")
    if len({p.name for p in profiles}) != len(profiles):
        raise UsageError("profile names must be unique")
    return profiles


def _bench_one(job: tuple) -> dict:
    trial, seed, profiles, frames, agg = job
    return run_trial(trial, seed, profiles, frames, agg_cfg=agg)


def cmd_bench(args, cfg: dict) -> int:
    _override(cfg, "bench", "trials", args.trials)
    _override(cfg, "bench", "frames", args.frames)
    _override(cfg, "bench", "seed", args.seed)
    _override(cfg, "aggregation", "gamma", args.gamma)
    _override(cfg, "aggregation", "epsilon", args.epsilon)
    _override(cfg, "run", "jobs", args.jobs)
    b = cfg["bench"]
    profiles = _profiles(cfg, args.profiles)
    if int(b["trials"]) < 1 or int(b["frames"]) < 1:
        raise UsageError("--trials and --frames must be >= 1")
    agg = _agg_config(cfg, len(profiles))
    jobs = [(i, int(b["seed"]), profiles, int(b["frames"]), agg) for i in range(int(b["trials"]))]
    results = _pmap(_bench_one, jobs, int(cfg["run"]["jobs"]))
    summary = summarize_trials(results)
    doc = {
        "config": {"profiles": [p.to_dict() for p in profiles], **cfg},
        "summary": summary,
        "trials": results,
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        _write(Path(args.out), text)
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return EXIT_OK


def _joint_row(kp) -> list:
    return [kp.x, kp.y, kp.score, kp.valid]


def cmd_simulate(args, cfg: dict) -> int:
    _override(cfg, "bench", "videos", args.videos)
    _override(cfg, "bench", "frames", args.frames)
    _override(cfg, "bench", "seed", args.seed)
    b = cfg["bench"]
    profiles = _profiles(cfg, args.profiles)
    out = Path(args.out)
    for i in range(int(b["videos"])):
        video = f"video{i:03d}"
        trace_seed, est_seeds = trial_seeds(int(b["seed"]), i, len(profiles))
        trace = generate_trace(None, int(b["frames"]), trace_seed)
        gt = replace(trace.gt, video=video)
        _write(out / "gt" / f"{video}.json", dumps_sequences([gt], video, gt.resolution))
        for k, (prof, s) in enumerate(zip(profiles, est_seeds), start=1):
            bundles = simulate_estimator(trace, replace(prof, seed=s), k)
            doc = {
                "video": video,
                "resolution": list(gt.resolution),
                "persons": [
                    {
                        "id": 0,
                        "frames": [
                            {"t": fb.frame, "joints": [_joint_row(kp) for kp in fb.proposals[0].joints]}
                            for fb in bundles
                            if fb.proposals
                        ],
                    }
                ],
            }
            text = json.dumps(doc, separators=(",", ":")) + "\n"
            _write(out / "videos" / video / f"{prof.name}.json", text)
            # the same stream laid out as an evaluable <video>.json per expert
            seq = replace(bundles_to_sequence(bundles, 0, video), resolution=gt.resolution)
            _write(out / "experts" / prof.name / f"{video}.json", dumps_sequences([seq]))
    _info("simulated", videos=int(b["videos"]), out=str(out))
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="posefuse", description=__doc__)
    parser.add_argument("--config", help="TOML config file; flags override its values")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("aggregate", help="fuse per-estimator outputs into refined sequences")
    a.add_argument("--input", required=True, help="directory of <video>/<estimator>.json")
    a.add_argument("--out", required=True)
    a.add_argument("--estimators", help="comma-separated estimator names, in priority order")
    a.add_argument("--format", action="append", help="FMT or NAME=FMT; one of " + ", ".join(FORMATS))
    a.add_argument("--gamma", type=float)
    a.add_argument("--epsilon", type=float)
    a.add_argument("--persons", choices=("all", "primary"))
    a.add_argument("--tau-match", type=float, dest="tau_match")
    a.add_argument("--resolution", help="WxH fallback when inputs carry none")
    a.add_argument("--jobs", type=int)
    a.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("pseudo-gt", help="anchor codebook and pseudo ground-truth annotations")
    p.add_argument("--input", required=True, help="directory of refined <video>.json files")
    p.add_argument("--out", required=True)
    p.add_argument("--anchors", type=int, metavar="B")
    p.add_argument("--seed", type=int)
    p.add_argument("--expand", type=float)
    p.add_argument("--gamma", type=float, help="recorded in the annotation header")
    p.set_defaults(func=cmd_pseudo_gt)

    e = sub.add_parser("evaluate", help="PCKh / MPJPE reports against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--pred", action="append", required=True, help="NAME=DIR, repeatable")
    e.add_argument("--scored", help="directory of scored sequences for the confidence histogram")
    e.add_argument("--out", required=True)
    e.add_argument("--alpha", type=float)
    e.add_argument("--extra-alpha", type=float, action="append", dest="extra_alpha")
    e.add_argument("--gamma", type=float)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="seeded synthetic trials comparing experts and fusion")
    b.add_argument("--trials", type=int)
    b.add_argument("--frames", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--profiles", help="TOML file with [[profiles]] tables")
    b.add_argument("--gamma", type=float)
    b.add_argument("--epsilon", type=float)
    b.add_argument("--jobs", type=int)
    b.add_argument("--out", help="write the full per-trial report here")
    b.set_defaults(func=cmd_bench)

    s = sub.add_parser("simulate", help="write synthetic estimator outputs and GT as canonical JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--videos", type=int)
    s.add_argument("--frames", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--profiles")
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Iterable[str] | None = None) -> int:
    setup_logging()
    args = build_parser().parse_args(None if argv is None else list(argv))
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except UsageError as exc:
        log.error(str(exc), extra={"fields": {"code": "USAGE"}})
        print(f"posefuse: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PoseFuseError as exc:
        log.error(str(exc), extra={"fields": {"code": exc.code}})
        print(f"posefuse: {exc.code}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
