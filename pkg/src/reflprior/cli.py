"""``reflprior`` command line.

Every invocation writes a JSON run manifest, also when it fails. Exit codes:
0 on success, 1 on runtime errors, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import platform
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import cv2
import numpy as np

from . import annotations as ann
from .crf import LabelPalette, run_meanfield
from .decompose import (
    VARIANTS,
    ConfigError,
    DecomposeConfig,
    alternate_decompose,
    load_config_file,
    relight,
)
from .fixtures import FIXTURES, generate_fixture
from .imageops import downsample, neighborhood_pairs, read_image, write_png16
from .metrics import (
    RelationPrediction,
    SequenceDecomposition,
    error_rate,
    mpre,
    reflectance_at_points,
    relation_from_reflectance,
    whdr,
)
from .ordering import default_labels, default_margin, problem_from_scores, solve_continuous, solve_discrete
from .reports import write_trace
from .scorer import BaselineScorer, BaselineWeights, OracleScorer, PairwiseScores, load_precomputed, save_scores

log = logging.getLogger("reflprior")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("reflprior")
    except metadata.PackageNotFoundError:
        return "unknown"


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic(path, write) -> Path:
    """Call ``write(tmp_path)`` and rename the result over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.stem}.", suffix=path.suffix, dir=path.parent)
    os.close(fd)
    try:
        write(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_json(path, obj) -> Path:
    return _atomic(path, lambda p: p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n"))


def write_npy(path, arr) -> Path:
    def _save(p):
        with open(p, "wb") as fh:
            np.save(fh, arr)

    return _atomic(path, _save)


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)  # path -> sha256
    outputs: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    version: str = field(default_factory=_version)
    python: str = field(default_factory=platform.python_version)
    status: str = "running"
    exit_code: int | None = None
    error: str | None = None

    def add_input(self, path):
        if path is not None and Path(path).is_file():
            self.inputs[str(path)] = sha256(path)

    def add_output(self, path):
        self.outputs.append(str(path))

    def to_dict(self):
        return dataclasses.asdict(self)


# ---------------------------------------------------------------- config


def _load_config(args) -> dict[str, str]:
    return load_config_file(args.config) if getattr(args, "config", None) else {}


_WEIGHT_KEYS = {f.name for f in dataclasses.fields(BaselineWeights)}
_CFG_KEYS = {f.name for f in dataclasses.fields(DecomposeConfig)}


def decompose_config(args, conf: dict, overrides: dict) -> DecomposeConfig:
    values = {k: v for k, v in conf.items() if k in _CFG_KEYS}
    values.update({k: v for k, v in overrides.items() if v is not None})
    values.setdefault("seed", args.seed)
    return DecomposeConfig.from_mapping(values)


def _check_keys(conf: dict):
    unknown = set(conf) - _CFG_KEYS - _WEIGHT_KEYS - {"min_confidence", "max_rounds"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")


def make_scorer(args, conf: dict, image: np.ndarray | None, max_dim: int | None = None, image_id: str | None = None):
    kind = args.scorer
    if kind == "oracle":
        if not args.oracle_gt:
            raise UsageError("--scorer oracle needs --oracle-gt")
        gt = read_image(args.oracle_gt)
        if max_dim is not None:
            gt = downsample(gt, max_dim)
        delta = float(conf.get("delta", 0.10))
        return OracleScorer(gt, delta=delta)
    if kind == "baseline":
        w = BaselineWeights(**{k: float(v) for k, v in conf.items() if k in _WEIGHT_KEYS})
        return BaselineScorer(w)
    if kind == "precomputed":
        if not args.scores:
            raise UsageError("--scorer precomputed needs --scores")
        return load_precomputed(args.scores, image_id)
    raise UsageError(f"unknown scorer {kind!r}")


# ---------------------------------------------------------------- commands


def _augment_file(src: str, dst: str, min_conf: float, max_rounds: int, strict: bool):
    g = ann.load_annotations(src)
    out = ann.augment(g, min_conf=min_conf, max_rounds=max_rounds, strict_equality=strict)
    _atomic(dst, lambda p: ann.save_annotations(out, p))
    counts = {p.value: 0 for p in ann.Provenance}
    for jd in out.judgments:
        counts[jd.provenance.value] += 1
    return {"image": g.image, "judgments": len(out.judgments), "by_provenance": counts, "truncated": out.truncated}


def cmd_augment(args, conf, man: RunManifest):
    src = Path(args.input)
    files = sorted(src.glob("*.json")) if src.is_dir() else [src]
    if not files:
        raise FileNotFoundError(f"no annotation files under {src}")
    out_dir = Path(args.output)
    min_conf = args.min_confidence if args.min_confidence is not None else float(conf.get("min_confidence", 0.5))
    rounds = args.max_rounds if args.max_rounds is not None else int(conf.get("max_rounds", 16))
    man.config.update(min_confidence=min_conf, max_rounds=rounds, strict_equality=args.strict_equality)
    for f in files:
        man.add_input(f)
    jobs = [(str(f), str(out_dir / f.name), min_conf, rounds, args.strict_equality) for f in files]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            reports = list(pool.map(_augment_file, *zip(*jobs)))
    else:
        reports = [_augment_file(*j) for j in jobs]
    for _, dst, *_ in jobs:
        man.add_output(dst)
    man.metrics["images"] = reports
    man.metrics["total_judgments"] = sum(r["judgments"] for r in reports)
    return reports


def _pixel_pairs(args, h, w):
    """Pairs to score and the ids written to the table."""
    path = Path(args.pairs) if args.pairs else None
    if path is None:
        i, j, _ = neighborhood_pairs(h, w, args.radius)
        return np.concatenate([i, j]), np.concatenate([j, i]), None
    if path.suffix.lower() == ".json":
        g = ann.load_annotations(path)
        px = {}
        for p in g.points:
            px[p.id] = min(int(p.y * h), h - 1) * w + min(int(p.x * w), w - 1)
        ids = np.array([[jd.i, jd.j] for jd in g.judgments], dtype=np.int64).reshape(-1, 2)
        pix = np.array([[px[a], px[b]] for a, b in ids], dtype=np.int64).reshape(-1, 2)
        return pix[:, 0], pix[:, 1], ids
    rows = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2, comments="#")
    if rows.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns i,j")
    return rows[:, 0], rows[:, 1], None


def cmd_score(args, conf, man):
    img = read_image(args.image)
    man.add_input(args.image)
    man.add_input(args.pairs)
    h, w = img.shape[:2]
    scorer = make_scorer(args, conf, img, image_id=args.image_id)
    pi, pj, ids = _pixel_pairs(args, h, w)
    scores = scorer.score_pairs(img, np.stack([pi, pj], axis=1))
    if ids is not None:
        scores = dataclasses.replace(scores, i=ids[:, 0], j=ids[:, 1])
    image_id = args.image_id or Path(args.image).stem
    _atomic(args.out, lambda p: save_scores(scores, p, image_id))
    man.add_output(args.out)
    man.metrics["n_pairs"] = len(scores)
    man.config.update(scorer=args.scorer, image_id=image_id)


def cmd_order(args, conf, man):
    man.add_input(args.scores)
    scorer = load_precomputed(args.scores, args.image_id)
    table = scorer.table
    keys = sorted(table)
    arr = np.array([table[k] for k in keys]).reshape(-1, 3)
    ij = np.array(keys, dtype=np.int64).reshape(-1, 2)
    scores = PairwiseScores(ij[:, 0], ij[:, 1], arr[:, 0], arr[:, 1], arr[:, 2])
    labels = default_labels(args.lo, args.hi, args.labels)
    margin = default_margin(labels) if args.margin is None else args.margin
    prob, node_ids = problem_from_scores(scores, labels=labels, margin=margin)
    t0 = time.perf_counter()
    if args.solver == "discrete":
        res = solve_discrete(prob)
    else:
        res = solve_continuous(prob, bounds=(args.lo, args.hi))
    man.timings["solve"] = time.perf_counter() - t0
    out = {
        "solver": args.solver,
        "energy": res.energy,
        "margin": margin,
        "labels": labels.tolist(),
        "values": {str(n): float(v) for n, v in zip(node_ids, res.values)},
    }
    man.config.update(solver=args.solver, labels=args.labels, lo=args.lo, hi=args.hi, margin=margin, delta=args.delta)
    man.metrics["energy"] = res.energy
    if args.annotations:
        man.add_input(args.annotations)
        g = ann.load_annotations(args.annotations)
        vals = {n: float(v) for n, v in zip(node_ids, res.values)}
        judged = [jd for jd in g.judgments if jd.i in vals and jd.j in vals]
        sub = ann.ComparisonGraph(g.image, g.points, judged)
        out["whdr"] = whdr(sub, vals, args.delta)
        man.metrics["whdr"] = out["whdr"]
    write_json(args.out, out)
    man.add_output(args.out)


def _write_labels(path, labels: np.ndarray, palette: LabelPalette):
    lab = labels.astype(np.uint16)

    def _write(p):
        if not cv2.imwrite(str(p), lab):
            raise OSError(f"cannot write {path}")

    _atomic(path, _write)
    pal = {"values": palette.values.tolist(), "chroma": palette.chroma.tolist()}
    pal_path = palette_path(path)
    write_json(pal_path, pal)
    return pal_path


def palette_path(label_path) -> Path:
    p = Path(label_path)
    return p.with_name(p.stem + ".palette.json")


def cmd_infer(args, conf, man):
    cfg = decompose_config(args, conf, {"L": args.labels, "iters_meanfield": args.iters, "damping": args.damping})
    man.config.update(cfg.to_dict(), scorer=args.scorer)
    img = downsample(read_image(args.image), cfg.max_dim)
    man.add_input(args.image)
    man.add_input(args.oracle_gt)
    scorer = make_scorer(args, conf, img, cfg.max_dim, args.image_id)
    trace: list = []
    t0 = time.perf_counter()
    state, labels = run_meanfield(
        img, scorer, cfg.L, cfg.iters_meanfield, damping=cfg.damping, lam_u=cfg.lam_u, lam_r=cfg.lam_r,
        lam_p=cfg.lam_p, k=cfg.K, svd_tol=cfg.svd_tol, seed=cfg.seed, energy_trace=trace,
    )
    man.timings["meanfield"] = time.perf_counter() - t0
    pal = _write_labels(args.out_labels, labels.reshape(img.shape[:2]), state.palette)
    man.add_output(args.out_labels)
    man.add_output(pal)
    man.metrics["energy_trace"] = trace
    for extra in write_trace(Path(args.out_labels).with_name(Path(args.out_labels).stem + ".energy"), trace):
        man.add_output(extra)


def _decompose_one(image_path, out_r, out_s, variant, cfg_dict, scorer_args, conf):
    cfg = DecomposeConfig(**cfg_dict)
    img = downsample(read_image(image_path), cfg.max_dim)
    scorer = make_scorer(argparse.Namespace(**scorer_args), conf, img, cfg.max_dim, scorer_args.get("image_id"))
    res = alternate_decompose(img, scorer, cfg, variant)
    for path, arr in ((out_r, res.reflectance), (out_s, res.shading)):
        _atomic(path, lambda p, a=arr: write_png16(p, a))
        write_npy(Path(path).with_suffix(".npy"), arr)
    recon = float(np.abs(res.reconstruction() - img).max())
    trace_csv, trace_svg = write_trace(Path(out_r).with_name(Path(out_r).stem + ".energy"), res.energy_trace)
    return {
        "trace": [str(trace_csv), str(trace_svg)],
        "image": str(image_path),
        "reflectance": str(out_r),
        "shading": str(out_s),
        "energy_trace": res.energy_trace,
        "timings": res.timings,
        "reconstruction_max_error": recon,
        "palette": res.palette.values.tolist(),
    }


def cmd_decompose(args, conf, man):
    cfg = decompose_config(args, conf, {})
    man.config.update(cfg.to_dict(), variant=args.variant, scorer=args.scorer)
    images = args.image
    if len(images) > 1 and not args.out_dir:
        raise UsageError("several --image values need --out-dir")
    jobs = []
    for path in images:
        stem = Path(path).stem
        if len(images) == 1 and args.out_reflectance:
            out_r = Path(args.out_reflectance)
        else:
            out_r = Path(args.out_dir or Path(path).parent) / f"{stem}.reflectance.png"
        if len(images) == 1 and args.out_shading:
            out_s = Path(args.out_shading)
        else:
            out_s = Path(args.out_dir or Path(path).parent) / f"{stem}.shading.png"
        man.add_input(path)
        jobs.append((path, out_r, out_s))
    man.add_input(args.oracle_gt)
    man.add_input(args.scores)
    scorer_args = {"scorer": args.scorer, "oracle_gt": args.oracle_gt, "scores": args.scores, "image_id": args.image_id}
    common = (args.variant, cfg.to_dict(), scorer_args, conf)
    t0 = time.perf_counter()
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            futures = [pool.submit(_decompose_one, *j, *common) for j in jobs]
            reports = [f.result() for f in futures]
    else:
        reports = [_decompose_one(*j, *common) for j in jobs]
    man.timings["total"] = time.perf_counter() - t0
    for r in reports:
        for key in ("reflectance", "shading"):
            man.add_output(r[key])
            man.add_output(str(Path(r[key]).with_suffix(".npy")))
        for extra in r["trace"]:
            man.add_output(extra)
    man.metrics["images"] = reports
    if len(reports) == 1:
        man.metrics["energy_trace"] = reports[0]["energy_trace"]
        man.metrics["reconstruction_max_error"] = reports[0]["reconstruction_max_error"]
        man.timings.update(reports[0]["timings"])


def cmd_relight(args, conf, man):
    r = read_image(args.reflectance)
    s = read_image(args.shading).mean(axis=-1)
    man.add_input(args.reflectance)
    man.add_input(args.shading)
    out = relight(r, s)
    _atomic(args.out, lambda p: write_png16(p, out))
    write_npy(Path(args.out).with_suffix(".npy"), out)
    man.add_output(args.out)


def _point_reflectance(args, g):
    if args.reflectance:
        return reflectance_at_points(read_image(args.reflectance), g)
    lab = cv2.imread(str(args.labels), cv2.IMREAD_UNCHANGED)
    if lab is None:
        raise FileNotFoundError(f"cannot read label image {args.labels}")
    pal_file = Path(args.palette) if args.palette else palette_path(args.labels)
    values = np.asarray(json.loads(pal_file.read_text())["values"], dtype=float)
    if lab.max() >= len(values):
        raise ValueError("label image refers to labels outside the palette")
    return reflectance_at_points(values[lab.astype(np.int64)], g)


def cmd_eval(args, conf, man):
    report: dict = {"metric": args.metric, "config": {}}
    if args.metric in ("whdr", "error-rate"):
        if not (args.labels or args.reflectance):
            raise UsageError("eval needs --labels or --reflectance")
        if not args.annotations:
            raise UsageError("eval needs --annotations")
        g = ann.load_annotations(args.annotations)
        man.add_input(args.annotations)
        man.add_input(args.labels or args.reflectance)
        if args.augment:
            g = ann.augment(g)
        r = _point_reflectance(args, g)
        if args.metric == "whdr":
            value = whdr(g, r, args.delta)
        else:
            preds = [RelationPrediction(j.i, j.j, relation_from_reflectance(r[j.i], r[j.j], args.delta)) for j in g.judgments]
            value = error_rate(g, preds)
        report.update(value=value, n_judgments=len(g.judgments))
        report["config"].update(delta=args.delta, augmented=bool(args.augment))
    else:
        if not args.sequence_manifest:
            raise UsageError("eval mpre needs --sequence-manifest")
        base = Path(args.sequence_manifest).parent
        seq = json.loads(Path(args.sequence_manifest).read_text())
        man.add_input(args.sequence_manifest)
        frames = seq["frames"]
        imgs, refl, shad = [], [], []
        for fr in frames:
            imgs.append(read_image(base / fr["image"]))
            refl.append(read_image(base / fr["reflectance"]))
            s = read_image(base / fr["shading"])
            shad.append(s.mean(axis=-1))
        value = mpre(SequenceDecomposition(imgs, refl, shad))
        report.update(value=value, n_pairs=len(frames) ** 2)
        report["config"]["pairing"] = "R_B * S_A vs I_A over all ordered pairs"
    man.metrics[args.metric] = report["value"]
    man.config.update(report["config"])
    if args.out:
        write_json(args.out, report)
        man.add_output(args.out)
    print(json.dumps(report, sort_keys=True))
    return report


def cmd_fixtures(args, conf, man):
    desc = generate_fixture(args.name, args.out, size=args.size, n_frames=args.frames, n_chain=args.chain)
    man.config.update(fixture=args.name, size=args.size, frames=args.frames, chain=args.chain)
    for f in desc["files"].values():
        man.add_output(str(Path(args.out) / f))
    return desc


def cmd_bench(args, conf, man):
    from .bench import bench_filter

    report = bench_filter(args.n, args.k, args.labels, args.repeats, args.scorer_kind, args.seed)
    man.metrics.update(report)
    man.config.update(n=args.n, k=args.k, labels=args.labels, repeats=args.repeats, scorer=args.scorer_kind)
    if args.out:
        write_json(args.out, report)
        man.add_output(args.out)
    print(json.dumps(report, sort_keys=True))
    return report


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _global_flags(p, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="flat key = value config file")
    p.add_argument("--jobs", type=int, default=d(1), help="worker processes for batch commands")
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--verbose", action="store_true", default=d(False))
    p.add_argument("--manifest", default=d(None), help="where to write the run manifest")


def _scorer_flags(p):
    p.add_argument("--scorer", choices=("oracle", "baseline", "precomputed"), required=True)
    p.add_argument("--oracle-gt", help="ground-truth reflectance image for the oracle scorer")
    p.add_argument("--scores", help="score table for the precomputed scorer")
    p.add_argument("--image-id", help="image id used in score tables")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reflprior", description="Intrinsic images with a pairwise reflectance prior.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("augment", help="filter, symmetrise and close annotation graphs")
    p.add_argument("--input", required=True, help="annotation JSON file or directory")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--min-confidence", type=float)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--strict-equality", action="store_true", help="veto equality on any non-equal shared neighbour")

    p = sub.add_parser("score", help="score pixel pairs")
    p.add_argument("--image", required=True)
    p.add_argument("--pairs", help="annotation JSON or CSV of flat pixel indices i,j")
    p.add_argument("--radius", type=float, default=1.5, help="neighbourhood radius when --pairs is absent")
    p.add_argument("--out", required=True, help=".csv or .jsonl")
    _scorer_flags(p)

    p = sub.add_parser("order", help="globally consistent reflectance from pairwise scores")
    p.add_argument("--scores", required=True)
    p.add_argument("--image-id")
    p.add_argument("--labels", type=int, default=20)
    p.add_argument("--lo", type=float, default=0.05)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--margin", type=float, help="hinge margin; default one label step")
    p.add_argument("--solver", choices=("discrete", "continuous"), default="discrete")
    p.add_argument("--annotations", help="report WHDR of the ordering against these judgments")
    p.add_argument("--delta", type=float, default=0.10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("infer", help="mean-field reflectance labelling")
    p.add_argument("--image", required=True)
    p.add_argument("--labels", type=int, default=20)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--out-labels", required=True, help="16-bit label PNG; palette JSON is written beside it")
    _scorer_flags(p)

    p = sub.add_parser("decompose", help="full reflectance / shading decomposition")
    p.add_argument("--image", required=True, action="append")
    p.add_argument("--out-reflectance")
    p.add_argument("--out-shading")
    p.add_argument("--out-dir")
    p.add_argument("--variant", choices=VARIANTS, default="chrom+prior+shading")
    _scorer_flags(p)

    p = sub.add_parser("relight", help="multiply a reflectance by another shading")
    p.add_argument("--reflectance", required=True)
    p.add_argument("--shading", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="WHDR, error rate or MPRE")
    p.add_argument("metric", choices=("whdr", "error-rate", "mpre"))
    p.add_argument("--labels", help="label PNG from infer")
    p.add_argument("--palette", help="palette JSON (default: beside the label image)")
    p.add_argument("--reflectance", help="reflectance image instead of labels")
    p.add_argument("--annotations")
    p.add_argument("--augment", action="store_true", help="augment the annotations before scoring")
    p.add_argument("--delta", type=float, default=0.10)
    p.add_argument("--sequence-manifest")
    p.add_argument("--out")

    p = sub.add_parser("fixtures", help="write a synthetic fixture")
    p.add_argument("name", choices=FIXTURES)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--chain", type=int, default=5)

    p = sub.add_parser("bench", help="timing reports")
    p.add_argument("what", choices=("filter",))
    p.add_argument("--n", type=int, default=65536)
    p.add_argument("--k", type=int, default=64)
    p.add_argument("--labels", type=int, default=20)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--scorer", dest="scorer_kind", choices=("baseline", "oracle"), default="baseline")
    p.add_argument("--out")

    for sp in sub.choices.values():
        _global_flags(sp, suppress=True)
    return parser


COMMANDS = {
    "augment": cmd_augment,
    "score": cmd_score,
    "order": cmd_order,
    "infer": cmd_infer,
    "decompose": cmd_decompose,
    "relight": cmd_relight,
    "eval": cmd_eval,
    "fixtures": cmd_fixtures,
    "bench": cmd_bench,
}


def _default_manifest(args) -> Path:
    cmd = getattr(args, "command", None)
    if getattr(args, "manifest", None):
        return Path(args.manifest)
    if cmd in ("augment",):
        return Path(args.output) / "manifest.json"
    if cmd == "fixtures":
        return Path(args.out) / "manifest.json"
    if cmd == "decompose":
        if args.out_dir:
            return Path(args.out_dir) / "manifest.json"
        if args.out_reflectance:
            return Path(args.out_reflectance).with_suffix(".manifest.json")
        return Path(args.image[0]).with_suffix(".manifest.json")
    if cmd == "infer":
        return Path(args.out_labels).with_suffix(".manifest.json")
    if cmd in ("score", "order", "relight", "eval", "bench") and getattr(args, "out", None):
        return Path(args.out).with_suffix(".manifest.json")
    return Path(f"reflprior-{cmd or 'usage'}.manifest.json")


def _guess_manifest(argv) -> Path:
    # best effort when the command line itself does not parse
    if "--manifest" in argv:
        k = argv.index("--manifest")
        if k + 1 < len(argv):
            return Path(argv[k + 1])
    return Path("reflprior-usage.manifest.json")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        man = RunManifest(command=argv[0] if argv else "", argv=argv, status="usage-error", exit_code=EXIT_USAGE, error=str(exc))
        _safe_write_manifest(_guess_manifest(argv), man)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    man = RunManifest(command=args.command, argv=argv)
    man.config.update(seed=args.seed, jobs=args.jobs)
    code = EXIT_OK
    t0 = time.perf_counter()
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        conf = _load_config(args)
        if args.config:
            man.add_input(args.config)
        _check_keys(conf)
        np.random.seed(args.seed)
        COMMANDS[args.command](args, conf, man)
        man.status = "ok"
    except (UsageError, ConfigError) as exc:
        print(f"reflprior {args.command}: {exc}", file=sys.stderr)
        man.status, man.error, code = "usage-error", str(exc), EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - every runtime failure maps to exit 1
        log.debug("failure", exc_info=True)
        print(f"reflprior {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        man.status, man.error, code = "error", f"{type(exc).__name__}: {exc}", EXIT_RUNTIME
    man.timings["wall"] = time.perf_counter() - t0
    man.exit_code = code
    _safe_write_manifest(_default_manifest(args), man)
    return code


def _safe_write_manifest(path: Path, man: RunManifest):
    try:
        write_json(path, man.to_dict())
    except OSError as exc:
        print(f"reflprior: could not write manifest {path}: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
