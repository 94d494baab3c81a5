"""Command-line front end: ``mtstrack {track,baseline,synth,eval,compare,calibrate,rerun}``."""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import SuiteReport, compare, emit_plots, evaluate_ope
from .geometry import BoundingBox
from .pipeline import MtsConfig, TrackingResult, run_baseline, run_mts
from .scoring import ScoringParams
from .sequences import (
    Sequence,
    SynthSpec,
    generate_synth,
    load_otb,
    load_result,
    occlusion_suite,
    save_otb,
    save_result,
)

log = logging.getLogger("mtstrack")

OUTPUT_ENV = "MTSTRACK_OUTPUT"
CONFIG_KEYS = {
    "n", "tau", "kind", "tracker_params", "sigma1", "sigma2", "chi_cyclic",
    "chi_noncyclic", "theta_cyc", "grow_appearance", "workers",
}
SCORING_KEYS = ("sigma1", "sigma2", "chi_cyclic", "chi_noncyclic", "theta_cyc")


class UsageError(Exception):
    pass


def load_config(path) -> dict:
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"{path}: unknown config key(s) {sorted(unknown)}")
    return cfg


def resolve_config(args) -> dict:
    """Merge the optional config file with explicit flags (flags win)."""
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg.setdefault("kind", "ncc")
    return cfg


def mts_config(cfg: dict) -> MtsConfig:
    scoring = ScoringParams(**{k: cfg[k] for k in SCORING_KEYS if k in cfg})
    return MtsConfig(
        n=cfg.get("n", 8),
        tau=cfg.get("tau"),
        base_kind=cfg["kind"],
        tracker_params=cfg.get("tracker_params", {}),
        scoring=scoring,
        grow_appearance=cfg.get("grow_appearance", False),
        workers=cfg.get("workers", 1),
    )


def parse_box(text: str) -> BoundingBox:
    parts = [float(p) for p in text.replace("\t", ",").split(",")]
    if len(parts) != 4:
        raise UsageError(f"--init expects x,y,w,h, got {text!r}")
    return BoundingBox(*parts)


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    paths = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
    for p in paths:
        h.update(str(p.relative_to(path) if path.is_dir() else p.name).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def load_sequence(args, require_truth: bool = True) -> Sequence:
    if getattr(args, "synth", None):
        return generate_synth(SynthSpec.load(args.synth))
    if getattr(args, "seq", None):
        return load_otb(args.seq, require_truth)
    raise UsageError("give --seq DIR or --synth SPEC")


def init_box(args, seq: Sequence) -> BoundingBox:
    if getattr(args, "init", None):
        return parse_box(args.init)
    if seq.ground_truth is None:
        raise UsageError("sequence has no ground truth; pass --init x,y,w,h")
    return seq.ground_truth[0]


def output_dir(args) -> Path:
    root = args.out or os.environ.get(OUTPUT_ENV) or "runs"
    out = Path(root)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, command: str, args, cfg: dict | None = None) -> Path:
    inputs = {}
    for attr in ("seq", "synth", "spec", "result", "config"):
        val = getattr(args, attr, None)
        for p in val if isinstance(val, list) else [val]:
            if p:
                inputs[str(p)] = file_digest(Path(p))
    argv = {k: v for k, v in vars(args).items() if k not in ("func", "command", "verbose")}
    manifest = {
        "tool": "mtstrack",
        "version": __version__,
        "command": command,
        "args": argv,
        "config": cfg,
        "inputs": inputs,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_overlays(seq: Sequence, boxes, out: Path) -> None:
    from PIL import Image, ImageDraw

    out.mkdir(parents=True, exist_ok=True)
    for f, b in zip(seq.frames, boxes):
        im = Image.fromarray(np.round(f.pixels * 255).astype(np.uint8)).convert("RGB")
        ImageDraw.Draw(im).rectangle([b.x, b.y, b.x + b.w - 1, b.y + b.h - 1], outline=(255, 0, 0))
        im.save(out / f"{f.index:04d}.png")


def cmd_track(args) -> None:
    cfg = resolve_config(args)
    seq = load_sequence(args, require_truth=False)
    box = init_box(args, seq)
    out = output_dir(args)
    dump = out / "windows.jsonl" if args.dump else None
    if dump is not None and dump.exists():
        dump.unlink()
    result = run_mts(seq.frames, box, mts_config(cfg), dump_path=dump)
    save_result(out / "results.csv", result)
    with open(out / "diagnostics.jsonl", "w") as fh:
        for w in result.windows:
            fh.write(json.dumps(w.to_dict()) + "\n")
    if args.overlay:
        write_overlays(seq, result.boxes, out / "overlay")
    write_manifest(out, "track", args, cfg)
    print(f"{seq.name}: {len(result.boxes)} frames, {len(result.windows)} windows -> {out}")


def cmd_baseline(args) -> None:
    cfg = resolve_config(args)
    seq = load_sequence(args, require_truth=False)
    box = init_box(args, seq)
    out = output_dir(args)
    result = run_baseline(seq.frames, box, cfg["kind"], cfg.get("tracker_params"))
    save_result(out / "results.csv", result)
    if args.overlay:
        write_overlays(seq, result.boxes, out / "overlay")
    write_manifest(out, "baseline", args, cfg)
    print(f"{seq.name}: {len(result.boxes)} frames -> {out}")


def cmd_synth(args) -> None:
    spec = SynthSpec.load(args.spec)
    out = Path(args.out) if args.out else output_dir(args) / spec.name
    save_otb(generate_synth(spec), out)
    print(f"wrote {spec.length} frames to {out}")


def cmd_eval(args) -> None:
    seq = load_sequence(args)
    if seq.ground_truth is None:
        raise UsageError("evaluation needs ground truth")
    boxes = load_result(args.result)
    report = evaluate_ope(boxes, seq.ground_truth, seq.name, seq.attributes)
    out = output_dir(args)
    suite = SuiteReport(args.label, {seq.name: report})
    emit_plots([suite], out)
    (out / "report.json").write_text(json.dumps(suite.to_dict(), indent=2) + "\n")
    print(f"{seq.name}: PR={report.pr:.3f} SR={report.sr:.3f}")


def benchmark_sequences(args) -> list[Sequence]:
    if args.seq:
        return [load_otb(p) for p in args.seq]
    specs = occlusion_suite(args.suite_size, tau=args.tau or 10, n=args.n or 8)
    return [generate_synth(s) for s in specs]


def _run_arms(seq: Sequence, config: MtsConfig):
    box = seq.ground_truth[0]
    base = run_baseline(seq.frames, box, config.base_kind, config.tracker_params)
    mts = run_mts(seq.frames, box, config)
    return (
        evaluate_ope(mts, seq.ground_truth, seq.name, seq.attributes),
        evaluate_ope(base, seq.ground_truth, seq.name, seq.attributes),
    )


def run_comparison(seqs: list[Sequence], config: MtsConfig, jobs: int = 1):
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        pairs = list(pool.map(lambda s: _run_arms(s, config), seqs))
    kind = config.base_kind.upper()
    mts = SuiteReport(f"MTS+{kind}", {r.name: r for r, _ in pairs})
    base = SuiteReport(kind, {r.name: r for _, r in pairs})
    return mts, base


def cmd_compare(args) -> None:
    cfg = resolve_config(args)
    config = mts_config(cfg)
    seqs = benchmark_sequences(args)
    mts, base = run_comparison(seqs, config, args.jobs)
    record = compare(mts, base)
    out = output_dir(args)
    table = record.format_table()
    (out / "comparison.txt").write_text(table + "\n")
    (out / "comparison.json").write_text(json.dumps(record.to_dict(), indent=2) + "\n")
    emit_plots([mts, base], out / "plots")
    write_manifest(out, "compare", args, cfg)
    print(table)


def cmd_calibrate(args) -> None:
    cfg = resolve_config(args)
    grid = list(itertools.product(args.sigma1_grid, args.sigma2_grid, args.theta_grid))
    if not grid:
        raise UsageError("empty calibration grid")
    seqs = benchmark_sequences(args)
    rows = []
    for s1, s2, th in grid:
        trial = dict(cfg, sigma1=s1, sigma2=s2, theta_cyc=th)
        mts, _ = run_comparison(seqs, mts_config(trial), args.jobs)
        rows.append({"sigma1": s1, "sigma2": s2, "theta_cyc": th, "mean_sr": mts.sr, "pr": mts.pr})
        print(f"sigma1={s1} sigma2={s2} theta_cyc={th}: SR={mts.sr:.4f} PR={mts.pr:.4f}")
    best = max(rows, key=lambda r: r["mean_sr"])
    out = output_dir(args)
    (out / "calibration.json").write_text(json.dumps({"rows": rows, "best": best}, indent=2) + "\n")
    suggested = {k: v for k, v in cfg.items() if k in CONFIG_KEYS}
    suggested.update({k: best[k] for k in ("sigma2", "theta_cyc")})
    if best["sigma1"] is not None:
        suggested["sigma1"] = best["sigma1"]
    (out / "suggested_config.json").write_text(json.dumps(suggested, indent=2) + "\n")
    write_manifest(out, "calibrate", args, cfg)
    print(f"best: {best}")


COMMANDS = {
    "track": cmd_track,
    "baseline": cmd_baseline,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "calibrate": cmd_calibrate,
}


def cmd_rerun(args) -> None:
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("tool") != "mtstrack":
        raise UsageError(f"{args.manifest} is not an mtstrack manifest")
    ns = argparse.Namespace(**manifest["args"])
    if args.out:
        ns.out = args.out
    COMMANDS[manifest["command"]](ns)


def _optional_sigma(text: str):
    return None if text.lower() in ("none", "auto") else float(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtstrack", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def source(sp, required=True):
        g = sp.add_mutually_exclusive_group(required=required)
        g.add_argument("--seq", help="OTB-layout sequence directory")
        g.add_argument("--synth", help="synthetic sequence spec (JSON)")

    def common(sp):
        sp.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./runs)")
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--kind", choices=["ncc", "dcf"])

    def mts_flags(sp):
        sp.add_argument("--n", type=int)
        sp.add_argument("--tau", type=int)
        sp.add_argument("--sigma1", type=float)
        sp.add_argument("--sigma2", type=float)
        sp.add_argument("--theta-cyc", dest="theta_cyc", type=float)
        sp.add_argument("--workers", type=int, help="threads per window")

    sp = sub.add_parser("track", help="run MTS on one sequence")
    source(sp)
    common(sp)
    mts_flags(sp)
    sp.add_argument("--init", help="initial box x,y,w,h (default: first ground-truth line)")
    sp.add_argument("--overlay", action="store_true", help="write frames with the box drawn")
    sp.add_argument("--dump", action="store_true", help="write per-window trajectories")

    sp = sub.add_parser("baseline", help="run the plain base tracker")
    source(sp)
    common(sp)
    sp.add_argument("--init")
    sp.add_argument("--overlay", action="store_true")

    sp = sub.add_parser("synth", help="render a synthetic spec to OTB layout")
    sp.add_argument("--spec", required=True)
    sp.add_argument("--out")

    sp = sub.add_parser("eval", help="OPE scores of a results CSV")
    source(sp)
    sp.add_argument("--result", required=True)
    sp.add_argument("--label", default="tracker")
    sp.add_argument("--out")

    for name, helptext in (("compare", "MTS vs baseline table"), ("calibrate", "grid search")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--seq", nargs="*", help="OTB sequence dirs (default: synthetic occlusion suite)")
        sp.add_argument("--suite-size", type=int, default=10)
        sp.add_argument("--jobs", type=int, default=1, help="sequences in parallel")
        common(sp)
        mts_flags(sp)
        if name == "calibrate":
            sp.add_argument("--sigma1-grid", type=_optional_sigma, nargs="+", default=[None])
            sp.add_argument("--sigma2-grid", type=float, nargs="+", default=[ScoringParams.sigma2])
            sp.add_argument("--theta-grid", type=float, nargs="+", default=[ScoringParams.theta_cyc])

    sp = sub.add_parser("rerun", help="repeat a run from its manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out")
    return p


def _failing_module(exc: BaseException) -> str:
    names = [
        Path(fr.filename).stem
        for fr in traceback.extract_tb(exc.__traceback__)
        if f"{os.sep}mtstrack{os.sep}" in fr.filename
    ]
    return names[-1] if names else "mtstrack"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    handler = cmd_rerun if args.command == "rerun" else COMMANDS[args.command]
    try:
        handler(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mtstrack: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"mtstrack: error in {_failing_module(exc)}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
