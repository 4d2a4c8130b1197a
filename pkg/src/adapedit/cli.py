"""Batch command line: single edits, hyper-parameter sweeps, attention
inspection, and a canned toy demo.

Run directories are self-describing: the emitted ``manifest.txt`` is a
valid job file that reproduces the run byte for byte on the toy
backend.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .backend import ToyBackend
from .backend.remote import RemoteBackend
from .config import (
    EditConfig,
    SweepGrid,
    config_from_pairs,
    format_manifest,
    load_grid_file,
    load_job_file,
    parse_key_values,
)
from .controller import EditResult, run_edit
from .errors import AdapEditError, BackendUnavailable, ConfigError
from .images import save_heatmap, save_image
from .prompts import align
from .record import AttnRecord
from .spatial import AGG_SIDE, spatial_scales
from .temporal import aggregate_step_maps, compute_word_guidance
from .tensorops import mask_below

EXIT_OK = 0
EXIT_ALL_JOBS_FAILED = 1
EXIT_BAD_CONFIG = 2
EXIT_BACKEND_UNREACHABLE = 3
EXIT_MISSING_RECORD = 4

DEMO_PROMPT = "a dog standing on the grass"
DEMO_EDIT = "a dog sitting on the grass"


def make_backend(selector: str):
    if selector == "toy":
        return ToyBackend()
    if selector.startswith("remote:"):
        return RemoteBackend(selector.split(":", 1)[1])
    raise ConfigError(f"unknown backend {selector!r}")


def _slug(word: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", word.lower()).strip("_") or "word"


def write_scales_csv(path: Path, words, guidance) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("word,A,tau\n")
        for i, word in enumerate(words):
            if guidance is None:
                fh.write(f"{word},,\n")
            else:
                fh.write(
                    f"{word},{guidance.correlation[i]:.6f},{guidance.tau[i]:.6f}\n"
                )


def write_spatial_png(path: Path, scales) -> None:
    if scales is None:
        scales = np.zeros(AGG_SIDE * AGG_SIDE, dtype=np.float32)
    save_heatmap(scales, path, normalize=False)


def write_run_artifacts(result: EditResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_image(result.image, out_dir / "x.png")
    save_image(result.edited_image, out_dir / "x_star.png")

    words = result.record.edited.words
    write_scales_csv(out_dir / "scales.csv", words, result.guidance)
    write_spatial_png(out_dir / "spatial.png", result.scales)

    with open(out_dir / "schedule.csv", "w", encoding="utf-8") as fh:
        fh.write("word,tau,preserve_steps,blend_steps\n")
        for i, word in enumerate(words):
            if result.schedule is None:
                fh.write(f"{word},,,\n")
            else:
                keep = result.schedule.preserve_steps(i)
                tau = result.guidance.tau[i] if result.guidance is not None else 0.0
                fh.write(f"{word},{tau:.6f},{keep},{result.config.steps - keep}\n")

    (out_dir / "manifest.txt").write_text(
        format_manifest(result.config), encoding="utf-8"
    )
    result.record.save(out_dir / "record.npz")


def run_job(config: EditConfig, out_dir: Path) -> EditResult:
    # stamp the resolved directory so the manifest re-runs in place
    config = replace(config, out_dir=str(out_dir)).validate()
    backend = make_backend(config.backend)
    result = run_edit(backend, config.prompt, config.edit, config)
    write_run_artifacts(result, out_dir)
    return result


def _load_config(args: argparse.Namespace) -> EditConfig:
    if args.config:
        config = load_job_file(Path(args.config))
    else:
        pairs = {}
        if args.prompt is not None:
            pairs["prompt"] = args.prompt
        if args.edit is not None:
            pairs["edit"] = args.edit
        config = config_from_pairs(pairs)
    overrides = {}
    if args.prompt is not None:
        overrides["prompt"] = args.prompt
    if args.edit is not None:
        overrides["edit"] = args.edit
    if args.backend is not None:
        overrides["backend"] = args.backend
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if overrides:
        config = replace(config, **overrides).validate()
    return config


def cmd_edit(args: argparse.Namespace) -> int:
    try:
        config = _load_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    out_dir = config.resolved_out_dir()
    try:
        result = run_job(config, out_dir)
    except BackendUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND_UNREACHABLE
    except AdapEditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    for note in result.warnings:
        print(f"warning: {note}", file=sys.stderr)
    print(f"wrote {out_dir}/x.png, x_star.png, scales.csv, spatial.png")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    if not args.config:
        print("error: sweep requires --config <grid file>", file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        grid = load_grid_file(Path(args.config))
        base = grid.base
        overrides = {}
        if args.backend is not None:
            overrides["backend"] = args.backend
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out_dir"] = args.out
        if overrides:
            base = replace(base, **overrides).validate()
            grid = SweepGrid(
                base=base,
                lambda_tau=grid.lambda_tau,
                lambda_sv=grid.lambda_sv,
                lambda_s=grid.lambda_s,
            )
        jobs = grid.jobs()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    root = base.resolved_out_dir()
    root.mkdir(parents=True, exist_ok=True)
    workers = args.jobs or os.cpu_count() or 1

    def one(config: EditConfig):
        sub = root / SweepGrid.job_dir_name(config)
        return run_job(replace(config, out_dir=str(sub)), sub)

    rows = []
    failures = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        for config, outcome in zip(jobs, pool.map(lambda c: _safe(one, c), jobs)):
            if isinstance(outcome, Exception):
                failures.append((config, outcome))
                rows.append((config, None))
            else:
                rows.append((config, outcome))

    with open(root / "summary.csv", "w", encoding="utf-8") as fh:
        fh.write("lambda_tau,lambda_sv,lambda_s,map_divergence,image_l2\n")
        for config, result in rows:
            if result is None:
                fh.write(
                    f"{config.lambda_tau!r},{config.lambda_sv!r},"
                    f"{config.lambda_s!r},NaN,NaN\n"
                )
            else:
                fh.write(
                    f"{config.lambda_tau!r},{config.lambda_sv!r},"
                    f"{config.lambda_s!r},{result.map_divergence!r},"
                    f"{result.image_l2!r}\n"
                )
    for config, exc in failures:
        print(
            f"job {SweepGrid.job_dir_name(config)} failed: {exc}", file=sys.stderr
        )
    print(f"wrote {root}/summary.csv ({len(rows) - len(failures)}/{len(rows)} jobs ok)")
    if failures and len(failures) == len(rows):
        return EXIT_ALL_JOBS_FAILED
    return EXIT_OK


def _safe(fn, arg):
    try:
        return fn(arg)
    except Exception as exc:  # noqa: BLE001 - sweep records per-job failures
        return exc


def _find_run_dir(args: argparse.Namespace) -> Path:
    if args.run:
        return Path(args.run)
    if args.config:
        config = load_job_file(Path(args.config))
        if args.out is not None:
            config = replace(config, out_dir=args.out)
        return config.resolved_out_dir()
    if args.out:
        return Path(args.out)
    raise ConfigError("inspect-attn needs a run directory (--run or --config)")


def cmd_inspect_attn(args: argparse.Namespace) -> int:
    try:
        run_dir = _find_run_dir(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    record_path = run_dir / "record.npz"
    if not record_path.exists():
        print(f"error: no attention record at {record_path}", file=sys.stderr)
        return EXIT_MISSING_RECORD
    record = AttnRecord.load(record_path)

    defaults = EditConfig()
    alpha_m, lambda_tau, lambda_sv = defaults.alpha_m, defaults.lambda_tau, defaults.lambda_sv
    manifest_path = run_dir / "manifest.txt"
    if manifest_path.exists():
        manifest = config_from_pairs(
            parse_key_values(manifest_path.read_text(encoding="utf-8"))
        )
        alpha_m = manifest.alpha_m
        lambda_tau = manifest.lambda_tau
        lambda_sv = manifest.lambda_sv

    step = args.step if args.step is not None else record.final_step
    if step not in record.recorded_steps():
        print(f"error: step {step} not in record", file=sys.stderr)
        return EXIT_BAD_CONFIG

    words = record.edited.words
    if args.word is not None:
        matches = [i for i, w in enumerate(words) if w.lower() == args.word.lower()]
        if not matches:
            print(f"error: word {args.word!r} not in edit prompt", file=sys.stderr)
            return EXIT_BAD_CONFIG
        indices = matches
    else:
        indices = list(range(len(words)))

    agg = aggregate_step_maps(record, branch=1, step=step)
    run_dir.mkdir(parents=True, exist_ok=True)
    for i in indices:
        word_map = agg.map[i]
        name = _slug(words[i])
        save_heatmap(word_map, run_dir / f"attn_{name}_t{step}.png")
        save_heatmap(
            mask_below(word_map[None, :], alpha_m)[0],
            run_dir / f"attn_{name}_t{step}_masked.png",
        )

    # refresh the per-word scale dump and spatial heatmap alongside
    alignment = align(record.original, record.edited)
    if not alignment.is_noop:
        guidance = compute_word_guidance(record, alignment, lambda_tau, alpha_m)
        scales = spatial_scales(guidance.key_embedding, guidance.visual_features, lambda_sv)
        write_scales_csv(run_dir / "scales.csv", words, guidance)
        write_spatial_png(run_dir / "spatial.png", scales)
    print(f"wrote {2 * len(indices)} heatmaps to {run_dir}")
    return EXIT_OK


def cmd_toy_demo(args: argparse.Namespace) -> int:
    config = EditConfig(
        prompt=DEMO_PROMPT,
        edit=DEMO_EDIT,
        seed=args.seed if args.seed is not None else 42,
        backend="toy",
        out_dir=args.out or "",
    ).validate()
    out_dir = config.resolved_out_dir()
    run_job(config, out_dir)
    print(f"toy demo written to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adapedit",
        description="Attention-editing batch tool: edits, sweeps, inspection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="job or grid file (key = value lines)")
        p.add_argument("--backend", help="toy | remote:<host:port>")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (default $ADAPEDIT_OUT or ./out)")
        p.add_argument("--jobs", type=int, help="parallel sweep jobs")

    p_edit = sub.add_parser("edit", help="run a single edit job")
    common(p_edit)
    p_edit.add_argument("--prompt", help="original text condition")
    p_edit.add_argument("--edit", help="edited text condition")
    p_edit.set_defaults(fn=cmd_edit)

    p_sweep = sub.add_parser("sweep", help="run a hyper-parameter grid")
    common(p_sweep)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_inspect = sub.add_parser(
        "inspect-attn", help="dump per-word attention heatmaps from a finished run"
    )
    common(p_inspect)
    p_inspect.add_argument("--run", help="run directory holding record.npz")
    p_inspect.add_argument("--step", type=int, help="diffusion step (default: last)")
    p_inspect.add_argument("--word", help="restrict to one word")
    p_inspect.set_defaults(fn=cmd_inspect_attn)

    p_demo = sub.add_parser("toy-demo", help="run the built-in toy edit")
    common(p_demo)
    p_demo.set_defaults(fn=cmd_toy_demo)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except BackendUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND_UNREACHABLE
    except AdapEditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG


if __name__ == "__main__":
    sys.exit(main())
