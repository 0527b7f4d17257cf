"""Single command-line entry point with subcommands.

``synthesize`` degrades HR images into LR/recipe pairs, ``train`` runs
the two-phase loop, ``upscale`` applies a trained generator, and
``evaluate``/``benchmark`` produce metric and throughput reports (CSV
and/or JSON plus a rendered figure).

Structured logs are line-delimited JSON on stdout; human-readable
summaries go to stderr. Exit codes: 0 success, 1 runtime failure,
2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_to_dict, effective_config
from .degradation import apply_recipe, sample_recipe
from .evaluation import (benchmark, desk_ladder, evaluate_dataset, full_ladder,
                         generator_sr_fn, super_resolve, write_benchmark_report)
from .figures import (render_benchmark_figure, render_metrics_figure,
                      render_training_figure)
from .imgio import center_crop_multiple, list_images, load_image, save_image
from .training import (CheckpointError, Trainer, TrainingDiverged,
                       load_generator_from_checkpoint, load_hr_pool)


def log_event(**fields):
    print(json.dumps(fields), flush=True)


def log_human(message):
    print(message, file=sys.stderr, flush=True)


def _default_out_dir():
    return os.environ.get("BLINDSR_OUT_DIR")


def _load_config(args, overrides=None):
    cfg = effective_config(getattr(args, "config", None), overrides)
    log_event(event="config", command=args.command, config=config_to_dict(cfg))
    return cfg


def cmd_synthesize(args) -> int:
    cfg = _load_config(args)
    space = cfg.train.degradation
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = list_images(args.hr_dir)
    if not paths:
        raise ValueError(f"no images found in {args.hr_dir}")
    for i in range(args.count):
        src = paths[i % len(paths)]
        hr = center_crop_multiple(load_image(src), 4)
        rng = np.random.default_rng([args.seed, i])
        recipe = sample_recipe(space, rng, seed=args.seed)
        lr = apply_recipe(hr, recipe)
        stem = f"{src.stem}_{i:05d}"
        save_image(lr, out_dir / f"{stem}.png")
        (out_dir / f"{stem}.json").write_text(recipe.to_json())
        log_event(event="synthesized", source=src.name, output=f"{stem}.png",
                  level_index=recipe.level_index, stages=len(recipe.stages))
    log_human(f"wrote {args.count} LR image(s) and recipes to {out_dir}")
    return 0


def cmd_train(args) -> int:
    overrides = {}
    if args.batch_size is not None:
        overrides["train.batch_size"] = args.batch_size
    if args.seed is not None:
        overrides["train.seed"] = args.seed
    if args.variant is not None:
        overrides["generator.variant"] = args.variant
    cfg = _load_config(args, overrides)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    hr_pool = load_hr_pool(args.hr_dir)
    if args.resume:
        trainer = Trainer.from_checkpoint(args.resume, hr_pool=hr_pool)
        log_human(f"resumed from {args.resume} at iteration {trainer.iteration}")
    else:
        trainer = Trainer(cfg.train, cfg.generator, cfg.discriminator, hr_pool=hr_pool)

    log_path = out_dir / "train_log.jsonl"

    def log_fn(record):
        log_event(event="train", **record)
        with open(log_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")

    records = trainer.run(out_dir=out_dir, log_every=args.log_every,
                          checkpoint_every=args.checkpoint_every, log_fn=log_fn)
    if records:
        render_training_figure(records, out_dir / "training_losses.png")
    log_human(f"training finished at iteration {trainer.iteration}; "
              f"checkpoints and logs in {out_dir}")
    return 0


def cmd_upscale(args) -> int:
    gen = load_generator_from_checkpoint(args.checkpoint, variant=args.variant,
                                         use_ema=args.use_ema)
    inputs = Path(args.input)
    output = Path(args.output)
    if inputs.is_dir():
        paths = list_images(inputs)
        if not paths:
            raise ValueError(f"no images found in {inputs}")
        output.mkdir(parents=True, exist_ok=True)
        targets = [output / f"{p.stem}.png" for p in paths]
    else:
        if not inputs.exists():
            raise ValueError(f"input not found: {inputs}")
        paths = [inputs]
        targets = [output if output.suffix else output / f"{inputs.stem}.png"]
    for src, dst in zip(paths, targets):
        sr = super_resolve(gen, load_image(src))
        save_image(sr, dst)
        log_event(event="upscaled", input=str(src), output=str(dst),
                  output_size=[sr.shape[2], sr.shape[1]])
    log_human(f"upscaled {len(paths)} image(s)")
    return 0


def _report_paths(report_arg):
    base = Path(report_arg)
    if base.suffix:
        base = base.with_suffix("")
    return base.with_suffix(".csv"), base.with_suffix(".json"), base.with_suffix(".png")


def cmd_evaluate(args) -> int:
    gen = load_generator_from_checkpoint(args.checkpoint, use_ema=args.use_ema)
    report = evaluate_dataset(generator_sr_fn(gen), args.input_dir,
                              hr_dir=args.hr_dir, out_dir=args.out_dir)
    csv_path, json_path, fig_path = _report_paths(args.report)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(csv_path)
    report.to_json(json_path)
    render_metrics_figure(report, fig_path)
    errors = [r for r in report.rows if r.error is not None]
    log_event(event="evaluated", rows=len(report.rows), errors=len(errors),
              aggregates=report.aggregates, report=str(csv_path))
    log_human(f"evaluated {len(report.rows)} image(s) "
              f"({len(errors)} error(s)); report at {csv_path}, {json_path}, {fig_path}")
    return 0


def cmd_benchmark(args) -> int:
    gen_star = load_generator_from_checkpoint(args.star_checkpoint, variant="star")
    gen_lite = load_generator_from_checkpoint(args.lite_checkpoint, variant="lite")
    ladder = full_ladder() if args.ladder == "full" else desk_ladder()
    result = benchmark(gen_star, gen_lite, ladder)
    json_path = Path(args.report)
    if json_path.suffix != ".json":
        json_path = json_path.with_suffix(".json")
    write_benchmark_report(result, json_path)
    render_benchmark_figure(result, json_path.with_suffix(".png"))
    for step in result["steps"]:
        log_event(event="benchmark_step", **{k: v for k, v in step.items()
                                             if not k.endswith("raw_seconds")})
    log_human(f"benchmark report at {json_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindsr",
        description="Blind super-resolution toolkit: degradation synthesis, "
                    "training, inference, evaluation and benchmarking.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="degrade HR images into LR/recipe pairs")
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--out-dir", default=_default_out_dir(), required=_default_out_dir() is None)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("train", help="run the two-phase training loop")
    p.add_argument("--config", default=None)
    p.add_argument("--hr-dir", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.add_argument("--out-dir", default=_default_out_dir(), required=_default_out_dir() is None)
    p.add_argument("--batch-size", type=int, default=None, help="override train.batch_size")
    p.add_argument("--seed", type=int, default=None, help="override train.seed")
    p.add_argument("--variant", choices=["star", "lite"], default=None,
                   help="override generator.variant")
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--checkpoint-every", type=int, default=500)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("upscale", help="4x upscale images with a trained generator")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="image file or directory")
    p.add_argument("--output", required=True, help="output file or directory")
    p.add_argument("--variant", choices=["star", "lite"], required=True)
    p.add_argument("--use-ema", action="store_true")
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("evaluate", help="PSNR/SSIM/timing report over a directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-dir", required=True)
    p.add_argument("--hr-dir", default=None)
    p.add_argument("--report", required=True, help="report base path (.csv/.json/.png)")
    p.add_argument("--out-dir", default=None, help="also write SR outputs here")
    p.add_argument("--use-ema", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", help="throughput ladder for star vs lite")
    p.add_argument("--star-checkpoint", required=True)
    p.add_argument("--lite-checkpoint", required=True)
    p.add_argument("--ladder", choices=["desk", "full"], default="desk")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        log_human(f"config error: {exc}")
        return 2
    except (CheckpointError, TrainingDiverged) as exc:
        log_human(f"error: {exc}")
        return 1
    except (ValueError, OSError) as exc:
        log_human(f"error: {exc}")
        return 1


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
