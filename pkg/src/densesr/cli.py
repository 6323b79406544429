"""``densesr`` command line.

Exit codes: 0 success, 1 usage error, 2 precondition violation, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import evalbench
from .archmodel import PRESETS, ModelConfig, build_model, load_checkpoint, param_count
from .imagecore import ColorSpace, SigmoidalParams, convert, read_png, write_png
from .netcore import AdamConfig
from .netcore.gradcheck import composition_checks, op_checks
from .resample import Kernel, KernelSpec, degrade, resize, upsample_gs
from .trainer import (
    TrainConfig,
    load_stages,
    patch_training_plan,
    super_resolve,
    train_main,
    train_patch_stage,
    write_trace,
)

log = logging.getLogger("densesr")

EXIT_OK, EXIT_USAGE, EXIT_PRECONDITION, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- config files ------------------------------------------------------------------

def parse_units(text: str):
    """``"64x2, 128x2"`` -> [(64, 2), (128, 2)]"""
    out = []
    for item in text.split(","):
        f, _, l = item.strip().partition("x")
        out.append((int(f), int(l)))
    return out


def load_config(path=None, preset: str | None = None) -> tuple[ModelConfig, TrainConfig]:
    """Read a ``[model]`` / ``[train]`` key-value file; missing keys keep the defaults
    (Table-1 model, batch 6, ADAM lr 2e-4)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None and not cp.read(path, encoding="utf-8"):
        raise ValueError(f"cannot read config file {path}")
    m = cp["model"] if cp.has_section("model") else {}
    t = cp["train"] if cp.has_section("train") else {}
    kw = {"dense": str(m.get("dense", "true")).lower() in ("1", "true", "yes", "on"),
          "activation": m.get("activation", "relu"), "padding": m.get("padding", "zeros")}
    preset = preset or m.get("preset", "full")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if "units" in m:
        mcfg = ModelConfig.from_widths(parse_units(m["units"]), **kw)
    else:
        mcfg = PRESETS[preset](**kw)
    adam = AdamConfig(float(t.get("lr", 2e-4)), float(t.get("beta1", 0.9)),
                      float(t.get("beta2", 0.999)), float(t.get("eps", 1e-8)))
    tcfg = TrainConfig(patch_size=int(t.get("patch_size", 159)), batch=int(t.get("batch", 6)),
                       adam=adam, steps=int(t.get("steps", 1000)), seed=int(t.get("seed", 0)),
                       log_every=int(t.get("log_every", 50)),
                       checkpoint_every=int(t.get("checkpoint_every", 0)))
    return mcfg, tcfg


def _space(name: str) -> ColorSpace:
    return ColorSpace(name.lower())


def _hr_files(data) -> list[Path]:
    return evalbench.dataset_images(data)


# -- subcommands ---------------------------------------------------------------------

def cmd_convert(a):
    p = SigmoidalParams(a.alpha, a.beta)
    img = read_png(a.input, _space(a.source))
    write_png(convert(img, _space(a.to), p), a.output, a.bit_depth)


KERNELS = {"catrom": Kernel.CATMULL_ROM, "spline36": Kernel.SPLINE36, "gaussian": Kernel.GAUSSIAN}


def cmd_resize(a):
    img = read_png(a.input)
    write_png(resize(img, a.width, a.height, KernelSpec(KERNELS[a.kernel], a.sigma)), a.output, a.bit_depth)


def cmd_degrade(a):
    write_png(degrade(read_png(a.input), a.scale, crop=a.crop), a.output, a.bit_depth)


def cmd_upsample(a):
    img = read_png(a.input)
    up = upsample_gs(convert(img, _space(a.space)), a.scale, a.sigma)
    write_png(convert(up, ColorSpace.SRGB), a.output, a.bit_depth)


def _train_config(a) -> tuple[ModelConfig, TrainConfig]:
    mcfg, tcfg = load_config(a.config, a.preset)
    over = {k: v for k, v in (("steps", a.steps), ("seed", a.seed), ("patch_size", a.patch_size),
                              ("batch", a.batch)) if v is not None}
    if a.lr is not None:
        over["adam"] = replace(tcfg.adam, lr=a.lr)
    return mcfg, replace(tcfg, **over)


def cmd_train(a):
    mcfg, tcfg = _train_config(a)
    hr = [read_png(f) for f in _hr_files(a.data)]
    model = build_model(mcfg, seed=tcfg.seed)
    res = train_main(model, hr, tcfg, scale=2, out=a.out)
    if a.trace:
        write_trace(res.trace, a.trace)
    print(f"trained {res.steps} steps; final loss {res.trace[-1].loss:.6g}" if res.trace
          else "trained 0 steps")


def cmd_train_patch(a):
    role = a.stage.upper()
    lower = load_stages(a.lower)
    needed = set(patch_training_plan(role))
    missing = sorted(needed - set(lower))
    if missing:
        raise ValueError(f"--lower must provide checkpoints for {', '.join(missing)}")
    mcfg, tcfg = _train_config(a)
    if a.config is None and a.preset is None:
        mcfg = lower["F2"].model.cfg
    hr = [read_png(f) for f in _hr_files(a.data)]
    model = build_model(mcfg, seed=tcfg.seed)
    res = train_patch_stage(role, lower, hr, tcfg, model, out=a.out)
    if a.trace:
        write_trace(res.trace, a.trace)
    print(f"trained {role} for {res.steps} steps")


def cmd_sr(a):
    stages = load_stages(a.stages, tile=a.tile)
    out = super_resolve(read_png(a.input), a.scale, stages)
    write_png(out, a.output, a.bit_depth)


def cmd_bench(a):
    stages = load_stages(a.stages, tile=a.tile) if a.stages else None
    res = evalbench.run_benchmark(a.dataset, a.scale, stages, dataset=a.name)
    text = evalbench.to_csv(res.records)
    if a.csv:
        Path(a.csv).write_text(text, encoding="utf-8")
    if a.report:
        Path(a.report).write_text(res.report, encoding="utf-8")
    sys.stdout.write(res.report)


def cmd_gradcheck(a):
    results = op_checks(a.seed) + composition_checks(a.compositions, a.seed)
    ok = True
    for r in results:
        passed = r.passed(a.tol)
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {r.name:<60} rel_err={r.rel_err:.2e} "
              f"checked={r.checked} skipped={r.skipped}")
    print(f"{sum(r.passed(a.tol) for r in results)}/{len(results)} checks passed")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_inspect(a):
    ck = load_checkpoint(a.checkpoint)
    cfg = ck.config
    print(f"checkpoint: {a.checkpoint}")
    print(f"role: {ck.role or '-'}")
    print(f"units: {len(cfg.units)}")
    for u in cfg.units:
        print(f"  unit {u.order}: F={u.filters} L={u.layers}")
    print(f"dense: {cfg.dense}")
    print(f"activation: {cfg.activation}  padding: {cfg.padding}")
    print(f"parameters: {param_count(cfg)}")
    print(f"global mean: {ck.global_mean:.9g}")
    print(f"step: {ck.step}")
    print(f"optimizer state: {'adam' if ck.adam is not None else 'none'}")


# -- parser ---------------------------------------------------------------------------

def _io(p, bit_depth=True):
    p.add_argument("--in", dest="input", required=True, help="input PNG")
    p.add_argument("--out", dest="output", required=True, help="output PNG")
    if bit_depth:
        p.add_argument("--bit-depth", type=int, choices=(8, 16), default=8, help="output bit depth (default 8)")


def _train_flags(p):
    p.add_argument("--config", default=None, help="[model]/[train] key-value file (default: built-in settings)")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None, help="model preset (default: full)")
    p.add_argument("--data", required=True, help="directory of HR PNGs (or containing HR/)")
    p.add_argument("--out", required=True, help="checkpoint to write")
    p.add_argument("--steps", type=int, default=None, help="optimizer steps (default from config: 1000)")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default from config: 0)")
    p.add_argument("--patch-size", type=int, default=None, help="patch side (default 159)")
    p.add_argument("--batch", type=int, default=None, help="mini-batch size (default 6)")
    p.add_argument("--lr", type=float, default=None, help="learning rate (default 2e-4)")
    p.add_argument("--trace", default=None, help="write the loss trace CSV here (default: none)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="densesr", description="High-order residual super-resolution toolkit")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS threads (default: all cores; 1 gives bit-exact runs)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("convert", help="colorspace conversion")
    _io(p)
    p.add_argument("--from", dest="source", choices=("srgb", "linear", "sigmoidal"), default="srgb",
                   help="encoding of the input file (default srgb)")
    p.add_argument("--to", required=True, choices=("srgb", "linear", "sigmoidal"))
    p.add_argument("--alpha", type=float, default=0.5, help="sigmoidal inflection (default 0.5)")
    p.add_argument("--beta", type=float, default=8.5, help="sigmoidal slope (default 8.5)")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("resize", help="separable kernel resize")
    _io(p)
    p.add_argument("--kernel", choices=sorted(KERNELS), default="spline36", help="(default spline36)")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.5, help="gaussian sigma (default 0.5)")
    p.set_defaults(func=cmd_resize)

    p = sub.add_parser("degrade", help="Catmull-Rom downscale")
    _io(p)
    p.add_argument("--scale", type=int, choices=(2, 4, 8), required=True)
    p.add_argument("--crop", action="store_true", help="crop to a multiple of the scale first")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("upsample", help="Gaussian-Spline upscale")
    _io(p)
    p.add_argument("--scale", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.5, help="gaussian sigma (default 0.5)")
    p.add_argument("--space", choices=("sigmoidal", "linear", "srgb"), default="sigmoidal",
                   help="colorspace to resample in (default sigmoidal)")
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("train", help="train the 2x main model (F2)")
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-patch", help="train a patch stage on frozen lower stages")
    p.add_argument("--stage", choices=("p4", "p8"), required=True)
    p.add_argument("--lower", nargs="+", required=True, help="lower-stage checkpoints: F2 [P4]")
    _train_flags(p)
    p.set_defaults(func=cmd_train_patch)

    p = sub.add_parser("sr", help="super-resolve an image through the cascade")
    _io(p)
    p.add_argument("--scale", type=int, choices=(2, 4, 8), required=True)
    p.add_argument("--stages", nargs="+", required=True, help="checkpoints in order F2 [P4 [P8]]")
    p.add_argument("--tile", type=int, default=64, help="inference tile size (default 64)")
    p.set_defaults(func=cmd_sr)

    p = sub.add_parser("bench", help="PSNR/SSIM on <dataset>/HR/*.png")
    p.add_argument("--dataset", required=True)
    p.add_argument("--scale", type=int, choices=(2, 4, 8), required=True)
    p.add_argument("--stages", nargs="*", default=None, help="checkpoints F2 [P4]; omit for baseline only")
    p.add_argument("--name", default=None, help="dataset name in the report (default: directory name)")
    p.add_argument("--csv", default=None, help="write per-image CSV here (default: none)")
    p.add_argument("--report", default=None, help="write the text report here (default: stdout only)")
    p.add_argument("--tile", type=int, default=64, help="inference tile size (default 64)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every op")
    p.add_argument("--seed", type=int, default=0, help="(default 0)")
    p.add_argument("--compositions", type=int, default=50, help="random op chains to check (default 50)")
    p.add_argument("--tol", type=float, default=1e-4, help="relative error bound (default 1e-4)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("inspect", help="print a checkpoint's config and constants")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    threads = args.threads or os.cpu_count() or 1
    try:
        with threadpool_limits(limits=threads):
            code = args.func(args)
    except ValueError as e:
        print(f"densesr {args.command}: precondition violated: {e}", file=sys.stderr)
        return EXIT_PRECONDITION
    except Exception as e:  # noqa: BLE001 - every other failure maps to one exit code
        print(f"densesr {args.command}: failed: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
