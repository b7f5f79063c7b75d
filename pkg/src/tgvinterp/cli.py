"""Command-line interface: ``tgvinterp <command> [options]``.

Commands: denoise, train, gen-data, eval, consistency-check.

Every command accepts ``--config FILE`` (JSON; explicit flags win) and
``--seed``, and writes ``run_manifest.json`` next to its outputs.  A run
manifest can itself be passed as ``--config`` to repeat the run.

Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 solver divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("tgvinterp")


class UsageError(Exception):
    pass


# --- helpers ---------------------------------------------------------------


def resolve_banks(spec: str, nu: int = 1):
    """Turn a bank spec into ``(K-bank, L-bank)``.

    Accepted forms: ``identity``, ``handcrafted:L3K1`` (any of L3/L4 with
    K1/K4), ``KPATH,LPATH`` (two bank JSON files) or a directory holding
    ``best_K.json`` and ``best_L.json``.
    """
    from .interp import FilterBank, handcrafted_bank, identity_bank

    if spec == "identity":
        return identity_bank("K"), identity_bank("L")
    if spec.startswith("handcrafted:"):
        name = spec.split(":", 1)[1].upper()
        if len(name) != 4 or name[0] != "L" or name[2] != "K":
            raise UsageError(f"handcrafted bank must look like L3K1, got {name!r}")
        try:
            return handcrafted_bank(name[2:], nu), handcrafted_bank(name[:2], nu)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    if "," in spec:
        k_path, l_path = spec.split(",", 1)
    else:
        d = Path(spec)
        if not d.is_dir():
            raise FileNotFoundError(f"bank directory or files not found: {spec}")
        k_path, l_path = d / "best_K.json", d / "best_L.json"
    try:
        bank_K, bank_L = FilterBank.load(k_path), FilterBank.load(l_path)
    except (json.JSONDecodeError, KeyError) as exc:
        raise OSError(f"malformed bank file: {exc}") from exc
    if bank_K.target != "K" or bank_L.target != "L":
        raise UsageError("bank files must hold a K-bank and an L-bank, in that order")
    return bank_K, bank_L


def bank_hash(bank) -> str:
    return hashlib.sha256(json.dumps(bank.to_dict(), sort_keys=True).encode()).hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    import numba
    import numpy
    import scipy

    from . import __version__

    return {
        "tgvinterp": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def write_manifest(outdir: Path, command: str, args: argparse.Namespace, banks=None, outputs=()) -> None:
    resolved = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    manifest = {
        "command": command,
        "args": resolved,
        "seed": getattr(args, "seed", None),
        "versions": _versions(),
    }
    if banks is not None:
        manifest["banks"] = {name: bank_hash(b) for name, b in zip(("K", "L"), banks)}
    manifest["outputs"] = {Path(p).name: file_hash(p) for p in outputs}
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "run_manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def _alpha(args):
    if args.alpha1 < 0 or args.alpha0 < 0:
        raise UsageError("alpha values must be non-negative")
    return (args.alpha1, args.alpha0)


# --- commands --------------------------------------------------------------


def cmd_denoise(args) -> int:
    import numpy as np

    from .data import load_image, save_image
    from .metrics import evaluate, write_report
    from .solver import pd_solve

    banks = resolve_banks(args.bank, args.nu)
    alpha = _alpha(args)
    if args.iters < 1:
        raise UsageError("--iters must be >= 1")
    img = load_image(args.input, luma=args.luma)
    if min(alpha) == 0.0:
        # a zero weight makes the regulariser vanish identically
        u = img.data.copy()
    else:
        u = pd_solve(img.data, banks, alpha, args.iters, h=args.h).u
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image(u, out, bits=args.bits)
    outputs = [out]
    if args.ref:
        ref = load_image(args.ref, luma=args.luma)
        report = out.with_suffix(".csv")
        write_report(report, [(out.stem, evaluate(np.clip(u, 0, 1), ref.data))])
        outputs.append(report)
    write_manifest(out.parent, "denoise", args, banks, outputs)
    return EXIT_OK


def _load_pairs(manifest_path, luma=False):
    import numpy as np

    from .data import load_image, read_manifest

    base = Path(manifest_path).parent
    entries = read_manifest(manifest_path)
    if not entries:
        raise UsageError(f"{manifest_path} lists no images")
    clean, noisy, names = [], [], []
    for c, n, _, _ in entries:
        clean.append(load_image(base / c, luma=luma).data)
        noisy.append(load_image(base / n, luma=luma).data)
        names.append(Path(n).stem)
    shapes = {a.shape for a in clean + noisy}
    if len(shapes) != 1:
        raise UsageError(f"images in {manifest_path} have differing shapes {sorted(shapes)}")
    return np.stack(noisy), np.stack(clean), names


def cmd_train(args) -> int:
    import numpy as np

    from .interp import random_bank
    from .train import TrainConfig, bilevel_train, write_loss_history

    f, t, _ = _load_pairs(args.data, args.luma)
    if args.init == "random":
        rng = np.random.default_rng(args.seed)
        banks = (random_bank("K", args.nK, args.nu, rng), random_bank("L", args.nL, args.nu, rng))
    else:
        banks = resolve_banks(args.init, args.nu)
    config = TrainConfig(
        outer_iters=args.outer_iters,
        inner_iters=args.inner_iters,
        lr=args.lr,
        constraint=args.constraint,
        symmetric=args.symmetric,
        alpha=_alpha(args),
        seed=args.seed,
        h=args.h,
        checkpoint_every=args.checkpoint_every,
    )
    out = Path(args.out)
    result = bilevel_train((f, t), banks, config, checkpoint_dir=out)
    write_loss_history(out / "loss_history.csv", result.history)
    outputs = [out / "best_K.json", out / "best_L.json", out / "best_meta.json", out / "loss_history.csv"]
    write_manifest(out, "train", args, result.banks, outputs)
    print(f"best train loss {result.best_loss:.6g} at step {result.best_step}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    import numpy as np

    from .data import (
        add_gaussian_noise,
        center_crop,
        gen_synthetic,
        load_image,
        pseudo_ground_truth,
        save_image,
        write_manifest as write_data_manifest,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "synthetic":
        clean = [im.data for im in gen_synthetic(args.seed, args.count, (args.size, args.size))]
    else:
        if not args.src:
            raise UsageError("--src is required for natural images")
        files = sorted(p for p in Path(args.src).iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"))
        if not files:
            raise FileNotFoundError(f"no images found in {args.src}")
        clean = [center_crop(load_image(p, luma=True).data, args.size) for p in files[: args.count]]
    entries, outputs = [], []
    targets = clean
    if args.pgt:
        alpha = _alpha(args)
        targets = list(pseudo_ground_truth(np.stack(clean), alpha, iters=args.pgt_iters, factor=args.factor))
    for i, (c, tgt) in enumerate(zip(clean, targets)):
        seed = args.seed * 100003 + i
        noisy = add_gaussian_noise(c, args.sigma, seed) if args.sigma > 0 else c
        cp, npth = out / f"clean_{i:03d}.png", out / f"input_{i:03d}.png"
        save_image(tgt, cp, bits=16)
        save_image(noisy, npth, bits=16)
        entries.append((cp.name, npth.name, args.sigma, seed))
        outputs += [cp, npth]
    write_data_manifest(out / "manifest.json", entries)
    outputs.append(out / "manifest.json")
    write_manifest(out, "gen-data", args, None, outputs)
    return EXIT_OK


def cmd_eval(args) -> int:
    import numpy as np

    from .metrics import evaluate, summarize, write_report, write_table
    from .solver import pd_solve

    f, t, names = _load_pairs(args.data, args.luma)
    alpha = _alpha(args)
    methods = args.method or ["standard=identity", "handcrafted=handcrafted:L3K1"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table, outputs = {}, []
    for m in methods:
        if "=" not in m:
            raise UsageError(f"--method must be NAME=BANKSPEC, got {m!r}")
        name, spec = m.split("=", 1)
        banks = resolve_banks(spec, args.nu)
        u = pd_solve(f, banks, alpha, args.iters, h=args.h).u
        rows = [(n, evaluate(np.clip(ui, 0, 1) if args.clip else ui, ti)) for n, ui, ti in zip(names, u, t)]
        path = out / f"{name}.csv"
        write_report(path, rows)
        outputs.append(path)
        table[name] = summarize(rows)
    write_table(out / "table.csv", table)
    outputs.append(out / "table.csv")
    write_manifest(out, "eval", args, None, outputs)
    for name, m in table.items():
        print(f"{name:>16s}  PSNR {m['psnr']:.3f}  MSE {m['mse']:.3e}  SSIM {m['ssim']:.4f}")
    return EXIT_OK


def cmd_consistency(args) -> int:
    from .consistency import refinement_ladder, rotation_diagnostic, sample_test_field, write_ladder, write_rotation_report

    banks = resolve_banks(args.bank, args.nu)
    alpha = _alpha(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    Ns = [int(n) for n in args.Ns.split(",")]
    levels = refinement_ladder(args.field, alpha, banks, Ns, iters=args.iters or None)
    ladder = out / f"ladder_{args.field}.csv"
    write_ladder(ladder, levels, kind=args.field, alpha=alpha)
    outputs = [ladder, ladder.with_suffix(".txt")]
    if args.rotation:
        u, h = sample_test_field(args.field, args.rotation_size)
        res = rotation_diagnostic(u, alpha, banks, args.rotation_iters, h=h)
        rot = out / f"rotation_{args.field}.csv"
        write_rotation_report(rot, res, label=args.bank)
        outputs += [rot, rot.with_suffix(".txt")]
    write_manifest(out, "consistency-check", args, banks, outputs)
    print(ladder.with_suffix(".txt").read_text(), end="")
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="JSON file with option values (flags take precedence)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    p.add_argument("--nu", type=int, default=1, help="filter radius for named banks")
    p.add_argument("--h", type=float, default=1.0, help="pixel size")
    p.add_argument("--luma", action="store_true", help="convert colour inputs to luma")
    p.add_argument("-v", "--verbose", action="store_true")


def _alphas(p, a1=0.1, a0=0.2):
    p.add_argument("--alpha1", type=float, default=a1)
    p.add_argument("--alpha0", type=float, default=a0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tgvinterp", description="TGV denoising with learnable interpolation filters")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="denoise one image")
    _common(p)
    _alphas(p, 0.0685, 0.137)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bank", default="handcrafted:L3K1")
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--ref", help="clean reference; writes a metrics CSV next to --out")
    p.add_argument("--bits", type=int, default=16, choices=(8, 16))
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("train", help="learn filter banks")
    _common(p)
    _alphas(p)
    p.add_argument("--data", required=True, help="dataset manifest.json")
    p.add_argument("--out", required=True)
    p.add_argument("--init", default="handcrafted:L4K4", help="bank spec or 'random'")
    p.add_argument("--nK", type=int, default=4)
    p.add_argument("--nL", type=int, default=4)
    p.add_argument("--outer-iters", type=int, default=3000)
    p.add_argument("--inner-iters", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--constraint", default="sum-to-one", choices=("sum-to-one", "equal-sums", "none"))
    p.add_argument("--symmetric", action="store_true")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gen-data", help="generate a dataset")
    _common(p)
    _alphas(p)
    p.add_argument("--kind", choices=("synthetic", "natural"), default="synthetic")
    p.add_argument("--count", type=int, default=32)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--sigma", type=float, default=0.0, help="noise level on the 0-255 scale")
    p.add_argument("--src", help="directory of natural images")
    p.add_argument("--pgt", action="store_true", help="store pseudo ground truth as the reference")
    p.add_argument("--pgt-iters", type=int, default=20000)
    p.add_argument("--factor", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("eval", help="evaluate banks on a dataset")
    _common(p)
    _alphas(p)
    p.add_argument("--data", required=True)
    p.add_argument("--method", action="append", help="NAME=BANKSPEC, repeatable")
    p.add_argument("--iters", type=int, default=10000)
    p.add_argument("--clip", action="store_true", help="clip reconstructions to [0, 1] before scoring")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    for name in ("consistency-check", "consistency"):
        p = sub.add_parser(name, help="grid-refinement ladder and rotation diagnostic")
        _common(p)
        _alphas(p)
        p.add_argument("--field", default="affine_plus_sine", choices=("affine", "affine_plus_sine", "smooth_bump"))
        p.add_argument("--bank", default="handcrafted:L3K1")
        p.add_argument("--Ns", default="16,32,64,128")
        p.add_argument("--iters", type=int, default=0, help="iterations per level (0: grows with N)")
        p.add_argument("--rotation", action="store_true")
        p.add_argument("--rotation-size", type=int, default=32)
        p.add_argument("--rotation-iters", type=int, default=2000)
        p.add_argument("--out", required=True)
        p.set_defaults(func=cmd_consistency)
    return parser


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, argv):
    """Parse ``argv`` with config-file values as defaults so explicit flags win.

    Options required on the command line may come from the config instead.
    """
    path = _config_path(argv)
    command = next((tok for tok in argv if not tok.startswith("-")), None)
    choices = parser._subparsers._group_actions[0].choices
    if path is None or command not in choices:
        return parser.parse_args(argv)
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if "args" in cfg and "command" in cfg:
        canon = lambda c: "consistency-check" if c.startswith("consistency") else c
        if canon(cfg["command"]) != canon(command):
            raise UsageError(f"manifest is for '{cfg['command']}', not '{command}'")
        cfg = cfg["args"]
    cfg = {k.replace("-", "_"): v for k, v in cfg.items() if k not in ("command", "config", "func")}
    sub = choices[command]
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(cfg) - known)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    sub.set_defaults(**cfg)
    for action in sub._actions:
        if action.dest in cfg:
            action.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ.setdefault(var, str(max(1, args.threads)))

    from .solver import SolverDivergence

    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverDivergence as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        if "diverged" in str(exc):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_DIVERGED
        raise


if __name__ == "__main__":
    sys.exit(main())
