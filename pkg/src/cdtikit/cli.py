"""Command-line interface.

Subcommands: ``generate`` (synthetic dataset), ``train`` (one model),
``evaluate`` (a checkpoint on a split), ``compare`` (the full 12-variant
sweep) and ``export-maps`` (DTI map PNG/tensor export).

Exit codes: 0 success, 2 configuration/validation error, 3 numerical
failure during training.

Any subcommand accepts ``--config FILE`` with one ``key = value`` pair per
line (``#`` comments allowed); keys are the long flag names with dashes
replaced by underscores, values in JSON syntax (bare strings also work).
Explicit command-line flags override file entries.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class CliError(ValueError):
    pass


def parse_config_file(path):
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        try:
            values[key] = json.loads(value)
        except json.JSONDecodeError:
            values[key] = value
    return values


def _add_config_flag(sub):
    sub.add_argument("--config", help="key = value file providing flag defaults")


def _apply_config_file(parser, subparsers, args, argv):
    if getattr(args, "config", None):
        sub = subparsers[args.command]
        defaults = parse_config_file(args.config)
        known = {a.dest for a in sub._actions}
        bad = set(defaults) - known
        if bad:
            raise CliError(f"unknown config keys: {sorted(bad)}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _model_config(args):
    from .nn.unet import ModelConfig

    return ModelConfig(
        dim=args.dim,
        data_mode=args.data_mode,
        slice_mode=args.slice_mode,
        base_channels=args.base_channels,
        depth=args.depth,
        sms_factor=args.sms_factor,
        dropout=args.dropout,
    )


def _add_model_flags(sub):
    sub.add_argument("--dim", default="2d", choices=["2d", "3d"])
    sub.add_argument("--data-mode", default="mag", choices=["mag", "magphs", "comp"])
    sub.add_argument("--slice-mode", default="all", choices=["all", "single"])
    sub.add_argument("--base-channels", type=int, default=0,
                     help="0 selects the canonical per-variant default")
    sub.add_argument("--depth", type=int, default=5)
    sub.add_argument("--sms-factor", type=int, default=2)
    sub.add_argument("--dropout", type=float, default=0.0)


def _add_train_flags(sub):
    sub.add_argument("--epochs", type=int, default=200)
    sub.add_argument("--lr", type=float, default=3e-4)
    sub.add_argument("--lr-drop-epoch", type=int, default=100)
    sub.add_argument("--lr-drop-factor", type=float, default=10.0)
    sub.add_argument("--batch-size", type=int, default=16)
    sub.add_argument("--loss", default="l1", choices=["l1", "l2"])
    sub.add_argument("--include-phase-loss", action="store_true")
    sub.add_argument("--no-augment", action="store_true")
    sub.add_argument("--seed", type=int, default=0)


def cmd_generate(args):
    from .dataset import DatasetParams, build_dataset
    from .phantom import PhantomGeometry

    geometry = PhantomGeometry(image_size=args.image_size, n_slices=args.slices)
    params = DatasetParams(
        n_hearts=args.hearts,
        geometry=geometry,
        n_directions=args.directions,
        alpha_range=(args.alpha_lo, args.alpha_hi),
        spatial_alpha=not args.scalar_alpha,
        noise_sigma=args.noise_sigma,
        sms_factor=args.sms_factor,
        seed=args.seed,
    )
    manifest = build_dataset(args.out, params)
    groups = manifest.groups()
    print(f"dataset written to {args.out}: {len(groups)} slice groups "
          f"({len(manifest.groups('train'))} train / {len(manifest.groups('val'))} val "
          f"/ {len(manifest.groups('test'))} test)")
    return EXIT_OK


def cmd_train(args):
    from .dataset import DatasetManifest
    from .training import TrainConfig, train

    manifest = DatasetManifest.load(args.dataset)
    config = TrainConfig(
        model=_model_config(args),
        epochs=args.epochs,
        lr=args.lr,
        lr_drop_epoch=args.lr_drop_epoch,
        lr_drop_factor=args.lr_drop_factor,
        batch_size=args.batch_size,
        loss=args.loss,
        include_phase_in_loss=args.include_phase_loss,
        augment=not args.no_augment,
        seed=args.seed,
    )
    run_dir = Path(args.run) if args.run else Path("runs") / config.model.name
    record = train(config, manifest, run_dir)
    for row in record.epochs:
        print(f"epoch {row['epoch']:3d}  loss {row['train_loss']:.6f}  "
              f"val_mae {row['val_mae']:.6f}  lr {row['lr']:.2e}  {row['seconds']:.1f}s")
    if record.aborted:
        print("training aborted on a numerical failure; see log.csv", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"best epoch {record.best_epoch} (val MAE {record.best_val_mae:.6f}); "
          f"checkpoint at {record.checkpoint}")
    return EXIT_OK


def cmd_evaluate(args):
    from .dataset import DatasetManifest
    from .report import markdown_table, per_slice_csv
    from .training import evaluate, evaluate_identity

    manifest = DatasetManifest.load(args.dataset)
    report = evaluate(args.checkpoint, manifest, split=args.split)
    identity = evaluate_identity(manifest, split=args.split)
    table = markdown_table([report, identity])
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.md").write_text(table)
        (out / "report.csv").write_text(per_slice_csv([report, identity]))
        print(f"report written to {out}")
    return EXIT_OK


def cmd_compare(args):
    from .dataset import DatasetManifest
    from .training import compare_all

    manifest = DatasetManifest.load(args.dataset)
    result = compare_all(manifest, args.out, epochs=args.epochs, seed=args.seed)
    print((Path(args.out) / "comparison.md").read_text())
    if result["failures"]:
        print(f"{len(result['failures'])} run(s) failed; see comparison.md",
              file=sys.stderr)
    return EXIT_OK


def cmd_export_maps(args):
    from .dataset import DatasetManifest
    from .dti import compute_local_basis, compute_maps, fit_tensors
    from .tensorio import write_tensor
    from .training import _corrected_stack
    from .nn import unet
    from .viz import export_map_pngs

    manifest = DatasetManifest.load(args.dataset)
    record = next((g for g in manifest.groups() if g["id"] == args.group), None)
    if record is None:
        raise CliError(f"group {args.group!r} not in dataset "
                       f"(available: {[g['id'] for g in manifest.groups()][:6]} ...)")
    data = manifest.load_group(record)
    if args.checkpoint:
        net, _ = unet.load_checkpoint(args.checkpoint)
        net.eval()
        stack = _corrected_stack(net, data, net.config)
        source = "model output"
    else:
        stack = np.abs(data["clean"])
        source = "clean data"
    s = args.slice
    field = fit_tensors(stack[:, s], manifest.protocol())
    basis = compute_local_basis(data["mask"][s])
    maps = compute_maps(field, basis)
    maps.valid &= data["mask"][s]
    out_prefix = args.out
    Path(out_prefix).parent.mkdir(parents=True, exist_ok=True)
    paths = export_map_pngs(maps, out_prefix)
    for name, arr in (("md", maps.md), ("fa", maps.fa), ("ha", maps.ha), ("e2a", maps.e2a)):
        write_tensor(f"{out_prefix}_{name}.cdt", arr)
    print(f"maps from {source} for {args.group} slice {s}: "
          + ", ".join(sorted(paths.values())))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cdtikit",
        description="Complex/real U-Nets for SMS cardiac DTI artefact removal",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="build a synthetic dataset")
    gen.add_argument("--out", required=True)
    gen.add_argument("--hearts", type=int, default=8)
    gen.add_argument("--image-size", type=int, default=32)
    gen.add_argument("--slices", type=int, default=10)
    gen.add_argument("--directions", type=int, default=12)
    gen.add_argument("--alpha-lo", type=float, default=0.05)
    gen.add_argument("--alpha-hi", type=float, default=0.35)
    gen.add_argument("--scalar-alpha", action="store_true")
    gen.add_argument("--noise-sigma", type=float, default=0.02)
    gen.add_argument("--sms-factor", type=int, default=2)
    gen.add_argument("--seed", type=int, default=0)
    _add_config_flag(gen)
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="train one model variant")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--run", help="run directory (default runs/<variant>)")
    _add_model_flags(tr)
    _add_train_flags(tr)
    _add_config_flag(tr)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("evaluate", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--split", default="test", choices=["train", "val", "test"])
    ev.add_argument("--out", help="directory for report.md / report.csv")
    _add_config_flag(ev)
    ev.set_defaults(func=cmd_evaluate)

    cp = sub.add_parser("compare", help="train and evaluate all 12 variants")
    cp.add_argument("--dataset", required=True)
    cp.add_argument("--out", required=True)
    cp.add_argument("--epochs", type=int, default=200)
    cp.add_argument("--seed", type=int, default=0)
    _add_config_flag(cp)
    cp.set_defaults(func=cmd_compare)

    ex = sub.add_parser("export-maps", help="export DTI map PNGs and tensors")
    ex.add_argument("--dataset", required=True)
    ex.add_argument("--group", required=True)
    ex.add_argument("--out", required=True, help="output path prefix")
    ex.add_argument("--slice", type=int, default=0)
    ex.add_argument("--checkpoint", help="correct with this model first")
    _add_config_flag(ex)
    ex.set_defaults(func=cmd_export_maps)
    return parser, {"generate": gen, "train": tr, "evaluate": ev,
                    "compare": cp, "export-maps": ex}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, subparsers = build_parser()
    from .dataset import SplitError
    from .dti import ProtocolError
    from .metrics import MetricError
    from .nn.unet import ConfigError
    from .phantom import GeometryError, LeakageError
    from .tensor import ShapeError
    from .training import NumericalError

    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(parser, subparsers, args, argv)
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CliError, ConfigError, GeometryError, LeakageError, MetricError,
            ProtocolError, ShapeError, SplitError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
