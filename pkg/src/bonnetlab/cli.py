"""``bonnetlab`` command line.

Exit codes: 0 success, 1 other failure, 2 conformality rejection, 3 schema
or IO error, 4 precondition refusal.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bonnet import associate_family, deformation_differential
from .errors import BonnetLabError, ConfigurationError, SchemaError
from .grid import DiffScheme, write_field_csv
from .hopf import ClassifierConfig
from .invariants import invariants_of, nonconstancy_fraction
from .pipeline import analyze, clean, converge
from .surface import GALLERY, export_chart, gallery_entry, load_chart, sample_gallery

FIELD_NAMES = ("u", "H", "h", "K", "deltag")


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(clean(doc), indent=2, sort_keys=True) + "\n"
    if out:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise SchemaError(f"cannot write {out}: {exc}") from None
    else:
        sys.stdout.write(text)


def _parse_params(extra: list[str]) -> dict:
    """Turn leftover ``--key value`` pairs into gallery parameters."""
    params = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or len(tok) < 3:
            raise ConfigurationError(f"unexpected argument {tok!r}")
        key, _, val = tok[2:].partition("=")
        if not val:
            val = next(it, None)
            if val is None:
                raise ConfigurationError(f"parameter --{key} needs a value")
        try:
            params[key] = float(val)
        except ValueError:
            raise ConfigurationError(f"parameter --{key}: {val!r} is not a number") from None
    return params


def _load(args, extra: list[str]):
    params = _parse_params(extra)
    if args.chart:
        if params:
            raise ConfigurationError("gallery parameters only apply with --gallery")
        sample = load_chart(args.chart)
        if args.nx or args.ny:
            raise ConfigurationError("--nx/--ny only apply with --gallery")
    else:
        sample = sample_gallery(args.gallery, params, nx=args.nx, ny=args.ny)
    scheme = DiffScheme.parse(args.scheme, sample.grid)
    if args.chart and sample.derivative_source == "numerical" and args.scheme != "spectral-auto":
        # positions-only tables are differentiated with the requested scheme
        sample = load_chart(args.chart, scheme)
    return sample, scheme


def _add_chart_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--gallery", metavar="NAME", help="gallery entry (see `bonnetlab gallery`)")
    src.add_argument("--chart", metavar="FILE", help="chart JSON file")
    p.add_argument("--nx", type=int, help="nodes along x (gallery charts)")
    p.add_argument("--ny", type=int, help="nodes along y (gallery charts)")
    p.add_argument("--scheme", default="spectral-auto", choices=("fd2", "fd4", "spectral-auto"))
    p.add_argument("--out", metavar="FILE", help="write the JSON report here instead of stdout")


def cmd_gallery(args, extra) -> int:
    if extra:
        raise ConfigurationError(f"unexpected arguments {extra}")
    if args.name:
        info = gallery_entry(args.name).describe()
        if args.json:
            _emit(info, None)
            return 0
        print(f"{info['name']}: {info['description']}")
        for p in info["parameters"]:
            print(f"  --{p['name']} (default {p['default']:g}): {p['doc']}")
        print(f"  constraint: {info['constraint']}")
        print(f"  compact: {info['compact']}  simply_connected: {info['simply_connected']}")
        return 0
    entries = [GALLERY[n].describe() for n in GALLERY]
    if args.json:
        _emit({"entries": entries}, None)
        return 0
    for e in entries:
        names = ", ".join(f"{p['name']}={p['default']:g}" for p in e["parameters"]) or "-"
        print(f"{e['name']:<26}{'compact' if e['compact'] else 'open':<9}{names}")
    return 0


def _dump_fields(analysis, names: str, directory: str | None) -> list[Path]:
    wanted = [n.strip() for n in names.split(",") if n.strip()]
    bad = sorted(set(wanted) - set(FIELD_NAMES))
    if bad:
        raise ConfigurationError(f"unknown field(s) {bad}; choose from {', '.join(FIELD_NAMES)}")
    folder = Path(directory or ".")
    folder.mkdir(parents=True, exist_ok=True)
    fields = analysis.fields()
    stem = analysis.sample.metadata.get("name", "chart")
    paths = []
    for n in wanted:
        path = folder / f"{stem}_{n}.csv"
        write_field_csv(path, fields[n], analysis.grid)
        paths.append(path)
    return paths


def _config(args) -> ClassifierConfig:
    return ClassifierConfig(floor_factor=args.floor_factor)


def cmd_analyze(args, extra) -> int:
    sample, scheme = _load(args, extra)
    a = analyze(sample, scheme, _config(args))
    doc = a.report()
    doc.pop("verdict")
    if args.dump_fields:
        paths = _dump_fields(a, args.dump_fields, args.dump_dir)
        doc["dumped_fields"] = [p.name for p in paths]
    _emit(doc, args.out)
    return 0


def cmd_verdict(args, extra) -> int:
    sample, scheme = _load(args, extra)
    a = analyze(sample, scheme, _config(args))
    doc = a.report()
    cl = a.classification
    print(a.verdict.headline)
    if cl.positive_fraction is not None:
        print(f"Delta g sign fractions: positive {cl.positive_fraction:.4f}, "
              f"negative {cl.negative_fraction:.4f} (floor {cl.floor:.3e})")
    if args.out:
        _emit(doc, args.out)
    elif args.json:
        _emit(doc, None)
    return 0


def cmd_mate(args, extra) -> int:
    sample, scheme = _load(args, extra)
    config = _config(args)
    ci = invariants_of(sample)
    mate = associate_family(ci, args.theta, config, scheme)
    dd = deformation_differential(ci, mate, scheme)
    summ = dd.summary()
    line = "congruent (F = 0)" if dd.congruent else f"noncongruent associate, |F| up to {summ['F_max_abs']:.6g}"
    print(line)
    doc = {
        "tool_version": __version__,
        "chart": {"name": sample.metadata.get("name"), "params": sample.metadata.get("params", {}),
                  "grid": sample.grid.to_dict()},
        "resolution": [sample.grid.nx, sample.grid.ny],
        "scheme": scheme.label,
        "theta": args.theta,
        "nonconstancy_fraction": nonconstancy_fraction(ci, config.nonconstancy_tol, scheme),
        "invariants": ci.statistics(),
        "mate_invariants": mate.statistics(),
        "metric_difference_max": float(np.max(np.abs(mate.u - ci.u))),
        "mean_curvature_difference_max": float(np.max(np.abs(mate.H - ci.H))),
        "deformation_differential": summ,
        "F_sample": [float(dd.F.flat[0].real), float(dd.F.flat[0].imag)],
        "summary": line,
    }
    if args.out:
        _emit(doc, args.out)
    elif args.json:
        _emit(doc, None)
    return 0


def cmd_converge(args, extra) -> int:
    if args.levels < 2:
        raise ConfigurationError("--levels must be at least 2")
    sample, _ = _load(args, extra)
    table = converge(sample, args.scheme, args.levels)
    print(f"{'quantity':<20}{'finest error':>14}  observed orders")
    for name, c in table.items():
        orders = ", ".join("rounding" if o is None else f"{o:.2f}" for o in c.orders)
        order = c.order if isinstance(c.order, str) else ("n/a" if c.order is None else f"{c.order:.2f}")
        print(f"{name:<20}{c.errors[-1]:>14.3e}  {orders}  -> {order}")
    if args.out:
        _emit({"tool_version": __version__, "scheme": args.scheme, "levels": args.levels,
               "results": {k: v.to_dict() for k, v in table.items()}}, args.out)
    return 0


def cmd_export(args, extra) -> int:
    sample, _ = _load(args, extra)
    path = export_chart(sample, args.to, sample.metadata.get("name", "chart"), not args.positions_only)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bonnetlab", description="Bonnet-pair analysis of conformal surface charts")
    parser.add_argument("--version", action="version", version=f"bonnetlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gallery", help="list gallery surfaces")
    p.add_argument("name", nargs="?")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_gallery)

    for name, func, helptext in (("analyze", cmd_analyze, "invariants, residuals and classification"),
                                 ("verdict", cmd_verdict, "full pipeline through the no-mate verdict"),
                                 ("mate", cmd_mate, "associate-family mate of a CMC chart"),
                                 ("converge", cmd_converge, "refinement study"),
                                 ("export", cmd_export, "write a chart as JSON plus .npy table")):
        p = sub.add_parser(name, help=helptext)
        _add_chart_args(p)
        p.add_argument("--floor-factor", type=float, default=10.0, help="structure floor multiplier")
        p.set_defaults(func=func)
        if name == "analyze":
            p.add_argument("--dump-fields", metavar="LIST", help="comma list of u,H,h,K,deltag")
            p.add_argument("--dump-dir", metavar="DIR", help="directory for field CSVs (default: cwd)")
        if name in ("verdict", "mate"):
            p.add_argument("--json", action="store_true", help="print the JSON report to stdout")
        if name == "mate":
            p.add_argument("--theta", type=float, default=math.pi / 2, help="rotation angle in radians")
        if name == "converge":
            p.add_argument("--levels", type=int, default=3)
        if name == "export":
            p.add_argument("--to", required=True, metavar="FILE", help="chart JSON path")
            p.add_argument("--positions-only", action="store_true", help="omit derivative columns")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return args.func(args, extra)
    except BonnetLabError as exc:
        print(f"bonnetlab: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
