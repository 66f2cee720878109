"""``lska`` command line: verify, cost, sweep, erf, probe.

Exit codes: 0 success, 1 verification failure, 2 usage/config error,
3 I/O error.  Outputs are assembled in memory and written atomically, so a
failing command leaves no partial file behind.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .attention import PAPER_DILATIONS, AttentionVariant, ConfigError, KernelSpec, dilation_for_kernel
from .cost import attention_flops_analytic, attention_params_analytic, model_cost
from .van import CAPACITIES, ModelConfig

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

CSV_HEADER = ("variant", "k", "d", "channels_or_capacity", "params", "macs", "gflops",
              "wall_ms_mean", "wall_ms_stddev", "reps", "seed")
CONFIG_KEYS = ("capacity", "variant", "k", "d", "num_classes", "seed")


class UsageError(Exception):
    pass


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6g}"
    return str(value)


def render_csv(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_atomic(path, data):
    """Write ``data`` (str or bytes) to ``path``; '-' means stdout."""
    if str(path) == "-":
        sys.stdout.write(data if isinstance(data, str) else data.decode())
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def apply_config(args):
    """Values in the ``--config`` JSON file override the individual flags."""
    if not getattr(args, "config", None):
        return args
    with open(args.config, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    unknown = set(data) - set(CONFIG_KEYS) - {"stages"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for key in CONFIG_KEYS:
        if key in data and hasattr(args, key):
            setattr(args, key, data[key])
    if "stages" in data:
        args.stages = data["stages"]
    return args


def resolve_d(k, d):
    if d is not None:
        return int(d)
    try:
        return dilation_for_kernel(k)
    except ConfigError:
        raise UsageError(f"k={k} has no default dilation; pass --d") from None


def model_config(args, variant, k, d):
    data = {"capacity": args.capacity, "variant": variant, "k": k, "d": d,
            "num_classes": getattr(args, "num_classes", 1000), "seed": args.seed}
    if getattr(args, "stages", None):
        data["stages"] = args.stages
    return ModelConfig.from_dict(data)


def sweep_row(variant, k, d, args, bench=False, seed=None):
    variant = AttentionVariant.parse(variant)
    seed = args.seed if seed is None else seed
    if args.channels is not None:
        C = int(args.channels)
        params = attention_params_analytic(variant, k, d, C)
        macs = attention_flops_analytic(variant, k, d, C, args.hw, args.hw)
        who, bench_c, bench_hw = C, C, args.hw
    else:
        cfg = model_config(args, variant, k, d)
        report = model_cost(cfg, (args.hw, args.hw))
        params, macs = report.params, report.macs
        who, bench_c, bench_hw = cfg.capacity, cfg.stages[0].channels, args.hw // 4
    mean = std = reps = None
    if bench:
        from .bench import bench_attention

        t = bench_attention(variant, KernelSpec(k, d), bench_c, bench_hw, reps=args.reps, seed=seed) * 1e3
        mean, std, reps = float(t.mean()), float(t.std(ddof=1) if t.size > 1 else 0.0), args.reps
    return (variant.value, k, d, who, params, macs, macs / 1e9, mean, std, reps, seed)


def _check_target(args):
    if (args.channels is None) == (args.capacity is None):
        raise UsageError("give exactly one of --channels or --capacity")
    if args.hw is None:
        args.hw = 224 if args.capacity is not None else 56


def cmd_cost(args):
    _check_target(args)
    row = sweep_row(args.variant, int(args.k), resolve_d(int(args.k), args.d), args)
    write_atomic(args.out, render_csv(CSV_HEADER, [row]))
    return EXIT_OK


def cmd_sweep(args):
    _check_target(args)
    variants = ([v.value for v in AttentionVariant] if args.variants == "all"
                else [AttentionVariant.parse(v).value for v in args.variants.split(",")])
    ks = [int(k) for k in args.ks.split(",")] if args.ks != "all" else list(PAPER_DILATIONS)
    ds = [resolve_d(k, None) for k in ks] if args.ds is None else [int(d) for d in args.ds.split(",")]
    if len(ds) != len(ks):
        raise UsageError("--ds needs one dilation per k")
    grid = sorted(((v, k, d) for v in variants for k, d in zip(ks, ds)), key=lambda t: (t[0], t[1]))
    rows = [sweep_row(v, k, d, args, bench=args.bench, seed=args.seed + i)
            for i, (v, k, d) in enumerate(grid)]
    write_atomic(args.out, render_csv(CSV_HEADER, rows))
    return EXIT_OK


ERF_MASSES = (0.5, 0.9, 0.95, 0.99)


def cmd_erf(args):
    from .analysis import compute_erf, erf_radius, pgm_bytes, random_inputs
    from .van import build_van

    if args.capacity is None:
        args.capacity = "tiny"
    if args.n_inputs < 1:
        raise UsageError("--n-inputs must be >= 1")
    k = int(args.k)
    cfg = model_config(args, AttentionVariant.parse(args.variant).value, k, resolve_d(k, args.d))
    model = build_van(cfg)
    erf = compute_erf(model, random_inputs(args.n_inputs, args.hw, args.seed), args.seed)

    grid_csv = "\n".join(",".join(f"{v:.6g}" for v in row) for row in erf.grid) + "\n"
    radius_rows = [(cfg.variant.value, k, cfg.kernel.d, cfg.capacity, args.n_inputs, args.seed, m,
                    erf_radius(erf, m)) for m in ERF_MASSES]
    radius_csv = render_csv(("variant", "k", "d", "capacity", "n_inputs", "seed", "mass", "radius"),
                            radius_rows)
    stem = Path(args.out)
    write_atomic(stem.with_suffix(".pgm"), pgm_bytes(erf.grid))
    write_atomic(stem.with_suffix(".csv"), grid_csv)
    write_atomic(stem.with_name(stem.name + "_radius.csv"), radius_csv)
    return EXIT_OK


def cmd_probe(args):
    from .analysis import load_probe_dir, probe

    try:
        pairs = load_probe_dir(args.input_dir, args.n)
    except FileNotFoundError as exc:
        raise OSError(str(exc)) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = probe(pairs)
    rows = [(name, score, dims, pct) for name, score, dims, pct in report.rows()]
    write_atomic(args.out, render_csv(("factor", "score", "dimensionality", "percent_of_n"), rows))
    return EXIT_OK


def cmd_verify(args):
    from .checks import run_suite

    filters = args.filter or None
    results = run_suite(filters)
    if not results:
        raise UsageError(f"no property group matches {filters}")
    first_fail = None
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  ({r.detail})")
        if not r.passed and first_fail is None:
            first_fail = r
    if first_fail is not None:
        print(f"verification failed: {first_fail.group}: {first_fail.name}", file=sys.stderr)
        return EXIT_FAIL
    print(f"all {len(results)} properties passed")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="lska", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON model config; its values override flags")
        sp.add_argument("--seed", type=int, default=0)
        return sp

    v = common(sub.add_parser("verify", help="run the invariant suite"))
    v.add_argument("--filter", action="append",
                   help="only groups containing this text (rank1, gradient-check, mrf, cost, probe)")
    v.set_defaults(func=cmd_verify)

    def target(sp):
        sp.add_argument("--channels", type=int, help="module-level row at this channel count")
        sp.add_argument("--capacity", choices=sorted(CAPACITIES), help="model-level row")
        sp.add_argument("--hw", type=int, help="spatial size (default 224 for models, 56 for modules)")
        sp.add_argument("--num-classes", dest="num_classes", type=int, default=1000)

    c = common(sub.add_parser("cost", help="one cost row"))
    c.add_argument("--variant", required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--d", type=int)
    target(c)
    c.add_argument("--out", default="-")
    c.set_defaults(func=cmd_cost)

    s = common(sub.add_parser("sweep", help="grid of cost rows, optionally benchmarked"))
    s.add_argument("--variants", default="all", help="comma list or 'all'")
    s.add_argument("--ks", default="all", help="comma list or 'all'")
    s.add_argument("--ds", help="comma list of dilations, one per k")
    target(s)
    s.add_argument("--bench", action="store_true")
    s.add_argument("--reps", type=int, default=50)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_sweep)

    e = common(sub.add_parser("erf", help="effective receptive field of a random-init model"))
    e.add_argument("--capacity", choices=sorted(CAPACITIES), default="tiny")
    e.add_argument("--variant", default="lska")
    e.add_argument("--k", type=int, required=True)
    e.add_argument("--d", type=int)
    e.add_argument("--n-inputs", dest="n_inputs", type=int, default=1)
    e.add_argument("--hw", type=int, default=224)
    e.add_argument("--out", required=True, help="output stem: writes .pgm, .csv and _radius.csv")
    e.set_defaults(func=cmd_erf)

    r = common(sub.add_parser("probe", help="shape/texture dimensionality from latent pairs"))
    r.add_argument("--input-dir", dest="input_dir", required=True)
    r.add_argument("--n", type=int, help="expected latent dimension")
    r.add_argument("--out", default="-")
    r.set_defaults(func=cmd_probe)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_config(args)
        return args.func(args)
    except (UsageError, ConfigError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"lska {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"lska {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
