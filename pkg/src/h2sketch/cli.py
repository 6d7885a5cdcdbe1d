"""Command-line driver: ``h2sketch {construct,verify,update,bench} [options]``."""

from __future__ import annotations

import argparse
import json
import sys

from . import bench
from .io import load_h2, read_points, save_h2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="h2sketch", description="Sketching-based H2 matrix construction")
    p.add_argument("command", choices=("construct", "verify", "update", "bench"))
    p.add_argument("--kernel", choices=("cov", "ie", "dense-file"), default="cov")
    p.add_argument("--n", type=int, nargs="+", default=[4096], help="problem size (several for bench)")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--points", choices=("grid", "random", "uniform-random"), default="grid")
    p.add_argument("--points-file", help="read coordinates from a binary point file")
    p.add_argument("--corr-length", type=float, default=0.2)
    p.add_argument("--wavenumber", type=float, default=3.0)
    p.add_argument("--eta", type=float, default=0.7)
    p.add_argument("--leaf-size", type=int, default=64)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--sample-block", type=int, default=32)
    p.add_argument("--fixed-samples", type=int, help="fixed-rank mode with this many samples")
    p.add_argument("--update-rank", type=int, default=32)
    p.add_argument("--no-bootstrap", action="store_true", help="bench: sample the exact kernel")
    p.add_argument("--repeats", type=int, default=3, help="bench: timed runs per size (fastest kept)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dense-file")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.add_argument("--save-h2")
    p.add_argument("--load-h2", help="verify: check a stored H2 instead of constructing one")
    return p


def _config(args, n) -> bench.RunConfig:
    return bench.RunConfig(
        kernel=args.kernel,
        n=n,
        dim=args.dim,
        points="random" if args.points == "uniform-random" else args.points,
        corr_length=args.corr_length,
        wavenumber=args.wavenumber,
        eta=args.eta,
        leaf_size=args.leaf_size,
        eps=args.eps,
        sample_block=args.sample_block,
        adaptive=args.fixed_samples is None,
        fixed_samples=args.fixed_samples or 256,
        seed=args.seed,
        workers=args.workers,
        dense_file=args.dense_file,
    )


def _emit(report: dict, path) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if path:
        with open(path, "w") as f:
            f.write(text + "\n")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    cfg = _config(args, args.n[0])
    points = read_points(args.points_file) if args.points_file else None
    if points is not None:
        cfg.n = points.shape[0]
    try:
        if args.command == "construct":
            h2, stats = bench.run_construct(cfg, bench.setup(cfg, points=points))
            if args.save_h2:
                save_h2(args.save_h2, h2)
            report = stats.to_dict()
            report["memory"] = h2.memory_report()
            _emit(report, args.out_json)
        elif args.command == "verify":
            if args.load_h2:
                h2 = load_h2(args.load_h2)
                cfg.leaf_size, cfg.eta = h2.tree.leaf_size, h2.mtree.eta
                problem = bench.setup(cfg, dense=True, points=h2.tree.points)
                report = bench.accuracy_report(h2, problem, cfg.seed)
            else:
                report = bench.run_verify(cfg)
            _emit(report, args.out_json)
        elif args.command == "update":
            _emit(bench.run_update(cfg, args.update_rank), args.out_json)
        else:
            rows = bench.run_bench(cfg, args.n, bootstrap=not args.no_bootstrap, repeats=args.repeats)
            text = bench.write_csv(rows, args.out_csv)
            print(text, end="")
    except (ValueError, OSError) as exc:
        print(f"h2sketch: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
