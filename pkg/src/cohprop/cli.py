"""Command line entry point: ``cohprop run|compare|sample|kerr-sweep``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import kernels
from .errors import CohpropError


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _load(args):
    from .models import ExperimentConfig
    cfg = ExperimentConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        samp = cfg.sampling
        if samp is not None:
            samp = replace(samp, seed=args.seed)
        cfg = replace(cfg, seed=args.seed, sampling=samp)
    return cfg


def _cmd_run(args):
    from .experiment import run_experiment
    res = run_experiment(_load(args))
    res.write(args.out)
    print(f"wrote {len(res.times)} records, final N={res.report.records[-1].N} to {args.out}")


def _cmd_sample(args):
    from .experiment import sample_experiment
    res = sample_experiment(_load(args))
    res.write(args.out)
    print(f"wrote {res.samples.outcomes.shape[0]} samples "
          f"(acceptance {res.samples.acceptance_rate:.3f}) to {args.out}")


def _cmd_compare(args):
    from .experiment import compare_with_oracle
    cfg = _load(args)
    sweep = [int(v) for v in _floats(args.sweep_S)] if args.sweep_S else None
    cmp = compare_with_oracle(cfg, cutoff=args.cutoff, sweep_S=sweep)
    cmp.write(args.out)
    print(f"max abs error {cmp.errors.max():.3e}; tables in {args.out}")


def _cmd_kerr_sweep(args):
    from .experiment import kerr_sweep, kerr_sweep_csv
    rows = kerr_sweep(_floats(args.kappa_grid), _floats(args.lambda_grid),
                      _floats(args.eps_grid), args.M)
    d = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(d, exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write(kerr_sweep_csv(rows))
    print(f"wrote {len(rows)} rows to {args.out}")


def build_parser():
    p = argparse.ArgumentParser(prog="cohprop", description="Coherent-state circuit propagation")
    p.add_argument("--threads", type=int, default=None, help="cap on kernel worker threads")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("config", help="experiment JSON")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="cap on kernel worker threads")
        if seed:
            sp.add_argument("--seed", type=int, default=None)

    r = sub.add_parser("run", help="propagate and record observables")
    common(r)
    r.set_defaults(func=_cmd_run)
    s = sub.add_parser("sample", help="propagate and draw x-quadrature samples")
    common(s)
    s.set_defaults(func=_cmd_sample)
    c = sub.add_parser("compare", help="compare against the dense Fock simulation")
    common(c)
    c.add_argument("--cutoff", type=int, default=None, help="Fock levels per mode")
    c.add_argument("--sweep-S", default=None, help="TopS values for an accuracy sweep, e.g. '64,128,256'")
    c.set_defaults(func=_cmd_compare)
    k = sub.add_parser("kerr-sweep", help="measured Kerr expansion errors on a grid")
    k.add_argument("--kappa-grid", required=True)
    k.add_argument("--lambda-grid", required=True)
    k.add_argument("--eps-grid", default="1e-4,1e-8")
    k.add_argument("--M", type=int, default=3)
    k.add_argument("--out", required=True, help="output CSV")
    k.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    k.set_defaults(func=_cmd_kerr_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        kernels.set_threads(args.threads)
    try:
        args.func(args)
    except (CohpropError, ValueError, OSError) as exc:
        print(f"cohprop: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
