"""Command-line entry points: train, verify-psg, compare, finetune-split."""

import argparse
import concurrent.futures
import os
import sys

from . import harness, psg_verify
from .errors import ConfigError


def _overrides(pairs):
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _train_one(args_tuple):
    cfg, out_dir = args_tuple
    result = harness.run(cfg, out_dir)
    return out_dir, result.final_acc, result.flops, result.energy


def cmd_train(args):
    overrides = _overrides(args.set)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    jobs = []
    for seed in seeds:
        cfg = harness.make_config(scenario=args.scenario, config_file=args.config,
                                  overrides=overrides, seed=seed)
        out_dir = args.out if len(seeds) == 1 else os.path.join(args.out, f"seed{seed}")
        jobs.append((cfg, out_dir))
    if args.jobs > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_one, jobs))
    else:
        results = [_train_one(j) for j in jobs]
    for out_dir, acc, flops, energy in results:
        print(f"{out_dir}: accuracy={acc:.4f} flops={flops} energy={energy:.4g}")
    return 0


def cmd_verify_psg(args):
    if args.sampler == "gaussian":
        sampler = psg_verify.GaussianPairSampler(seed=args.seed, batch=args.sampler_batch,
                                                 dim=args.sampler_dim)
    elif args.sampler == "snapshot":
        if not args.snapshot_dir:
            raise ConfigError("--snapshot-dir required for the snapshot sampler")
        sampler = psg_verify.SnapshotSampler(args.snapshot_dir)
    else:
        raise ConfigError(f"unknown sampler {args.sampler!r}")

    bit_list = [int(b) for b in args.bits.split(",")]
    lines = ["bits,tau,rate,rate_ci_low,rate_ci_high,bound,bound_ci_low,bound_ci_high"]
    for bits in bit_list:
        grad_bits = args.grad_bits if args.grad_bits else bits + 6
        est = psg_verify.monte_carlo_failure_rate(
            sampler, bits, grad_bits, args.n_samples,
            tau=args.tau, beta=None if args.tau else args.beta,
            group_size=args.group_size,
        )
        lines.append(
            f"{bits},{est.mean_tau!r},{est.failure_rate!r},{est.rate_ci[0]!r},"
            f"{est.rate_ci[1]!r},{est.bound!r},{est.bound_ci[0]!r},{est.bound_ci[1]!r}"
        )
        print(f"bits={bits}/{grad_bits}: rate={est.failure_rate:.3e} "
              f"(<= {est.rate_ci[1]:.3e}) bound={est.bound:.3e} "
              f"as_printed={est.bound_as_printed:.3e} holds={est.rate_ci[1] <= est.bound_ci[1]}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_compare(args):
    _, text = harness.compare(args.runs, args.baseline, args.out)
    sys.stdout.write(text)
    return 0


def cmd_finetune_split(args):
    overrides = _overrides(args.set)
    cfg = harness.make_config(scenario=args.scenario, config_file=args.config,
                              overrides=overrides, seed=args.seed)
    report = harness.finetune_split(cfg, args.out)
    for key in sorted(report):
        print(f"{key}: {report[key]}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="ecotrain",
                                     description="Energy-frugal CNN training engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training scenario")
    p_train.add_argument("--config", default=None, help="key = value config file")
    p_train.add_argument("--scenario", default="smb", choices=harness.SCENARIOS)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--seeds", default=None,
                         help="comma list for a sweep (out dir gets seedN subdirs)")
    p_train.add_argument("--jobs", type=int, default=1,
                         help="parallel processes for a sweep")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override any config key")
    p_train.set_defaults(func=cmd_train)

    p_ver = sub.add_parser("verify-psg", help="Monte-Carlo check of the sign "
                                              "prediction failure bound")
    p_ver.add_argument("--bits", default="2,4,6,8",
                       help="comma list of activation predictor bit widths")
    p_ver.add_argument("--grad-bits", type=int, default=None,
                       help="gradient predictor bits (default: bits + 6)")
    p_ver.add_argument("--beta", type=float, default=0.05)
    p_ver.add_argument("--tau", type=float, default=None,
                       help="fixed threshold instead of adaptive beta")
    p_ver.add_argument("--sampler", default="gaussian", choices=["gaussian", "snapshot"])
    p_ver.add_argument("--snapshot-dir", default=None)
    p_ver.add_argument("--sampler-batch", type=int, default=4)
    p_ver.add_argument("--sampler-dim", type=int, default=32)
    p_ver.add_argument("--n-samples", type=int, default=100_000)
    p_ver.add_argument("--group-size", type=int, default=256)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--out", default=None, help="CSV output path")
    p_ver.set_defaults(func=cmd_verify_psg)

    p_cmp = sub.add_parser("compare", help="savings table vs a baseline run")
    p_cmp.add_argument("runs", nargs="+", help="completed run directories")
    p_cmp.add_argument("--baseline", required=True)
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_ft = sub.add_parser("finetune-split", help="half/half pretrain + fine-tune report")
    p_ft.add_argument("--config", default=None)
    p_ft.add_argument("--scenario", default="smb", choices=harness.SCENARIOS)
    p_ft.add_argument("--seed", type=int, default=0)
    p_ft.add_argument("--out", required=True)
    p_ft.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_ft.set_defaults(func=cmd_finetune_split)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
