"""BER against SNR for ZF, ML and the budgeted hybrid at several budgets.

Defaults reproduce the 4x4 16-QAM, K = 64, n in {1, 2, 5, 10} setup. The
table also shows which share of problems reached the sphere decoder.

    python scripts/budget_curves.py --snr 14:2:24 --trials 200 -o curves.csv
"""
import argparse
import logging
import math

from latticedet.cli import parse_grid, report_to_csv
from latticedet.sim import SimConfig, run_ber_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--snr", default="14:2:24")
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--budgets", default="1,2,5,10")
    ap.add_argument("--node-cost", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("-o", "--output")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = SimConfig(snr_grid_db=parse_grid(args.snr), n_budget=parse_grid(args.budgets),
                    trials=args.trials, seed=args.seed, node_cost_units=args.node_cost)
    report = run_ber_sweep(cfg, workers=args.workers)

    cols = [("zf", 1.0), ("ml", math.inf)] + [("budgeted", n) for n in cfg.n_budget]
    print("snr_db  " + "  ".join(f"{t if t != 'budgeted' else f'n={n:g}':>10}" for t, n in cols)
          + "   attempted@n   completed@n")
    for snr in cfg.snr_grid_db:
        bers = [report.find(t, snr, n).ber for t, n in cols]
        att = "/".join(f"{report.find('budgeted', snr, n).sd_attempted_frac:.2f}" for n in cfg.n_budget)
        comp = "/".join(f"{report.find('budgeted', snr, n).sd_completed_frac:.2f}" for n in cfg.n_budget)
        print(f"{snr:6g}  " + "  ".join(f"{b:10.3e}" for b in bers) + f"   {att}   {comp}")
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(report_to_csv(report))


if __name__ == "__main__":
    main()
