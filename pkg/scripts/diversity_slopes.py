"""Fit high-SNR BER slopes of ZF and ML on 2x2 QPSK.

ZF should lose about one decade of BER per 10 dB and ML about two. The
window for each detector is the widest pair of grid points whose BER lies
in [1e-4, 1e-2].
"""
import argparse

from latticedet.cli import parse_grid
from latticedet.errors import InsufficientData
from latticedet.sim import SimConfig, estimate_diversity_slope, run_ber_sweep, slope_window


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--snr", default="10:2:40")
    ap.add_argument("--problems", type=int, default=1_000_000, help="problems per SNR point")
    ap.add_argument("--n-rx", type=int, default=2)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    k = 64
    cfg = SimConfig(n_rx=args.n_rx, n_tx=2, qam_order=4, snr_grid_db=parse_grid(args.snr),
                    k_batch=k, trials=-(-args.problems // k), seed=args.seed, detectors=("zf", "ml"))
    report = run_ber_sweep(cfg, workers=args.workers)
    for snr in cfg.snr_grid_db:
        zf, ml = report.find("zf", snr), report.find("ml", snr)
        print(f"{snr:5g} dB  zf {zf.ber:.3e} ({zf.bit_errors:>7} err)  ml {ml.ber:.3e} ({ml.bit_errors:>7} err)")
    for tag, expected in (("zf", args.n_rx - 1), ("ml", args.n_rx)):
        try:
            lo, hi = slope_window(report, tag)
            slope = estimate_diversity_slope(report, tag, lo, hi)
        except InsufficientData as exc:
            print(exc)
            continue
        print(f"{tag}: slope {slope:.3f} over {lo:g}..{hi:g} dB (diversity order {expected})")


if __name__ == "__main__":
    main()
