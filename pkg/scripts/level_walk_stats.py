"""Dyadic level walk statistics: up-move fraction and dwell-time scaling.

Samples fresh chains started on a ladder of dyadic levels, prints the
pooled up-move fraction against the limiting value 2/3 (for gamma = 1) and
the median dwell time normalized by 4^eta, which should be flat in eta.
"""

from __future__ import annotations

import argparse

import numpy as np

from stochacc import XiChainSpec, aux_params_for, dwell_stats, jump_prob_estimate, p_plus, sample_aux_traces


def main():
    ap = argparse.ArgumentParser(description="Level process statistics")
    ap.add_argument("--traces", type=int, default=30)
    ap.add_argument("--levels", type=int, nargs="+", default=[8, 9, 10, 11])
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--transitions", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = XiChainSpec(gamma=args.gamma, xi_plus=max(1.0, abs(args.gamma)))
    params = aux_params_for(spec)
    print(f"gamma {args.gamma:g}: window half-width L = {params.L:g}, "
          f"absorbing level {params.eta_plus}, limit p+ = {p_plus(args.gamma):.4f}")

    all_traces = []
    print(f"{'eta0':>6} {'median dwell / 4^eta':>22} {'paths':>7}")
    for k, eta0 in enumerate(args.levels):
        cap = 40 * 4**eta0 + 1000
        traces = sample_aux_traces(spec, params, eta0, args.traces, cap,
                                   args.seed + k, max_transitions=args.transitions)
        first = [float(t.stop_times[1] - t.stop_times[0]) / 4.0**eta0
                 for t in traces if t.levels.size >= 2]
        print(f"{eta0:6d} {np.median(first):22.4f} {len(first):7d}")
        all_traces.extend(traces)

    p_hat, (lo, hi), (ups, downs) = jump_prob_estimate(all_traces, params.eta_plus)
    print(f"\npooled up-move fraction {p_hat:.4f}  (99% CI [{lo:.4f}, {hi:.4f}], "
          f"{ups + downs} moves)")
    summary = dwell_stats(all_traces)
    print(f"normalized dwell quartiles {summary.quantiles[0.25]:.3f} / "
          f"{summary.quantiles[0.5]:.3f} / {summary.quantiles[0.75]:.3f}; "
          f"survival tail slope {summary.tail_slope:.2f}")


if __name__ == "__main__":
    main()
