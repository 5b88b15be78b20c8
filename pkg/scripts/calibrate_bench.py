"""Sweep geometric-bench noise/similarity parameters and report the margins of
the four distribution-sensitivity trends, so thresholds can be frozen into the
acceptance suite from measured values rather than guesses.

Usage: python3 scripts/calibrate_bench.py [--full]
"""

from __future__ import annotations

import argparse
import itertools
import sys
import time

from reviewfusion.distgen import (DistributionKind, GeometricBenchConfig,
                                  generate_geometric_bench)
from reviewfusion.experiment import ExperimentConfig, RunClients, run_experiment
from reviewfusion.llmclient import MockLlmClient

CLIENTS = RunClients(llm=MockLlmClient())


def cell_map(corpus, store, methods, kr_grid, dataset="cal"):
    config = ExperimentConfig(dataset=dataset, methods=methods, kr_grid=kr_grid, k_i=10)
    report = run_experiment(config, corpus, store, CLIENTS)
    out = {}
    for row in report.rows:
        if row.metric == "MAP@10":
            label = f"{row.method}:{row.aggregator}" if row.aggregator else row.method
            out[(label, row.k_r)] = row.mean
    return out


def measure(n_items, review_noise, query_noise, ds, seeds):
    base = dict(n_items=n_items, aspects_per_item=3, dim=64, reviews_per_aspect=10,
                review_noise=review_noise, query_noise=query_noise,
                distractor_similarity=ds)
    rows = []
    for seed in seeds:
        cfg = GeometricBenchConfig(seed=seed, **base)
        pop_c, pop_s = generate_geometric_bench(cfg, DistributionKind.ONE_POPULAR_ASPECT)
        pop = cell_map(pop_c, pop_s, ["mono", "af:amean"], [1])
        over_c, over_s = generate_geometric_bench(cfg, DistributionKind.FULLY_OVERLAPPING)
        over = cell_map(over_c, over_s, ["mono", "af:amean"], [1])
        dis_c, dis_s = generate_geometric_bench(cfg)
        dis = cell_map(dis_c, dis_s, ["af:amean", "af:min", "mono"], [1, 2, 10, 30])
        rows.append({
            "pop_gap": pop[("AF:amean", 1)] - pop[("MonoLF", 1)],
            "pop_af": pop[("AF:amean", 1)],
            "pop_mono": pop[("MonoLF", 1)],
            "over_diff": abs(over[("AF:amean", 1)] - over[("MonoLF", 1)]),
            "kr_drop": dis[("AF:amean", 10)] - dis[("AF:amean", 30)],
            "af10": dis[("AF:amean", 10)],
            "af30": dis[("AF:amean", 30)],
            "min2": dis[("AF:min", 2)],
            "dis_af1": dis[("AF:amean", 1)],
            "dis_mono1": dis[("MonoLF", 1)],
        })
    agg = {}
    for key in rows[0]:
        vals = [r[key] for r in rows]
        agg[key] = (min(vals), sum(vals) / len(vals), max(vals))
    return agg


def verdict(agg):
    ok_pop = agg["pop_gap"][0] > 0
    ok_over = agg["over_diff"][1] <= 0.05
    ok_drop = agg["kr_drop"][0] >= 0.15
    ok_min = agg["min2"][2] < 0.1
    return ok_pop, ok_over, ok_drop, ok_min


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--full", action="store_true",
                        help="200 items and 5 seeds (slow); default is a coarse pass")
    parser.add_argument("--rn", type=float, nargs="*", default=[0.1, 0.2, 0.3])
    parser.add_argument("--qn", type=float, nargs="*", default=[0.2, 0.35, 0.5])
    parser.add_argument("--ds", type=float, nargs="*", default=[0.4, 0.55, 0.7])
    args = parser.parse_args()

    n_items = 200 if args.full else 120
    seeds = [1, 2, 3, 4, 5] if args.full else [1, 2]
    print(f"n_items={n_items} seeds={seeds}", flush=True)
    header = ("rn    qn    ds   | pop_gap(min)  AF/Mono     | over(mean) | "
              "drop(min) AF10/30   | min2(max) | ok")
    print(header)
    print("-" * len(header))
    for rn, qn, ds in itertools.product(args.rn, args.qn, args.ds):
        t0 = time.time()
        agg = measure(n_items, rn, qn, ds, seeds)
        flags = verdict(agg)
        print(f"{rn:4.2f}  {qn:4.2f}  {ds:4.2f} | "
              f"{agg['pop_gap'][0]:+.3f}       {agg['pop_af'][1]:.2f}/{agg['pop_mono'][1]:.2f}  | "
              f"{agg['over_diff'][1]:.3f}      | "
              f"{agg['kr_drop'][0]:+.3f}    {agg['af10'][1]:.2f}/{agg['af30'][1]:.2f} | "
              f"{agg['min2'][2]:.3f}     | "
              f"{''.join('Y' if f else '.' for f in flags)}"
              f"  ({time.time() - t0:.0f}s)", flush=True)


if __name__ == "__main__":
    sys.exit(main())
