"""Compare the compiled and pure-Python kernels on the two hot loops.

    python3 benchmarks/bench_kernels.py [--steps 200000] [--repeat 3]

Chain throughput is measured with ``dynamics.run`` (uniform and contagion
schedulers on a 3x3 and a 10x10 torus); tree solves with ``min_arborescence``
on the 3x3 resistance graph.
"""
from __future__ import annotations

import argparse
import time

from schelling_stability import kernels
from schelling_stability.dynamics import RunConfig, run
from schelling_stability.exact import enumerate_states
from schelling_stability.lattice import TorusGrid
from schelling_stability.model import ModelParams
from schelling_stability.scheduler import contagion_scheduler
from schelling_stability.stability import build_resistance_graph, min_arborescence


def best_of(repeat, fn):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    backends = kernels.available()
    print(f"backends: {', '.join(backends)}")
    rows = []
    for n, red, sched in ((3, 4, "uniform"), (10, 50, "contagion")):
        cfg = RunConfig(n=n, red_count=red, steps=args.steps, seed=1, beta=2.0, scheduler=sched,
                        record_every=args.steps)
        timing = {b: best_of(args.repeat, lambda b=b: run(cfg, backend=b)) for b in backends}
        rows.append((f"run_chain {n}x{n} {sched}", {b: args.steps / t for b, t in timing.items()}, "steps/s"))

    grid = TorusGrid(3)
    spec = contagion_scheduler(grid)
    for red in (3, 4):
        space = enumerate_states(grid, red, spec)
        graph = build_resistance_graph(space, spec, ModelParams())
        timing = {b: best_of(args.repeat, lambda b=b: min_arborescence(graph, 0, backend=b)) for b in backends}
        label = f"dmst 3x3 red={red} ({graph.num_nodes} nodes, {graph.num_edges} edges)"
        rows.append((label, {b: 1.0 / t for b, t in timing.items()}, "solves/s"))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  " + "  ".join(f"{b:>14}" for b in backends) + "  speedup")
    for label, rate, unit in rows:
        cells = "  ".join(f"{rate[b]:>14.4g}" for b in backends)
        speed = f"{rate['cython'] / rate['python']:8.1f}x" if len(backends) == 2 else ""
        print(f"{label:<{width}}  {cells}  {speed}  {unit}")


if __name__ == "__main__":
    main()
