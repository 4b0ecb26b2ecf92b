"""The composite chain on (configuration, last pair): single steps and Monte Carlo runs.

Randomness: a run seed feeds ``numpy.random.SeedSequence``, which spawns two
independent streams, each driving a Philox4x64 counter-based generator. The
first stream draws the initial configuration (when random) and the initial
pair; the second yields two uniforms per step, one for the next pair and one
for the swap decision. Both kernel backends consume that stream identically,
so a seed fixes the trace bit for bit on any platform.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import kernels
from .lattice import Pair, TorusGrid
from .model import (ModelParams, Outcome, apply_swap, bichromatic_edges, config_from_string,
                    config_to_mask, config_to_string, identity_placement, pair_delta_units,
                    swap_probability_from_units)
from .scheduler import (MODE_TABLE, SchedulerFileError, SchedulerSpec, contagion_scheduler,
                        load_scheduler_file, sample_pair, uniform_scheduler)
from .scheduler import validate as validate_scheduler

CHUNK_STEPS = 1 << 18
VISIT_COUNT_MAX_N = 3


class InvalidRunConfig(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class ChainState:
    config: np.ndarray
    placement: np.ndarray
    last_pair: int
    time: int = 0

    def copy(self) -> "ChainState":
        return ChainState(self.config.copy(), self.placement.copy(), self.last_pair, self.time)


@dataclass(frozen=True)
class TraceRecord:
    step: int
    scheduled_pair: Pair
    outcome: Outcome
    potential: float
    bichromatic_edges: int

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "scheduled_pair": [list(self.scheduled_pair.a), list(self.scheduled_pair.b)],
            "outcome": self.outcome.name.lower(),
            "potential": self.potential,
            "bichromatic_edges": self.bichromatic_edges,
        }


@dataclass(frozen=True)
class RunConfig:
    n: int
    red_count: int
    steps: int = 0
    seed: int = 0
    r: float = 1.0
    beta: float = 1.0
    eps: tuple[float, ...] | None = None
    scheduler: str = "uniform"
    self_weight: float | None = None
    scheduler_file: str | None = None
    initial: str | None = None
    record_every: int = 1
    snapshot_every: int = 0

    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.n, int) or self.n < 3:
            out.append(f"n must be an integer >= 3, got {self.n!r}")
        m = self.n * self.n if isinstance(self.n, int) else 0
        if not isinstance(self.red_count, int) or not 0 <= self.red_count <= m:
            out.append(f"red_count must lie in [0, n^2] = [0, {m}], got {self.red_count!r}")
        if not isinstance(self.steps, int) or self.steps < 0:
            out.append(f"steps must be a non-negative integer, got {self.steps!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            out.append(f"seed must be a non-negative integer, got {self.seed!r}")
        if not self.r > 0:
            out.append(f"r must be positive, got {self.r!r}")
        if not self.beta > 0:
            out.append(f"beta must be positive, got {self.beta!r}")
        if self.eps is not None and len(self.eps) != m:
            out.append(f"eps must have n^2 = {m} entries, got {len(self.eps)}")
        if self.scheduler not in ("uniform", "contagion", "custom"):
            out.append(f"scheduler must be uniform, contagion or custom, got {self.scheduler!r}")
        if self.self_weight is not None:
            if self.scheduler != "contagion":
                out.append("self_weight only applies to the contagion scheduler")
            elif not 0 < self.self_weight < 1:
                out.append(f"self_weight must lie in (0, 1), got {self.self_weight!r}")
        if (self.scheduler == "custom") != (self.scheduler_file is not None):
            out.append("scheduler_file is required for, and only allowed with, the custom scheduler")
        if self.initial is not None:
            try:
                cfg = config_from_string(self.initial)
            except ValueError as exc:
                out.append(f"initial: {exc}")
            else:
                if len(cfg) != m:
                    out.append(f"initial has {len(cfg)} cells, expected {m}")
                elif int((cfg > 0).sum()) != self.red_count:
                    out.append(f"initial has {int((cfg > 0).sum())} red cells, red_count is {self.red_count}")
        if not isinstance(self.record_every, int) or self.record_every < 1:
            out.append(f"record_every must be a positive integer, got {self.record_every!r}")
        if not isinstance(self.snapshot_every, int) or self.snapshot_every < 0:
            out.append(f"snapshot_every must be a non-negative integer, got {self.snapshot_every!r}")
        return out

    def validate(self) -> "RunConfig":
        problems = self.problems()
        if problems:
            raise InvalidRunConfig(problems)
        return self

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n)

    @property
    def params(self) -> ModelParams:
        return ModelParams(r=self.r, beta=self.beta, eps=self.eps)

    def make_scheduler(self, base_dir: Path | None = None) -> SchedulerSpec:
        grid = self.grid
        if self.scheduler == "uniform":
            return uniform_scheduler(grid)
        if self.scheduler == "contagion":
            return contagion_scheduler(grid, self.self_weight)
        path = Path(self.scheduler_file)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        spec = load_scheduler_file(path, n=self.n)
        violations = validate_scheduler(spec)
        if violations:
            found = "; ".join(v.describe(spec.grid) for v in violations)
            raise SchedulerFileError(f"{path}: invalid scheduler: {found}")
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["eps"] is not None:
            d["eps"] = list(d["eps"])
        return d


# -- single steps -------------------------------------------------------------


def make_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """``(init, dynamics)`` generators for a run seed."""
    init_ss, dyn_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(init_ss)), np.random.Generator(np.random.Philox(dyn_ss))


def potential_from_bichromatic(grid: TorusGrid, params: ModelParams, bichrom: int) -> float:
    # total balance = 2 * (monochromatic - bichromatic) summed over 2n^2 edges
    eps_total = 0.0 if params.eps is None else math.fsum(params.eps)
    return params.r * (4 * grid.num_vertices - 4 * int(bichrom)) + eps_total


def initial_state(cfg: RunConfig, rng: np.random.Generator) -> ChainState:
    grid = cfg.grid
    m = grid.num_vertices
    if cfg.initial is not None:
        config = config_from_string(cfg.initial)
    else:
        config = np.full(m, -1, dtype=np.int8)
        config[rng.permutation(m)[:cfg.red_count]] = 1
    last = int(rng.integers(grid.num_pairs))
    return ChainState(config, identity_placement(m), last)


def step(state: ChainState, spec: SchedulerSpec, params: ModelParams,
         rng: np.random.Generator) -> tuple[ChainState, TraceRecord]:
    """One scheduler draw followed by one log-linear swap decision."""
    grid = spec.grid
    u1, u2 = rng.random(2)
    e = sample_pair(spec, state.last_pair, float(u1))
    pair = grid.pair_at(e)
    units = pair_delta_units(grid, state.config, pair)
    swapped = bool(u2 < swap_probability_from_units(units, params))
    if swapped:
        config, placement = apply_swap(state.config, state.placement, grid, pair)
    else:
        config, placement = state.config.copy(), state.placement.copy()
    new = ChainState(config, placement, e, state.time + 1)
    bichrom = bichromatic_edges(grid, config)
    record = TraceRecord(new.time, pair, Outcome.SWAP if swapped else Outcome.STAY,
                         potential_from_bichromatic(grid, params, bichrom), bichrom)
    return new, record


def incremental_potential_delta(state: ChainState, pair, grid: TorusGrid, params: ModelParams) -> float:
    """Potential change of swapping ``pair``, from the two endpoints' neighborhoods only.

    The potential counts each edge from both ends, so it moves by twice the
    scheduled agents' utility gain.
    """
    return 2.0 * params.r * pair_delta_units(grid, state.config, pair)


# -- Monte Carlo runs ---------------------------------------------------------


@dataclass
class Trace:
    step: np.ndarray
    pair: np.ndarray
    swap: np.ndarray
    bichromatic: np.ndarray

    def __len__(self) -> int:
        return len(self.step)


@dataclass
class RunResult:
    config: RunConfig
    grid: TorusGrid
    params: ModelParams
    initial: ChainState
    final: ChainState
    trace: Trace
    mean_bichromatic: float
    state_counts: np.ndarray | None = field(default=None, repr=False)
    backend: str = ""

    @property
    def mean_potential(self) -> float:
        eps_total = 0.0 if self.params.eps is None else math.fsum(self.params.eps)
        return self.params.r * (4 * self.grid.num_vertices - 4 * self.mean_bichromatic) + eps_total

    def records(self) -> Iterator[TraceRecord]:
        grid, params = self.grid, self.params
        for s, e, sw, b in zip(self.trace.step.tolist(), self.trace.pair.tolist(),
                               self.trace.swap.tolist(), self.trace.bichromatic.tolist()):
            yield TraceRecord(s, grid.pair_at(e), Outcome.SWAP if sw else Outcome.STAY,
                              potential_from_bichromatic(grid, params, b), b)

    def config_visits(self) -> dict[int, int]:
        """Visits per red bitmask over the states X_0..X_T (small tori only)."""
        if self.state_counts is None:
            return {}
        per_mask = self.state_counts.reshape(-1, self.grid.num_pairs).sum(axis=1)
        return {int(k): int(per_mask[k]) for k in np.flatnonzero(per_mask)}

    def summary(self) -> dict:
        out = {
            "n": self.grid.n,
            "red_count": self.config.red_count,
            "steps": self.config.steps,
            "seed": self.config.seed,
            "backend": self.backend,
            "initial_config": config_to_string(self.initial.config),
            "final_config": config_to_string(self.final.config),
            "final_pair": [list(v) for v in self.grid.pair_at(self.final.last_pair)],
            "final_bichromatic_edges": bichromatic_edges(self.grid, self.final.config),
            "time_average_potential": self.mean_potential,
            "time_average_bichromatic_edges": self.mean_bichromatic,
        }
        if self.state_counts is not None:
            m = self.grid.num_vertices
            from .model import config_from_mask
            out["config_visits"] = {config_to_string(config_from_mask(k, m)): v
                                    for k, v in sorted(self.config_visits().items())}
        return out


def run(cfg: RunConfig, backend: str | None = None, spec: SchedulerSpec | None = None,
        on_snapshot: Callable[[int, np.ndarray], None] | None = None,
        chunk_steps: int = CHUNK_STEPS) -> RunResult:
    """Simulate ``cfg.steps`` steps.

    Averages run over the states X_0..X_T (so ``steps=0`` reports the initial
    state). The bichromatic edge count is updated from the swap gain in O(1)
    per step. ``on_snapshot(step, colors)`` fires at step 0 and every
    ``cfg.snapshot_every`` steps.
    """
    cfg.validate()
    impl = kernels.get(backend)
    grid = cfg.grid
    params = cfg.params
    if spec is None:
        spec = cfg.make_scheduler()
    if spec.grid != grid:
        raise InvalidRunConfig([f"scheduler is for n={spec.grid.n}, run config has n={cfg.n}"])
    init_rng, dyn_rng = make_streams(cfg.seed)
    state = initial_state(cfg, init_rng)
    initial = state.copy()

    m = grid.num_vertices
    colors = state.config.copy()
    agents = state.placement.copy()
    pa, pb = grid.pair_endpoints
    adjacent = grid.pair_is_edge.astype(np.uint8)
    if spec.mode == MODE_TABLE:
        indptr, indices, cum = spec.cumulative()
    else:
        indptr, indices, cum = np.zeros(1, np.int64), np.zeros(0, np.int32), np.zeros(0)
    self_weight = spec.effective_self_weight() if spec.kind == "contagion" else 0.0
    gains = np.arange(-kernels.KOFF, kernels.KOFF + 1)
    accept = np.array([swap_probability_from_units(int(k), params) for k in gains])

    track = grid.n <= VISIT_COUNT_MAX_N
    counts = np.zeros((1 << m) * grid.num_pairs if track else 0, dtype=np.int64)
    mask = config_to_mask(colors) if track else 0
    if track:
        counts[mask * grid.num_pairs + state.last_pair] += 1
    bichrom = bichromatic_edges(grid, colors)
    bsum = bichrom

    n_rec = cfg.steps // cfg.record_every
    rec_step = np.zeros(n_rec, np.int64)
    rec_pair = np.zeros(n_rec, np.int64)
    rec_swap = np.zeros(n_rec, np.int8)
    rec_bichrom = np.zeros(n_rec, np.int64)
    filled = 0
    last = state.last_pair
    done = 0
    if on_snapshot is not None and cfg.snapshot_every:
        on_snapshot(0, colors.copy())
    while done < cfg.steps:
        todo = min(chunk_steps, cfg.steps - done)
        if on_snapshot is not None and cfg.snapshot_every:
            todo = min(todo, cfg.snapshot_every - done % cfg.snapshot_every)
        uniforms = dyn_rng.random(2 * todo)
        last, bichrom, part, nrec, mask = impl.run_chain(
            colors, agents, grid.neighbor_table, pa, pb, adjacent,
            spec.mode, self_weight, indptr, indices, cum,
            accept, uniforms, done, last, bichrom,
            cfg.record_every, rec_step[filled:], rec_pair[filled:], rec_swap[filled:], rec_bichrom[filled:],
            counts, mask)
        bsum += part
        filled += nrec
        done += todo
        if on_snapshot is not None and cfg.snapshot_every and done % cfg.snapshot_every == 0:
            on_snapshot(done, colors.copy())

    final = ChainState(colors, agents, int(last), cfg.steps)
    return RunResult(cfg, grid, params, initial, final,
                     Trace(rec_step, rec_pair, rec_swap, rec_bichrom),
                     bsum / (cfg.steps + 1), counts if track else None,
                     backend=backend or kernels.BACKEND)


def replay(initial: ChainState, records, grid: TorusGrid, params: ModelParams) -> list[tuple[float, int]]:
    """Re-apply recorded (pair, outcome) steps; returns (potential, bichromatic) after each."""
    config = initial.config.copy()
    out = []
    for rec in records:
        if rec.outcome == Outcome.SWAP:
            config, _ = apply_swap(config, None, grid, rec.scheduled_pair)
        b = bichromatic_edges(grid, config)
        out.append((potential_from_bichromatic(grid, params, b), b))
    return out


# -- output -------------------------------------------------------------------


def write_trace(result: RunResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in result.records():
            fh.write(json.dumps(rec.to_dict()) + "\n")


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def write_ppm(path, grid: TorusGrid, config, scale: int = 1) -> None:
    """Binary PPM (P6): red cells (255, 0, 0), blue cells (0, 0, 255)."""
    img = np.zeros((grid.n, grid.n, 3), dtype=np.uint8)
    colors = np.asarray(config).reshape(grid.n, grid.n)
    img[colors > 0] = (255, 0, 0)
    img[colors < 0] = (0, 0, 255)
    if scale > 1:
        img = img.repeat(scale, axis=0).repeat(scale, axis=1)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
