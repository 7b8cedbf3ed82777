"""Slice-partitioned sampling runtime.

S slices are split into contiguous blocks of size ceil(S/G); each worker
advances its block through one sampler step per timestep and the root
gathers all blocks before anything proceeds to the next timestep (one
barrier per timestep).  Workers are execution lanes inside this process;
because the noise is addressed by absolute slice index, the gathered result
is independent of G, which is what makes multi-process operation a matter
of re-running the same plan with the same seed.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .diffusion import DenoiserModel, NoiseSchedule, ddpm_sample_step
from .errors import DataError
from .rng import NoiseStream


@dataclass(frozen=True)
class PartitionPlan:
    """Disjoint ordered slice ranges covering [0, n_slices) exactly.

    At most one block is short; trailing workers may own empty ranges when
    G * ceil(S/G) overshoots S by a full block.
    """

    n_slices: int
    n_workers: int
    block_size: int
    ranges: tuple[tuple[int, int], ...]

    def worker_range(self, g: int) -> tuple[int, int]:
        return self.ranges[g]


def plan_partition(n_slices: int, n_workers: int) -> PartitionPlan:
    if n_slices < 1:
        raise DataError("need at least one slice")
    if n_workers < 1:
        raise DataError("need at least one worker")
    block = -(-n_slices // n_workers)  # ceil
    ranges = []
    for g in range(n_workers):
        start = min(g * block, n_slices)
        stop = min((g + 1) * block, n_slices)
        ranges.append((start, stop))
    return PartitionPlan(n_slices, n_workers, block, tuple(ranges))


def scatter(x: np.ndarray, plan: PartitionPlan) -> list[np.ndarray]:
    """Copy out per-worker blocks (workers own isolated memory)."""
    if x.shape[0] != plan.n_slices:
        raise DataError(f"volume has {x.shape[0]} slices, plan covers {plan.n_slices}")
    return [x[a:b].copy() for a, b in plan.ranges]


def gather(blocks: Sequence[np.ndarray], plan: PartitionPlan) -> np.ndarray:
    """Reassemble blocks by range placement; order of the list is irrelevant."""
    if len(blocks) != plan.n_workers:
        raise DataError(f"expected {plan.n_workers} blocks, got {len(blocks)}")
    out: np.ndarray | None = None
    for (a, b), block in zip(plan.ranges, blocks):
        if block.shape[0] != b - a:
            raise DataError(f"block for range [{a},{b}) has {block.shape[0]} slices")
        if b > a:
            if out is None:
                out = np.empty((plan.n_slices, *block.shape[1:]), dtype=block.dtype)
            out[a:b] = block
    if out is None:
        raise DataError("plan covers no slices")
    return out


@dataclass
class TimestepStats:
    timestep: int
    seconds: float
    worker_bytes: tuple[int, ...]


class SamplingInstrument:
    """Per-timestep wall time and per-worker peak working-set accounting."""

    def __init__(self) -> None:
        self.rows: list[TimestepStats] = []

    def add(self, timestep: int, seconds: float, worker_bytes: Sequence[int]) -> None:
        self.rows.append(TimestepStats(timestep, seconds, tuple(worker_bytes)))

    def peak_worker_bytes(self) -> int:
        peak = 0
        for row in self.rows:
            if row.worker_bytes:
                peak = max(peak, max(row.worker_bytes))
        return peak

    def total_seconds(self) -> float:
        return sum(row.seconds for row in self.rows)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["timestep", "seconds", "worker", "peak_bytes"])
            for row in self.rows:
                for g, nbytes in enumerate(row.worker_bytes):
                    writer.writerow([row.timestep, f"{row.seconds:.06f}", g, nbytes])


def _advance_block(
    x: np.ndarray,
    start: int,
    stop: int,
    t: int,
    schedule: NoiseSchedule,
    model: DenoiserModel,
    seed: int,
    lane: int,
    add_noise: bool,
) -> tuple[int, int, np.ndarray, int]:
    block = x[start:stop].copy()
    grid = block.shape[-1]
    noise = None
    if add_noise and t > 1:
        noise = np.stack(
            [NoiseStream(seed, s, t, lane).complex_field((grid, grid)) for s in range(start, stop)]
        )
    out = ddpm_sample_step(block, t, schedule, model, noise, slice_start=start)
    # working set: input block, score, output, plus the noise field when drawn
    held = 3 * block.nbytes + (noise.nbytes if noise is not None else 0)
    return start, stop, out, held


def run_partitioned_sampling(
    x: np.ndarray,
    schedule: NoiseSchedule,
    model: DenoiserModel,
    plan: PartitionPlan,
    seed: int,
    timesteps: Iterable[int],
    lane: int = 0,
    add_noise: bool = True,
    after_gather: Callable[[np.ndarray, int], np.ndarray] | None = None,
    instrument: SamplingInstrument | None = None,
) -> np.ndarray:
    """Advance all blocks one sampler step per timestep, gathering at the root.

    The result depends only on (x, schedule, model, seed, lane, timesteps),
    never on the worker count.
    """
    if x.shape[0] != plan.n_slices:
        raise DataError(f"volume has {x.shape[0]} slices, plan covers {plan.n_slices}")
    state = x.copy()
    active = [(g, a, b) for g, (a, b) in enumerate(plan.ranges) if b > a]
    pool = ThreadPoolExecutor(max_workers=len(active)) if len(active) > 1 else None
    try:
        for t in timesteps:
            tic = time.perf_counter()
            worker_bytes = [0] * plan.n_workers
            if pool is None:
                results = [
                    _advance_block(state, a, b, t, schedule, model, seed, lane, add_noise)
                    for _, a, b in active
                ]
            else:
                futures = [
                    pool.submit(
                        _advance_block, state, a, b, t, schedule, model, seed, lane, add_noise
                    )
                    for _, a, b in active
                ]
                results = [f.result() for f in futures]  # barrier
            for (g, _, _), (a, b, out, held) in zip(active, results):
                state[a:b] = out
                worker_bytes[g] = held
            if after_gather is not None:
                state = after_gather(state, t)
            if instrument is not None:
                instrument.add(t, time.perf_counter() - tic, worker_bytes)
    finally:
        if pool is not None:
            pool.shutdown()
    return state
