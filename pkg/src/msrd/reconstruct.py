"""DART and DRIFT reconstruction drivers plus the physics-only baseline.

DART interleaves one partitioned sampler step and one physics step per
timestep (the physics step runs at the root on the gathered full volume,
since the STEM model couples all slices).  DRIFT samples L candidate
volumes through the full chain on independent noise lanes, picks the one
whose measurement-derived reference SSIM is highest, then refines the
winner with physics steps only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Union

import numpy as np

from .diffusion import DenoiserModel, make_linear_schedule
from .errors import DataError
from .metrics import DEFAULT_SSIM, adapted_ssim_params, ssim
from .mri import MriStepConfig, mri_dc_step, mri_loss, zero_filled_recon
from .partition import plan_partition, run_partitioned_sampling
from .rng import NoiseStream
from .stem import (
    StemGeometry,
    StemStepConfig,
    bright_field,
    bright_field_aperture,
    stem_forward,
    stem_gd_step,
    stem_loss,
)
from .types import ComplexVolume, DiffractionSet, KSpaceStack, SamplingMask


@dataclass(frozen=True)
class MriMeasurement:
    kspace: KSpaceStack
    mask: SamplingMask

    def __post_init__(self) -> None:
        if self.mask.data.shape != self.kspace.data.shape[1:]:
            raise DataError("mask grid does not match k-space grid")


@dataclass(frozen=True)
class StemMeasurement:
    intensities: DiffractionSet
    geometry: StemGeometry

    def __post_init__(self) -> None:
        if self.intensities.scan_shape != self.geometry.scan_shape:
            raise DataError("scan grid does not match geometry")
        if self.intensities.detector_size != self.geometry.probe.grid_size:
            raise DataError("detector grid does not match probe grid")


Measurement = Union[MriMeasurement, StemMeasurement]

MODES = ("dart", "drift", "physics")


@dataclass(frozen=True)
class ReconConfig:
    """Shared knobs for all reconstruction modes."""

    mode: str = "dart"
    steps: int = 1000  # diffusion steps T (physics mode: iteration count)
    candidates: int = 16  # DRIFT bank size L
    refine_steps: int = 100  # DRIFT physics refinement iterations
    seed: int = 0
    workers: int = 1
    beta_min: float = 1e-4
    beta_max: float = 0.02
    add_noise: bool = True
    mri: MriStepConfig = dataclass_field(default_factory=MriStepConfig)
    stem: StemStepConfig = dataclass_field(default_factory=StemStepConfig)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise DataError(f"mode must be one of {MODES}")
        if self.steps < 1:
            raise DataError("steps must be >= 1")
        if self.candidates < 1:
            raise DataError("need at least one candidate")
        if self.refine_steps < 0:
            raise DataError("refine steps must be >= 0")
        if self.workers < 1:
            raise DataError("need at least one worker")


@dataclass(frozen=True)
class CandidateBank:
    """L independently sampled volumes, one noise lane each."""

    volumes: tuple[ComplexVolume, ...]

    def __post_init__(self) -> None:
        if len(self.volumes) < 1:
            raise DataError("bank needs at least one candidate")
        shape = self.volumes[0].data.shape
        if any(v.data.shape != shape for v in self.volumes):
            raise DataError("candidates must share one shape")

    def __len__(self) -> int:
        return len(self.volumes)


class ProgressLog:
    """(stage, step, loss, score) rows; exported as CSV for plotting."""

    def __init__(self) -> None:
        self.rows: list[tuple[str, int, float, float]] = []

    def add(self, stage: str, step: int, loss: float, score: float = float("nan")) -> None:
        self.rows.append((stage, step, loss, score))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["stage", "step", "loss", "score"])
            for stage, step, loss, score in self.rows:
                writer.writerow([stage, step, f"{loss:.10e}", f"{score:.8f}"])


def problem_shape(meas: Measurement) -> tuple[int, int]:
    if isinstance(meas, MriMeasurement):
        return meas.kspace.n_slices, meas.kspace.grid_size
    return meas.geometry.n_slices, meas.geometry.probe.grid_size


def data_loss(meas: Measurement, volume: ComplexVolume) -> float:
    if isinstance(meas, MriMeasurement):
        return mri_loss(volume, meas.kspace, meas.mask)
    return stem_loss(volume, meas.intensities, meas.geometry)


def physics_step(meas: Measurement, volume: ComplexVolume, cfg: ReconConfig) -> ComplexVolume:
    if isinstance(meas, MriMeasurement):
        return mri_dc_step(volume, meas.kspace, meas.mask, cfg.mri)
    return stem_gd_step(volume, meas.intensities, meas.geometry, cfg.stem)


def reference_score(meas: Measurement, volume: ComplexVolume) -> float:
    """SSIM of a candidate against the measurement-derived reference.

    MRI: per-slice SSIM between the zero-filled magnitudes and the
    candidate magnitudes, averaged over slices.  STEM: SSIM between the
    measured and the candidate-simulated bright-field image, collected
    over a half-aperture disk (the full-detector sum carries no contrast
    for phase-only objects).  The window shrinks to fit small images.
    """
    if isinstance(meas, MriMeasurement):
        reference = zero_filled_recon(meas.kspace)
        params = adapted_ssim_params(
            (reference.grid_size, reference.grid_size), DEFAULT_SSIM
        )
        values = [
            ssim(np.abs(reference.data[s]), np.abs(volume.data[s]), params)
            for s in range(reference.n_slices)
        ]
        return float(np.mean(values))
    aperture = bright_field_aperture(meas.geometry)
    measured = bright_field(meas.intensities, aperture)
    simulated = bright_field(stem_forward(volume, meas.geometry), aperture)
    params = adapted_ssim_params(measured.shape, DEFAULT_SSIM)
    return ssim(measured, simulated, params)


def _loggable_score(meas: Measurement, volume: ComplexVolume) -> float:
    """reference_score for progress rows; NaN when SSIM is undefined
    (reference too small for any window, or constant)."""
    try:
        return reference_score(meas, volume)
    except DataError:
        return float("nan")


def initial_volume(n_slices: int, grid: int, seed: int, t_init: int, lane: int = 0) -> ComplexVolume:
    """Standard complex normal start of the reverse chain (unit-variance re/im)."""
    data = np.stack(
        [NoiseStream(seed, s, t_init, lane).complex_field((grid, grid)) for s in range(n_slices)]
    )
    return ComplexVolume(data)


def dart_reconstruct(
    meas: Measurement,
    model: DenoiserModel,
    cfg: ReconConfig,
    x_init: ComplexVolume | None = None,
    log: ProgressLog | None = None,
) -> ComplexVolume:
    """Alternate one sampler step and one physics step for t = T..1."""
    n_slices, grid = problem_shape(meas)
    schedule = make_linear_schedule(cfg.steps, cfg.beta_min, cfg.beta_max)
    if x_init is None:
        x_init = initial_volume(n_slices, grid, cfg.seed, cfg.steps + 1, lane=0)
    elif x_init.data.shape != (n_slices, grid, grid):
        raise DataError("initial volume does not match the measurement layout")
    plan = plan_partition(n_slices, cfg.workers)

    def hook(state: np.ndarray, t: int) -> np.ndarray:
        updated = physics_step(meas, ComplexVolume(state), cfg)
        if log is not None:
            log.add("dart", t, data_loss(meas, updated), _loggable_score(meas, updated))
        return updated.data

    out = run_partitioned_sampling(
        x_init.data,
        schedule,
        model,
        plan,
        cfg.seed,
        range(cfg.steps, 0, -1),
        lane=0,
        add_noise=cfg.add_noise,
        after_gather=hook,
    )
    return ComplexVolume(out)


def sample_candidates(
    meas: Measurement, model: DenoiserModel, cfg: ReconConfig
) -> CandidateBank:
    """Run the full T-step chain once per candidate lane; no physics involved."""
    n_slices, grid = problem_shape(meas)
    schedule = make_linear_schedule(cfg.steps, cfg.beta_min, cfg.beta_max)
    plan = plan_partition(n_slices, cfg.workers)
    volumes = []
    for lane in range(cfg.candidates):
        start = initial_volume(n_slices, grid, cfg.seed, cfg.steps + 1, lane=lane)
        out = run_partitioned_sampling(
            start.data,
            schedule,
            model,
            plan,
            cfg.seed,
            range(cfg.steps, 0, -1),
            lane=lane,
            add_noise=cfg.add_noise,
        )
        volumes.append(ComplexVolume(out))
    return CandidateBank(tuple(volumes))


def score_candidates(bank: CandidateBank, meas: Measurement) -> np.ndarray:
    return np.array([reference_score(meas, v) for v in bank.volumes])


def select_candidate(bank: CandidateBank, meas: Measurement) -> tuple[int, ComplexVolume]:
    """Lowest index attaining the maximal reference SSIM (deterministic tie-break)."""
    scores = score_candidates(bank, meas)
    idx = int(np.argmax(scores))  # argmax returns the first maximum
    return idx, bank.volumes[idx]


def refine(
    meas: Measurement,
    volume: ComplexVolume,
    iterations: int,
    cfg: ReconConfig,
    log: ProgressLog | None = None,
    stage: str = "refine",
) -> ComplexVolume:
    """Repeated physics steps starting from the given volume."""
    if iterations < 0:
        raise DataError("iterations must be >= 0")
    current = volume
    for k in range(iterations):
        current = physics_step(meas, current, cfg)
        if log is not None:
            log.add(stage, k + 1, data_loss(meas, current), _loggable_score(meas, current))
    return current


def drift_reconstruct(
    meas: Measurement,
    model: DenoiserModel,
    cfg: ReconConfig,
    log: ProgressLog | None = None,
) -> ComplexVolume:
    """Sample a candidate bank, select by reference SSIM, refine the winner."""
    bank = sample_candidates(meas, model, cfg)
    scores = score_candidates(bank, meas)
    idx = int(np.argmax(scores))
    if log is not None:
        for lane, s in enumerate(scores):
            log.add("drift-select", lane, data_loss(meas, bank.volumes[lane]), float(s))
    return refine(meas, bank.volumes[idx], cfg.refine_steps, cfg, log, stage="drift-refine")


def physics_only(
    meas: Measurement,
    cfg: ReconConfig,
    iterations: int,
    log: ProgressLog | None = None,
) -> ComplexVolume:
    """Pure physics baseline: zero-filled (MRI) or vacuum (STEM) start."""
    if isinstance(meas, MriMeasurement):
        start = zero_filled_recon(meas.kspace)
    else:
        n = meas.geometry.probe.grid_size
        start = ComplexVolume(np.ones((meas.geometry.n_slices, n, n), dtype=np.complex128))
    return refine(meas, start, iterations, cfg, log, stage="physics")
