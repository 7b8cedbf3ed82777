"""Pydantic request/response schemas for the reconstruction service.

Arrays travel as base64-encoded container files (see msrd.container), so
the HTTP surface and the on-disk format share one codec.
"""

from __future__ import annotations

import base64

import numpy as np
from pydantic import BaseModel, Field

from ..container import array_from_bytes, container_bytes


def encode_array(array: np.ndarray, labels: tuple[str, ...] | list[str] = ()) -> str:
    return base64.b64encode(container_bytes(array, labels)).decode("ascii")


def decode_array(payload: str) -> np.ndarray:
    return array_from_bytes(base64.b64decode(payload.encode("ascii")))


class HealthResponse(BaseModel):
    status: str
    version: str


class ArrayResponse(BaseModel):
    container: str  # base64 container bytes


class MriPhantomRequest(BaseModel):
    slices: int = 8
    size: int = 64
    seed: int = 0


class CrystalSiteModel(BaseModel):
    fx: float
    fy: float
    fz: float
    amplitude: float = 0.5
    width: float = 0.5


class CrystalPhantomRequest(BaseModel):
    slices: int = 2
    size: int = 32
    pixel_size: float = 0.35
    lattice_constant: float = 5.6533
    amplitude: float = 0.5
    width: float = 0.5
    sites: list[CrystalSiteModel] | None = None  # None: GaAs-like zincblende cell


class MaskRequest(BaseModel):
    kind: str = Field(pattern="^(uniform|gaussian)$")
    size: int
    acceleration: float
    center_fraction: float
    seed: int = 0


class ProbeRequest(BaseModel):
    size: int
    wavelength: float
    semi_angle: float
    defocus: float = 0.0
    pixel_size: float
    shift_y: int = 0
    shift_x: int = 0


class GeometryModel(BaseModel):
    """Wire form of StemGeometry + probe optics."""

    slice_spacing: float
    scan_rows: int
    scan_cols: int
    scan_step: float
    n_slices: int
    wavelength: float
    semi_angle: float
    defocus: float = 0.0
    pixel_size: float
    size: int


class SimulateMriRequest(BaseModel):
    volume: str
    mask: str


class SimulateStemRequest(BaseModel):
    volume: str
    geometry: GeometryModel
    dose: float | None = None
    seed: int = 0


class PriorModel(BaseModel):
    kind: str = Field(default="shrinkage", pattern="^(zero|shrinkage)$")
    cutoff: float = 0.35


class ReconRequest(BaseModel):
    mode: str = Field(pattern="^(dart|drift|physics)$")
    # measurements: exactly one modality's fields must be present
    kspace: str | None = None
    mask: str | None = None
    intensities: str | None = None
    geometry: GeometryModel | None = None
    # sampler / driver configuration
    steps: int = 100
    candidates: int = 16
    refine_steps: int = 100
    seed: int = 0
    workers: int = 1
    beta_min: float = 1e-4
    beta_max: float = 0.02
    prior: PriorModel = Field(default_factory=PriorModel)
    # physics step configuration
    mri_step_size: float = 0.5
    mri_threshold: float = 0.0
    stem_step_size: float | None = None  # None: guarded line search
    stem_threshold: float = 0.0
    stem_clamp: bool = False


class ProgressRow(BaseModel):
    stage: str
    step: int
    loss: float
    score: float


class ReconResponse(BaseModel):
    volume: str
    progress: list[ProgressRow]
    config: dict


class MetricsRequest(BaseModel):
    kind: str = Field(pattern="^(ssim|psnr|rel)$")
    reference: str
    test: str


class MetricValue(BaseModel):
    value: float


class ExportPgmRequest(BaseModel):
    image: str
    vmin: float | None = None
    vmax: float | None = None


class PgmResponse(BaseModel):
    pgm: str  # base64 PGM bytes


class BenchRequest(BaseModel):
    slices: int = 32
    size: int = 64
    steps: int = 8
    workers: list[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    seed: int = 0
    prior: PriorModel = Field(default_factory=PriorModel)


class BenchRow(BaseModel):
    workers: int
    seconds: float
    peak_worker_bytes: int
    checksum: str


class BenchResponse(BaseModel):
    rows: list[BenchRow]
