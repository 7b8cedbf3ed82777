"""FastAPI service wrapping the reconstruction engine.

Endpoints are synchronous: desk-scale jobs finish in seconds to minutes,
so clients simply set a generous timeout.  Malformed inputs map to HTTP
400 with kind="data"; non-finite numerics map to kind="numerical".
"""

from __future__ import annotations

import hashlib
import time

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..container import pgm_bytes
from ..datagen import (
    AtomSite,
    CrystalSpec,
    gaas_crystal,
    make_crystal_phantom,
    make_gaussian_mask,
    make_mri_phantom,
    make_uniform_mask,
    simulate_measurements,
)
from ..diffusion import DenoiserModel, make_linear_schedule, shrinkage_denoiser_model, zero_score
from ..errors import DataError, MsrdError, NumericalError
from ..metrics import psnr, rel_error, ssim, volume_ssim
from ..mri import MriStepConfig
from ..partition import SamplingInstrument, plan_partition, run_partitioned_sampling
from ..reconstruct import (
    Measurement,
    MriMeasurement,
    ProgressLog,
    ReconConfig,
    StemMeasurement,
    dart_reconstruct,
    drift_reconstruct,
    initial_volume,
    physics_only,
)
from ..stem import StemGeometry, StemStepConfig, make_probe
from ..types import ComplexVolume, DiffractionSet, KSpaceStack, ProbeParams, SamplingMask
from . import models as m


def _probe_params(g: m.GeometryModel) -> ProbeParams:
    return ProbeParams(
        wavelength=g.wavelength,
        semi_angle=g.semi_angle,
        defocus=g.defocus,
        pixel_size=g.pixel_size,
        grid_size=g.size,
    )


def _geometry(g: m.GeometryModel) -> StemGeometry:
    return StemGeometry(
        slice_spacing=g.slice_spacing,
        probe=_probe_params(g),
        scan_shape=(g.scan_rows, g.scan_cols),
        scan_step=g.scan_step,
        n_slices=g.n_slices,
    )


def _prior(spec: m.PriorModel, steps: int, beta_min: float, beta_max: float) -> DenoiserModel:
    if spec.kind == "zero":
        return zero_score()
    return shrinkage_denoiser_model(spec.cutoff, make_linear_schedule(steps, beta_min, beta_max))


def _measurement(req: m.ReconRequest) -> Measurement:
    has_mri = req.kspace is not None or req.mask is not None
    has_stem = req.intensities is not None or req.geometry is not None
    if has_mri == has_stem:
        raise DataError("provide either (kspace, mask) or (intensities, geometry)")
    if has_mri:
        if req.kspace is None or req.mask is None:
            raise DataError("MRI reconstruction needs both kspace and mask")
        mask_arr = m.decode_array(req.mask)
        return MriMeasurement(
            KSpaceStack(m.decode_array(req.kspace)),
            SamplingMask(np.asarray(mask_arr, dtype=np.float64)),
        )
    if req.intensities is None or req.geometry is None:
        raise DataError("STEM reconstruction needs both intensities and geometry")
    geom = _geometry(req.geometry)
    return StemMeasurement(
        DiffractionSet(m.decode_array(req.intensities), scan_step=geom.scan_step), geom
    )


def create_app() -> FastAPI:
    app = FastAPI(title="msrd", version=__version__)

    @app.exception_handler(DataError)
    async def _data_error(_: Request, exc: DataError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc), "kind": "data"})

    @app.exception_handler(NumericalError)
    async def _numerical_error(_: Request, exc: NumericalError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc), "kind": "numerical"})

    @app.exception_handler(MsrdError)
    async def _engine_error(_: Request, exc: MsrdError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc), "kind": "data"})

    @app.get("/health", response_model=m.HealthResponse)
    def health() -> m.HealthResponse:
        return m.HealthResponse(status="ok", version=__version__)

    @app.post("/phantom/mri", response_model=m.ArrayResponse)
    def phantom_mri(req: m.MriPhantomRequest) -> m.ArrayResponse:
        vol = make_mri_phantom(req.slices, req.size, req.seed)
        return m.ArrayResponse(container=m.encode_array(vol.data, ("slice", "y", "x")))

    @app.post("/phantom/crystal", response_model=m.ArrayResponse)
    def phantom_crystal(req: m.CrystalPhantomRequest) -> m.ArrayResponse:
        if req.sites is None:
            spec = gaas_crystal(req.slices, req.size, req.pixel_size, req.amplitude, req.width)
            spec = CrystalSpec(
                req.lattice_constant, spec.sites, req.slices, req.size, req.pixel_size
            )
        else:
            sites = tuple(
                AtomSite(s.fx, s.fy, s.fz, s.amplitude, s.width) for s in req.sites
            )
            spec = CrystalSpec(req.lattice_constant, sites, req.slices, req.size, req.pixel_size)
        vol = make_crystal_phantom(spec)
        return m.ArrayResponse(container=m.encode_array(vol.data, ("slice", "y", "x")))

    @app.post("/mask", response_model=m.ArrayResponse)
    def mask(req: m.MaskRequest) -> m.ArrayResponse:
        maker = make_uniform_mask if req.kind == "uniform" else make_gaussian_mask
        sm = maker(req.size, req.acceleration, req.center_fraction, req.seed)
        return m.ArrayResponse(container=m.encode_array(sm.data, ("ky", "kx")))

    @app.post("/probe", response_model=m.ArrayResponse)
    def probe(req: m.ProbeRequest) -> m.ArrayResponse:
        params = ProbeParams(
            wavelength=req.wavelength,
            semi_angle=req.semi_angle,
            defocus=req.defocus,
            pixel_size=req.pixel_size,
            grid_size=req.size,
        )
        arr = make_probe(params, (req.shift_y, req.shift_x))
        return m.ArrayResponse(container=m.encode_array(arr, ("y", "x")))

    @app.post("/simulate/mri", response_model=m.ArrayResponse)
    def simulate_mri(req: m.SimulateMriRequest) -> m.ArrayResponse:
        vol = ComplexVolume(m.decode_array(req.volume))
        sm = SamplingMask(np.asarray(m.decode_array(req.mask), dtype=np.float64))
        ks = simulate_measurements(vol, sm)
        return m.ArrayResponse(container=m.encode_array(ks.data, ("slice", "ky", "kx")))

    @app.post("/simulate/stem", response_model=m.ArrayResponse)
    def simulate_stem(req: m.SimulateStemRequest) -> m.ArrayResponse:
        vol = ComplexVolume(m.decode_array(req.volume))
        geom = _geometry(req.geometry)
        ds = simulate_measurements(vol, geom, dose=req.dose, seed=req.seed)
        return m.ArrayResponse(
            container=m.encode_array(ds.data, ("scan_y", "scan_x", "ky", "kx"))
        )

    @app.post("/recon", response_model=m.ReconResponse)
    def recon(req: m.ReconRequest) -> m.ReconResponse:
        meas = _measurement(req)
        cfg = ReconConfig(
            mode=req.mode,
            steps=req.steps,
            candidates=req.candidates,
            refine_steps=req.refine_steps,
            seed=req.seed,
            workers=req.workers,
            beta_min=req.beta_min,
            beta_max=req.beta_max,
            mri=MriStepConfig(req.mri_step_size, req.mri_threshold),
            stem=StemStepConfig(req.stem_step_size, req.stem_threshold, req.stem_clamp),
        )
        log = ProgressLog()
        if req.mode == "dart":
            model = _prior(req.prior, cfg.steps, cfg.beta_min, cfg.beta_max)
            vol = dart_reconstruct(meas, model, cfg, log=log)
        elif req.mode == "drift":
            model = _prior(req.prior, cfg.steps, cfg.beta_min, cfg.beta_max)
            vol = drift_reconstruct(meas, model, cfg, log=log)
        else:
            vol = physics_only(meas, cfg, req.steps, log=log)
        resolved = req.model_dump()
        resolved["engine_version"] = __version__
        return m.ReconResponse(
            volume=m.encode_array(vol.data, ("slice", "y", "x")),
            progress=[
                m.ProgressRow(stage=stage, step=step, loss=loss, score=score)
                for stage, step, loss, score in log.rows
            ],
            config=resolved,
        )

    @app.post("/metrics", response_model=m.MetricValue)
    def metrics(req: m.MetricsRequest) -> m.MetricValue:
        ref = m.decode_array(req.reference)
        tst = m.decode_array(req.test)
        if ref.ndim == 3 and np.iscomplexobj(ref):
            ref_v, tst_v = ComplexVolume(ref), ComplexVolume(tst)
            if req.kind == "ssim":
                value = volume_ssim(ref_v, tst_v)
            elif req.kind == "psnr":
                value = psnr(np.abs(ref), np.abs(tst))
            else:
                value = rel_error(ref, tst)
        else:
            ref = np.asarray(ref, dtype=np.float64)
            tst = np.asarray(tst, dtype=np.float64)
            if req.kind == "ssim":
                value = ssim(ref, tst)
            elif req.kind == "psnr":
                value = psnr(ref, tst)
            else:
                value = rel_error(ref, tst)
        return m.MetricValue(value=float(value))

    @app.post("/export/pgm", response_model=m.PgmResponse)
    def export_pgm(req: m.ExportPgmRequest) -> m.PgmResponse:
        import base64

        img = np.asarray(m.decode_array(req.image), dtype=np.float64)
        rng = None
        if req.vmin is not None or req.vmax is not None:
            if req.vmin is None or req.vmax is None:
                raise DataError("fixed range needs both vmin and vmax")
            rng = (req.vmin, req.vmax)
        return m.PgmResponse(pgm=base64.b64encode(pgm_bytes(img, rng)).decode("ascii"))

    @app.post("/bench", response_model=m.BenchResponse)
    def bench(req: m.BenchRequest) -> m.BenchResponse:
        if req.steps < 1:
            raise DataError("bench needs at least one step")
        schedule = make_linear_schedule(req.steps, 1e-4, 0.02)
        model = _prior(req.prior, req.steps, 1e-4, 0.02)
        start = initial_volume(req.slices, req.size, req.seed, req.steps + 1)
        rows = []
        for g in req.workers:
            instrument = SamplingInstrument()
            tic = time.perf_counter()
            out = run_partitioned_sampling(
                start.data.copy(),
                schedule,
                model,
                plan_partition(req.slices, g),
                req.seed,
                range(req.steps, 0, -1),
                instrument=instrument,
            )
            seconds = time.perf_counter() - tic
            rows.append(
                m.BenchRow(
                    workers=g,
                    seconds=seconds,
                    peak_worker_bytes=instrument.peak_worker_bytes(),
                    checksum=hashlib.sha256(out.tobytes()).hexdigest(),
                )
            )
        return m.BenchResponse(rows=rows)

    return app


app = create_app()
