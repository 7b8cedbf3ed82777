"""Acceptance suite: every criterion at its stated tolerance and budget.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion with its wall time.
"""

import time
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import random_volume, small_geometry
from msrd.datagen import (
    gaas_crystal,
    make_crystal_phantom,
    make_mri_phantom,
    make_uniform_mask,
)
from msrd.diffusion import gaussian_score_model, make_linear_schedule, shrinkage_denoiser_model
from msrd.metrics import psnr, rel_error, ssim, volume_ssim
from msrd.mri import MriStepConfig, mri_dc_step, mri_forward, mri_grad, mri_loss, zero_filled_recon
from msrd.partition import plan_partition, run_partitioned_sampling
from msrd.reconstruct import (
    CandidateBank,
    MriMeasurement,
    ReconConfig,
    StemMeasurement,
    dart_reconstruct,
    initial_volume,
    physics_only,
    refine,
    select_candidate,
)
from msrd.rng import NoiseStream
from msrd.stem import StemGeometry, stem_forward, stem_grad, stem_loss
from msrd.transforms import FresnelKernel, fft2c, fresnel_adjoint, fresnel_propagate, ifft2c
from msrd.types import ComplexVolume, ProbeParams


@contextmanager
def criterion(number: int, description: str, budget_seconds: float):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < budget_seconds, f"criterion {number} overran: {elapsed:.1f}s"
    print(f"\nACCEPTANCE {number} PASS ({elapsed:.1f}s < {budget_seconds:.0f}s): {description}")


def _random_field(n, seed):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def test_criterion_1_transform_correctness():
    with criterion(1, "transform Parseval/round-trip/adjoint/semigroup at 1e-10", 1.0):
        x = _random_field(16, 0)
        y = _random_field(16, 1)
        nx = np.linalg.norm(x)
        assert abs(np.linalg.norm(fft2c(x)) - nx) <= 1e-10 * nx
        assert np.abs(ifft2c(fft2c(x)) - x).max() <= 1e-10 * np.abs(x).max()
        assert abs(np.vdot(fft2c(x), y) - np.vdot(x, ifft2c(y))) <= 1e-10 * abs(np.vdot(x, y))
        k = FresnelKernel(16, 0.2, 0.025, 11.0)
        out = fresnel_propagate(x, k)
        assert abs(np.linalg.norm(out) - nx) <= 1e-10 * nx
        assert np.abs(fresnel_adjoint(out, k) - x).max() <= 1e-10 * np.abs(x).max()
        assert abs(np.vdot(fresnel_propagate(x, k), y) - np.vdot(x, fresnel_adjoint(y, k))) <= 1e-10 * abs(np.vdot(x, y))
        k1 = FresnelKernel(16, 0.2, 0.025, 4.0)
        k2 = FresnelKernel(16, 0.2, 0.025, 7.0)
        k12 = FresnelKernel(16, 0.2, 0.025, 11.0)
        a = fresnel_propagate(fresnel_propagate(x, k1), k2)
        b = fresnel_propagate(x, k12)
        assert np.abs(a - b).max() <= 1e-10 * np.abs(b).max()


def test_criterion_2_mri_physics():
    with criterion(2, "MRI gradient vs finite differences (1e-6) and half-step replacement (1e-10)", 5.0):
        mask = make_uniform_mask(8, 2.0, 0.15, seed=1)
        truth = random_volume(4, 8, seed=2, scale=0.7)
        kspace = mri_forward(truth, mask)
        x = random_volume(4, 8, seed=3, scale=0.7)

        grad = mri_grad(x, kspace, mask)
        scale = np.abs(grad).max()
        eps = 1e-5
        for idx in np.ndindex(x.data.shape):
            for comp, pick in ((1.0, np.real), (1j, np.imag)):
                bump = np.zeros_like(x.data)
                bump[idx] = comp * eps
                up = mri_loss(ComplexVolume(x.data + bump), kspace, mask)
                down = mri_loss(ComplexVolume(x.data - bump), kspace, mask)
                fd = (up - down) / (2.0 * eps)
                assert abs(fd - pick(grad[idx])) <= 1e-6 * max(abs(fd), 1e-3 * scale)

        stepped = mri_dc_step(x, kspace, mask, MriStepConfig(step_size=0.5))
        spec = fft2c(stepped.data)
        assert np.abs(spec * mask.data - kspace.data).max() <= 1e-10


def test_criterion_3_stem_physics():
    with criterion(3, "STEM gradient vs finite differences (1e-4) and energy conservation (1e-10)", 60.0):
        problems = [(1, 8, (1, 1), 2), (2, 16, (2, 2), 4), (3, 16, (2, 2), 4)]
        for n_slices, n, scan, step_px in problems:
            geom = small_geometry(n_slices, n, scan=scan, step_px=step_px)
            rng = np.random.default_rng(n_slices)
            truth = ComplexVolume(np.exp(1j * rng.normal(scale=0.5, size=(n_slices, n, n))))
            meas = stem_forward(truth, geom)
            x = ComplexVolume(
                truth.data
                + 0.1 * (rng.normal(size=truth.data.shape) + 1j * rng.normal(size=truth.data.shape))
            )
            grad = stem_grad(x, meas, geom)
            scale = np.abs(grad).max()
            eps = 1e-5
            for idx in np.ndindex(x.data.shape):
                for comp, pick in ((1.0, np.real), (1j, np.imag)):
                    bump = np.zeros_like(x.data)
                    bump[idx] = comp * eps
                    up = stem_loss(ComplexVolume(x.data + bump), meas, geom)
                    down = stem_loss(ComplexVolume(x.data - bump), meas, geom)
                    fd = (up - down) / (2.0 * eps)
                    analytic = 2.0 * pick(grad[idx])  # Wirtinger conj-gradient convention
                    assert abs(fd - analytic) <= 1e-4 * max(abs(fd), 1e-3 * scale), (n_slices, idx)

        geom = small_geometry(3, 16, scan=(2, 2))
        rng = np.random.default_rng(9)
        phase_only = ComplexVolume(np.exp(1j * rng.normal(scale=0.6, size=(3, 16, 16))))
        intensities = stem_forward(phase_only, geom)
        totals = intensities.data.sum(axis=(-2, -1))
        assert np.abs(totals - 1.0).max() <= 1e-10  # unit-norm probes


def test_criterion_4_sampler_distributional():
    with criterion(4, "T=200 Gaussian-score chain matches prior mean/variance within 3 SE", 120.0):
        t_steps, n_runs, n = 200, 5000, 4
        schedule = make_linear_schedule(t_steps, 1e-3, 0.08)
        rng = np.random.default_rng(11)
        mu_slice = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        # 5000 independent 1x4x4 chains, vectorized as slices with iid noise
        mu = np.broadcast_to(mu_slice, (n_runs, n, n)).copy()
        model = gaussian_score_model(mu, 1.0, schedule)
        init = np.stack(
            [NoiseStream(42, s, t_steps + 1, 0).complex_field((n, n)) for s in range(n_runs)]
        )
        out = run_partitioned_sampling(
            init, schedule, model, plan_partition(n_runs, 1), seed=42,
            timesteps=range(t_steps, 0, -1),
        )
        deviation = out - mu
        n_samples = deviation.size
        se_mean = 1.0 / np.sqrt(n_samples)
        se_var = np.sqrt(2.0 / (n_samples - 1))
        for component in (deviation.real, deviation.imag):
            assert abs(component.mean()) <= 3.0 * se_mean
            assert abs(component.var(ddof=1) - 1.0) <= 3.0 * se_var


def test_criterion_5_partition_invariance():
    with criterion(5, "sampling and DART agree within 1e-12 for G in {1,2,4,8}", 120.0):
        truth = random_volume(8, 16, seed=21, scale=0.5)
        mask = make_uniform_mask(16, 2.0, 0.15, seed=5)
        meas = MriMeasurement(mri_forward(truth, mask), mask)
        t_steps = 25
        schedule = make_linear_schedule(t_steps)
        model = shrinkage_denoiser_model(0.3, schedule)

        init = initial_volume(8, 16, seed=13, t_init=t_steps + 1)
        sampling_ref = None
        dart_ref = None
        for workers in (1, 2, 4, 8):
            sampled = run_partitioned_sampling(
                init.data, schedule, model, plan_partition(8, workers), seed=13,
                timesteps=range(t_steps, 0, -1),
            )
            cfg = ReconConfig(mode="dart", steps=t_steps, seed=13, workers=workers)
            pared = dart_reconstruct(meas, model, cfg)
            if sampling_ref is None:
                sampling_ref, dart_ref = sampled, pared
            else:
                assert np.abs(sampled - sampling_ref).max() <= 1e-12 * np.abs(sampling_ref).max()
                assert np.abs(pared.data - dart_ref.data).max() <= 1e-12 * np.abs(dart_ref.data).max()


def test_criterion_6_dart_end_to_end():
    with criterion(6, "DART beats physics-only and zero-filled + 0.02 on the desk-scale problem", 300.0):
        truth = make_mri_phantom(8, 32, seed=4)
        mask = make_uniform_mask(32, 2.0, 0.15, seed=4)  # uniform 2x, 0.15 center
        meas = MriMeasurement(mri_forward(truth, mask), mask)

        # oracles first
        score_zero_filled = volume_ssim(truth, zero_filled_recon(meas.kspace))
        baseline_cfg = ReconConfig(mode="physics")
        score_physics = volume_ssim(truth, physics_only(meas, baseline_cfg, 100))

        t_steps = 100
        cfg = ReconConfig(
            mode="dart", steps=t_steps, seed=0, mri=MriStepConfig(step_size=0.5, threshold=0.02)
        )
        model = shrinkage_denoiser_model(0.02, make_linear_schedule(t_steps))
        score_dart = volume_ssim(truth, dart_reconstruct(meas, model, cfg))

        assert score_dart >= score_physics
        assert score_dart >= score_zero_filled + 0.02


def test_criterion_7_drift_end_to_end():
    with criterion(7, "DRIFT selects the planted candidate and refines its loss 10x", 600.0):
        n, pixel = 32, 0.35
        spec = gaas_crystal(2, n, pixel)
        truth = make_crystal_phantom(spec)
        probe = ProbeParams(
            wavelength=0.0197, semi_angle=0.025, defocus=80.0, pixel_size=pixel, grid_size=n
        )
        geom = StemGeometry(
            slice_spacing=spec.lattice_constant / 2.0,
            probe=probe,
            scan_shape=(8, 8),
            scan_step=4 * pixel,
            n_slices=2,
        )
        meas = StemMeasurement(stem_forward(truth, geom), geom)

        t_steps = 50
        cfg = ReconConfig(mode="drift", steps=t_steps, candidates=15, refine_steps=100, seed=3)
        model = shrinkage_denoiser_model(0.3, make_linear_schedule(t_steps))
        from msrd.reconstruct import sample_candidates

        sampled = sample_candidates(meas, model, cfg)
        rng = np.random.default_rng(7)
        planted_index = 5
        planted = ComplexVolume(
            truth.data
            + 0.05 * (rng.normal(size=truth.data.shape) + 1j * rng.normal(size=truth.data.shape))
        )
        volumes = list(sampled.volumes)
        volumes.insert(planted_index, planted)
        bank = CandidateBank(tuple(volumes))
        assert len(bank) == 16

        chosen_index, chosen = select_candidate(bank, meas)
        assert chosen_index == planted_index

        loss_before = stem_loss(chosen, meas.intensities, geom)
        refined = refine(meas, chosen, 100, cfg)
        loss_after = stem_loss(refined, meas.intensities, geom)
        assert loss_before / loss_after >= 10.0


def test_criterion_8_bench_scaling_and_determinism(tmp_path):
    with criterion(8, "bench: peak working set ~ 1/G within 20% and seed-identical outputs", 300.0):
        from msrd.cli import main

        first = tmp_path / "bench1.csv"
        second = tmp_path / "bench2.csv"
        args = [
            "bench", "--slices", "32", "--size", "64", "--T", "8",
            "--workers", "1,2,4,8", "--seed", "7",
        ]
        assert main(args + ["--out", str(first)]) == 0
        assert main(args + ["--out", str(second)]) == 0

        def parse(path):
            rows = path.read_text().splitlines()[1:]
            out = {}
            for row in rows:
                workers, seconds, peak, checksum = row.split(",")
                out[int(workers)] = (int(peak), checksum)
            return out

        run1, run2 = parse(first), parse(second)
        assert run1 == run2  # same seed, same outputs
        peak1 = run1[1][0]
        for workers, (peak, checksum) in run1.items():
            assert abs(peak * workers / peak1 - 1.0) <= 0.2
            assert checksum == run1[1][1]  # worker count leaves the result unchanged


def test_criterion_9_metrics_oracle_equivalence():
    with criterion(9, "ssim/psnr/rel match double-loop oracles within 1e-10 on 10 pairs", 10.0):
        from test_metrics import brute_force_ssim

        rng = np.random.default_rng(33)
        for _ in range(10):
            ref = rng.normal(size=(32, 32))
            test = ref + 0.3 * rng.normal(size=(32, 32))
            assert abs(ssim(ref, test) - brute_force_ssim(ref, test)) <= 1e-10

            mse = 0.0
            for i in range(32):
                for j in range(32):
                    mse += (ref[i, j] - test[i, j]) ** 2
            mse /= 32 * 32
            data_range = ref.max() - ref.min()
            expected_psnr = 10.0 * np.log10(data_range**2 / mse)
            assert abs(psnr(ref, test) - expected_psnr) <= 1e-10 * abs(expected_psnr)

            num = 0.0
            den = 0.0
            for i in range(32):
                for j in range(32):
                    num += abs(ref[i, j] - test[i, j]) ** 2
                    den += abs(ref[i, j]) ** 2
            expected_rel = np.sqrt(num) / np.sqrt(den)
            assert abs(rel_error(ref, test) - expected_rel) <= 1e-10
