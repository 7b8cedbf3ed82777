"""Noise schedule, forward perturbation, ancestral sampling step and priors.

The sampler step is

    X_{t-1} = (X_t + beta_t * S(X_t, t)) / sqrt(1 - beta_t) + sqrt(beta_t) Z_t

with the noise suppressed at t = 1.  The 1/sqrt(1-beta) coefficient is the
self-consistent inverse of the forward step sqrt(1-beta) X + sqrt(beta) Z;
a 1/(1-beta) variant is available behind ``printed_coefficient`` for
comparison but only the sqrt form passes the Gaussian distributional test.

Denoiser models are callables ``model(block, t, slice_start)`` that act on
any contiguous slice block independently; ``slice_start`` is the absolute
index of the block's first slice so per-slice parameters line up no matter
how the volume is partitioned.
"""

from __future__ import annotations

import subprocess
import sys
from dataclasses import dataclass, field
from typing import BinaryIO, Protocol

import numpy as np

from .container import read_stream, write_stream
from .errors import DataError, NumericalError
from .transforms import fft2c, ifft2c

__all__ = [
    "NoiseSchedule",
    "make_linear_schedule",
    "DenoiserModel",
    "forward_perturb",
    "ddpm_sample_step",
    "zero_score",
    "gaussian_score_model",
    "shrinkage_denoiser_model",
    "SubprocessDenoiser",
    "run_denoiser_stdio",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """beta_t sequence (t = 1..T) with cached alpha products, alpha_bar_0 = 1."""

    betas: np.ndarray
    alpha_bars: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        b = np.ascontiguousarray(self.betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise DataError("schedule needs at least one beta")
        if np.any(b <= 0.0) or np.any(b >= 1.0):
            raise DataError("betas must lie strictly inside (0, 1)")
        bars = np.concatenate([[1.0], np.cumprod(1.0 - b)])
        object.__setattr__(self, "betas", b)
        object.__setattr__(self, "alpha_bars", bars)

    @property
    def n_steps(self) -> int:
        return self.betas.size

    def beta(self, t: int) -> float:
        if not 1 <= t <= self.n_steps:
            raise DataError(f"timestep {t} outside 1..{self.n_steps}")
        return float(self.betas[t - 1])

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t <= self.n_steps:
            raise DataError(f"timestep {t} outside 0..{self.n_steps}")
        return float(self.alpha_bars[t])


def make_linear_schedule(n_steps: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> NoiseSchedule:
    """Linearly spaced betas from beta_min (t=1) to beta_max (t=T)."""
    if n_steps < 1:
        raise DataError("need at least one step")
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise DataError("need 0 < beta_min <= beta_max < 1")
    if n_steps == 1:
        betas = np.array([beta_min])
    else:
        betas = np.linspace(beta_min, beta_max, n_steps)
    return NoiseSchedule(betas)


class DenoiserModel(Protocol):
    def __call__(self, block: np.ndarray, t: int, slice_start: int = 0) -> np.ndarray: ...


def forward_perturb(
    x0: np.ndarray, t: int, schedule: NoiseSchedule, noise: np.ndarray | None
) -> np.ndarray:
    """Closed-form marginal X_t = sqrt(abar_t) X_0 + sqrt(1 - abar_t) Z."""
    abar = schedule.alpha_bar(t)
    out = np.sqrt(abar) * x0
    if noise is not None:
        if noise.shape != x0.shape:
            raise DataError("noise shape must match the state")
        out = out + np.sqrt(1.0 - abar) * noise
    return out


def ddpm_sample_step(
    x: np.ndarray,
    t: int,
    schedule: NoiseSchedule,
    model: DenoiserModel,
    noise: np.ndarray | None = None,
    slice_start: int = 0,
    printed_coefficient: bool = False,
) -> np.ndarray:
    """One reverse step X_t -> X_{t-1}; pass noise=None for the deterministic variant."""
    beta = schedule.beta(t)
    score = model(x, t, slice_start)
    if score.shape != x.shape:
        raise DataError("denoiser output shape must match its input")
    coef = 1.0 / (1.0 - beta) if printed_coefficient else 1.0 / np.sqrt(1.0 - beta)
    out = coef * (x + beta * score)
    if t > 1 and noise is not None:
        if noise.shape != x.shape:
            raise DataError("noise shape must match the state")
        out = out + np.sqrt(beta) * noise
    if not np.all(np.isfinite(out.view(np.float64))):
        raise NumericalError(f"sampler state became non-finite at t={t}")
    return out


# ---------------------------------------------------------------------------
# Reference denoisers


class _ZeroScore:
    def __call__(self, block: np.ndarray, t: int, slice_start: int = 0) -> np.ndarray:
        return np.zeros_like(block)


def zero_score() -> DenoiserModel:
    """Score identically zero: the sampler reduces to rescaling plus noise."""
    return _ZeroScore()


class _GaussianScore:
    """Exact score of the t-perturbed Gaussian N(mean, sigma0^2) prior.

    S(x, t) = -(x - sqrt(abar_t) mean) / (abar_t sigma0^2 + 1 - abar_t),
    applied independently to real and imaginary parts via complex arithmetic.
    """

    def __init__(self, mean: np.ndarray, sigma0: float, schedule: NoiseSchedule) -> None:
        if sigma0 < 0.0:
            raise DataError("sigma0 must be >= 0")
        self.mean = np.asarray(mean, dtype=np.complex128)
        self.sigma0 = float(sigma0)
        self.schedule = schedule

    def __call__(self, block: np.ndarray, t: int, slice_start: int = 0) -> np.ndarray:
        abar = self.schedule.alpha_bar(t)
        variance = abar * self.sigma0**2 + (1.0 - abar)
        if variance <= 0.0:
            raise DataError("degenerate prior: sigma0 = 0 at alpha_bar = 1 has no score")
        if self.mean.ndim == 3:
            mu = self.mean[slice_start : slice_start + block.shape[0]]
            if mu.shape[0] != block.shape[0]:
                raise DataError("slice block extends past the prior mean volume")
        else:
            mu = self.mean
        return -(block - np.sqrt(abar) * mu) / variance


def gaussian_score_model(mean: np.ndarray, sigma0: float, schedule: NoiseSchedule) -> DenoiserModel:
    return _GaussianScore(mean, sigma0, schedule)


class _ShrinkageDenoiser:
    """Toy learned-prior stand-in: score pointing toward a spectral low-pass.

    S(x, t) = (LP(x) - x) / (1 - abar_t) where LP keeps the pixels whose
    centered spectral radius falls in the lowest ``cutoff`` quantile.  With
    beta_t / (1 - abar_t) -> 1 as t -> 1, the final step applies the full
    projection.
    """

    def __init__(self, cutoff: float, schedule: NoiseSchedule) -> None:
        if not (0.0 < cutoff <= 1.0):
            raise DataError("cutoff must lie in (0, 1]")
        self.cutoff = float(cutoff)
        self.schedule = schedule
        self._masks: dict[int, np.ndarray] = {}

    def _mask(self, n: int) -> np.ndarray:
        cached = self._masks.get(n)
        if cached is None:
            r = np.arange(n) - n // 2
            radius = np.hypot(r[:, None], r[None, :])
            threshold = np.quantile(radius, self.cutoff)
            cached = (radius <= threshold).astype(np.float64)
            self._masks[n] = cached
        return cached

    def low_pass(self, block: np.ndarray) -> np.ndarray:
        return ifft2c(self._mask(block.shape[-1]) * fft2c(block))

    def __call__(self, block: np.ndarray, t: int, slice_start: int = 0) -> np.ndarray:
        abar = self.schedule.alpha_bar(t)
        if abar >= 1.0:
            raise DataError("shrinkage score undefined at t = 0 (alpha_bar = 1)")
        if self.cutoff == 1.0:
            return np.zeros_like(block)
        return (self.low_pass(block) - block) / (1.0 - abar)


def shrinkage_denoiser_model(cutoff: float, schedule: NoiseSchedule) -> DenoiserModel:
    return _ShrinkageDenoiser(cutoff, schedule)


# ---------------------------------------------------------------------------
# External denoiser adapter: subprocess speaking the container format over
# stdin/stdout.  Each request frame is [u32 t][u32 slice_start][container
# c128 block]; the response is a container block of the same shape.


def _write_frame(f: BinaryIO, block: np.ndarray, t: int, slice_start: int) -> None:
    f.write(int(t).to_bytes(4, "little"))
    f.write(int(slice_start).to_bytes(4, "little"))
    write_stream(f, block, labels=("slice", "y", "x"))


def _read_frame(f: BinaryIO) -> tuple[int, int, np.ndarray] | None:
    head = f.read(8)
    if head == b"":
        return None  # clean shutdown between frames
    if len(head) < 8:
        raise DataError("truncated denoiser request frame")
    t = int.from_bytes(head[:4], "little")
    slice_start = int.from_bytes(head[4:8], "little")
    return t, slice_start, read_stream(f)


class SubprocessDenoiser:
    """Drives an external denoiser process through the stream protocol."""

    def __init__(self, argv: list[str]) -> None:
        self._proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE
        )

    def __call__(self, block: np.ndarray, t: int, slice_start: int = 0) -> np.ndarray:
        if self._proc.poll() is not None:
            raise DataError("denoiser process has exited")
        assert self._proc.stdin is not None and self._proc.stdout is not None
        _write_frame(self._proc.stdin, np.asarray(block, dtype=np.complex128), t, slice_start)
        out = read_stream(self._proc.stdout)
        if out.shape != block.shape:
            raise DataError("denoiser process returned a mismatched shape")
        return np.asarray(out, dtype=np.complex128)

    def close(self) -> None:
        if self._proc.poll() is None:
            if self._proc.stdin is not None:
                self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self) -> "SubprocessDenoiser":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def run_denoiser_stdio(model: DenoiserModel, stdin: BinaryIO | None = None, stdout: BinaryIO | None = None) -> None:
    """Serve a model over stdin/stdout until EOF; the subprocess side of the adapter."""
    fin = stdin if stdin is not None else sys.stdin.buffer
    fout = stdout if stdout is not None else sys.stdout.buffer
    while True:
        frame = _read_frame(fin)
        if frame is None:
            return
        t, slice_start, block = frame
        write_stream(fout, model(block, t, slice_start), labels=("slice", "y", "x"))
