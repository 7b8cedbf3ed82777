"""Undersampled-MRI acquisition model and data-consistency step.

The forward model per slice is Y_hat = M * fft2c(X_s) with a single mask M
shared by all slices.  The data term is the summed squared Frobenius
residual and its gradient (in the conjugate complex coordinate, scaled so
that d loss / d Re(X) = Re(grad)) is

    grad_s = 2 * ifft2c(M * (fft2c(X_s) - Y_hat_s)).

With step size 1/2 the gradient step replaces the sampled k-space entries
with the measurements exactly and leaves the rest untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .prox import soft_threshold
from .transforms import fft2c, ifft2c
from .types import ComplexVolume, KSpaceStack, SamplingMask


@dataclass(frozen=True)
class MriStepConfig:
    """Step size and proximal threshold for the data-consistency update."""

    step_size: float = 0.5
    threshold: float = 0.0

    def __post_init__(self) -> None:
        if not (self.step_size > 0.0):
            raise DataError("step size must be > 0")
        if self.threshold < 0.0:
            raise DataError("threshold must be >= 0")


def _check_shapes(volume: ComplexVolume, mask: SamplingMask) -> None:
    if mask.data.shape != volume.data.shape[1:]:
        raise DataError(
            f"mask grid {mask.data.shape} does not match volume grid {volume.data.shape[1:]}"
        )


def _check_stack(volume: ComplexVolume, kspace: KSpaceStack) -> None:
    if kspace.data.shape != volume.data.shape:
        raise DataError(
            f"k-space shape {kspace.data.shape} does not match volume shape {volume.data.shape}"
        )


def mri_forward(volume: ComplexVolume, mask: SamplingMask) -> KSpaceStack:
    """Sample the per-slice spectra; masked-out entries come out exactly zero."""
    _check_shapes(volume, mask)
    return KSpaceStack(mask.data * fft2c(volume.data))


def mri_loss(volume: ComplexVolume, kspace: KSpaceStack, mask: SamplingMask) -> float:
    """Summed squared residual sum_s ||Y_hat_s - M*F(X_s)||_F^2."""
    _check_shapes(volume, mask)
    _check_stack(volume, kspace)
    residual = mask.data * fft2c(volume.data) - kspace.data
    return float(np.sum(np.abs(residual) ** 2))


def mri_grad(volume: ComplexVolume, kspace: KSpaceStack, mask: SamplingMask) -> np.ndarray:
    _check_shapes(volume, mask)
    _check_stack(volume, kspace)
    return 2.0 * ifft2c(mask.data * (fft2c(volume.data) - kspace.data))


def mri_dc_step(
    volume: ComplexVolume,
    kspace: KSpaceStack,
    mask: SamplingMask,
    cfg: MriStepConfig = MriStepConfig(),
) -> ComplexVolume:
    """One proximal gradient step on the data term."""
    stepped = volume.data - cfg.step_size * mri_grad(volume, kspace, mask)
    out = soft_threshold(stepped, cfg.threshold)
    if not np.all(np.isfinite(out.view(np.float64))):
        raise NumericalError("data-consistency step produced non-finite values")
    return ComplexVolume(out)


def zero_filled_recon(kspace: KSpaceStack) -> ComplexVolume:
    """Inverse transform of the (zero-filled) measured spectra, slice by slice."""
    return ComplexVolume(ifft2c(kspace.data))
