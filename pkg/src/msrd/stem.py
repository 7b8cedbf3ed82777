"""4D-STEM multi-slice forward model, intensity loss and gradient step.

Forward model per scan point r (probe realized as an integer circular pixel
shift of the on-axis probe):

    E_1 = X_1 * P_r
    E_s = X_s * V(E_{s-1})        s = 2..S   (V = Fresnel over slice spacing)
    I_r = |fft2c(E_S)|^2

The loss is sum_r ||I_r - I_r(X)||_F^2 and ``stem_grad`` returns its
Wirtinger gradient with respect to conj(X), accumulated over scan points
via the adjoint chain

    G_S     = ifft2c(-2 (I_meas - I) * Psi),     Psi = fft2c(E_S)
    grad_s += conj(W_s) * G_s,  W_1 = P_r, W_s = V(E_{s-1})
    G_{s-1} = V_adj(conj(X_s) * G_s).

(The derivative of the loss in real coordinates is d/dRe = 2 Re(grad),
d/dIm = 2 Im(grad); step sizes are defined against ``stem_grad``.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .prox import clamp_magnitude, soft_threshold
from .transforms import FresnelKernel, centered_frequencies, fft2c, fresnel_adjoint, fresnel_propagate, ifft2c
from .types import ComplexVolume, DiffractionSet, ProbeParams

# Scan points processed per vectorized batch; bounds peak memory while the
# reduction order over batches stays fixed (deterministic sums).
_SCAN_CHUNK = 256


@dataclass(frozen=True)
class StemGeometry:
    """Scan/propagation layout tying the object to the measurements.

    scan_step must be an integer multiple of the probe pixel size: probe
    positions are realized as circular pixel shifts, no interpolation.
    """

    slice_spacing: float
    probe: ProbeParams
    scan_shape: tuple[int, int]
    scan_step: float
    n_slices: int

    def __post_init__(self) -> None:
        if not (self.slice_spacing > 0.0) or not math.isfinite(self.slice_spacing):
            raise DataError("slice spacing must be positive and finite")
        if self.scan_shape[0] < 1 or self.scan_shape[1] < 1:
            raise DataError("scan grid must be at least 1x1")
        if self.n_slices < 1:
            raise DataError("need at least one slice")
        if not (self.scan_step > 0.0):
            raise DataError("scan step must be positive")
        ratio = self.scan_step / self.probe.pixel_size
        if abs(ratio - round(ratio)) > 1e-9:
            raise DataError(
                f"scan step {self.scan_step} is not an integer number of pixels "
                f"(pixel size {self.probe.pixel_size})"
            )

    @property
    def step_pixels(self) -> int:
        return int(round(self.scan_step / self.probe.pixel_size))

    @property
    def n_scan(self) -> int:
        return self.scan_shape[0] * self.scan_shape[1]

    def scan_shifts(self) -> np.ndarray:
        """Integer (dy, dx) probe shifts for every scan point, row-major."""
        sy, sx = self.scan_shape
        step = self.step_pixels
        shifts = np.empty((sy * sx, 2), dtype=np.int64)
        k = 0
        for iy in range(sy):
            for ix in range(sx):
                shifts[k] = (iy * step, ix * step)
                k += 1
        return shifts

    def kernel(self) -> FresnelKernel:
        return FresnelKernel(
            self.probe.grid_size, self.probe.pixel_size, self.probe.wavelength, self.slice_spacing
        )


@dataclass(frozen=True)
class StemStepConfig:
    """Gradient-step controls.

    step_size None means backtracking halving from 1/(2 ||P||^2 R), which
    guarantees a non-increasing loss.  The proximal map soft-thresholds the
    deviation from vacuum (X - 1) so sparsity pulls toward transmission 1,
    not toward the unphysical 0.
    """

    step_size: float | None = None
    threshold: float = 0.0
    clamp: bool = False

    def __post_init__(self) -> None:
        if self.step_size is not None and not (self.step_size > 0.0):
            raise DataError("step size must be > 0")
        if self.threshold < 0.0:
            raise DataError("threshold must be >= 0")


def make_probe(params: ProbeParams, shift: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Aperture-limited defocused probe, unit l2 norm, shifted by whole pixels.

    P = ifft2c(A(k) exp(-i chi(k))) with hard aperture |k| <= semi_angle/lambda
    and chi(k) = pi lambda defocus |k|^2.
    """
    n = params.grid_size
    f = centered_frequencies(n, params.pixel_size)
    k_sq = f[:, None] ** 2 + f[None, :] ** 2
    aperture = (k_sq <= params.cutoff**2).astype(np.float64)
    chi = np.pi * params.wavelength * params.defocus * k_sq
    probe = ifft2c(aperture * np.exp(-1j * chi))
    norm = np.linalg.norm(probe)
    if norm == 0.0:
        raise DataError("aperture admits no frequencies; enlarge semi_angle")
    probe /= norm
    dy, dx = int(shift[0]), int(shift[1])
    if (dy, dx) != (0, 0):
        probe = np.roll(probe, (dy, dx), axis=(0, 1))
    return probe


def _probe_stack(geom: StemGeometry) -> np.ndarray:
    base = make_probe(geom.probe)
    shifts = geom.scan_shifts()
    stack = np.empty((len(shifts), geom.probe.grid_size, geom.probe.grid_size), dtype=np.complex128)
    for i, (dy, dx) in enumerate(shifts):
        stack[i] = np.roll(base, (dy, dx), axis=(0, 1))
    return stack


def _check_volume(volume: ComplexVolume, geom: StemGeometry) -> None:
    if volume.n_slices != geom.n_slices:
        raise DataError(
            f"volume has {volume.n_slices} slices but geometry expects {geom.n_slices}"
        )
    if volume.grid_size != geom.probe.grid_size:
        raise DataError(
            f"volume grid {volume.grid_size} does not match probe grid {geom.probe.grid_size}"
        )


def _check_measurement(meas: DiffractionSet, geom: StemGeometry) -> None:
    if meas.scan_shape != geom.scan_shape:
        raise DataError(
            f"measured scan grid {meas.scan_shape} does not match geometry {geom.scan_shape}"
        )
    if meas.detector_size != geom.probe.grid_size:
        raise DataError("detector grid does not match probe grid")


def _exit_spectrum(x: np.ndarray, probes: np.ndarray, kernel: FresnelKernel) -> np.ndarray:
    """fft2c of the exit wave for a batch of probes; no tape kept."""
    wave = x[0] * probes
    for s in range(1, x.shape[0]):
        wave = x[s] * fresnel_propagate(wave, kernel)
    return fft2c(wave)


def stem_forward(volume: ComplexVolume, geom: StemGeometry) -> DiffractionSet:
    """Simulate diffraction intensities over the whole scan grid."""
    _check_volume(volume, geom)
    x = volume.data
    kernel = geom.kernel()
    probes = _probe_stack(geom)
    n = geom.probe.grid_size
    out = np.empty((geom.n_scan, n, n), dtype=np.float64)
    for lo in range(0, geom.n_scan, _SCAN_CHUNK):
        hi = min(lo + _SCAN_CHUNK, geom.n_scan)
        psi = _exit_spectrum(x, probes[lo:hi], kernel)
        out[lo:hi] = np.abs(psi) ** 2
    if not np.all(np.isfinite(out)):
        raise NumericalError("forward model produced non-finite intensities")
    return DiffractionSet(out.reshape(*geom.scan_shape, n, n), scan_step=geom.scan_step)


def stem_loss(volume: ComplexVolume, meas: DiffractionSet, geom: StemGeometry) -> float:
    """sum_r ||I_meas_r - I_r(X)||_F^2."""
    _check_volume(volume, geom)
    _check_measurement(meas, geom)
    simulated = stem_forward(volume, geom)
    return float(np.sum((meas.data - simulated.data) ** 2))


def stem_vjp(volume: ComplexVolume, cotangent: np.ndarray, geom: StemGeometry) -> np.ndarray:
    """Adjoint of the intensity linearization applied to a real cotangent.

    Returns d<y, I(X)> / d conj(X) for the real pairing <y, I> = sum(y * I).
    ``stem_grad`` is this map applied to y = -2 (I_meas - I(X)).
    """
    _check_volume(volume, geom)
    if cotangent.shape != (*geom.scan_shape, geom.probe.grid_size, geom.probe.grid_size):
        raise DataError("cotangent shape does not match the scan/detector layout")
    x = volume.data
    n_slices = x.shape[0]
    kernel = geom.kernel()
    probes = _probe_stack(geom)
    y = np.ascontiguousarray(cotangent, dtype=np.float64).reshape(
        geom.n_scan, geom.probe.grid_size, geom.probe.grid_size
    )
    grad = np.zeros_like(x)
    for lo in range(0, geom.n_scan, _SCAN_CHUNK):
        hi = min(lo + _SCAN_CHUNK, geom.n_scan)
        # forward pass keeping the pre-transmission waves W_s
        tape = [probes[lo:hi]]
        wave = x[0] * tape[0]
        for s in range(1, n_slices):
            w = fresnel_propagate(wave, kernel)
            tape.append(w)
            wave = x[s] * w
        psi = fft2c(wave)
        g = ifft2c(y[lo:hi] * psi)
        for s in range(n_slices - 1, -1, -1):
            grad[s] += np.sum(np.conj(tape[s]) * g, axis=0)
            if s > 0:
                g = fresnel_adjoint(np.conj(x[s]) * g, kernel)
    return grad


def stem_jvp(volume: ComplexVolume, tangent: np.ndarray, geom: StemGeometry) -> np.ndarray:
    """Directional derivative of the intensities along a complex tangent volume."""
    _check_volume(volume, geom)
    if tangent.shape != volume.data.shape:
        raise DataError("tangent shape does not match the volume")
    x = volume.data
    dx = np.asarray(tangent, dtype=np.complex128)
    kernel = geom.kernel()
    probes = _probe_stack(geom)
    n = geom.probe.grid_size
    out = np.empty((geom.n_scan, n, n), dtype=np.float64)
    for lo in range(0, geom.n_scan, _SCAN_CHUNK):
        hi = min(lo + _SCAN_CHUNK, geom.n_scan)
        w = probes[lo:hi]
        wave = x[0] * w
        dwave = dx[0] * w
        for s in range(1, x.shape[0]):
            w = fresnel_propagate(wave, kernel)
            dw = fresnel_propagate(dwave, kernel)
            dwave = dx[s] * w + x[s] * dw
            wave = x[s] * w
        psi = fft2c(wave)
        dpsi = fft2c(dwave)
        out[lo:hi] = 2.0 * np.real(np.conj(psi) * dpsi)
    return out.reshape(*geom.scan_shape, n, n)


def stem_grad(volume: ComplexVolume, meas: DiffractionSet, geom: StemGeometry) -> np.ndarray:
    """Wirtinger gradient of stem_loss with respect to conj(X)."""
    _check_measurement(meas, geom)
    simulated = stem_forward(volume, geom)
    residual = meas.data - simulated.data
    grad = stem_vjp(volume, -2.0 * residual, geom)
    if not np.all(np.isfinite(grad.view(np.float64))):
        raise NumericalError("gradient is non-finite")
    return grad


def _apply_prox(x: np.ndarray, cfg: StemStepConfig) -> np.ndarray:
    out = 1.0 + soft_threshold(x - 1.0, cfg.threshold)
    if cfg.clamp:
        out = clamp_magnitude(out, 1.0)
    return out


def default_step_size(geom: StemGeometry) -> float:
    """Backtracking starting point 1/(2 ||P||^2 R); probes are unit-norm."""
    return 1.0 / (2.0 * geom.n_scan)


def _line_search(
    x: np.ndarray, grad: np.ndarray, meas: DiffractionSet, geom: StemGeometry
) -> np.ndarray:
    """Guarded search along -grad: never increases the loss.

    Starts at 1/(2 ||P||^2 R) and, when that already descends, keeps
    doubling while the loss improves (unit-norm probes make the loss and
    its curvature scale like 1/N^4, so the safe starting point sits far
    below the useful step); otherwise halves until it stops increasing.
    """
    base = stem_loss(ComplexVolume(x), meas, geom)
    eta = default_step_size(geom)
    trial = float(stem_loss(ComplexVolume(x - eta * grad), meas, geom))
    if trial <= base:
        best_eta, best = eta, trial
        for _ in range(40):
            eta *= 2.0
            nxt = float(stem_loss(ComplexVolume(x - eta * grad), meas, geom))
            if nxt <= best:
                best_eta, best = eta, nxt
            else:
                break
        return x - best_eta * grad
    for _ in range(60):
        eta *= 0.5
        if stem_loss(ComplexVolume(x - eta * grad), meas, geom) <= base:
            return x - eta * grad
    return x  # gradient numerically zero; no useful direction


def stem_gd_step(
    volume: ComplexVolume,
    meas: DiffractionSet,
    geom: StemGeometry,
    cfg: StemStepConfig = StemStepConfig(),
) -> ComplexVolume:
    """One (proximal) gradient step; line-searched when no step size is given."""
    grad = stem_grad(volume, meas, geom)
    if cfg.step_size is not None:
        stepped = volume.data - cfg.step_size * grad
    else:
        stepped = _line_search(volume.data, grad, meas, geom)
    out = _apply_prox(stepped, cfg)
    if not np.all(np.isfinite(out.view(np.float64))):
        raise NumericalError("gradient step produced non-finite values")
    return ComplexVolume(out)


def bright_field(meas: DiffractionSet, aperture_pixels: float | None = None) -> np.ndarray:
    """Sum each diffraction pattern over the detector: (scan_y, scan_x) image.

    With ``aperture_pixels`` the sum runs over a centered disk of that pixel
    radius instead of the whole detector.  The full sum equals the probe
    energy for any phase-only object (the optics are unitary), so contrast
    there requires a finite collection aperture.
    """
    if aperture_pixels is None:
        return meas.data.sum(axis=(-2, -1))
    n = meas.detector_size
    r = np.arange(n) - n // 2
    disk = np.hypot(r[:, None], r[None, :]) <= aperture_pixels
    return meas.data[..., disk].sum(axis=-1)


def bright_field_aperture(geom: StemGeometry, fraction: float = 0.5) -> float:
    """Collection-aperture radius in detector pixels, as a fraction of the
    probe-forming aperture."""
    n = geom.probe.grid_size
    return fraction * geom.probe.cutoff * n * geom.probe.pixel_size
