"""Coded-aperture snapshot spectral imaging physics.

A scene cube [H,W,C] is modulated by a 2D coded aperture, each band is then
shifted horizontally by ``dispersion_step`` pixels per band index, and the
shifted stack is summed into a single 2D measurement of width
W + dispersion_step*(C-1).  The adjoint, the diagonal of the measurement-space
Gram operator, and the shift/un-shift layout helpers all live here, in both a
plain-ndarray form and a differentiable form used inside the unfolding network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class SensingConfig:
    """Geometry and noise of one acquisition: mask, dispersion, band count."""

    mask: np.ndarray
    dispersion_step: int = 2
    bands: int = 28
    noise_sigma: float = 0.0

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if self.mask.ndim != 2:
            raise ValueError(f"mask must be 2D, got shape {self.mask.shape}")
        if self.mask.min() < 0.0 or self.mask.max() > 1.0:
            raise ValueError("mask transmittances must lie in [0, 1]")
        if self.dispersion_step < 0:
            raise ValueError("dispersion_step must be >= 0")
        if self.bands < 1:
            raise ValueError("bands must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def meas_width(self) -> int:
        return self.width + self.dispersion_step * (self.bands - 1)

    def check_cube(self, x: np.ndarray) -> None:
        expect = (self.height, self.width, self.bands)
        if x.shape != expect:
            raise ValueError(f"cube shape {x.shape} does not match sensing config {expect}")

    def check_measurement(self, y: np.ndarray) -> None:
        expect = (self.height, self.meas_width)
        if y.shape != expect:
            raise ValueError(f"measurement shape {y.shape} does not match "
                             f"sensing config {expect}")


def random_mask(h: int, w: int, seed: int = 0, binary: bool = True,
                density: float = 0.5) -> np.ndarray:
    """Seeded coded aperture; binary 0/1 by default, else uniform [0,1]."""
    rng = np.random.default_rng(seed)
    if binary:
        return (rng.random((h, w)) < density).astype(np.float64)
    return rng.random((h, w))


# ---------------------------------------------------------------------------
# Plain-ndarray operators
# ---------------------------------------------------------------------------

def phi_forward(x: np.ndarray, cfg: SensingConfig) -> np.ndarray:
    """Mask, shift each band by d*c columns, and integrate to a 2D measurement."""
    cfg.check_cube(x)
    d, w = cfg.dispersion_step, cfg.width
    y = np.zeros((cfg.height, cfg.meas_width), dtype=x.dtype)
    for c in range(cfg.bands):
        y[:, d * c:d * c + w] += cfg.mask * x[:, :, c]
    return y


def phi_adjoint(y: np.ndarray, cfg: SensingConfig) -> np.ndarray:
    """Exact transpose of :func:`phi_forward`."""
    cfg.check_measurement(y)
    d, w = cfg.dispersion_step, cfg.width
    x = np.empty((cfg.height, w, cfg.bands), dtype=y.dtype)
    for c in range(cfg.bands):
        x[:, :, c] = cfg.mask * y[:, d * c:d * c + w]
    return x


def phi_phit_diag(cfg: SensingConfig) -> np.ndarray:
    """Diagonal of Phi Phi^T (the Gram operator is diagonal for this geometry)."""
    d, w = cfg.dispersion_step, cfg.width
    diag = np.zeros((cfg.height, cfg.meas_width))
    m2 = cfg.mask ** 2
    for c in range(cfg.bands):
        diag[:, d * c:d * c + w] += m2
    return diag


def simulate(x: np.ndarray, cfg: SensingConfig, seed: int = 0) -> np.ndarray:
    """Noisy measurement: phi_forward(x) plus seeded zero-mean Gaussian noise."""
    y = phi_forward(x, cfg)
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        y = y + cfg.noise_sigma * rng.standard_normal(y.shape)
    return y


def shift_back(y: np.ndarray, cfg: SensingConfig) -> np.ndarray:
    """Un-disperse a measurement into a C-band cube (band c = columns d*c .. d*c+W)."""
    cfg.check_measurement(y)
    d, w = cfg.dispersion_step, cfg.width
    x = np.empty((cfg.height, w, cfg.bands), dtype=y.dtype)
    for c in range(cfg.bands):
        x[:, :, c] = y[:, d * c:d * c + w]
    return x


def shift(x: np.ndarray, cfg: SensingConfig) -> np.ndarray:
    """Inverse layout of :func:`shift_back`: place band c at column offset d*c."""
    cfg.check_cube(x)
    d, w = cfg.dispersion_step, cfg.width
    out = np.zeros((cfg.height, cfg.meas_width, cfg.bands), dtype=x.dtype)
    for c in range(cfg.bands):
        out[:, d * c:d * c + w, c] = x[:, :, c]
    return out


def dense_phi(cfg: SensingConfig) -> np.ndarray:
    """Explicit sensing matrix mapping vec(x) to vec(y); test-scale only."""
    h, w, c = cfg.height, cfg.width, cfg.bands
    n = h * w * c
    if n > 4096:
        raise ValueError("dense_phi is only meant for small test instances")
    phi = np.zeros((h * cfg.meas_width, n))
    for idx in range(n):
        e = np.zeros(n)
        e[idx] = 1.0
        phi[:, idx] = phi_forward(e.reshape(h, w, c), cfg).ravel()
    return phi


# ---------------------------------------------------------------------------
# Differentiable operators (linear, so each is the other's gradient map)
# ---------------------------------------------------------------------------

def phi_forward_t(x: Tensor, cfg: SensingConfig) -> Tensor:
    cfg.check_cube(x.data)
    out = Tensor(phi_forward(x.data, cfg))
    T.add_flops(2 * cfg.height * cfg.width * cfg.bands)
    return T.record(out, (x,), lambda g: (phi_adjoint(g, cfg),))


def phi_adjoint_t(y: Tensor, cfg: SensingConfig) -> Tensor:
    cfg.check_measurement(y.data)
    out = Tensor(phi_adjoint(y.data, cfg))
    T.add_flops(2 * cfg.height * cfg.width * cfg.bands)
    return T.record(out, (y,), lambda g: (phi_forward(g, cfg),))
