# Synthesis of stacked multi-subcarrier multi-antenna channel vectors.
#
# The stacked vector is subcarrier-major: element (n, m) lives at flat index
# (n + floor(N/2)) * M + (m + floor(M/2)).  All phase ramps use the convention
# exp(+j*2*pi*index*frequency), applied uniformly to both the synthesizer and
# the estimator.
from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .config import NormalizedPath, PathComponent, SystemConfig, normalize_path, wrap_unit


def steering_vector(cfg: SystemConfig, nu: float) -> np.ndarray:
    """ULA phase ramp exp(j*2*pi*m*nu) over the antenna indices."""
    nu = wrap_unit(nu)
    return np.exp(2j * np.pi * cfg.antenna_indices * nu)


def delay_vector(cfg: SystemConfig, mu: float) -> np.ndarray:
    """OFDM phase ramp exp(j*2*pi*n*mu) over the subcarrier indices."""
    mu = wrap_unit(mu)
    return np.exp(2j * np.pi * cfg.subcarrier_indices * mu)


def atom(cfg: SystemConfig, mu: float, nu: float) -> np.ndarray:
    """Dictionary atom: Kronecker product of delay and steering ramps.

    Unit-modulus entries, so ||atom||^2 == M*N for every (mu, nu).
    """
    return np.kron(delay_vector(cfg, mu), steering_vector(cfg, nu))


def synthesize_from_normalized(cfg: SystemConfig, paths: Iterable[NormalizedPath]) -> np.ndarray:
    """Sum of gain-weighted atoms; empty input gives the zero vector."""
    h = np.zeros(cfg.size, dtype=complex)
    for p in paths:
        h += p.gain * atom(cfg, p.mu, p.nu)
    return h


def synthesize_uplink(cfg: SystemConfig, paths: Sequence[PathComponent]) -> np.ndarray:
    return synthesize_from_normalized(cfg, [normalize_path(cfg, p) for p in paths])


def synthesize_downlink(cfg: SystemConfig, paths: Sequence[PathComponent]) -> np.ndarray:
    """Like synthesize_uplink but with the per-path carrier-offset phase
    exp(j*2*pi*delta_F*tau)."""
    h = np.zeros(cfg.size, dtype=complex)
    for p in paths:
        np_ = normalize_path(cfg, p)
        phase = np.exp(2j * np.pi * cfg.delta_F * p.delay)
        h += p.gain * phase * atom(cfg, np_.mu, np_.nu)
    return h


def synthesize_siso(cfg: SystemConfig, paths: Sequence[PathComponent]) -> np.ndarray:
    """Single-antenna special case: length-N vector of delay ramps only."""
    siso_cfg = SystemConfig(
        M=1,
        N=cfg.N,
        delta_f=cfg.delta_f,
        delta_F=cfg.delta_F,
        d_over_lambda=cfg.d_over_lambda,
        K=cfg.K,
    )
    return synthesize_uplink(siso_cfg, paths)


def as_grid(cfg: SystemConfig, vec: np.ndarray) -> np.ndarray:
    """Reshape a stacked vector to (N, M): rows are subcarriers."""
    if vec.shape != (cfg.size,):
        raise ValueError(f"expected length {cfg.size}, got {vec.shape}")
    return vec.reshape(cfg.N, cfg.M)
