# Downlink gain refinement: beamformed pilot model, coefficient matrix,
# LS gain re-estimation, and final downlink reconstruction.
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple

import numpy as np

from .config import PathComponent, SystemConfig
from .model import steering_vector, synthesize_downlink
from .nomp import RankDeficientError

BeamformingType = Literal["type1", "type2"]


class EmptyEstimatesError(ValueError):
    pass


@dataclass(frozen=True)
class PilotPattern:
    """Comb pilots: every K-th subcarrier, starting at the lowest in-band index."""

    K: int
    indices: Tuple[int, ...]

    @classmethod
    def from_config(cls, cfg: SystemConfig, K: int | None = None) -> "PilotPattern":
        K = cfg.K if K is None else K
        n_p = cfg.N // K
        start = -(cfg.N // 2)
        return cls(K=K, indices=tuple(start + K * i for i in range(n_p)))

    @property
    def count(self) -> int:
        return len(self.indices)


def _steering_products(cfg: SystemConfig, angles: Sequence[float]) -> np.ndarray:
    """Gram matrix B[l, j] = a^H(theta_l) a(theta_j)."""
    A = np.column_stack(
        [steering_vector(cfg, cfg.d_over_lambda * np.sin(th)) for th in angles]
    )
    return A.conj().T @ A


def build_coefficient_matrix(
    cfg: SystemConfig,
    pattern: PilotPattern,
    estimates: Sequence[Tuple[float, float]],
    btype: BeamformingType,
) -> np.ndarray:
    """Pilot coefficient matrix mapping per-path gains to received pilots.

    estimates are (delay, angle) pairs.  Type 1 stacks one Np-row block per
    beamed direction (Mp = Np*L); Type 2 frequency-multiplexes the beams onto
    the pilot subcarriers (Mp = Np).
    """
    if not estimates:
        raise EmptyEstimatesError("need at least one (delay, angle) estimate")
    delays = np.array([e[0] for e in estimates])
    angles = [e[1] for e in estimates]
    L = len(estimates)
    n_i = np.array(pattern.indices)
    # phase[i, l] = exp(j*2*pi*(delta_F + n_i*delta_f)*tau_l)
    phase = np.exp(2j * np.pi * np.outer(cfg.delta_F + n_i * cfg.delta_f, delays))
    B = _steering_products(cfg, angles)

    if btype == "type1":
        # entry (i, l) of block j: phase[i, l] * a^H(theta_l) a(theta_j) = phase[i, l] * B[l, j]
        return np.vstack([phase * B[:, j][None, :] for j in range(L)])
    if btype == "type2":
        beam = np.arange(pattern.count) % L
        return phase * B[:, beam].T
    raise ValueError(f"unknown beamforming type {btype!r}")


def simulate_downlink_pilots(
    cfg: SystemConfig,
    true_paths: Sequence[PathComponent],
    estimates: Sequence[Tuple[float, float]],
    btype: BeamformingType,
    pattern: PilotPattern,
    noise_variance: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Received downlink pilots: true paths beamed toward estimated directions,
    plus circular complex Gaussian noise."""
    if not estimates:
        raise EmptyEstimatesError("need at least one estimated direction to beamform")
    L_hat = len(estimates)
    beam_angles = [e[1] for e in estimates]
    n_i = np.array(pattern.indices)

    # C[i, l] = exp(j*2*pi*(delta_F + n_i*delta_f)*tau_l) for the TRUE delays
    delays = np.array([p.delay for p in true_paths]) if true_paths else np.zeros(0)
    gains = np.array([p.gain for p in true_paths]) if true_paths else np.zeros(0, dtype=complex)
    phase = np.exp(2j * np.pi * np.outer(cfg.delta_F + n_i * cfg.delta_f, delays))

    a_true = np.column_stack(
        [steering_vector(cfg, cfg.d_over_lambda * np.sin(p.angle)) for p in true_paths]
    ) if true_paths else np.zeros((cfg.M, 0), dtype=complex)
    a_beam = np.column_stack(
        [steering_vector(cfg, cfg.d_over_lambda * np.sin(th)) for th in beam_angles]
    )
    bf = a_true.conj().T @ a_beam  # bf[l, j] = a^H(theta_l) a(theta_hat_j)

    if btype == "type1":
        rows = []
        for j in range(L_hat):
            rows.append(phase @ (gains * bf[:, j]) if len(true_paths) else np.zeros(pattern.count, dtype=complex))
        y = np.concatenate(rows)
    elif btype == "type2":
        if len(true_paths):
            beam = np.arange(pattern.count) % L_hat
            y = (phase * bf[:, beam].T) @ gains
        else:
            y = np.zeros(pattern.count, dtype=complex)
    else:
        raise ValueError(f"unknown beamforming type {btype!r}")

    if noise_variance > 0:
        rng = np.random.default_rng() if rng is None else rng
        scale = np.sqrt(noise_variance / 2.0)
        y = y + scale * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return y


def refine_gains(A: np.ndarray, y_dl: np.ndarray) -> np.ndarray:
    """LS gain re-fit g = A^+ y via an orthogonal-factorization solve."""
    if A.shape[0] < A.shape[1]:
        raise RankDeficientError(
            f"underdetermined refinement: {A.shape[0]} pilots for {A.shape[1]} paths; "
            "densify pilots (smaller K) or switch to type 1"
        )
    gains, _, rank, _ = np.linalg.lstsq(A, y_dl, rcond=None)
    if rank < A.shape[1]:
        raise RankDeficientError("coefficient matrix is rank deficient")
    return gains


def reconstruct_downlink(
    cfg: SystemConfig,
    refined_gains: Sequence[complex],
    estimates: Sequence[Tuple[float, float]],
) -> np.ndarray:
    """Downlink channel from refined gains and uplink-derived delays/angles."""
    if len(refined_gains) != len(estimates):
        raise ValueError("gain/estimate length mismatch")
    paths = [
        PathComponent(gain=complex(g), delay=tau, angle=theta)
        for g, (tau, theta) in zip(refined_gains, estimates)
    ]
    return synthesize_downlink(cfg, paths)
