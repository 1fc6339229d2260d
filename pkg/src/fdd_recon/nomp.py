# Trivariate greedy pursuit: per-iteration 2D grid detection, joint Newton
# refinement of (mu, nu), cyclic re-refinement, and LS gain updates.
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Tuple

import numpy as np

from .config import NormalizedPath, SystemConfig, wrap_unit
from .model import as_grid, atom, synthesize_from_normalized

TWO_PI = 2.0 * np.pi

# Wrapped coordinate distance below which two detections count as duplicates.
DUPLICATE_TOL = 1e-9


class RankDeficientError(ValueError):
    """Atom matrix has (numerically) dependent columns, e.g. duplicate detections."""

    def __init__(self, message, duplicates=()):
        super().__init__(message)
        self.duplicates = list(duplicates)


@dataclass(frozen=True)
class StoppingRule:
    variant: Literal["power", "false_alarm"] = "power"
    p_fa: float = 0.01

    def __post_init__(self):
        if self.variant == "false_alarm" and not 0.0 < self.p_fa < 1.0:
            raise ValueError("p_fa must lie in (0, 1)")


@dataclass(frozen=True)
class NompConfig:
    gamma1: int = 2  # delay-grid over-sampling
    gamma2: int = 4  # angle-grid over-sampling
    single_refine_rounds: int = 1
    cyclic_refine_rounds: int = 3
    max_paths: int | None = None  # None -> min(M*N // 4, 64)
    stopping: StoppingRule = field(default_factory=StoppingRule)

    def __post_init__(self):
        if self.gamma1 < 1 or self.gamma2 < 1:
            raise ValueError("over-sampling rates must be >= 1")
        if self.max_paths is not None and self.max_paths < 1:
            raise ValueError("max_paths must be >= 1")

    def resolve_max_paths(self, cfg: SystemConfig) -> int:
        if self.max_paths is not None:
            return self.max_paths
        return max(1, min(cfg.size // 4, 64))


@dataclass
class NompResult:
    paths: List[NormalizedPath]
    residual_energy: float
    iterations: int
    stop_reason: Literal["criterion", "max_paths"]


def _index_ramps(cfg: SystemConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Flat per-element (2*pi*n, 2*pi*m) multipliers in stacked order."""
    n = np.kron(cfg.subcarrier_indices, np.ones(cfg.M))
    m = np.kron(np.ones(cfg.N), cfg.antenna_indices)
    return TWO_PI * n, TWO_PI * m


def objective_S(cfg: SystemConfig, residual: np.ndarray, g: complex, mu: float, nu: float) -> float:
    """2*Re{r^H g u} - |g|^2 ||u||^2; the per-path residual-power reduction."""
    u = atom(cfg, mu, nu)
    return float(2.0 * np.real(np.vdot(residual, g * u)) - np.abs(g) ** 2 * cfg.size)


def coarse_detect(cfg: SystemConfig, residual: np.ndarray, nomp_cfg: NompConfig) -> Tuple[float, float, float]:
    """Argmax of |u^H r|^2 / ||u||^2 over the over-sampled 2D grid.

    Evaluated with a zero-padded 2D FFT of the residual reshaped to N x M; the
    index-offset phase factors are unimodular so they drop out of the argmax.
    Ties break to the lexicographically smallest (k1, k2).
    """
    g1n = nomp_cfg.gamma1 * cfg.N
    g2m = nomp_cfg.gamma2 * cfg.M
    spectrum = np.fft.fft2(as_grid(cfg, residual), s=(g1n, g2m))
    power = np.abs(spectrum) ** 2 / cfg.size
    flat = int(np.argmax(power))  # first occurrence = smallest (k1, k2)
    k1, k2 = divmod(flat, g2m)
    return k1 / g1n, k2 / g2m, float(power.flat[flat])


def ls_gain_single(cfg: SystemConfig, residual: np.ndarray, mu: float, nu: float) -> complex:
    """Scalar LS gain u^H r / ||u||^2."""
    return complex(np.vdot(atom(cfg, mu, nu), residual) / cfg.size)


def _grad_hess(cfg: SystemConfig, residual: np.ndarray, g: complex, mu: float, nu: float):
    """Analytic gradient and Hessian of S with respect to (mu, nu)."""
    wn, wm = _index_ramps(cfg)
    u = atom(cfg, mu, nu)
    du_mu = 1j * wn * u
    du_nu = 1j * wm * u
    e = residual - g * u

    grad = np.array(
        [
            2.0 * np.real(g * np.vdot(e, du_mu)),
            2.0 * np.real(g * np.vdot(e, du_nu)),
        ]
    )
    g2 = np.abs(g) ** 2
    h_mm = 2.0 * np.real(g * np.vdot(e, -(wn**2) * u) - g2 * np.vdot(du_mu, du_mu))
    h_mn = 2.0 * np.real(g * np.vdot(e, -(wn * wm) * u) - g2 * np.vdot(du_nu, du_mu))
    h_nn = 2.0 * np.real(g * np.vdot(e, -(wm**2) * u) - g2 * np.vdot(du_nu, du_nu))
    hess = np.array([[h_mm, h_mn], [h_mn, h_nn]])
    return grad, hess


def newton_refine(
    cfg: SystemConfig, residual: np.ndarray, g: complex, mu: float, nu: float
) -> Tuple[complex, float, float, bool]:
    """One joint Newton step on (mu, nu), guarded by local concavity.

    The step is taken only when det(Hess) > 0 and Hess[0,0] < 0, and kept only
    when it does not reduce the objective; otherwise the inputs are returned
    with applied=False.  After an accepted step the gain is re-fit by LS.
    """
    grad, hess = _grad_hess(cfg, residual, g, mu, nu)
    det = hess[0, 0] * hess[1, 1] - hess[0, 1] * hess[1, 0]
    if not (det > 0.0 and hess[0, 0] < 0.0):
        return g, mu, nu, False

    step = np.linalg.solve(hess, grad)
    mu_new = float(wrap_unit(mu - step[0]))
    nu_new = float(wrap_unit(nu - step[1]))
    g_new = ls_gain_single(cfg, residual, mu_new, nu_new)
    if objective_S(cfg, residual, g_new, mu_new, nu_new) < objective_S(cfg, residual, g, mu, nu):
        return g, mu, nu, False
    return g_new, mu_new, nu_new, True


def cyclic_refine(
    cfg: SystemConfig, y: np.ndarray, paths: Sequence[NormalizedPath], rounds: int
) -> List[NormalizedPath]:
    """Re-run the Newton step on each path in detection order, rounds times."""
    if not paths:
        raise ValueError("cyclic_refine needs at least one path")
    paths = [NormalizedPath(p.gain, p.mu, p.nu) for p in paths]
    residual = y - synthesize_from_normalized(cfg, paths)
    for _ in range(rounds):
        for p in paths:
            r_plus = residual + p.gain * atom(cfg, p.mu, p.nu)
            p.gain, p.mu, p.nu, _ = newton_refine(cfg, r_plus, p.gain, p.mu, p.nu)
            residual = r_plus - p.gain * atom(cfg, p.mu, p.nu)
    return paths


def _wrapped_dist(a: float, b: float) -> float:
    d = abs(wrap_unit(a) - wrap_unit(b))
    return min(d, 1.0 - d)


def update_all_gains(cfg: SystemConfig, y: np.ndarray, paths: Sequence[NormalizedPath]) -> List[NormalizedPath]:
    """Joint LS re-fit of all gains via an orthogonal-factorization solve."""
    dups = [
        (i, j)
        for i in range(len(paths))
        for j in range(i + 1, len(paths))
        if _wrapped_dist(paths[i].mu, paths[j].mu) < DUPLICATE_TOL
        and _wrapped_dist(paths[i].nu, paths[j].nu) < DUPLICATE_TOL
    ]
    if dups:
        raise RankDeficientError("duplicate (mu, nu) detections", duplicates=dups)

    U = np.column_stack([atom(cfg, p.mu, p.nu) for p in paths])
    gains, _, _, _ = np.linalg.lstsq(U, y, rcond=None)
    return [NormalizedPath(complex(g), p.mu, p.nu) for g, p in zip(gains, paths)]


def stopping_power(cfg: SystemConfig, residual: np.ndarray) -> bool:
    """True when residual energy drops below the expected total noise energy M*N
    (unit per-element noise variance)."""
    return float(np.vdot(residual, residual).real) < cfg.size


def false_alarm_threshold(cfg: SystemConfig, p_fa: float) -> float:
    return float(np.log(cfg.size) - np.log(-np.log1p(-p_fa)))


def stopping_false_alarm(cfg: SystemConfig, residual: np.ndarray, p_fa: float) -> bool:
    """True when the per-atom matched-filter energy |u^H r|^2 / (M*N) stays
    below the extreme-value threshold on every non-over-sampled grid point."""
    spectrum = np.fft.fft2(as_grid(cfg, residual))
    stat = np.abs(spectrum) ** 2 / cfg.size
    return bool(stat.max() < false_alarm_threshold(cfg, p_fa))


def _stopping_fires(cfg: SystemConfig, residual: np.ndarray, rule: StoppingRule) -> bool:
    if rule.variant == "power":
        return stopping_power(cfg, residual)
    return stopping_false_alarm(cfg, residual, rule.p_fa)


def nomp_extract(y: np.ndarray, cfg: SystemConfig, nomp_cfg: NompConfig) -> NompResult:
    """Full pursuit: detect / refine / cyclic-refine / gains-update until the
    stopping rule fires or the path cap is reached."""
    if y.shape != (cfg.size,):
        raise ValueError(f"expected stacked vector of length {cfg.size}")
    max_paths = nomp_cfg.resolve_max_paths(cfg)
    paths: List[NormalizedPath] = []
    residual = y.astype(complex).copy()
    iterations = 0
    stop_reason: Literal["criterion", "max_paths"] = "max_paths"

    while True:
        if _stopping_fires(cfg, residual, nomp_cfg.stopping):
            stop_reason = "criterion"
            break
        if len(paths) >= max_paths:
            stop_reason = "max_paths"
            break

        mu, nu, _ = coarse_detect(cfg, residual, nomp_cfg)
        g = ls_gain_single(cfg, residual, mu, nu)
        for _ in range(nomp_cfg.single_refine_rounds):
            g, mu, nu, _ = newton_refine(cfg, residual, g, mu, nu)
        paths.append(NormalizedPath(g, mu, nu))

        if nomp_cfg.cyclic_refine_rounds > 0:
            paths = cyclic_refine(cfg, y, paths, nomp_cfg.cyclic_refine_rounds)
        try:
            paths = update_all_gains(cfg, y, paths)
        except RankDeficientError as err:
            keep = set(range(len(paths))) - {j for _, j in err.duplicates}
            paths = [paths[i] for i in sorted(keep)]
            paths = update_all_gains(cfg, y, paths)
        residual = y - synthesize_from_normalized(cfg, paths)
        iterations += 1

    energy = float(np.vdot(residual, residual).real)
    return NompResult(paths=paths, residual_energy=energy, iterations=iterations, stop_reason=stop_reason)
