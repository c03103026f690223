"""Permanent-magnet synchronous motor in the rotor d-q frame.

Explicit Euler on::

    di_d/dt = (u_d - R i_d + w L_q i_q) / L_d
    di_q/dt = (u_q - R i_q - w L_d i_d - w psi) / L_q

with the electrical rotor speed ``w`` held constant per series.  Voltage
profiles are piecewise constant with jitter and keep their sign pattern inside
the requested quadrants of the (u_d, u_q) plane.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .data import Series, SeriesSet, read_series_csv, write_series_csv
from .errors import InstabilityError, ParameterError

STATE_NAMES = ("i_d", "i_q")
CONTROL_NAMES = ("u_d", "u_q")
PARAM_NAME = "omega_r"


@dataclass(frozen=True)
class MotorParams:
    R: float = 4.9
    L_d: float = 79e-3
    L_q: float = 113e-3
    psi: float = 0.165
    dt: float = 1e-5
    u_max: float = 60.0
    i_max: float = 50.0
    omega_max: float = 150.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ParameterError(f"motor parameter {name} must be > 0, got {value}")
        rho = self.spectral_radius(self.omega_max)
        if rho >= 1.0:
            raise ParameterError(
                f"dt={self.dt} too coarse: Euler spectral radius {rho:.6f} >= 1 at omega={self.omega_max}"
            )

    def euler_matrix(self, omega: float) -> np.ndarray:
        A = np.array(
            [
                [-self.R / self.L_d, omega * self.L_q / self.L_d],
                [-omega * self.L_d / self.L_q, -self.R / self.L_q],
            ]
        )
        return np.eye(2) + self.dt * A

    def spectral_radius(self, omega: float) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.euler_matrix(omega)))))


@dataclass(frozen=True)
class QuadrantSplit:
    iid: tuple[int, ...] = (1, 3)
    ood: tuple[int, ...] = (2, 4)

    def __post_init__(self):
        if set(self.iid) & set(self.ood):
            raise ParameterError("iid and ood quadrant sets overlap")
        if set(self.iid) | set(self.ood) != {1, 2, 3, 4}:
            raise ParameterError("quadrant sets must cover all four quadrants")

    def quadrants(self, mode: str) -> tuple[int, ...]:
        if mode not in ("iid", "ood"):
            raise ParameterError(f"mode must be 'iid' or 'ood', got {mode!r}")
        return self.iid if mode == "iid" else self.ood


_SIGNS = {1: (1.0, 1.0), 2: (-1.0, 1.0), 3: (-1.0, -1.0), 4: (1.0, -1.0)}


def simulate_motor(
    params: MotorParams,
    u_d,
    u_q,
    omega: float,
    steps: int,
    i0=(0.0, 0.0),
) -> tuple[np.ndarray, np.ndarray]:
    """Currents ``(i_d, i_q)`` of length ``steps``; index 0 holds ``i0``."""
    u_d = np.asarray(u_d, dtype=float)
    u_q = np.asarray(u_q, dtype=float)
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    if len(u_d) < steps - 1 or len(u_q) < steps - 1:
        raise ParameterError(f"voltage series shorter than {steps - 1} steps")
    if np.any(np.abs(u_d[: steps - 1]) > params.u_max) or np.any(np.abs(u_q[: steps - 1]) > params.u_max):
        raise ParameterError(f"|u| exceeds u_max={params.u_max}")
    R, Ld, Lq, psi, dt = params.R, params.L_d, params.L_q, params.psi, params.dt
    i_d = np.empty(steps)
    i_q = np.empty(steps)
    i_d[0], i_q[0] = i0
    for t in range(steps - 1):
        d, q = i_d[t], i_q[t]
        i_d[t + 1] = d + dt * (u_d[t] - R * d + omega * Lq * q) / Ld
        i_q[t + 1] = q + dt * (u_q[t] - R * q - omega * Ld * d - omega * psi) / Lq
        if abs(i_d[t + 1]) > params.i_max or abs(i_q[t + 1]) > params.i_max:
            raise InstabilityError(
                f"current exceeded i_max={params.i_max} at step {t + 1} "
                f"(i_d={i_d[t + 1]:.3g}, i_q={i_q[t + 1]:.3g}, omega={omega})"
            )
    return i_d, i_q


def voltage_profile(
    rng: np.random.Generator,
    quadrants,
    length: int,
    u_max: float,
    dwell=(5, 20),
    jitter: float = 0.02,
    floor: float = 0.05,
) -> np.ndarray:
    """Piecewise-constant (u_d, u_q) with uniform jitter, shape (2, length).

    Each dwell picks a quadrant from ``quadrants`` and magnitudes in
    [floor, 1] * u_max; jitter never flips a sign or leaves [floor, 1] * u_max.
    """
    out = np.empty((2, length))
    t = 0
    lo, hi = floor * u_max, u_max
    while t < length:
        span = int(rng.integers(dwell[0], dwell[1] + 1))
        quad = quadrants[int(rng.integers(len(quadrants)))]
        signs = np.array(_SIGNS[quad])[:, None]
        level = rng.uniform(lo, hi, size=(2, 1))
        end = min(t + span, length)
        noise = rng.uniform(-jitter, jitter, size=(2, end - t)) * u_max
        out[:, t:end] = signs * np.clip(level + noise, lo, hi)
        t = end
    return out


def sample_quadrant_controls(
    split: QuadrantSplit,
    mode: str,
    count: int,
    length: int,
    seed,
    params: MotorParams | None = None,
    omega_range=(0.0, 150.0),
    dwell=(5, 20),
    jitter: float = 0.02,
) -> list[tuple[np.ndarray, float]]:
    """``count`` independent ``(u, omega_r)`` pairs, ``u`` of shape (2, length)."""
    if count < 1 or length < 1:
        raise ParameterError(f"count and length must be >= 1 (got {count}, {length})")
    params = params or MotorParams()
    if not 0 <= omega_range[0] <= omega_range[1] <= params.omega_max:
        raise ParameterError(f"omega range {omega_range} outside [0, {params.omega_max}]")
    quads = split.quadrants(mode)
    out = []
    for ss in np.random.SeedSequence(seed).spawn(count):
        rng = np.random.default_rng(ss)
        omega = float(rng.uniform(*omega_range))
        out.append((voltage_profile(rng, quads, length, params.u_max, dwell, jitter), omega))
    return out


def generate_series_set(
    split: QuadrantSplit,
    mode: str,
    n_series: int,
    length: int,
    seed: int,
    params: MotorParams | None = None,
    substeps: int = 50,
    warmup: int = 50,
    omega_range=(0.0, 150.0),
    dwell=(5, 20),
    jitter: float = 0.02,
) -> SeriesSet:
    """Simulated motor series sampled every ``substeps`` integration steps.

    Voltages are held over each sample period (zero-order hold).
    """
    params = params or MotorParams()
    total = warmup + length
    pairs = sample_quadrant_controls(split, mode, n_series, total, seed, params, omega_range, dwell, jitter)
    out = []
    for sid, (u, omega) in enumerate(pairs):
        fine = np.repeat(u, substeps, axis=1)
        i_d, i_q = simulate_motor(params, fine[0], fine[1], omega, total * substeps)
        x = np.stack([i_d[::substeps], i_q[::substeps]])
        out.append(Series(x[:, warmup:], u[:, warmup:], sid, omega))
    return SeriesSet(out, STATE_NAMES, CONTROL_NAMES, PARAM_NAME)


DEFAULT_COLUMNS = {name: name for name in ("t", *STATE_NAMES, *CONTROL_NAMES, PARAM_NAME, "series_id")}


def ingest_csv(path, column_map: dict[str, str] | None = None) -> SeriesSet:
    """Read motor series from CSV (columns t, i_d, i_q, u_d, u_q, omega_r, series_id)."""
    return read_series_csv(path, STATE_NAMES, CONTROL_NAMES, PARAM_NAME, column_map=column_map)


def export_csv(path, sset: SeriesSet) -> None:
    write_series_csv(path, sset)
