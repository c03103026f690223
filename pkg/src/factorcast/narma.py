"""NARMA state series driven by correlated control pairs.

State update, per dimension i::

    x[i,t+1] = a_i x[i,t] + b_i x[i,t] * sum_{k=t-m}^{t} x[i,k]
               + sum_j C[i,j] u[j,t] u[j,t-m] + d_i

Controls: u1 ~ U(0,1) per step, u2 = alpha*u1 + (1-alpha)*k with alpha and k
drawn once per series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Series, SeriesSet
from .errors import InstabilityError, ParameterError

OVERFLOW_GUARD = 1e6
IID_ALPHA = (0.4, 0.7)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: int
    coupling: tuple[tuple[float, ...], ...]
    a: tuple[float, ...] = (0.3, 0.3)
    b: tuple[float, ...] = (0.01, 0.01)
    d: tuple[float, ...] = (0.1, 0.1)
    m: int = 10

    def __post_init__(self):
        n = len(self.coupling)
        if n < 1 or any(len(row) != n for row in self.coupling):
            raise ParameterError(f"coupling must be square, got {self.coupling}")
        if self.m < 1:
            raise ParameterError(f"interaction order m must be >= 1, got {self.m}")
        for name in ("a", "b", "d"):
            if len(getattr(self, name)) != n:
                raise ParameterError(f"{name} needs {n} entries")

    @property
    def n(self) -> int:
        return len(self.coupling)

    @property
    def C(self) -> np.ndarray:
        return np.array(self.coupling, dtype=float)

    def depends(self, state: int, control: int) -> bool:
        """True if control ``control`` drives state ``state`` (1-based)."""
        return self.coupling[state - 1][control - 1] != 0

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "coupling": [list(r) for r in self.coupling],
            "a": list(self.a),
            "b": list(self.b),
            "d": list(self.d),
            "m": self.m,
        }

    def with_coefficients(self, a=None, b=None, d=None, m=None) -> "ScenarioSpec":
        return ScenarioSpec(
            self.scenario_id,
            self.coupling,
            tuple(a) if a is not None else self.a,
            tuple(b) if b is not None else self.b,
            tuple(d) if d is not None else self.d,
            m if m is not None else self.m,
        )


_COUPLINGS = {
    1: ((1.5, 0.0), (0.0, 0.55)),
    2: ((1.5, 0.0), (0.5, 0.55)),
    3: ((1.5, 0.15), (0.0, 0.55)),
    4: ((1.5, 0.15), (0.5, 0.55)),
}


def scenario_catalog() -> dict[int, ScenarioSpec]:
    return {sid: ScenarioSpec(sid, c) for sid, c in _COUPLINGS.items()}


def scenario(scenario_id: int) -> ScenarioSpec:
    try:
        return scenario_catalog()[scenario_id]
    except KeyError:
        raise ParameterError(f"unknown scenario-id {scenario_id!r}; expected one of 1-4") from None


@dataclass(frozen=True)
class ControlRegime:
    alpha_low: float
    alpha_high: float
    mode: str = "iid"
    exclude: tuple[float, float] | None = field(default=None)

    def __post_init__(self):
        if self.mode not in ("iid", "ood"):
            raise ParameterError(f"mode must be 'iid' or 'ood', got {self.mode!r}")
        if not 0.0 <= self.alpha_low < self.alpha_high <= 1.0:
            raise ParameterError(
                f"need 0 <= alpha_low < alpha_high <= 1, got ({self.alpha_low}, {self.alpha_high})"
            )
        if self.mode == "ood" and self.exclude is None:
            raise ParameterError("ood regime needs the iid interval to exclude")

    @classmethod
    def iid(cls, low=IID_ALPHA[0], high=IID_ALPHA[1]) -> "ControlRegime":
        return cls(low, high, "iid")

    @classmethod
    def ood(cls, exclude=IID_ALPHA) -> "ControlRegime":
        return cls(0.0, 1.0, "ood", tuple(exclude))

    def draw_alpha(self, rng: np.random.Generator) -> float:
        while True:
            alpha = rng.uniform(self.alpha_low, self.alpha_high)
            if self.mode == "iid" or not (self.exclude[0] <= alpha <= self.exclude[1]):
                return float(alpha)


def sample_controls(regime: ControlRegime, length: int, seed) -> tuple[np.ndarray, float, float]:
    """Return ``(u, alpha, k)`` with ``u`` of shape (2, length)."""
    if length < 1:
        raise ParameterError(f"length must be >= 1, got {length}")
    rng = np.random.default_rng(seed)
    u1 = rng.uniform(0.0, 1.0, length)
    k = float(rng.uniform(0.0, 1.0))
    alpha = regime.draw_alpha(rng)
    return controls_from(u1, alpha, k), alpha, k


def controls_from(u1: np.ndarray, alpha: float, k: float) -> np.ndarray:
    return np.stack([u1, alpha * u1 + (1.0 - alpha) * k])


def simulate_narma(spec: ScenarioSpec, controls: np.ndarray, length: int | None = None) -> np.ndarray:
    """States (n, length) driven by ``controls``; x[:, 0] = 0, lags before 0 read as 0."""
    u = np.asarray(controls, dtype=float)
    length = u.shape[1] if length is None else length
    if u.shape[0] != spec.n:
        raise ParameterError(f"controls have {u.shape[0]} rows, spec has n={spec.n}")
    if length <= spec.m:
        raise ParameterError(f"length must exceed m={spec.m}, got {length}")
    if u.shape[1] < length - 1:
        raise ParameterError(f"controls cover {u.shape[1]} steps, need {length - 1}")
    a, b, d = (np.asarray(v, dtype=float) for v in (spec.a, spec.b, spec.d))
    C = spec.C
    m = spec.m
    x = np.zeros((spec.n, length))
    for t in range(length - 1):
        window = x[:, max(t - m, 0) : t + 1].sum(axis=1)
        lagged = u[:, t - m] if t >= m else 0.0
        forcing = C @ (u[:, t] * lagged)
        x[:, t + 1] = a * x[:, t] + b * x[:, t] * window + forcing + d
        if not np.all(np.abs(x[:, t + 1]) <= OVERFLOW_GUARD):
            bad = int(np.argmax(~(np.abs(x[:, t + 1]) <= OVERFLOW_GUARD)))
            raise InstabilityError(
                f"NARMA trajectory diverged at t={t + 1} in state {bad + 1} "
                f"(a={spec.a[bad]}, b={spec.b[bad]}, d={spec.d[bad]}, C row={spec.coupling[bad]}, m={m})"
            )
    return x


def generate_series_set(
    spec: ScenarioSpec,
    regime: ControlRegime,
    n_series: int,
    length: int,
    seed: int,
    warmup: int | None = None,
) -> SeriesSet:
    """``n_series`` independent series of ``length`` steps after warm-up discard."""
    if spec.n != 2:
        raise ParameterError("correlated-control presets cover n=2 only")
    warmup = max(spec.m, 50) if warmup is None else warmup
    seeds = np.random.SeedSequence(seed).spawn(n_series)
    out = []
    for sid, ss in enumerate(seeds):
        u, alpha, _ = sample_controls(regime, warmup + length, ss)
        x = simulate_narma(spec, u)
        out.append(Series(x[:, warmup:], u[:, warmup:], sid, alpha))
    return SeriesSet(out, ("x1", "x2"), ("u1", "u2"), "alpha")
