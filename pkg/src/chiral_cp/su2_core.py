"""
Exact propagators for rectangular pulses on a single two-state transition.

A pulse of nominal area ``A`` and phase ``phi`` applied for a time ``tau``
(in units of 1/Omega0, Omega0 being the reference Rabi frequency) with a
fractional Rabi-frequency error ``epsilon`` and a detuning ``delta`` (in
units of Omega0) is generated by the rotating-frame Hamiltonian

    H = (Omega0 / 2) * [[-delta, r (1 + eps) e^{i phi}],
                        [r (1 + eps) e^{-i phi}, delta]],   r = A / tau

and produces the Cayley-Klein pair

    a = cos(Theta/2) + i (delta / g) sin(Theta/2)
    b = -i (r (1 + eps) / g) sin(Theta/2) e^{i phi}

with ``g = sqrt(r^2 (1 + eps)^2 + delta^2)`` and ``Theta = tau * g``.

By default ``tau = A`` (constant Rabi frequency, duration proportional to the
area). Setting ``tau = pi`` for every pulse gives the equal-duration model in
which the area is set by the amplitude; the two agree whenever ``delta = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
UNITARITY_TOL = 1e-12


def reduce_phase(phi: float) -> float:
    r = float(phi) % TWO_PI
    return 0.0 if r >= TWO_PI else r


@dataclass(frozen=True)
class Pulse:
    """One rectangular drive on one transition.

    ``area`` is the nominal temporal area in radians, ``phase`` the relative
    field phase (stored reduced to [0, 2pi)), ``epsilon`` the fractional
    Rabi-frequency error and ``delta`` the detuning in units of Omega0.
    ``duration`` defaults to ``area``.
    """

    area: float
    phase: float = 0.0
    epsilon: float = 0.0
    delta: float = 0.0
    duration: Optional[float] = None

    def __post_init__(self):
        values = [self.area, self.phase, self.epsilon, self.delta]
        if self.duration is not None:
            values.append(self.duration)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"non-finite pulse parameter in {values}")
        if self.area <= 0:
            raise ValueError(f"pulse area must be positive, got {self.area}")
        if self.duration is not None and self.duration <= 0:
            raise ValueError(f"pulse duration must be positive, got {self.duration}")
        object.__setattr__(self, "phase", reduce_phase(self.phase))

    @property
    def time(self) -> float:
        return self.area if self.duration is None else self.duration


@dataclass(frozen=True)
class TwoStatePropagator:
    """Cayley-Klein pair (a, b) of ``[[a, b], [-b*, a*]]``."""

    a: complex
    b: complex

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "b", complex(self.b))

    @classmethod
    def identity(cls) -> "TwoStatePropagator":
        return cls(1.0, 0.0)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "TwoStatePropagator":
        return cls(m[0, 0], m[0, 1])

    @property
    def matrix(self) -> np.ndarray:
        a, b = self.a, self.b
        return np.array([[a, b], [-b.conjugate(), a.conjugate()]], dtype=complex)

    @property
    def norm_error(self) -> float:
        return abs(abs(self.a) ** 2 + abs(self.b) ** 2 - 1.0)

    def inverse(self) -> "TwoStatePropagator":
        return TwoStatePropagator(self.a.conjugate(), -self.b)

    def __matmul__(self, other: "TwoStatePropagator") -> "TwoStatePropagator":
        # self acts after other
        a = self.a * other.a - self.b * other.b.conjugate()
        b = self.a * other.b + self.b * other.a.conjugate()
        return TwoStatePropagator(a, b)


def rotation_matrices(area, phase, epsilon=0.0, delta=0.0, duration=None) -> np.ndarray:
    """Vectorised single-pulse propagators.

    All arguments broadcast against each other; the result has shape
    ``broadcast_shape + (2, 2)``.
    """
    area = np.asarray(area, dtype=float)
    tau = area if duration is None else np.asarray(duration, dtype=float)
    rabi = (area / tau) * (1.0 + np.asarray(epsilon, dtype=float))
    delta = np.asarray(delta, dtype=float)
    g = np.hypot(rabi, delta)
    half = 0.5 * tau * g
    s = np.sin(half)
    with np.errstate(invalid="ignore", divide="ignore"):
        s_over_g = np.where(g > 0, s / np.where(g > 0, g, 1.0), 0.5 * tau)
    a = np.cos(half) + 1j * delta * s_over_g
    b = -1j * rabi * s_over_g * np.exp(1j * np.asarray(phase, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    out = np.empty(a.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = a
    out[..., 0, 1] = b
    out[..., 1, 0] = -b.conj()
    out[..., 1, 1] = a.conj()
    return out


def train_matrices(areas, phases, epsilon=0.0, delta=0.0, durations=None) -> np.ndarray:
    """Composite propagator of a pulse train (time order, first pulse first).

    ``epsilon`` and ``delta`` may be arrays (e.g. a scan grid); the result has
    their broadcast shape plus ``(2, 2)``.
    """
    eps = np.asarray(epsilon, dtype=float)
    det = np.asarray(delta, dtype=float)
    shape = np.broadcast_shapes(eps.shape, det.shape)
    total = np.broadcast_to(np.eye(2, dtype=complex), shape + (2, 2)).copy()
    if durations is None:
        durations = [None] * len(areas)
    for area, phase, tau in zip(areas, phases, durations):
        total = rotation_matrices(area, phase, eps, det, tau) @ total
    return total


def propagate_pulse(p: Pulse) -> TwoStatePropagator:
    """Exact propagator of a single rectangular pulse."""
    m = rotation_matrices(p.area, p.phase, p.epsilon, p.delta, p.time)
    return TwoStatePropagator(m[0, 0], m[0, 1])


def compose(train: Sequence[TwoStatePropagator]) -> TwoStatePropagator:
    """Product of a time-ordered train; the first element acts first."""
    if len(train) == 0:
        raise ValueError("cannot compose an empty pulse train")
    total = train[0]
    for u in train[1:]:
        total = u @ total
    return total


def propagate_train(pulses: Iterable[Pulse]) -> TwoStatePropagator:
    return compose([propagate_pulse(p) for p in pulses])


def _phase_or_none(z: complex, tol: float) -> Optional[float]:
    if abs(z) <= tol:
        return None
    return reduce_phase(math.atan2(z.imag, z.real))


def cayley_klein_phases(u: TwoStatePropagator, tol: float = 1e-12):
    """Return ``(alpha, beta) = (arg a, arg b)`` in [0, 2pi).

    A phase whose parameter vanishes (|a| or |b| <= ``tol``) is reported as
    ``None``.
    """
    return _phase_or_none(u.a, tol), _phase_or_none(u.b, tol)
