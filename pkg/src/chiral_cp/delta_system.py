"""Closed-loop three-state (Delta) system built from two-state propagators.

States are ordered (|1>, |2>, |3>). The P field couples 1-2, S couples 2-3
and Q couples 1-3; the two enantiomers differ only in the sign of the Q
coupling, which flips the sign of ``b`` in the embedded Q block.
"""

from __future__ import annotations

import enum
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from .su2_core import Pulse, TwoStatePropagator, propagate_train

NORMALIZATION_TOL = 1e-12


class Transition(enum.Enum):
    P = (0, 1)
    S = (1, 2)
    Q = (0, 2)

    @property
    def states(self) -> Tuple[int, int]:
        """Zero-based indices of the coupled pair; the first index carries ``a``."""
        return self.value


class Handedness(enum.Enum):
    L = "L"
    R = "R"

    @property
    def q_sign(self) -> int:
        return 1 if self is Handedness.L else -1


def _coerce_transition(t) -> Transition:
    return t if isinstance(t, Transition) else Transition[str(t)]


def _coerce_hand(h) -> Handedness:
    return h if isinstance(h, Handedness) else Handedness(str(h))


def embed(t, u: Union[TwoStatePropagator, np.ndarray], h=Handedness.L) -> np.ndarray:
    """Place a 2x2 propagator on transition ``t`` of the 3x3 loop.

    ``u`` may be a :class:`TwoStatePropagator` or an array of 2x2 matrices of
    shape ``(..., 2, 2)``; in the latter case the result is ``(..., 3, 3)``.
    """
    t = _coerce_transition(t)
    h = _coerce_hand(h)
    m = u.matrix if isinstance(u, TwoStatePropagator) else np.asarray(u, dtype=complex)
    i, j = t.states
    sign = h.q_sign if t is Transition.Q else 1
    out = np.zeros(m.shape[:-2] + (3, 3), dtype=complex)
    idle = 3 - i - j
    out[..., idle, idle] = 1.0
    out[..., i, i] = m[..., 0, 0]
    out[..., j, j] = m[..., 1, 1]
    out[..., i, j] = sign * m[..., 0, 1]
    out[..., j, i] = sign * m[..., 1, 0]
    return out


Step = Tuple[Union[Transition, str], Union[Sequence[Pulse], TwoStatePropagator]]


def sequence_propagator(seq: Sequence[Step], h=Handedness.L) -> np.ndarray:
    """Time-ordered product of the steps of a loop sequence.

    Each step is ``(transition, train)`` where ``train`` is a non-empty list
    of :class:`Pulse` (all on that transition) or an already composed
    :class:`TwoStatePropagator`.
    """
    if len(seq) == 0:
        raise ValueError("sequence has no steps")
    total = np.eye(3, dtype=complex)
    for t, train in seq:
        if isinstance(train, TwoStatePropagator):
            u = train
        else:
            if len(train) == 0:
                raise ValueError(f"step on {t} has an empty pulse train")
            u = propagate_train(train)
        total = embed(t, u, h) @ total
    return total


def basis_state(k: int) -> np.ndarray:
    """|k> for k in 1..3."""
    v = np.zeros(3, dtype=complex)
    v[k - 1] = 1.0
    return v


def populations(u: np.ndarray, init: Iterable[complex] = (1, 0, 0)) -> np.ndarray:
    """Final populations ``|(u @ init)_k|^2``; broadcasts over leading axes of ``u``."""
    psi = np.asarray(init, dtype=complex)
    if abs(np.vdot(psi, psi).real - 1.0) > NORMALIZATION_TOL:
        raise ValueError("initial state is not normalized")
    return np.abs(np.asarray(u) @ psi) ** 2
