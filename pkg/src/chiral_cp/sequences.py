"""Three-pulse chiral-resolving sequences and the analytic phase conditions."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .delta_system import Handedness, Transition, populations, sequence_propagator
from .su2_core import Pulse, TwoStatePropagator

HALF = "half"
FULL = "full"
PERFECT_TOL = 1e-12
PHASE_TOL = 1e-9

# Pulse sequences and the final state of L / R as printed (time order, left first).
PRINTED_TABLE: Tuple[Tuple[str, int, int], ...] = (
    ("P(pi/2) iQ(pi) S(pi/2)", 3, 2),
    ("P(pi/2) S(pi) iQ(pi/2)", 3, 1),
    ("iQ(pi/2) P(pi) S(pi/2)", 3, 2),
    ("iQ(pi/2) S(pi) P(pi/2)", 1, 2),
    ("P(pi/2) Q(pi) iS(pi/2)", 2, 3),
    ("P(pi/2) iS(pi) Q(pi/2)", 1, 3),
    ("Q(pi/2) P(pi) iS(pi/2)", 2, 3),
    ("Q(pi/2) iS(pi) P(pi/2)", 2, 1),
    ("iP(pi/2) Q(pi) S(pi/2)", 2, 3),
    ("iP(pi/2) S(pi) Q(pi/2)", 1, 3),
    ("Q(pi/2) iP(pi) S(pi/2)", 2, 3),
    ("Q(pi/2) S(pi) iP(pi/2)", 2, 1),
)


@dataclass(frozen=True)
class SequenceStep:
    transition: Transition
    role: str
    shifted: bool = False

    @property
    def area(self) -> float:
        return math.pi if self.role == FULL else math.pi / 2

    @property
    def phase(self) -> float:
        return math.pi / 2 if self.shifted else 0.0

    def label(self) -> str:
        area = "pi" if self.role == FULL else "pi/2"
        return f"{'i' if self.shifted else ''}{self.transition.name}({area})"


@dataclass(frozen=True)
class SequenceSpec:
    steps: Tuple[SequenceStep, SequenceStep, SequenceStep]

    def __post_init__(self):
        if len(self.steps) != 3:
            raise ValueError("a sequence has exactly three steps")
        if sum(s.role == FULL for s in self.steps) != 1:
            raise ValueError("exactly one step must be a pi pulse")
        if sum(s.shifted for s in self.steps) != 1:
            raise ValueError("exactly one step must carry the pi/2 phase shift")
        if len({s.transition for s in self.steps}) != 3:
            raise ValueError("the three steps must use distinct transitions")

    @classmethod
    def parse(cls, text: str) -> "SequenceSpec":
        """Inverse of :meth:`label`, e.g. ``"P(pi/2) S(pi) iQ(pi/2)"``."""
        steps = []
        for token in text.split():
            shifted = token.startswith("i")
            body = token[1:] if shifted else token
            name, _, rest = body.partition("(")
            role = FULL if rest.rstrip(")") == "pi" else HALF
            steps.append(SequenceStep(Transition[name], role, shifted))
        return cls(tuple(steps))

    def label(self) -> str:
        return " ".join(s.label() for s in self.steps)

    def as_steps(self, epsilon: float = 0.0, delta: float = 0.0):
        return [
            (s.transition, [Pulse(s.area, s.phase, epsilon, delta)]) for s in self.steps
        ]

    def propagator(self, hand, epsilon: float = 0.0, delta: float = 0.0) -> np.ndarray:
        return sequence_propagator(self.as_steps(epsilon, delta), hand)


@dataclass(frozen=True)
class ResolutionOutcome:
    final_L: int
    final_R: int
    contrast: float
    populations_L: Tuple[float, float, float]
    populations_R: Tuple[float, float, float]

    @property
    def perfect(self) -> bool:
        return (
            self.final_L != self.final_R
            and abs(self.populations_L[self.final_L - 1] - 1) <= PERFECT_TOL
            and abs(self.populations_R[self.final_R - 1] - 1) <= PERFECT_TOL
        )


def evaluate(spec: SequenceSpec) -> ResolutionOutcome:
    pl = populations(spec.propagator(Handedness.L))
    pr = populations(spec.propagator(Handedness.R))
    final_l = int(np.argmax(pl)) + 1
    final_r = int(np.argmax(pr)) + 1
    contrast = abs(pl[final_l - 1] - pr[final_l - 1])
    return ResolutionOutcome(final_l, final_r, float(contrast), tuple(pl), tuple(pr))


def candidate_sequences() -> List[SequenceSpec]:
    """All orderings x pi-pulse positions x single pi/2-shift positions."""
    out = []
    for order in itertools.permutations(Transition):
        for full_at in range(3):
            for shift_at in range(3):
                steps = tuple(
                    SequenceStep(t, FULL if k == full_at else HALF, k == shift_at)
                    for k, t in enumerate(order)
                )
                out.append(SequenceSpec(steps))
    return out


def enumerate_resolving_sequences() -> List[Tuple[SequenceSpec, ResolutionOutcome]]:
    """Exhaustive search for perfect-contrast three-pulse sequences."""
    found = []
    for spec in candidate_sequences():
        outcome = evaluate(spec)
        if outcome.perfect:
            found.append((spec, outcome))
    return found


class PhaseBranch(enum.Enum):
    L_TO_1 = "resolving-L1"  # alpha_P + alpha_Q + beta_P + beta_S = beta_Q
    L_TO_3 = "resolving-L3"  # ... = beta_Q + pi
    NONE = "non-resolving"

    @property
    def resolving(self) -> bool:
        return self is not PhaseBranch.NONE


def _wrapped(x: float) -> float:
    """Distance of ``x`` from the nearest multiple of 2pi."""
    return abs(math.remainder(x, 2 * math.pi))


def check_phase_condition(
    alpha_p: float, beta_p: float, beta_s: float, alpha_q: float, beta_q: float,
    tol: float = PHASE_TOL,
) -> PhaseBranch:
    """Classify block phases against the two chiral-resolution conditions.

    With ``mismatch = alpha_P + alpha_Q + beta_P + beta_S - beta_Q``, a
    mismatch of 0 (mod 2pi) keeps L in |1> and sends R to |3>; a mismatch of
    pi does the opposite.
    """
    values = (alpha_p, beta_p, beta_s, alpha_q, beta_q)
    if not all(math.isfinite(v) for v in values):
        raise ValueError("phases must be finite")
    mismatch = alpha_p + alpha_q + beta_p + beta_s - beta_q
    if _wrapped(mismatch) <= tol:
        return PhaseBranch.L_TO_1
    if _wrapped(mismatch - math.pi) <= tol:
        return PhaseBranch.L_TO_3
    return PhaseBranch.NONE


def ideal_blocks(alpha_p, beta_p, beta_s, alpha_q, beta_q):
    """The three ideal blocks (half, full, half) with the given phases, as loop steps."""
    r = 1 / math.sqrt(2)
    e = lambda x: complex(math.cos(x), math.sin(x))  # noqa: E731
    return [
        (Transition.P, TwoStatePropagator(r * e(alpha_p), r * e(beta_p))),
        (Transition.S, TwoStatePropagator(0.0, e(beta_s))),
        (Transition.Q, TwoStatePropagator(r * e(alpha_q), r * e(beta_q))),
    ]


def final_state_formula(alpha_p, beta_p, beta_s, alpha_q, beta_q) -> Dict[Handedness, np.ndarray]:
    """Closed-form final amplitudes from |1> for both handedness values."""
    e = lambda x: complex(math.cos(x), math.sin(x))  # noqa: E731
    out = {}
    for hand in Handedness:
        s = hand.q_sign
        c1 = 0.5 * e(alpha_p + alpha_q) + s * 0.5 * e(beta_q - beta_p - beta_s)
        c3 = -s * 0.5 * e(alpha_p - beta_q) + 0.5 * e(-(alpha_q + beta_p + beta_s))
        out[hand] = np.array([c1, 0.0, c3], dtype=complex)
    return out


def table_rows(results) -> List[Tuple[str, int, int, float]]:
    return [(spec.label(), o.final_L, o.final_R, o.contrast) for spec, o in results]
