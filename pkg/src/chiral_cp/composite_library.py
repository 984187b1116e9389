"""
Named composite pulses and the three-block chiral assemblies built from them.

Sequences are declarative tables of ``(area in units of pi, phase in rad)``
in time order, first pulse first. Two timing models are supported:

``"rabi"``
    constant Rabi frequency; each pulse lasts as long as its area.
``"equal"``
    every pulse lasts one pi-pulse time and its area is set by the amplitude.
    The doubly compensated ``D*`` sequences are solutions in this model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .delta_system import Handedness, Transition, embed, populations
from .su2_core import Pulse, TwoStatePropagator, reduce_phase, train_matrices

PI = math.pi
HALF = "half"
FULL = "full"
TIMINGS = ("rabi", "equal")
CHI = math.acos(-0.25)


def target_angle(target: str) -> float:
    if target == HALF:
        return PI / 2
    if target == FULL:
        return PI
    raise ValueError(f"unknown target {target!r}")


@dataclass(frozen=True)
class CompositeSequence:
    name: str
    target: str
    pulses: Tuple[Tuple[float, float], ...]
    stabilized: bool = False
    timing: str = "rabi"
    order: Optional[int] = None
    note: str = ""

    def __post_init__(self):
        target_angle(self.target)
        if self.timing not in TIMINGS:
            raise ValueError(f"unknown timing {self.timing!r}")
        if not self.pulses:
            raise ValueError("a composite sequence needs at least one pulse")
        pulses = tuple((float(a), float(p)) for a, p in self.pulses)
        if any(a <= 0 for a, _ in pulses):
            raise ValueError("pulse areas must be positive")
        object.__setattr__(self, "pulses", pulses)

    @property
    def areas_pi(self) -> np.ndarray:
        return np.array([a for a, _ in self.pulses])

    @property
    def phases(self) -> np.ndarray:
        return np.array([p for _, p in self.pulses])

    @property
    def areas(self) -> np.ndarray:
        return PI * self.areas_pi

    @property
    def durations(self) -> np.ndarray:
        if self.timing == "equal":
            return np.full(len(self.pulses), PI)
        return self.areas

    @property
    def total_area_pi(self) -> float:
        return float(self.areas_pi.sum())

    def __len__(self) -> int:
        return len(self.pulses)

    def propagator(self, epsilon=0.0, delta=0.0, phase_offset: float = 0.0) -> np.ndarray:
        """Composite 2x2 propagator; broadcasts over array-valued errors."""
        return train_matrices(
            self.areas, self.phases + phase_offset, epsilon, delta, self.durations
        )

    def two_state(self, epsilon: float = 0.0, delta: float = 0.0,
                  phase_offset: float = 0.0) -> TwoStatePropagator:
        return TwoStatePropagator.from_matrix(self.propagator(epsilon, delta, phase_offset))

    def as_pulses(self, epsilon: float = 0.0, delta: float = 0.0,
                  phase_offset: float = 0.0) -> List[Pulse]:
        return [
            Pulse(a, p + phase_offset, epsilon, delta, tau)
            for a, p, tau in zip(self.areas, self.phases, self.durations)
        ]

    def shifted(self, offset: float, name: Optional[str] = None) -> "CompositeSequence":
        pulses = tuple((a, reduce_phase(p + offset)) for a, p in self.pulses)
        return replace(self, name=name or self.name, pulses=pulses)

    def effective_phase(self) -> float:
        """Phase ``phi`` of the ideal single pulse ``b = -i |b| e^{i phi}`` this block acts as."""
        b = self.propagator()[0, 1]
        return reduce_phase(np.angle(b) + PI / 2)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "target": self.target,
            "timing": self.timing,
            "stabilized": self.stabilized,
            "order": self.order,
            "pulses": [{"area_pi_units": a, "phase_rad": p} for a, p in self.pulses],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CompositeSequence":
        pulses = tuple((p["area_pi_units"], p["phase_rad"]) for p in d["pulses"])
        return cls(
            name=d["name"], target=d["target"], pulses=pulses,
            stabilized=d.get("stabilized", False), timing=d.get("timing", "rabi"),
            order=d.get("order"),
        )


def reverse(c: CompositeSequence, name: Optional[str] = None) -> CompositeSequence:
    """Same pulses applied in the opposite order; phases unchanged."""
    if name is None:
        name = c.name[:-4] if c.name.endswith("_rev") else c.name + "_rev"
    return replace(c, name=name, pulses=tuple(reversed(c.pulses)))


def quadrature_offset(c: CompositeSequence) -> float:
    """Uniform phase offset that moves the block's effective phase onto pi/2.

    The natural effective phase is snapped to the nearest multiple of pi/2
    first, so rounding in printed phase tables is not absorbed into the offset.
    """
    quarter = PI / 2
    snapped = round(c.effective_phase() / quarter) * quarter
    return reduce_phase(quarter - snapped)


def _seq(name, target, pulses, **kw) -> CompositeSequence:
    return CompositeSequence(name, target, tuple(pulses), **kw)


def _palindrome(half: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    half = list(half)
    return half + half[-2::-1]


_D9_HALF_AREAS = (0.6771, 0.8579, 0.6623, 0.5174, 0.8812)
_D9_HALF_PHASES = (1.7517, 0.9043, 0.8820, 0.9809, 1.6481)
_D9_FULL_PHASES = (1 / 3, 0.7379, 1.8092, 1.7379, 2 / 3)

# Printed four-decimal sequences polished to exact compensating solutions
# (see cp_optimizer.refine); each rounds back to the printed table.
_EXACT: Dict[str, List[Tuple[float, float]]] = {
    "D1_half_exact": [
        (0.4556048840513495, 1.7116443668331045),
        (1.0, 1.0919723716391636),
        (1.0, 2.8383491708506323),
        (1.0, 1.0919723716391636),
        (0.4556048840513495, 1.7116443668331045),
    ],
    "D2_half_exact": [
        (0.4556048840513495, 1.7116443668331045),
        (1.0, 3.882404080395812),
        (1.0, 2.136027281184343),
        (1.0, 3.882404080395812),
        (0.4556048840513495, 1.7116443668331045),
    ],
    "D9_half_exact": [
        (0.6770766258995663, 5.503073460124262),
        (0.8579164411627891, 2.841043731212104),
        (0.6622994042288012, 2.77078099940261),
        (0.5174006234421882, 3.0817339638869834),
        (0.8811685591446127, 5.1775624604622745),
        (0.5174006234421882, 3.0817339638869834),
        (0.6622994042288012, 2.77078099940261),
        (0.8579164411627891, 2.841043731212104),
        (0.6770766258995663, 5.503073460124262),
    ],
    "D9_full_exact": [
        (1.0, 1.047197551196597),
        (1.0, 2.3183113008576606),
        (1.0, 5.68382015291192),
        (1.0, 5.459903954447453),
        (1.0, 2.094395102393193),
        (1.0, 5.459903954447453),
        (1.0, 5.68382015291192),
        (1.0, 2.3183113008576606),
        (1.0, 1.047197551196597),
    ],
}


def _builtin_sequences() -> List[CompositeSequence]:
    var = dict(stabilized=False, timing="rabi")
    const = dict(stabilized=True, timing="rabi")
    dbl = dict(stabilized=True, timing="equal")
    seqs = [
        _seq("C1_half", HALF, [(0.5, 0.0), (0.5, PI / 2)], **var),
        _seq("C2_half", HALF, [(0.5, 0.0), (1.0, 2 * PI / 3)], **var),
        _seq("C3_half", HALF, [(0.5, 0.0), (1.0, 3 * PI / 4), (0.5, PI)], **var),
        _seq("C4_half", HALF, [(0.5, 0.0), (0.5, PI / 2), (0.5, 0.0), (0.5, 3 * PI / 2)], **var),
        _seq("C1_full", FULL, [(1.0, PI / 3), (1.0, 5 * PI / 3), (1.0, PI / 3)], **const),
        _seq("C2_full", FULL, [(1.0, CHI), (1.0, 3 * CHI), (1.0, 3 * CHI), (1.0, CHI), (1.0, 0.0)],
             **const),
        _seq("D1_half", HALF, _palindrome([(0.4556, 0.5448 * PI), (1.0, 0.3476 * PI),
                                           (1.0, 0.9035 * PI)]), order=1, **dbl),
        _seq("D2_half", HALF, _palindrome([(0.4556, 0.5448 * PI), (1.0, 1.2358 * PI),
                                           (1.0, 0.6799 * PI)]), order=1, **dbl),
        _seq("D1_full", FULL, [(1.0, f * PI) for f in (5 / 6, 2 / 3, 7 / 6, 2 / 3, 5 / 6)],
             order=1, **dbl),
        _seq("D2_full", FULL, [(1.0, f * PI) for f in (5 / 6, 5 / 3, 7 / 6, 5 / 3, 5 / 6)],
             order=1, **dbl),
        _seq("D9_half", HALF, _palindrome(list(zip(_D9_HALF_AREAS,
                                                   [f * PI for f in _D9_HALF_PHASES]))),
             order=2, **dbl),
        _seq("D9_full", FULL, _palindrome([(1.0, f * PI) for f in _D9_FULL_PHASES]),
             order=2, **dbl),
    ]
    for name, pulses in _EXACT.items():
        base = next(s for s in seqs if s.name == name.replace("_exact", ""))
        seqs.append(replace(base, name=name, pulses=tuple(pulses), note=f"{base.name} polished"))
    return seqs


_CATALOG: Dict[str, CompositeSequence] = {s.name: s for s in _builtin_sequences()}


def builtin(name: str) -> CompositeSequence:
    try:
        return _CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown composite sequence {name!r}; known: {', '.join(_CATALOG)}") \
            from None


def register(c: CompositeSequence, replace_existing: bool = False) -> None:
    if c.name in _CATALOG and not replace_existing:
        raise ValueError(f"sequence {c.name!r} already registered")
    _CATALOG[c.name] = c


def catalog() -> List[CompositeSequence]:
    return list(_CATALOG.values())


@dataclass(frozen=True)
class AssemblyBlock:
    transition: Transition
    sequence: CompositeSequence
    phase_offset: float = 0.0

    def propagator(self, epsilon=0.0, delta=0.0) -> np.ndarray:
        return self.sequence.propagator(epsilon, delta, self.phase_offset)


@dataclass(frozen=True)
class ChiralAssembly:
    name: str
    blocks: Tuple[AssemblyBlock, AssemblyBlock, AssemblyBlock]
    note: str = field(default="", compare=False)

    def __post_init__(self):
        targets = [b.sequence.target for b in self.blocks]
        if targets != [HALF, FULL, HALF]:
            raise ValueError(f"assembly blocks must be half/full/half, got {targets}")

    @property
    def pulse_count(self) -> int:
        return sum(len(b.sequence) for b in self.blocks)

    @property
    def total_area_pi(self) -> float:
        return sum(b.sequence.total_area_pi for b in self.blocks)

    def loop_propagator(self, hand, epsilon=0.0, delta=0.0,
                        detuning_weights: Optional[Mapping[Transition, float]] = None
                        ) -> np.ndarray:
        """3x3 propagator of the whole assembly; broadcasts over ``epsilon``/``delta``.

        ``detuning_weights`` scales the shared detuning per transition (default
        1 for all three).
        """
        total = None
        for block in self.blocks:
            w = 1.0 if detuning_weights is None else detuning_weights.get(block.transition, 1.0)
            u = embed(block.transition, block.propagator(epsilon, np.asarray(delta) * w), hand)
            total = u if total is None else u @ total
        return total

    def final_states(self) -> Dict[Handedness, int]:
        """Most populated state (1..3) of each enantiomer at the ideal point."""
        return {
            h: int(np.argmax(populations(self.loop_propagator(h)))) + 1 for h in Handedness
        }

    def describe(self) -> str:
        parts = []
        for b in self.blocks:
            prefix = "i" if b.phase_offset else ""
            parts.append(f"{b.sequence.name}[{prefix}{b.transition.name}]")
        return " ".join(parts)


def _single() -> Tuple[CompositeSequence, CompositeSequence]:
    half = CompositeSequence("single_half", HALF, ((0.5, 0.0),))
    full = CompositeSequence("single_full", FULL, ((1.0, 0.0),))
    return half, full


def _make(name: str, p: CompositeSequence, s: CompositeSequence, q: CompositeSequence,
          note: str = "") -> ChiralAssembly:
    return ChiralAssembly(
        name,
        (
            AssemblyBlock(Transition.P, p),
            AssemblyBlock(Transition.S, s, quadrature_offset(s)),
            AssemblyBlock(Transition.Q, q),
        ),
        note,
    )


def _assembly_table() -> Dict[str, Tuple]:
    half, full = _single()
    b = builtin
    table = {
        "single": (half, full, half, "P(pi/2) iS(pi) Q(pi/2)"),
        "T5": (b("C1_half"), b("C1_full"), reverse(b("C1_half")), ""),
        "T6": (b("C2_half"), b("C1_full"), reverse(b("C2_half")), ""),
        "T7": (b("C3_half"), b("C1_full"), reverse(b("C3_half")), ""),
        "T9": (b("C3_half"), b("C2_full"), reverse(b("C3_half")), ""),
        "CP5-printed": (b("D2_half"), b("D2_full"), b("D2_half"), "four-decimal tables"),
        "CP9-printed": (b("D9_half"), b("D9_full"), b("D9_half"), "four-decimal tables"),
    }
    if _EXACT:
        table["CP5"] = (b("D2_half_exact"), b("D2_full"), b("D2_half_exact"), "")
        table["CP5a"] = (b("D1_half_exact"), b("D1_full"), b("D1_half_exact"), "")
        table["CP9"] = (b("D9_half_exact"), b("D9_full_exact"), b("D9_half_exact"), "")
    return table


ASSEMBLY_NAMES = tuple(_assembly_table())


def assemble(name: str) -> ChiralAssembly:
    table = _assembly_table()
    if name not in table:
        raise KeyError(f"unknown assembly {name!r}; known: {', '.join(table)}")
    p, s, q, note = table[name]
    return _make(name, p, s, q, note)


def custom_assembly(name: str, p: CompositeSequence, s: CompositeSequence,
                    q: CompositeSequence) -> ChiralAssembly:
    return _make(name, p, s, q)
