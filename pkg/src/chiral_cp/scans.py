"""Population and chiral-contrast landscapes over pulse-area and detuning errors."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np
from scipy import ndimage

from .composite_library import ChiralAssembly
from .delta_system import Handedness, Transition, populations

CSV_HEADER = "epsilon,delta,P1_L,P2_L,P3_L,P1_R,P2_R,P3_R,contrast"


@dataclass(frozen=True)
class ScanGrid:
    eps_min: float = -0.5
    eps_max: float = 0.5
    eps_steps: int = 101
    delta_min: float = -1.0
    delta_max: float = 1.0
    delta_steps: int = 101

    def __post_init__(self):
        for lo, hi, n, label in ((self.eps_min, self.eps_max, self.eps_steps, "eps"),
                                 (self.delta_min, self.delta_max, self.delta_steps, "delta")):
            if int(n) != n or n < 1:
                raise ValueError(f"{label} steps must be a positive integer, got {n}")
            if n > 1 and not lo < hi:
                raise ValueError(f"{label} range needs min < max, got [{lo}, {hi}]")

    @classmethod
    def line(cls, eps_min=-0.5, eps_max=0.5, eps_steps=1001, delta=0.0) -> "ScanGrid":
        """1D grid in epsilon at fixed detuning."""
        return cls(eps_min, eps_max, eps_steps, delta, delta, 1)

    @classmethod
    def point(cls, epsilon: float, delta: float) -> "ScanGrid":
        return cls(epsilon, epsilon, 1, delta, delta, 1)

    @property
    def eps(self) -> np.ndarray:
        if self.eps_steps == 1:
            return np.array([float(self.eps_min)])
        return np.linspace(self.eps_min, self.eps_max, self.eps_steps)

    @property
    def delta(self) -> np.ndarray:
        if self.delta_steps == 1:
            return np.array([float(self.delta_min)])
        return np.linspace(self.delta_min, self.delta_max, self.delta_steps)

    @property
    def is_1d(self) -> bool:
        return self.delta_steps == 1

    def describe(self) -> Dict[str, float]:
        return {
            "eps": f"{self.eps_min}:{self.eps_max}:{self.eps_steps}",
            "delta": f"{self.delta_min}:{self.delta_max}:{self.delta_steps}",
        }


@dataclass
class ScanResult:
    """Populations on a grid; arrays are indexed ``[delta_index, eps_index]``."""

    grid: ScanGrid
    assembly: str
    pop_L: np.ndarray
    pop_R: np.ndarray
    contrast: np.ndarray
    target_hand: Handedness
    config: Dict[str, object] = field(default_factory=dict)

    @property
    def eps(self) -> np.ndarray:
        return self.grid.eps

    @property
    def delta(self) -> np.ndarray:
        return self.grid.delta

    def rows(self) -> Iterable[Tuple[float, ...]]:
        """Grid points in CSV order: delta outer, epsilon inner."""
        for i, d in enumerate(self.delta):
            for j, e in enumerate(self.eps):
                yield (e, d, *self.pop_L[i, j], *self.pop_R[i, j], self.contrast[i, j])

    def _comment_header(self) -> str:
        lines = [f"# assembly={self.assembly}", f"# contrast=P3_{self.target_hand.value}-P3_"
                 f"{'R' if self.target_hand is Handedness.L else 'L'}"]
        for k, v in {**self.grid.describe(), **self.config}.items():
            lines.append(f"# {k}={v}")
        return "\n".join(lines) + "\n"

    def to_csv(self, comments: bool = True) -> str:
        buf = io.StringIO()
        if comments:
            buf.write(self._comment_header())
        buf.write(CSV_HEADER + "\n")
        for row in self.rows():
            buf.write(",".join(f"{v:.12g}" for v in row) + "\n")
        return buf.getvalue()

    def to_matrix(self) -> str:
        """Gnuplot ``matrix nonuniform`` layout of the contrast."""
        buf = io.StringIO()
        buf.write(self._comment_header())
        buf.write(" ".join([f"{len(self.eps)}"] + [f"{e:.12g}" for e in self.eps]) + "\n")
        for i, d in enumerate(self.delta):
            buf.write(" ".join([f"{d:.12g}"] + [f"{c:.12g}" for c in self.contrast[i]]) + "\n")
        return buf.getvalue()


def resolved_hand(assembly: ChiralAssembly) -> Handedness:
    """Enantiomer that ends in |3> at the error-free point."""
    finals = assembly.final_states()
    for h in Handedness:
        if finals[h] == 3:
            return h
    raise ValueError(f"assembly {assembly.name!r} sends neither enantiomer to |3>")


def scan(assembly: ChiralAssembly, grid: Optional[ScanGrid] = None,
         init=(1, 0, 0), detuning_weights: Optional[Mapping[Transition, float]] = None,
         ) -> ScanResult:
    """Exact populations of both enantiomers at every grid point.

    The contrast is P3 of the enantiomer that reaches |3> at the origin minus
    P3 of the other one, so 1 always means perfect resolution.
    """
    grid = grid or ScanGrid()
    e, d = np.meshgrid(grid.eps, grid.delta)
    pops = {
        h: populations(assembly.loop_propagator(h, e, d, detuning_weights), init)
        for h in Handedness
    }
    hand = resolved_hand(assembly)
    other = Handedness.R if hand is Handedness.L else Handedness.L
    contrast = pops[hand][..., 2] - pops[other][..., 2]
    config = {"init": ",".join(f"{complex(c):g}" for c in init)}
    if detuning_weights:
        config["detuning_weights"] = ",".join(
            f"{t.name}:{w:g}" for t, w in detuning_weights.items())
    return ScanResult(grid, assembly.name, pops[Handedness.L], pops[Handedness.R],
                      contrast, hand, config)


def _nearest(values: np.ndarray, x: float) -> int:
    return int(np.argmin(np.abs(values - x)))


def high_fidelity_width(result: ScanResult, threshold: float = 0.99) -> float:
    """Size of the connected high-contrast region containing the error-free point.

    For a 1D scan this is the epsilon length ``(n - 1) * step`` of the run of
    grid points around epsilon = 0 with contrast >= ``threshold``. For a 2D
    scan it is the fraction of grid points in the connected component that
    contains the origin. Returns 0 if the origin itself fails.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    good = result.contrast >= threshold
    i0 = _nearest(result.delta, 0.0)
    j0 = _nearest(result.eps, 0.0)
    if not good[i0, j0]:
        return 0.0
    if result.grid.is_1d:
        row = good[0]
        lo = j0
        while lo > 0 and row[lo - 1]:
            lo -= 1
        hi = j0
        while hi < len(row) - 1 and row[hi + 1]:
            hi += 1
        eps = result.eps
        return float(eps[hi] - eps[lo])
    labels, _ = ndimage.label(good)
    return float(np.mean(labels == labels[i0, j0]))
