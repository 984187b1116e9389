"""
Numerical design and certification of error-compensated composite pulses.

Two independent routes to the error expansion of a composite propagator
U(eps, delta) are provided:

* :func:`series_coefficients` propagates truncated bivariate Taylor series
  through the pulse product analytically. The optimizer cost is built on it.
* :func:`taylor_coefficients` takes central finite differences of the plain
  propagator with Richardson extrapolation. This is the certificate.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares, minimize

from .composite_library import FULL, HALF, PI, CompositeSequence, reverse, target_angle

COST_TOL = 1e-10
SOLVED_COST = 1e-20
ORIGIN_WEIGHT = 1e3
FD_STEP = 1e-3
RICHARDSON_TOL = 1e-5
FIRST_ORDER_TOL = 1e-6
SECOND_ORDER_TOL = 1e-5

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
EYE = np.eye(2, dtype=complex)


# --------------------------------------------------------------------------
# truncated bivariate series in (eps, delta)
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def monomials(order: int) -> Tuple[Tuple[int, int], ...]:
    """Exponents (i, j) of eps^i delta^j with i + j <= order, by total degree."""
    return tuple((d - j, j) for d in range(order + 1) for j in range(d + 1))


@lru_cache(maxsize=None)
def _product_table(order: int) -> np.ndarray:
    mons = monomials(order)
    index = {m: k for k, m in enumerate(mons)}
    table = np.zeros((len(mons),) * 3)
    for a, (i1, j1) in enumerate(mons):
        for b, (i2, j2) in enumerate(mons):
            c = index.get((i1 + i2, j1 + j2))
            if c is not None:
                table[a, b, c] = 1.0
    return table


@lru_cache(maxsize=None)
def _pairs(order: int):
    """Index pairs contributing to a truncated product, with their output slot."""
    a, b, c = np.nonzero(_product_table(order))
    select = np.zeros((len(a), len(monomials(order))))
    select[np.arange(len(a)), c] = 1.0
    return a, b, select


def _scalar_mul(x: np.ndarray, y: np.ndarray, order: int) -> np.ndarray:
    return np.einsum("abc,...a,...b->...c", _product_table(order), x, y)


def _matrix_mul(x: np.ndarray, y: np.ndarray, order: int) -> np.ndarray:
    """Truncated product of matrix-valued series of shape ``(..., K, 2, 2)``."""
    a, b, select = _pairs(order)
    prod = x[..., a, :, :] @ y[..., b, :, :]
    return np.einsum("...pij,pc->...cij", prod, select)


def _envelope_derivatives(tau: np.ndarray, x0: np.ndarray, order: int):
    """Derivatives in x at x0 of C = cos(t) and S = sin(t)/t, t = tau sqrt(x) / 2.

    Uses dt/dx = tau^2 / (8 t). Returns two arrays of shape ``(n_pulses, order + 1)``.
    """
    t = 0.5 * tau * np.sqrt(x0)
    k = tau * tau / 8.0
    c = np.cos(t)
    sinc = np.sin(t) / t
    dc = [c]
    ds = [sinc]
    if order >= 1:
        g = (c - sinc) / (t * t)
        dc.append(-k * sinc)
        ds.append(k * g)
    if order >= 2:
        dc.append(-k * ds[1])
        ds.append(k * ((dc[1] - ds[1]) / (t * t) - 2 * k * g / (t * t)))
    return np.stack(dc, axis=1), np.stack(ds, axis=1)


def pulse_series(area, phase, duration, order: int) -> np.ndarray:
    """Taylor coefficients of single-pulse propagators.

    Arguments are scalars or equal-length arrays; the result has shape
    ``(n_pulses, n_monomials, 2, 2)`` (leading axis dropped for scalars).
    """
    scalar = np.ndim(area) == 0
    area, phase, tau = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (area, phase, duration))
    mons = monomials(order)
    K = len(mons)
    r = area / tau
    unit = np.zeros(K)
    unit[0] = 1.0
    eps = np.zeros(K)
    det = np.zeros(K)
    if order >= 1:
        eps[mons.index((1, 0))] = 1.0
        det[mons.index((0, 1))] = 1.0
    # x = r^2 (1 + eps)^2 + delta^2 = x0 + y with x0 = r^2
    one_eps = unit + eps
    y = (r * r)[:, None] * _scalar_mul(one_eps, one_eps, order) + _scalar_mul(det, det, order)
    x0 = y[:, 0].copy()
    y[:, 0] = 0.0
    dc, ds = _envelope_derivatives(tau, x0, order)
    cser = np.zeros((len(r), K))
    sser = np.zeros((len(r), K))
    ypow = np.broadcast_to(unit, (len(r), K))
    for k in range(order + 1):
        cser += (dc[:, k] / math.factorial(k))[:, None] * ypow
        sser += (ds[:, k] / math.factorial(k))[:, None] * ypow
        ypow = _scalar_mul(ypow, y, order)
    n_phi = (np.cos(phase)[:, None, None] * SIGMA_X - np.sin(phase)[:, None, None] * SIGMA_Y)
    gen = (r[:, None, None, None] * one_eps[None, :, None, None] * n_phi[:, None]
           - det[None, :, None, None] * SIGMA_Z)
    sinc_part = np.einsum("abc,pa,pbij->pcij", _product_table(order), sser, gen)
    out = cser[..., None, None] * EYE - 0.5j * tau[:, None, None, None] * sinc_part
    return out[0] if scalar else out


def series_coefficients(c: CompositeSequence, order: int, phase_offset: float = 0.0
                        ) -> Dict[Tuple[int, int], np.ndarray]:
    """Analytic Taylor coefficients of the composite propagator up to ``order``."""
    series = pulse_series(c.areas, c.phases + phase_offset, c.durations, order)
    total = series[0]
    for u in series[1:]:
        total = _matrix_mul(u, total, order)
    return dict(zip(monomials(order), total))


# --------------------------------------------------------------------------
# deviation and certificate
# --------------------------------------------------------------------------

def ideal_target(target: str, u0: np.ndarray,
                 target_phases: Optional[Tuple[Optional[float], Optional[float]]] = None
                 ) -> np.ndarray:
    """Ideal rotation for ``target``; unspecified phases are taken from ``u0``."""
    theta = target_angle(target)
    mag_a, mag_b = math.cos(theta / 2), math.sin(theta / 2)
    alpha, beta = target_phases if target_phases is not None else (None, None)
    if alpha is None:
        alpha = float(np.angle(u0[0, 0]))
    if beta is None:
        beta = float(np.angle(u0[0, 1]))
    a = mag_a * complex(math.cos(alpha), math.sin(alpha)) if mag_a > 1e-15 else 0j
    b = mag_b * complex(math.cos(beta), math.sin(beta))
    return np.array([[a, b], [-b.conjugate(), a.conjugate()]])


def deviation(c: CompositeSequence, epsilon: float = 0.0, delta: float = 0.0,
              target_phases=None) -> float:
    """Frobenius distance of the composed block from its ideal rotation.

    The ideal rotation is fixed by the block at the error-free point (or by
    ``target_phases``), so off-origin deviations include phase drift.
    """
    u0 = c.propagator()
    ideal = ideal_target(c.target, u0, target_phases)
    return float(np.linalg.norm(c.propagator(epsilon, delta) - ideal))


@dataclass
class ErrorCoefficients:
    """Magnitudes of Taylor coefficients of U(eps, delta) - U_ideal."""

    coefficients: Dict[Tuple[int, int], float]
    max_order: int
    unstable: bool = False
    richardson_gap: float = 0.0

    def __getitem__(self, key: Tuple[int, int]) -> float:
        return self.coefficients[key]

    def max_at_order(self, k: int) -> float:
        return max(v for (i, j), v in self.coefficients.items() if i + j == k)

    def certifies(self, order: int, first_tol: float = FIRST_ORDER_TOL,
                  second_tol: float = SECOND_ORDER_TOL, origin_tol: float = FIRST_ORDER_TOL
                  ) -> bool:
        if order > self.max_order or self.unstable:
            return False
        ok = self.coefficients[(0, 0)] < origin_tol and self.max_at_order(1) < first_tol
        if order >= 2:
            ok = ok and self.max_at_order(2) < second_tol
        return ok

    def to_dict(self) -> dict:
        return {
            "coefficients": {f"eps{i}_delta{j}": v for (i, j), v in
                             sorted(self.coefficients.items(), key=lambda kv: sum(kv[0]))},
            "max_order": self.max_order,
            "unstable": self.unstable,
        }


def _fd_estimates(c: CompositeSequence, h: float, max_order: int, offset: float):
    u = lambda e, d: c.propagator(e, d, offset)  # noqa: E731
    u0 = u(0.0, 0.0)
    est = {
        (1, 0): (u(h, 0) - u(-h, 0)) / (2 * h),
        (0, 1): (u(0, h) - u(0, -h)) / (2 * h),
    }
    if max_order >= 2:
        est[(2, 0)] = (u(h, 0) - 2 * u0 + u(-h, 0)) / (2 * h * h)
        est[(0, 2)] = (u(0, h) - 2 * u0 + u(0, -h)) / (2 * h * h)
        est[(1, 1)] = (u(h, h) - u(h, -h) - u(-h, h) + u(-h, -h)) / (4 * h * h)
    return est


def taylor_coefficients(c: CompositeSequence, max_order: int = 2, h: float = FD_STEP,
                        phase_offset: float = 0.0, target_phases=None) -> ErrorCoefficients:
    """Finite-difference Taylor coefficients with a Richardson stability check.

    Central differences are taken at ``h``, ``h/2`` and ``h/4``; the two
    Richardson extrapolants (h, h/2) and (h/2, h/4) must agree to
    ``RICHARDSON_TOL`` relative to ``max(1, |value|)`` or the result is
    flagged unstable.
    """
    if max_order not in (1, 2):
        raise ValueError("max_order must be 1 or 2")
    shifted = c.shifted(phase_offset) if phase_offset else c
    e1 = _fd_estimates(shifted, h, max_order, 0.0)
    e2 = _fd_estimates(shifted, h / 2, max_order, 0.0)
    e4 = _fd_estimates(shifted, h / 4, max_order, 0.0)
    coeffs = {(0, 0): deviation(shifted, target_phases=target_phases)}
    unstable = False
    gap = 0.0
    for key in e1:
        r1 = (4 * e2[key] - e1[key]) / 3
        r2 = (4 * e4[key] - e2[key]) / 3
        value = float(np.linalg.norm(r2))
        diff = float(np.linalg.norm(r1 - r2))
        gap = max(gap, diff)
        if diff > RICHARDSON_TOL * max(1.0, value):
            unstable = True
        coeffs[key] = value
    return ErrorCoefficients(coeffs, max_order, unstable, gap)


# --------------------------------------------------------------------------
# templates and the search
# --------------------------------------------------------------------------

SYMMETRIES = ("palindromic-areas-and-phases", "palindromic-phases", "free")
_SYMMETRY_ALIASES = {"palindromic": "palindromic-areas-and-phases"}


@dataclass(frozen=True)
class Template:
    """Shape of a composite pulse to be designed.

    ``areas`` lists the nominal area (units of pi) of every independent area
    slot; ``free_areas`` marks which of them the search may vary.
    """

    name: str
    n_pulses: int
    target: str
    symmetry: str = "palindromic-areas-and-phases"
    areas: Tuple[float, ...] = ()
    free_areas: Tuple[bool, ...] = ()
    timing: str = "equal"
    target_phases: Optional[Tuple[Optional[float], Optional[float]]] = None
    area_range: Tuple[float, float] = (0.1, 1.0)

    def __post_init__(self):
        target_angle(self.target)
        object.__setattr__(self, "symmetry", _SYMMETRY_ALIASES.get(self.symmetry, self.symmetry))
        if self.symmetry not in SYMMETRIES:
            raise ValueError(f"unknown symmetry {self.symmetry!r}")
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be positive")
        areas = tuple(self.areas) or (1.0,) * self.n_area_slots
        free = tuple(self.free_areas) or (False,) * len(areas)
        if len(areas) != self.n_area_slots or len(free) != len(areas):
            raise ValueError(
                f"template {self.name!r} needs {self.n_area_slots} area slots, got {len(areas)}")
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "free_areas", free)

    @property
    def n_phase_slots(self) -> int:
        return self.n_pulses if self.symmetry == "free" else (self.n_pulses + 1) // 2

    @property
    def n_area_slots(self) -> int:
        if self.symmetry == "palindromic-areas-and-phases":
            return (self.n_pulses + 1) // 2
        return self.n_pulses

    @property
    def n_params(self) -> int:
        return sum(self.free_areas) + self.n_phase_slots

    def _mirror(self, values: Sequence[float]) -> List[float]:
        values = list(values)
        return values + values[: self.n_pulses // 2][::-1]

    def build(self, x: Sequence[float], name: str = "optimized") -> CompositeSequence:
        x = np.asarray(x, dtype=float)
        n_free = sum(self.free_areas)
        free_vals = iter(np.abs(x[:n_free]))
        areas = [max(next(free_vals), 1e-3) if f else a
                 for a, f in zip(self.areas, self.free_areas)]
        phases = list(np.mod(x[n_free:], 2 * PI))
        if self.symmetry == "palindromic-areas-and-phases":
            areas = self._mirror(areas)
        if self.symmetry != "free":
            phases = self._mirror(phases)
        return CompositeSequence(
            name, self.target, tuple(zip(areas, phases)), stabilized=True, timing=self.timing,
        )

    def params_of(self, c: CompositeSequence) -> np.ndarray:
        if len(c) != self.n_pulses:
            raise ValueError("sequence length does not match template")
        areas = list(c.areas_pi[: self.n_area_slots])
        phases = list(c.phases[: self.n_phase_slots])
        free = [a for a, f in zip(areas, self.free_areas) if f]
        return np.array(free + phases, dtype=float)

    def random_start(self, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.area_range
        free = rng.uniform(lo, hi, sum(self.free_areas))
        phases = rng.uniform(0.0, 2 * PI, self.n_phase_slots)
        return np.concatenate([free, phases])

    def to_dict(self) -> dict:
        return {
            "name": self.name, "n_pulses": self.n_pulses, "target": self.target,
            "symmetry": self.symmetry, "areas": list(self.areas),
            "free_areas": list(self.free_areas), "timing": self.timing,
            "target_phases": None if self.target_phases is None else list(self.target_phases),
            "area_range": list(self.area_range),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Template":
        tp = d.get("target_phases")
        return cls(
            name=d.get("name", "custom"), n_pulses=int(d["n_pulses"]), target=d["target"],
            symmetry=d.get("symmetry", "palindromic-areas-and-phases"), areas=tuple(d.get("areas", ())),
            free_areas=tuple(bool(v) for v in d.get("free_areas", ())),
            timing=d.get("timing", "equal"),
            target_phases=None if tp is None else tuple(tp),
            area_range=tuple(d.get("area_range", (0.1, 1.0))),
        )


TEMPLATES: Dict[str, Template] = {
    "eq14": Template("eq14", 5, HALF, "palindromic", (0.4556, 1.0, 1.0), (True, False, False)),
    "eq15": Template("eq15", 5, FULL, "palindromic", (1.0, 1.0, 1.0)),
    "eq16": Template("eq16", 9, HALF, "palindromic", (0.5,) * 5, (True,) * 5),
    "eq17": Template("eq17", 9, FULL, "palindromic", (1.0,) * 5),
}


def load_template(spec: str) -> Template:
    """Built-in template name or path to a JSON template file."""
    if spec in TEMPLATES:
        return TEMPLATES[spec]
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            return Template.from_dict(json.load(fh))
    raise KeyError(f"unknown template {spec!r}; built-ins: {', '.join(TEMPLATES)}")


def _residuals(c: CompositeSequence, order: int, target_phases) -> np.ndarray:
    series = series_coefficients(c, order)
    u0 = series[(0, 0)]
    ideal = ideal_target(c.target, u0, target_phases)
    parts = [math.sqrt(ORIGIN_WEIGHT) * (u0 - ideal).ravel()]
    for key, m in series.items():
        if key != (0, 0):
            parts.append(m.ravel())
    z = np.concatenate(parts)
    return np.concatenate([z.real, z.imag])


def cost(template: Template, x: Sequence[float], order: int) -> float:
    """Weighted origin deviation plus squared error coefficients up to ``order``."""
    r = _residuals(template.build(x), order, template.target_phases)
    return float(r @ r)


@dataclass
class Solution:
    sequence: CompositeSequence
    cost: float
    certificate: ErrorCoefficients
    restart: int

    @property
    def certified(self) -> bool:
        return self.certificate.certifies(self.certificate.max_order)


@dataclass
class OptimizationResult:
    template: Template
    order: int
    seed: int
    restarts: int
    best: Solution
    solutions: List[Solution] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.best.cost < COST_TOL and self.best.certificate.certifies(self.order)

    def to_dict(self) -> dict:
        out = self.best.sequence.to_dict()
        out["certificate"] = self.best.certificate.to_dict()
        out["cost"] = self.best.cost
        out["converged"] = self.converged
        out["config"] = {
            "template": self.template.to_dict(), "order": self.order,
            "restarts": self.restarts, "seed": self.seed,
        }
        out["alternatives"] = [
            {"pulses": s.sequence.to_dict()["pulses"], "cost": s.cost} for s in self.solutions[1:]
        ]
        return out


def _stop_when_solved(intermediate_result):
    if intermediate_result.fun < SOLVED_COST:
        raise StopIteration


def _local_search(args) -> Tuple[np.ndarray, float]:
    template, order, x0 = args
    f = lambda x: cost(template, x, order)  # noqa: E731
    opts = dict(maxfev=1000 * len(x0), xatol=1e-12, fatol=1e-24, adaptive=len(x0) > 4)
    res = minimize(f, x0, method="Nelder-Mead", callback=_stop_when_solved, options=opts)
    x, fx = res.x, float(res.fun)
    # a fresh simplex at the incumbent escapes premature collapse
    for _ in range(2):
        if fx < SOLVED_COST:
            break
        res = minimize(f, x, method="Nelder-Mead", callback=_stop_when_solved, options=opts)
        if res.fun >= fx:
            break
        x, fx = res.x, float(res.fun)
    return x, fx


def optimize(template: Template, order: int = 1, restarts: int = 20, seed: int = 0,
             jobs: int = 1) -> OptimizationResult:
    """Random-restart simplex search for a compensated composite pulse.

    The result is deterministic for fixed arguments, independent of ``jobs``.
    Every returned solution carries a finite-difference certificate computed
    independently of the search cost.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    rng = np.random.default_rng(seed)
    starts = [template.random_start(rng) for _ in range(restarts)]
    tasks = [(template, order, x0) for x0 in starts]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_local_search, tasks, chunksize=max(1, restarts // (4 * jobs))))
    else:
        results = [_local_search(t) for t in tasks]
    ranked = sorted(range(restarts), key=lambda k: (results[k][1], k))

    def solution(k: int) -> Solution:
        x, fx = results[k]
        seq = template.build(x, name=f"{template.name}_o{order}_s{seed}_r{k}")
        return Solution(seq, fx, taylor_coefficients(seq, max_order=order,
                                                     target_phases=template.target_phases), k)

    best = solution(ranked[0])
    distinct: List[Solution] = []
    for k in ranked:
        if results[k][1] >= COST_TOL:
            break
        cand = solution(k)
        if not any(equivalent_up_to_symmetry(s.sequence, cand.sequence) for s in distinct):
            distinct.append(cand)
    if distinct:
        best = distinct[0]
    return OptimizationResult(template, order, seed, restarts, best, distinct or [best])


# --------------------------------------------------------------------------
# solution families
# --------------------------------------------------------------------------

def _constant_offset(d: np.ndarray, tol: float) -> bool:
    z = np.exp(1j * d)
    return bool(np.all(np.abs(z - z[0]) <= tol))


def coefficient_signature(c: CompositeSequence, order: int = 2) -> np.ndarray:
    series = series_coefficients(c, order)
    return np.array([np.linalg.norm(series[m]) for m in monomials(order)])


def equivalent_up_to_symmetry(c1: CompositeSequence, c2: CompositeSequence,
                              tol: float = 1e-8) -> bool:
    """Whether two sequences belong to the same solution family.

    Checked transformations of ``c2``: a global phase shift, simultaneous
    phase negation, order reversal, and their combinations (all modulo 2pi).
    Otherwise the Taylor coefficient magnitudes up to second order decide.
    """
    if len(c1) != len(c2) or c1.target != c2.target or c1.timing != c2.timing:
        return False
    for rev in (False, True):
        areas2 = c2.areas_pi[::-1] if rev else c2.areas_pi
        if not np.allclose(c1.areas_pi, areas2, atol=tol, rtol=0):
            continue
        phases2 = c2.phases[::-1] if rev else c2.phases
        for sign in (1.0, -1.0):
            if _constant_offset(c1.phases - sign * phases2, tol):
                return True
    return bool(np.allclose(coefficient_signature(c1), coefficient_signature(c2),
                            atol=tol, rtol=0))


def negated(c: CompositeSequence, name: Optional[str] = None) -> CompositeSequence:
    return CompositeSequence(name or c.name + "_neg", c.target,
                             tuple((a, (-p) % (2 * PI)) for a, p in c.pulses),
                             c.stabilized, c.timing, c.order)


def reversed_negated(c: CompositeSequence) -> CompositeSequence:
    return negated(reverse(c), name=c.name + "_revneg")


def refine(c: CompositeSequence, template: Template, order: int) -> CompositeSequence:
    """Polish a sequence (e.g. a rounded table) onto a nearby exact solution.

    Gauss-Newton from the given parameters, so the solution closest to the
    input is returned. Without fixed target phases the global phase is free;
    it is then chosen so that arg(b) sits on the multiple of pi/2 nearest to
    the input's, the gauge in which rounded tables are usually printed.
    """
    x0 = template.params_of(c)
    fun = lambda x: _residuals(template.build(x), order, template.target_phases)  # noqa: E731
    res = least_squares(fun, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=20000)
    out = template.build(res.x, name=c.name + "_exact")
    phases = out.phases
    if template.target_phases is None:
        quarter = PI / 2
        beta_in = np.angle(c.propagator()[0, 1])
        beta_out = np.angle(out.propagator()[0, 1])
        phases = phases + (round(beta_in / quarter) * quarter - beta_out)
    # keep phases near the input rather than wrapped into [0, 2pi)
    phases = c.phases + np.angle(np.exp(1j * (phases - c.phases)))
    return CompositeSequence(out.name, c.target, tuple(zip(out.areas_pi, phases)),
                             c.stabilized, c.timing, c.order, note=f"{c.name} polished")
