import math

import numpy as np
import pytest

from chiral_cp import composite_library as lib
from chiral_cp.composite_library import (
    ASSEMBLY_NAMES, CHI, CompositeSequence, assemble, builtin, quadrature_offset, reverse,
)
from chiral_cp.delta_system import Handedness, Transition, populations

PI = math.pi
EXACT_ASSEMBLIES = [n for n in ASSEMBLY_NAMES if not n.endswith("-printed")]


def test_c1_half_table():
    assert builtin("C1_half").pulses == ((0.5, 0.0), (0.5, PI / 2))


def test_c2_full_table():
    c = builtin("C2_full")
    np.testing.assert_allclose(c.areas_pi, 1.0)
    np.testing.assert_allclose(c.phases, [CHI, 3 * CHI, 3 * CHI, CHI, 0.0])
    assert CHI == pytest.approx(math.acos(-0.25))


def test_d1_full_table():
    np.testing.assert_allclose(builtin("D1_full").phases / PI, [5 / 6, 2 / 3, 7 / 6, 2 / 3, 5 / 6])


def test_printed_tables_verbatim():
    d9 = builtin("D9_half")
    np.testing.assert_array_equal(d9.areas_pi, [0.6771, 0.8579, 0.6623, 0.5174, 0.8812,
                                                0.5174, 0.6623, 0.8579, 0.6771])
    np.testing.assert_allclose(builtin("D2_half").phases[:3] / PI, [0.5448, 1.2358, 0.6799])


@pytest.mark.parametrize("name", ["D1_half", "D2_half", "D9_half", "D9_full"])
def test_exact_entries_round_to_printed(name):
    printed, exact = builtin(name), builtin(name + "_exact")
    assert np.abs(printed.areas_pi - exact.areas_pi).max() <= 5e-5
    assert np.abs(printed.phases - exact.phases).max() / PI <= 5e-5


def test_reverse_c3():
    rev = reverse(builtin("C3_half"))
    assert rev.pulses == ((0.5, PI), (1.0, 3 * PI / 4), (0.5, 0.0))
    assert reverse(rev) == builtin("C3_half")


def test_reverse_palindrome_is_identity():
    c = builtin("D1_full")
    assert reverse(c).pulses == c.pulses


@pytest.mark.parametrize("name, count, area", [("T5", 7, 5), ("T6", 7, 6), ("T7", 9, 7),
                                               ("T9", 11, 9), ("single", 3, 2)])
def test_assembly_budgets(name, count, area):
    a = assemble(name)
    assert a.pulse_count == count
    assert a.total_area_pi == pytest.approx(area)


def test_single_is_bare_sequence():
    a = assemble("single")
    assert [len(b.sequence) for b in a.blocks] == [1, 1, 1]
    assert [b.transition for b in a.blocks] == [Transition.P, Transition.S, Transition.Q]
    assert [b.phase_offset for b in a.blocks] == [0.0, PI / 2, 0.0]


@pytest.mark.parametrize("name", EXACT_ASSEMBLIES)
def test_ideal_point_perfect_contrast(name):
    a = assemble(name)
    pl = populations(a.loop_propagator(Handedness.L))
    pr = populations(a.loop_propagator(Handedness.R))
    assert abs(pl[0] - 1) <= 1e-12 and abs(pr[2] - 1) <= 1e-12
    assert pl[2] <= 1e-12


@pytest.mark.parametrize("name", [n for n in ASSEMBLY_NAMES if n.endswith("-printed")])
def test_printed_assemblies_resolve_to_rounding(name):
    pl = populations(assemble(name).loop_propagator(Handedness.L))
    assert pl[0] > 1 - 1e-6


@pytest.mark.parametrize("c", [c for c in lib.catalog() if c.name not in
                               ("D1_half", "D2_half", "D9_half", "D9_full")],
                         ids=lambda c: c.name)
def test_target_magnitude(c):
    expected = math.sin(lib.target_angle(c.target) / 2)
    assert abs(c.propagator()[0, 1]) == pytest.approx(expected, abs=1e-12)


def test_quadrature_offsets():
    half, full = lib._single()
    assert quadrature_offset(full) == pytest.approx(PI / 2)
    for name in ("C1_full", "C2_full", "D9_full", "D9_full_exact"):
        assert quadrature_offset(builtin(name)) == pytest.approx(PI / 2)
    for name in ("D1_full", "D2_full"):
        assert quadrature_offset(builtin(name)) == pytest.approx(PI)


@pytest.mark.parametrize("name", ["T5", "T6", "T7", "T9"])
@pytest.mark.parametrize("eps", [-0.2, -0.1, 0.1, 0.2])
def test_reversal_symmetry_survives_area_error(name, eps):
    a = assemble(name)
    up = a.blocks[0].propagator(eps, 0.0)
    uq = a.blocks[2].propagator(eps, 0.0)
    # alpha_Q = -alpha_P and beta_Q = beta_P
    assert abs(uq[0, 0] - np.conj(up[0, 0])) <= 1e-12
    assert abs(uq[0, 1] - up[0, 1]) <= 1e-12


@pytest.mark.parametrize("name", ["C1_full", "C2_full"])
def test_middle_block_phase_at_least_second_order(name):
    s = builtin(name)
    beta0 = np.angle(s.propagator()[0, 1])
    drift = [abs(np.angle(s.propagator(e)[0, 1]) - beta0) for e in (1e-2, 2e-2)]
    assert drift[1] / drift[0] > 3.9


def _first_derivatives(c, h=1e-4):
    bp, bm = c.propagator(h)[0, 1], c.propagator(-h)[0, 1]
    return (abs(bp) - abs(bm)) / (2 * h), np.angle(bp / bm) / (2 * h)


@pytest.mark.parametrize("name", ["C1_half", "C2_half", "C3_half", "C4_half"])
def test_variable_rotation_magnitude_flat(name):
    d_mag, _ = _first_derivatives(builtin(name))
    assert abs(d_mag) < 1e-6


@pytest.mark.parametrize("name", ["C1_full", "C2_full"])
def test_constant_rotation_flat(name):
    d_mag, d_arg = _first_derivatives(builtin(name))
    assert abs(d_mag) < 1e-6 and abs(d_arg) < 1e-6


def test_dict_round_trip():
    for c in lib.catalog():
        back = CompositeSequence.from_dict(c.to_dict())
        assert back.pulses == c.pulses and back.timing == c.timing


def test_catalog_errors():
    with pytest.raises(KeyError):
        builtin("nope")
    with pytest.raises(KeyError):
        assemble("nope")
    with pytest.raises(ValueError):
        lib.register(builtin("C1_half"))
    with pytest.raises(ValueError):
        CompositeSequence("x", "quarter", ((1.0, 0.0),))
    with pytest.raises(ValueError):
        CompositeSequence("x", "half", ())
    with pytest.raises(ValueError):
        lib.custom_assembly("x", builtin("C1_full"), builtin("C1_full"), builtin("C1_half"))


def test_register_and_custom_assembly():
    c = CompositeSequence("test_half", "half", ((0.5, 0.0),))
    lib.register(c)
    try:
        a = lib.custom_assembly("mine", c, builtin("C1_full"), c)
        assert a.final_states() == {Handedness.L: 1, Handedness.R: 3}
    finally:
        lib._CATALOG.pop("test_half")


def test_detuning_weights():
    a = assemble("T5")
    unit = {t: 1.0 for t in Transition}
    np.testing.assert_allclose(a.loop_propagator("L", 0.1, 0.3, unit),
                               a.loop_propagator("L", 0.1, 0.3), atol=1e-15)
    zero = {t: 0.0 for t in Transition}
    np.testing.assert_allclose(a.loop_propagator("L", 0.1, 0.3, zero),
                               a.loop_propagator("L", 0.1, 0.0), atol=1e-15)


def test_vectorised_loop_matches_pointwise():
    a = assemble("CP9")
    e = np.array([[-0.1, 0.2]])
    d = np.array([[0.3], [-0.4]])
    grid = a.loop_propagator("R", e, d)
    np.testing.assert_allclose(grid[1, 0], a.loop_propagator("R", -0.1, -0.4), atol=1e-14)
