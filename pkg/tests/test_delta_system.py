import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chiral_cp.delta_system import (
    Handedness, Transition, basis_state, embed, populations, sequence_propagator,
)
from chiral_cp.su2_core import Pulse, TwoStatePropagator, propagate_pulse

L, R = Handedness.L, Handedness.R
EQ5_L = np.array([[0, -1j, 0], [0, 0, -1j], [-1, 0, 0]])
EQ5_R = np.array([[1, 0, 0], [0, 0, -1j], [0, -1j, 0]])


def eq5_steps(eps=0.0, delta=0.0):
    return [
        (Transition.P, [Pulse(math.pi / 2, 0.0, eps, delta)]),
        (Transition.S, [Pulse(math.pi, 0.0, eps, delta)]),
        (Transition.Q, [Pulse(math.pi / 2, math.pi / 2, eps, delta)]),
    ]


def test_embed_p_half_pulse():
    r = 1 / math.sqrt(2)
    u = embed(Transition.P, propagate_pulse(Pulse(math.pi / 2)), L)
    expected = np.array([[r, -1j * r, 0], [-1j * r, r, 0], [0, 0, 1]])
    np.testing.assert_allclose(u, expected, atol=1e-15)


def test_embed_handedness_flips_q_offdiagonal_only():
    u = TwoStatePropagator(0.6, 0.8j)
    ul, ur = embed(Transition.Q, u, L), embed(Transition.Q, u, R)
    diff = ul - ur
    assert diff[0, 2] == pytest.approx(2 * u.b)
    assert diff[2, 0] == pytest.approx(-2 * u.b.conjugate())
    diff[0, 2] = diff[2, 0] = 0
    assert np.all(diff == 0)


@pytest.mark.parametrize("t", list(Transition))
def test_embed_identity(t):
    np.testing.assert_array_equal(embed(t, TwoStatePropagator.identity(), L), np.eye(3))


def test_embed_accepts_names_and_stacks():
    m = np.broadcast_to(propagate_pulse(Pulse(1.0)).matrix, (4, 2, 2))
    assert embed("S", m, "R").shape == (4, 3, 3)


def test_eq5_golden_matrices():
    np.testing.assert_allclose(sequence_propagator(eq5_steps(), L), EQ5_L, atol=1e-12)
    np.testing.assert_allclose(sequence_propagator(eq5_steps(), R), EQ5_R, atol=1e-12)


def test_eq5_populations():
    np.testing.assert_allclose(populations(EQ5_L), [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(populations(EQ5_R), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(populations(np.eye(3)), [1, 0, 0])


def test_sequence_then_inverse_is_identity():
    steps = eq5_steps()
    inverse = [
        (t, [Pulse(p.area, p.phase + math.pi) for p in reversed(train)])
        for t, train in reversed(steps)
    ]
    for h in Handedness:
        u = sequence_propagator(steps + inverse, h)
        np.testing.assert_allclose(u, np.eye(3), atol=1e-14)


def test_sequence_errors():
    with pytest.raises(ValueError):
        sequence_propagator([], L)
    with pytest.raises(ValueError):
        sequence_propagator([(Transition.P, [])], L)


def test_populations_rejects_unnormalised():
    with pytest.raises(ValueError):
        populations(np.eye(3), init=(1, 1, 0))


def test_basis_state():
    np.testing.assert_array_equal(basis_state(2), [0, 1, 0])


def test_handedness_similarity_without_s_pulses():
    d = np.diag([1, 1, -1])
    steps = [(Transition.P, [Pulse(1.3, 0.4, 0.1, 0.2)]), (Transition.Q, [Pulse(2.1, 1.0, 0.1, 0.2)]),
             (Transition.P, [Pulse(0.7, 2.0, 0.1, 0.2)])]
    np.testing.assert_allclose(sequence_propagator(steps, R), d @ sequence_propagator(steps, L) @ d,
                               atol=1e-14)


@pytest.mark.parametrize("phases", [(0, 0, 0), (0, math.pi, 0), (math.pi, 0, math.pi)])
def test_real_phases_do_not_resolve(phases):
    steps = [(t, [Pulse(a, p)]) for t, a, p in
             zip((Transition.P, Transition.S, Transition.Q), (math.pi / 2, math.pi, math.pi / 2), phases)]
    assert populations(sequence_propagator(steps, L))[2] == pytest.approx(
        populations(sequence_propagator(steps, R))[2], abs=1e-14)


pulse = st.tuples(st.sampled_from(list(Transition)), st.floats(0.05, 7), st.floats(0, 6.3))


@settings(max_examples=1000, deadline=None, derandomize=True)
@given(st.lists(pulse, min_size=1, max_size=9), st.floats(-1, 1), st.floats(-2, 2),
       st.sampled_from(list(Handedness)))
def test_loop_unitarity_and_population_conservation(seq, eps, delta, hand):
    steps = [(t, [Pulse(a, p, eps, delta)]) for t, a, p in seq]
    u = sequence_propagator(steps, hand)
    assert np.linalg.norm(u.conj().T @ u - np.eye(3)) <= 1e-10
    assert abs(populations(u).sum() - 1) <= 1e-10
