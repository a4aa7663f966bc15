import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import loop_data, random_stable
from fdshape.errors import (DegenerateFraction, DimensionMismatch, ImproperTransfer,
                            SingularResolvent, UnstableSystem)
from fdshape.lti import (FrequencyGrid, RationalTF, StateSpace, add, balance, cancel,
                         freq_response, freq_response_grid, hankel_singular_values, hinf_norm,
                         hminus_index, horzcat, is_hurwitz, minreal, negate, realize_matrix,
                         series, sigma, ss_to_tf, ss_to_zpk, tf_arith, tf_to_ss,
                         tf_to_ss_sections, vertcat, zpk_cancel, zpk_to_ss_sections)

LAG = tf_to_ss(RationalTF([1.0], [1.0, 1.0]))
LEAD = tf_to_ss(RationalTF([1.0, 2.0], [1.0, 1.0]))


def dense_sweep(sys, fn, lo=-4, hi=5, k=200_000):
    w = np.concatenate([[0.0], np.logspace(lo, hi, k)])
    return fn(np.linalg.svd(freq_response_grid(sys, w), compute_uv=False))


# --- freq_response ---------------------------------------------------------


def test_static_response_is_d():
    D = np.array([[1.0, -2.0], [0.5, 3.0]])
    assert np.allclose(freq_response(StateSpace.static(D), 7.3), D)


def test_lag_dc_gain():
    assert freq_response(LAG, 0.0)[0, 0] == pytest.approx(1.0)


def test_lag_at_unit_frequency():
    assert freq_response(LAG, 1.0)[0, 0] == pytest.approx(0.5 - 0.5j, abs=1e-14)


def test_imaginary_axis_pole_raises():
    integrator = StateSpace([[0.0]], [[1.0]], [[1.0]], [[0.0]])
    with pytest.raises(SingularResolvent):
        freq_response(integrator, 0.0)


def test_grid_response_matches_pointwise():
    rng = np.random.default_rng(3)
    sys = random_stable(rng, 5, 2, 3)
    w = np.logspace(-2, 2, 17)
    G = freq_response_grid(sys, w)
    for k, wk in enumerate(w):
        assert np.allclose(G[k], freq_response(sys, wk), rtol=1e-12, atol=1e-12)


# --- norms -----------------------------------------------------------------


def test_hinf_static():
    D = np.array([[3.0, 0.0], [0.0, 1.0]])
    assert hinf_norm(StateSpace.static(D)) == pytest.approx(3.0)


def test_hinf_lag():
    assert hinf_norm(LAG) == pytest.approx(1.0, rel=1e-6)


def test_hinf_lead_peaks_at_dc():
    assert hinf_norm(LEAD) == pytest.approx(2.0, rel=1e-6)


def test_hinf_resonant_peak():
    # lightly damped pair: peak 1/(2 zeta sqrt(1 - zeta^2)) at w = wn sqrt(1 - 2 zeta^2)
    zeta, wn = 0.05, 3.0
    sys = tf_to_ss(RationalTF([wn**2], [1.0, 2 * zeta * wn, wn**2]))
    exact = 1 / (2 * zeta * np.sqrt(1 - zeta**2))
    assert hinf_norm(sys) == pytest.approx(exact, rel=2e-6)


def test_hinf_rejects_unstable():
    with pytest.raises(UnstableSystem):
        hinf_norm(StateSpace([[1.0]], [[1.0]], [[1.0]], [[0.0]]))


def test_hminus_strictly_proper_is_zero():
    assert hminus_index(LAG) == pytest.approx(0.0, abs=1e-9)


def test_hminus_static_square():
    D = np.array([[2.0, 1.0], [0.0, 0.5]])
    assert hminus_index(StateSpace.static(D)) == pytest.approx(np.linalg.svd(D)[1][-1])


def test_hminus_lead():
    assert hminus_index(LEAD) == pytest.approx(1.0, rel=1e-6)


def test_hminus_wide_system_is_zero():
    sys = StateSpace.static([[1.0, 2.0]])
    assert hminus_index(sys) == 0.0


def test_hminus_finds_notch():
    # notch at w = 2 with depth 0.1
    sys = tf_to_ss(RationalTF([1.0, 0.4, 4.0], [1.0, 4.0, 4.0]))
    assert hminus_index(sys) == pytest.approx(0.1, rel=1e-5)


@pytest.mark.parametrize("seed", range(5))
def test_norms_match_dense_sweep(seed):
    rng = np.random.default_rng(seed)
    sys = random_stable(rng, 6, 2, 2)
    assert hinf_norm(sys) == pytest.approx(dense_sweep(sys, lambda s: s[:, 0].max()), rel=1e-5)
    assert hminus_index(sys) == pytest.approx(dense_sweep(sys, lambda s: s[:, -1].min()), rel=1e-5)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(0.05, 20.0))
def test_norm_homogeneity(seed, alpha):
    rng = np.random.default_rng(seed)
    sys = random_stable(rng, int(rng.integers(1, 5)), 2, 2)
    scaled = StateSpace(sys.A, sys.B, -alpha * sys.C, -alpha * sys.D)
    assert hinf_norm(scaled) == pytest.approx(alpha * hinf_norm(sys), rel=1e-6)
    assert hminus_index(scaled) == pytest.approx(alpha * hminus_index(sys), rel=1e-6, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_hinf_dominates_hminus(seed):
    rng = np.random.default_rng(seed)
    sys = random_stable(rng, int(rng.integers(1, 5)), 2, 2)
    assert hinf_norm(sys) >= hminus_index(sys)


# --- stability -------------------------------------------------------------


@pytest.mark.parametrize("A, expected", [
    ([[-1.0]], True),
    ([[0.0]], False),
    ([[0.0, 1.0], [-2.0, -3.0]], True),
    ([[-1e-12]], False),
])
def test_is_hurwitz(A, expected):
    A = np.array(A)
    n = A.shape[0]
    assert is_hurwitz(StateSpace(A, np.zeros((n, 1)), np.zeros((1, n)), [[0.0]])) is expected


def test_static_is_hurwitz():
    assert is_hurwitz(StateSpace.static([[1.0]]))


# --- interconnection -------------------------------------------------------


def test_series_of_statics():
    s = series(StateSpace.static([[2.0]]), StateSpace.static([[3.0]]))
    assert s.n == 0 and s.D[0, 0] == 6.0


def test_add_negate_cancels():
    rng = np.random.default_rng(0)
    sys = random_stable(rng, 3, 2, 2)
    z = add(sys, negate(sys))
    for w in (0.0, 0.7, 40.0):
        assert np.allclose(freq_response(z, w), 0.0, atol=1e-12)


def test_series_dc_gain():
    b = tf_to_ss(RationalTF([1.0], [1.0, 2.0]))
    assert freq_response(series(LAG, b), 0.0)[0, 0] == pytest.approx(0.5)


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        series(StateSpace.static(np.ones((2, 1))), StateSpace.static(np.ones((1, 1))))
    with pytest.raises(DimensionMismatch):
        add(StateSpace.static(np.ones((2, 1))), StateSpace.static(np.ones((1, 1))))
    with pytest.raises(DimensionMismatch):
        vertcat(StateSpace.static(np.ones((1, 2))), StateSpace.static(np.ones((1, 1))))
    with pytest.raises(DimensionMismatch):
        horzcat(StateSpace.static(np.ones((2, 1))), StateSpace.static(np.ones((1, 1))))


def test_interconnections_match_pointwise_algebra():
    rng = np.random.default_rng(11)
    a = random_stable(rng, 3, 2, 2)
    b = random_stable(rng, 2, 2, 2)
    c = random_stable(rng, 2, 2, 1)
    ws = rng.uniform(0, 50, 50)
    for w in ws:
        Ga, Gb, Gc = freq_response(a, w), freq_response(b, w), freq_response(c, w)
        pairs = [
            (series(a, b), Gb @ Ga), (add(a, b), Ga + Gb), (negate(a), -Ga),
            (vertcat(a, c), np.vstack([Ga, Gc])), (horzcat(a, b), np.hstack([Ga, Gb])),
        ]
        for sys, ref in pairs:
            got = freq_response(sys, w)
            assert np.linalg.norm(got - ref) <= 1e-9 * max(1.0, np.linalg.norm(ref))


def test_state_dimension_adds():
    rng = np.random.default_rng(2)
    a, b = random_stable(rng, 3, 1, 1), random_stable(rng, 2, 1, 1)
    for sys in (series(a, b), add(a, b), vertcat(a, b), horzcat(a, b)):
        assert sys.n == 5


# --- rational arithmetic ---------------------------------------------------


def test_feedback_of_units():
    r = tf_arith(RationalTF([1.0]), RationalTF([1.0]), "feedback")
    assert r.den.tolist() == [1.0] and r.num.tolist() == [0.5]


def test_mul_cancels():
    r = tf_arith(RationalTF([1.0], [1.0, 1.0]), RationalTF([1.0, 1.0]), "mul")
    assert len(r.den) == 1 and r.num.tolist() == [1.0]


def test_input_sensitivity_dc_value():
    G, C, _, _ = loop_data()
    S_I = tf_arith(RationalTF([1.0]), tf_arith(C, G, "mul"), "feedback")
    expected = 1.0 / (1.0 + 25.0 * (25 * 15 * 5) / (40 * 10 * 3))
    assert S_I(0.0).real == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.024961, abs=1e-6)


def test_inverse_of_zero_raises():
    with pytest.raises(DegenerateFraction):
        tf_arith(RationalTF([0.0]), None, "inv")


def test_zero_denominator_raises():
    with pytest.raises(DegenerateFraction):
        RationalTF([1.0], [0.0])


def test_improper_allowed_and_degree():
    C = RationalTF([15.0, 25.0])
    assert C.relative_degree == -1 and not C.is_proper


def test_monic_denominator():
    r = RationalTF([2.0], [4.0, 8.0])
    assert r.den.tolist() == [1.0, 2.0] and r.num.tolist() == [0.5]


def test_cancel_tolerance():
    num, den = cancel(np.poly([-1.0 - 5e-8]), np.poly([-1.0, -3.0]))
    assert len(num) == 1 and len(den) == 2
    num, den = cancel(np.poly([-1.0 - 1e-3]), np.poly([-1.0, -3.0]))
    assert len(num) == 2


def test_tf_arith_agrees_with_state_space():
    a = RationalTF([1.0, 3.0], [1.0, 2.0, 5.0])
    b = RationalTF([2.0], [1.0, 4.0])
    ws = np.logspace(-2, 2, 25)
    ops = [
        (tf_arith(a, b, "add"), add(tf_to_ss(a), tf_to_ss(b))),
        (tf_arith(a, b, "mul"), series(tf_to_ss(b), tf_to_ss(a))),
    ]
    for tf, ss in ops:
        ref = tf(1j * ws)
        got = freq_response_grid(ss, ws)[:, 0, 0]
        assert np.allclose(got, ref, rtol=1e-7)


# --- realization -----------------------------------------------------------


def test_tf_to_ss_constant():
    s = tf_to_ss(RationalTF([5.0]))
    assert s.n == 0 and s.D[0, 0] == 5.0


def test_tf_to_ss_lag_canonical():
    s = tf_to_ss(RationalTF([1.0], [1.0, 1.0]))
    assert s.A.tolist() == [[-1.0]] and s.B.tolist() == [[1.0]]
    assert s.C.tolist() == [[1.0]] and s.D.tolist() == [[0.0]]


def test_tf_to_ss_biproper():
    s = tf_to_ss(RationalTF([1.0, 2.0], [1.0, 1.0]))
    assert s.D[0, 0] == 1.0
    assert freq_response(s, 0.0)[0, 0] == pytest.approx(2.0)


def test_tf_to_ss_improper_raises():
    with pytest.raises(ImproperTransfer):
        tf_to_ss(RationalTF([1.0, 0.0, 1.0], [1.0, 1.0]))


@pytest.mark.parametrize("realize", [tf_to_ss, tf_to_ss_sections])
def test_realization_matches_rational_evaluation(realize):
    _, _, Gd, Gf = loop_data()
    ws = FrequencyGrid.default().points
    for tf in (Gd, Gf):
        ref = tf(1j * ws)
        got = freq_response_grid(realize(tf), ws)[:, 0, 0]
        assert np.all(np.abs(got - ref) <= 1e-8 * np.abs(ref))


def test_zpk_round_trip():
    z = np.array([-1.0, -2 + 1j, -2 - 1j])
    p = np.array([-3.0, -4.0, -5.0, -1.5])
    sys = zpk_to_ss_sections(z, p, 3.0)
    z2, p2, k2 = ss_to_zpk(sys)
    assert k2 == pytest.approx(3.0)
    assert np.allclose(np.sort_complex(z2), np.sort_complex(z))
    assert np.allclose(np.sort_complex(p2), np.sort_complex(p))


def test_zpk_cancel():
    z, p = zpk_cancel([-1.0, -2.0], [-1.0 + 1e-9, -3.0])
    assert np.allclose(z, [-2.0]) and np.allclose(p, [-3.0])


def test_ss_to_tf_inverts_tf_to_ss():
    tf = RationalTF([2.0, 1.0], [1.0, 3.0, 2.0])
    r = ss_to_tf(tf_to_ss(tf))
    assert np.allclose(r.num, tf.num) and np.allclose(r.den, tf.den)


def test_minreal_removes_duplicate_modes():
    s = vertcat(LAG, LAG)
    assert s.n == 2
    r = minreal(s)
    assert r.n == 1
    assert np.allclose(freq_response(r, 0.3), freq_response(s, 0.3))


def test_realize_matrix_shares_poles():
    a = RationalTF([1.0], [1.0, 1.0])
    b = RationalTF([2.0], [1.0, 1.0])
    sys = realize_matrix([[a, b]])
    assert sys.n == 1


def test_balance_equal_gramians():
    rng = np.random.default_rng(5)
    sys = balance(random_stable(rng, 4, 1, 1))
    import scipy.linalg as sl
    Wc = sl.solve_continuous_lyapunov(sys.A, -sys.B @ sys.B.T)
    Wo = sl.solve_continuous_lyapunov(sys.A.T, -sys.C.T @ sys.C)
    assert np.allclose(Wc, Wo, atol=1e-9)
    assert np.allclose(np.diag(Wc), hankel_singular_values(sys), rtol=1e-8)


def test_sigma_shape_and_order():
    rng = np.random.default_rng(8)
    s = sigma(random_stable(rng, 3, 2, 3), [0.1, 1.0, 10.0])
    assert s.shape == (3, 2) and np.all(s[:, 0] >= s[:, 1])


def test_frequency_grid_validation():
    g = FrequencyGrid.default()
    assert len(g) == 401 and g.points[0] == 0.0
    with pytest.raises(ValueError):
        FrequencyGrid(np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        FrequencyGrid(np.array([-1.0, 1.0]))


def test_state_space_immutable():
    with pytest.raises(ValueError):
        LAG.A[0, 0] = 3.0


def test_inconsistent_realization():
    with pytest.raises(DimensionMismatch):
        StateSpace(np.eye(2), np.ones((3, 1)), np.ones((1, 2)), [[0.0]])
