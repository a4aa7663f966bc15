import numpy as np
import pytest

from conftest import random_plant, random_stable
from fdshape.errors import DimensionMismatch, IllPosedLoop, ImproperEntry, UnknownChannel
from fdshape.lti import (RationalTF, StateSpace, freq_response, freq_response_grid, hminus_index,
                         series, tf_arith, tf_to_ss)
from fdshape.plant import (ChannelSelector, GeneralizedPlant, build_fdi_plant,
                           check_hminus_feasibility, close_loop, select_channel, shaped_bound)


def static_plant(D11, D12, D21, D22):
    return GeneralizedPlant(np.zeros((0, 0)), None, None, None, None, D11, D12, D21, D22)


def pointwise_lft(P, Q, w):
    G = freq_response(P.to_statespace(), w)
    K = freq_response(Q, w)
    G11, G12 = G[:P.pz, :P.mw], G[:P.pz, P.mw:]
    G21, G22 = G[P.pz:, :P.mw], G[P.pz:, P.mw:]
    return G11 + G12 @ K @ np.linalg.solve(np.eye(P.py) - G22 @ K, G21)


# --- GeneralizedPlant ------------------------------------------------------


def test_channel_overlap_rejected():
    with pytest.raises(DimensionMismatch):
        GeneralizedPlant([[-1.0]], [[1.0, 1.0]], [[0.0]], [[1.0]], [[1.0]], [[0.0, 0.0]], [[1.0]],
                         [[0.0, 0.0]], [[0.0]], {"d": (0, 2), "f": (1, 2)})


def test_channel_out_of_range_rejected():
    with pytest.raises(DimensionMismatch):
        GeneralizedPlant([[-1.0]], [[1.0]], [[0.0]], [[1.0]], [[1.0]], [[0.0]], [[1.0]],
                         [[0.0]], [[0.0]], {"d": (0, 2)})


def test_statespace_round_trip():
    P = random_plant(np.random.default_rng(0), 3)
    Q = GeneralizedPlant.from_statespace(P.to_statespace(), P.mw, P.pz)
    for k in ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22"):
        assert np.array_equal(getattr(P, k), getattr(Q, k))


# --- close_loop ------------------------------------------------------------


def test_zero_filter_gives_open_loop():
    P = random_plant(np.random.default_rng(1), 3)
    T = close_loop(P, StateSpace.static(np.zeros((1, 2))))
    assert np.allclose(T.A, P.A) and np.allclose(T.B, P.B1)
    assert np.allclose(T.C, P.C1) and np.allclose(T.D, P.D11)


def test_static_loop_feedthrough():
    rng = np.random.default_rng(2)
    D11, D12, D21 = rng.standard_normal((2, 2)), rng.standard_normal((2, 1)), rng.standard_normal((2, 2))
    Dc = rng.standard_normal((1, 2))
    T = close_loop(static_plant(D11, D12, D21, np.zeros((2, 1))), StateSpace.static(Dc))
    assert np.allclose(T.D, D11 + D12 @ Dc @ D21)


def test_ill_posed_loop():
    P = static_plant([[0.0]], [[1.0]], [[1.0]], [[0.5]])
    with pytest.raises(IllPosedLoop):
        close_loop(P, StateSpace.static([[2.0]]))


def test_filter_dimension_check():
    P = random_plant(np.random.default_rng(3), 2)
    with pytest.raises(DimensionMismatch):
        close_loop(P, StateSpace.static(np.zeros((2, 2))))


@pytest.mark.parametrize("seed", range(5))
def test_close_loop_matches_pointwise_lft(seed):
    rng = np.random.default_rng(seed)
    P = random_plant(rng, 3, d22=True)
    Q = random_stable(rng, 2, P.py, P.mu)
    T = close_loop(P, Q)
    for w in rng.uniform(0, 30, 30):
        ref = pointwise_lft(P, Q, w)
        assert np.linalg.norm(freq_response(T, w) - ref) <= 1e-8 * np.linalg.norm(ref)


# --- select_channel --------------------------------------------------------


def test_identity_selector_is_noop():
    P = random_plant(np.random.default_rng(4), 3)
    Pj = select_channel(P, ChannelSelector(np.eye(P.pz), np.eye(P.mw)))
    for k in ("A", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22"):
        assert np.array_equal(getattr(P, k), getattr(Pj, k))


def test_first_column_selector():
    P = random_plant(np.random.default_rng(5), 3)
    Pj = select_channel(P, ChannelSelector(np.eye(P.pz), np.eye(P.mw)[:, :1]))
    assert np.array_equal(Pj.B1, P.B1[:, :1])
    assert np.array_equal(Pj.D21, P.D21[:, :1])


def test_selector_rank_checks():
    with pytest.raises(ValueError):
        ChannelSelector(np.ones((2, 2)), np.eye(2))
    with pytest.raises(ValueError):
        ChannelSelector(np.eye(2), np.ones((2, 2)))


def test_selector_dimension_mismatch():
    P = random_plant(np.random.default_rng(6), 2)
    with pytest.raises(DimensionMismatch):
        select_channel(P, ChannelSelector(np.eye(3), np.eye(2)))


def test_unknown_channel():
    P = random_plant(np.random.default_rng(6), 2)
    with pytest.raises(UnknownChannel):
        P.selector("x")
    with pytest.raises(UnknownChannel):
        check_hminus_feasibility(P, "x")


@pytest.mark.parametrize("seed", range(3))
def test_selection_commutes_with_closure(seed):
    rng = np.random.default_rng(seed)
    P = random_plant(rng, 3, d22=True)
    Q = random_stable(rng, 2, P.py, P.mu)
    sel = ChannelSelector(rng.standard_normal((1, P.pz)), rng.standard_normal((P.mw, 1)))
    T, Tj = close_loop(P, Q), close_loop(select_channel(P, sel), Q)
    for w in rng.uniform(0, 30, 20):
        ref = sel.L @ freq_response(T, w) @ sel.R
        assert np.linalg.norm(freq_response(Tj, w) - ref) <= 1e-9 * max(1.0, np.linalg.norm(ref))


# --- build_fdi_plant -------------------------------------------------------


def test_passthrough_loop():
    one, zero = RationalTF([1.0]), RationalTF([0.0])
    P = build_fdi_plant(one, zero, one, one)
    assert P.n == 0
    assert np.allclose(P.D21, [[1.0, 1.0], [0.0, 0.0]])
    assert np.allclose(P.D11, 0.0) and np.allclose(P.D12, 1.0)


def test_improper_controller_composes_to_proper(loop):
    G, C, Gd, _ = loop
    SI_C = tf_arith(C, G, "feedback")
    entry = tf_arith(SI_C, Gd, "mul")
    assert C.relative_degree == -1 and Gd.relative_degree == 0
    assert entry.relative_degree == 0


def test_loop_plant_labels_and_shapes(loop_plant):
    P = loop_plant
    assert P.w_channels == {"d": (0, 1), "f": (1, 2)}
    assert (P.mw, P.mu, P.pz, P.py) == (2, 1, 1, 2)
    assert np.allclose(P.D12, 1.0) and np.allclose(P.C1, 0.0)


def test_loop_plant_matches_transfer_entries(loop, loop_plant):
    G, C, Gd, Gf = loop
    one = RationalTF([1.0])
    S_O = tf_arith(one, tf_arith(G, C, "mul"), "feedback")
    SI_C = tf_arith(C, G, "feedback")
    ws = np.logspace(-2, 3, 40)
    s = 1j * ws
    ref = np.empty((len(ws), 2, 2), dtype=complex)
    ref[:, 0, 0] = S_O(s) * Gd(s)
    ref[:, 0, 1] = S_O(s) * G(s) * Gf(s)
    ref[:, 1, 0] = -SI_C(s) * Gd(s)
    ref[:, 1, 1] = -SI_C(s) * G(s) * Gf(s)
    P21 = StateSpace(loop_plant.A, loop_plant.B1, loop_plant.C2, loop_plant.D21)
    got = freq_response_grid(P21, ws)
    assert np.max(np.abs(got - ref) / np.abs(ref)) < 1e-7


def test_improper_entry_is_named():
    G = RationalTF([1.0], [1.0, 1.0])
    C = RationalTF([1.0, 0.0, 0.0])
    with pytest.raises(ImproperEntry) as err:
        build_fdi_plant(G, C, RationalTF([1.0]), RationalTF([1.0]))
    assert "S_I*C*G_d" in str(err.value)


# --- feasibility diagnostic ------------------------------------------------


def test_strictly_proper_fault_channel_warns():
    P = static_plant([[0.0, 0.0]], [[1.0]], [[1.0, 0.0]], [[0.0]])
    P = GeneralizedPlant(P.A, P.B1, P.B2, P.C1, P.C2, P.D11, P.D12, P.D21, P.D22,
                         {"d": (0, 1), "f": (1, 2)})
    diag = check_hminus_feasibility(P, "f")
    assert not diag and "strictly proper" in diag.message


def test_direct_fault_feedthrough_ok():
    P = GeneralizedPlant(np.zeros((0, 0)), None, None, None, None, [[0.0, 1.0]], [[0.0]],
                         [[0.0, 0.0]], [[0.0]], {"d": (0, 1), "f": (1, 2)})
    assert check_hminus_feasibility(P, "f")


def test_loop_plant_feasible(loop_plant):
    assert check_hminus_feasibility(loop_plant, "f")


def test_too_few_residuals():
    P = GeneralizedPlant(np.zeros((0, 0)), None, None, None, None, [[1.0, 1.0]], [[1.0]],
                         [[1.0, 1.0]], [[0.0]], {"f": (0, 2)})
    assert not check_hminus_feasibility(P, "f")


# --- shaping ---------------------------------------------------------------


@pytest.mark.parametrize("seed", range(4))
def test_shaping_identity(seed):
    # H-minus of T*W above nu <=> |T| above nu/|W| on the grid
    rng = np.random.default_rng(seed)
    W = RationalTF(np.poly(-rng.uniform(0.5, 5, 2)), np.poly(-rng.uniform(0.5, 5, 2)))
    T = random_stable(rng, 3, 1, 1)
    T = StateSpace(T.A, T.B, T.C, [[1.5 + rng.uniform()]])
    ws = np.concatenate([[0.0], np.logspace(-3, 4, 4000)])
    TW = series(tf_to_ss(W), T)
    measured = np.abs(freq_response_grid(TW, ws)[:, 0, 0]).min()
    absT = np.abs(freq_response_grid(T, ws)[:, 0, 0])
    for nu in (0.5 * measured, measured * (1 - 1e-6), measured * (1 + 1e-6), 2 * measured):
        lhs = measured > nu
        rhs = bool(np.all(absT > shaped_bound(W, nu, ws)))
        assert lhs == rhs
    assert hminus_index(TW) == pytest.approx(measured, rel=1e-4)
