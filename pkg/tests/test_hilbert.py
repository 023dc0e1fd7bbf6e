import math

import numpy as np
import pytest
import scipy.sparse as sp

from optokerr.hilbert import (
    InvalidDimensionError,
    InvalidModeError,
    ModeSpace,
    SpaceMismatchError,
    TruncationRiskError,
    coherent_vector,
    expectation,
    expectation_real,
    identity,
    lowering,
    make_space,
    number,
    product_state,
    quadrature,
    raising,
    thermal_weights,
    transition,
)


def test_make_space_single_mode():
    s = make_space([4])
    assert s.total_dim == 4
    assert s.n_modes == 1


def test_make_space_total_dim_product():
    assert make_space([4, 4, 6]).total_dim == 96


def test_make_space_big_endian_order():
    s = make_space([2, 3])
    # |00>,|01>,|02>,|10>,|11>,|12>
    expected = [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
    occ = s.basis_occupations()
    assert [tuple(row) for row in occ] == expected
    for i, o in enumerate(expected):
        assert s.index_of(o) == i


def test_make_space_rejects_small_dims():
    with pytest.raises(InvalidDimensionError):
        make_space([4, 1])


def test_lowering_single_mode_entries():
    a = lowering(make_space([3]), 0).toarray()
    expected = np.zeros((3, 3), complex)
    expected[0, 1] = 1.0
    expected[1, 2] = math.sqrt(2)
    assert np.allclose(a, expected)


def test_lowering_tensor_embedding():
    s = make_space([2, 2])
    a1 = lowering(s, 1).toarray()
    # nonzero entries only between |x1> -> |x0>
    nz = np.argwhere(np.abs(a1) > 0)
    assert sorted(map(tuple, nz)) == [(0, 1), (2, 3)]


@pytest.mark.parametrize("dims,mode", [((5,), 0), ((3, 4), 0), ((3, 4), 1), ((2, 3, 4), 2)])
def test_commutator_only_breaks_at_top_level(dims, mode):
    s = make_space(dims)
    a = lowering(s, mode)
    comm = (a @ a.conj().T - a.conj().T @ a).toarray()
    d = s.dims[mode]
    occ = s.basis_occupations()
    expected = np.diag(np.where(occ[:, mode] == d - 1, 1.0 - d, 1.0))
    assert np.allclose(comm, expected)


def test_invalid_mode_index():
    with pytest.raises(InvalidModeError):
        lowering(make_space([3, 3]), 2)


def test_quadrature_two_level():
    x = quadrature(make_space([2]), 0).toarray()
    assert np.allclose(x, [[0, 1], [1, 0]])


def test_quadrature_hermitian():
    x = quadrature(make_space([3, 8]), 1)
    assert abs(x - x.conj().T).max() < 1e-12


def test_quadrature_coherent_expectation():
    s = make_space([25])
    alpha = 0.4 + 0.3j
    st = product_state(s, [("coherent", alpha)])
    val = expectation(st, quadrature(s, 0))
    assert val.real == pytest.approx(2 * alpha.real, abs=1e-8)


def test_product_state_fock():
    s = make_space([4])
    st = product_state(s, [("fock", 1)])
    assert np.allclose(st.array, [0, 1, 0, 0])


def test_product_state_thermal_mean_matches_truncated_geometric():
    from oracles import truncated_thermal_mean

    s = make_space([40])
    st = product_state(s, [("thermal", 4.0)])
    got = expectation(st, number(s, 0)).real
    assert got == pytest.approx(truncated_thermal_mean(40, 4.0), abs=1e-12)
    # at dim 40 the truncated-geometric mean sits 5.3e-3 below the nominal 4
    assert got == pytest.approx(4.0, abs=6e-3)


def test_product_state_coherent_small_alpha():
    s = make_space([4])
    st = product_state(s, [("coherent", 0.1)])
    assert expectation(st, lowering(s, 0)).real == pytest.approx(0.1, abs=1e-6)
    assert expectation(st, number(s, 0)).real == pytest.approx(0.01, abs=1e-6)


def test_product_state_mixed_gives_density():
    s = make_space([3, 10])
    st = product_state(s, [("fock", 1), ("thermal", 2.0)])
    assert not st.is_pure
    rho = st.array
    assert abs(np.trace(rho) - 1) < 1e-12
    assert abs(rho - rho.conj().T).max() < 1e-12


def test_product_state_truncation_guard_names_mode():
    s = make_space([4, 4], labels=("left", "right"))
    with pytest.raises(TruncationRiskError, match="right"):
        product_state(s, [("fock", 1), ("coherent", 2.0)])
    with pytest.raises(TruncationRiskError, match="mode 0"):
        product_state(s, [("fock", 7), ("fock", 0)])


def test_expectation_number_on_fock():
    s = make_space([5])
    st = product_state(s, [("fock", 1)])
    assert expectation(st, number(s, 0)) == pytest.approx(1.0)


def test_expectation_quadrature_on_thermal_is_zero():
    s = make_space([30])
    st = product_state(s, [("thermal", 3.0)])
    assert abs(expectation(st, quadrature(s, 0))) < 1e-12


def test_expectation_space_mismatch():
    s = make_space([4])
    st = product_state(s, [("fock", 0)])
    with pytest.raises(SpaceMismatchError):
        expectation(st, np.eye(5))


def test_expectation_real_residual():
    s = make_space([6])
    st = product_state(s, [("coherent", 0.5)])
    val, residual = expectation_real(st, quadrature(s, 0))
    assert residual < 1e-9
    assert val == pytest.approx(1.0, abs=1e-4)


def test_rotation_consistency_any_angle():
    # c1 = a1 cos + a2 sin, c2 = a1 sin - a2 cos: commutators survive rotation
    s = make_space([5, 5])
    a1 = lowering(s, 0)
    a2 = lowering(s, 1)
    rng = np.random.default_rng(7)
    occ = s.basis_occupations()
    interior = (occ[:, 0] < 4) & (occ[:, 1] < 4)
    for theta in rng.uniform(0, np.pi / 2, size=5):
        c1 = math.cos(theta) * a1 + math.sin(theta) * a2
        c2 = math.sin(theta) * a1 - math.cos(theta) * a2
        cross = (c1 @ c2.conj().T - c2.conj().T @ c1).toarray()
        assert np.abs(cross[np.ix_(interior, interior)]).max() < 1e-12
        for c in (c1, c2):
            comm = (c @ c.conj().T - c.conj().T @ c).toarray()
            block = comm[np.ix_(interior, interior)]
            assert np.allclose(block, np.eye(s.total_dim)[np.ix_(interior, interior)])


def test_thermal_weights_zero_temperature():
    w = thermal_weights(10, 0.0)
    assert w[0] == 1.0 and w[1:].sum() == 0.0


def test_transition_matrix():
    s = make_space([2, 3])
    t = transition(s, 1, 2, 0).toarray()
    st = product_state(s, [("fock", 0), ("fock", 0)])
    out = t @ st.array
    assert out[s.index_of((0, 2))] == 1.0
    assert np.count_nonzero(out) == 1
