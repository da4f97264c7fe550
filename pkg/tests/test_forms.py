import numpy as np
import pytest
from hypothesis import given, strategies as st

from ucfem import forms
from ucfem.mesh import build_structured_mesh
from ucfem.observe import NoiseModel, ObservationSet, sample_locations
from ucfem.space import lagrange_space, nodal_interpolate

from conftest import B_REGION, OMEGA
from oracles import dense_p1_matrices


@pytest.fixture(scope="module")
def m4():
    return build_structured_mesh(4, omega=OMEGA, b_region=B_REGION)


def test_p1_matrices_match_dense_oracle(m4):
    V = lagrange_space(m4, 1)
    M, A, J, Bf = dense_p1_matrices(m4, m4.h)
    np.testing.assert_allclose(forms.assemble_mass(V).toarray(), M, atol=1e-14)
    np.testing.assert_allclose(forms.assemble_stiffness(V).toarray(), A, atol=1e-13)
    np.testing.assert_allclose(forms.assemble_jump(V).toarray(), J, atol=1e-12)
    np.testing.assert_allclose(forms.assemble_boundary_flux(V).toarray(), Bf, atol=1e-12)


def test_mass_and_stiffness_identities():
    m = build_structured_mesh(4)
    for k in (1, 2):
        V = lagrange_space(m, k)
        M = forms.assemble_mass(V)
        A = forms.assemble_stiffness(V)
        assert M.sum() == pytest.approx(1.0, rel=1e-13)
        np.testing.assert_allclose(np.asarray(A.sum(axis=1)).ravel(), 0.0, atol=1e-12)
        x = nodal_interpolate(V, lambda x, y: x).coeffs
        assert x @ (A @ x) == pytest.approx(1.0, rel=1e-13)
        assert x @ (M @ x) == pytest.approx(1 / 3, rel=1e-13)


def test_region_mass(m4):
    V = lagrange_space(m4, 2)
    assert forms.assemble_mass(V, region="omega").sum() == pytest.approx(0.125, rel=1e-13)


def test_jump_hand_value_two_triangles():
    m = build_structured_mesh(1)
    V = lagrange_space(m, 1)
    J = forms.assemble_jump(V).toarray()
    # hat at (0, 1): gradient jump of magnitude sqrt(2) across the diagonal of length sqrt(2), h = sqrt(2)
    i = int(np.flatnonzero((V.dof_coords[:, 0] == 0) & (V.dof_coords[:, 1] == 1))[0])
    assert J[i, i] == pytest.approx(4.0, rel=1e-14)


@pytest.mark.parametrize("k", [1, 2])
def test_jump_vanishes_on_global_polynomials(k):
    V = lagrange_space(build_structured_mesh(6), k)
    J = forms.assemble_jump(V)
    for p in range(k + 1):
        for q in range(k + 1 - p):
            c = nodal_interpolate(V, lambda x, y: x ** p * y ** q).coeffs
            assert abs(c @ (J @ c)) <= 1e-12


@given(st.integers(0, 10 ** 6), st.sampled_from([1, 2]))
def test_jump_psd(seed, k):
    V = lagrange_space(build_structured_mesh(3), k)
    J = forms.assemble_jump(V)
    v = np.random.default_rng(seed).standard_normal(V.dof_count)
    assert v @ (J @ v) >= -1e-12
    assert abs(J - J.T).max() < 1e-13


def test_element_laplacian_of_quadratic():
    V = lagrange_space(build_structured_mesh(4), 2)
    c = nodal_interpolate(V, lambda x, y: x * x).coeffs
    L = forms.assemble_element_laplacian_product(V, 1.0)
    assert c @ (L @ c) == pytest.approx(4.0, rel=1e-10)
    # P1 Laplacians vanish elementwise
    V1 = lagrange_space(build_structured_mesh(4), 1)
    assert abs(forms.assemble_element_laplacian_product(V1, 1.0)).max() < 1e-14


def test_coupling_p1_is_stiffness_rows():
    m = build_structured_mesh(4)
    V = lagrange_space(m, 1)
    W = lagrange_space(m, 1, dirichlet=True)
    C = forms.assemble_coupling(V, W).toarray()
    A = forms.assemble_stiffness(V).toarray()
    free = np.flatnonzero(~W.dirichlet_mask)
    np.testing.assert_allclose(C, A[free], atol=1e-13)


def test_laplacian_source_p2():
    m = build_structured_mesh(4)
    V = lagrange_space(m, 2)
    W = lagrange_space(m, 1, dirichlet=True)
    L = forms.assemble_laplacian_source(V, W)
    u = nodal_interpolate(V, lambda x, y: x * x + 3 * y * y).coeffs   # lap = 8
    w = np.ones(W.dof_count)
    integral_w = forms.assemble_load(W, lambda x, y: 1.0 + 0 * x) @ w
    assert u @ (L @ w) == pytest.approx(8.0 * integral_w, rel=1e-12)


def test_wh_inner_needs_dirichlet():
    V = lagrange_space(build_structured_mesh(4), 1)
    with pytest.raises(ValueError):
        forms.assemble_wh_inner(V)


def test_wh_inner_positive_definite():
    W = lagrange_space(build_structured_mesh(4), 1, dirichlet=True)
    assert np.linalg.eigvalsh(forms.assemble_wh_inner(W).toarray())[0] > 0


def test_weighted_h1_rejects_nonpositive():
    V = lagrange_space(build_structured_mesh(2), 1)
    with pytest.raises(ValueError):
        forms.assemble_weighted_h1(V, 0.0)


def test_load_and_projection():
    m = build_structured_mesh(8)
    W = lagrange_space(m, 1, dirichlet=True)
    F = forms.assemble_load(W, lambda x, y: 1.0 + 0 * x)
    # the W_h basis is not a partition of unity, so compare with the full P1 mass row sums
    V = lagrange_space(m, 1)
    free = np.flatnonzero(~W.dirichlet_mask)
    np.testing.assert_allclose(F, np.asarray(forms.assemble_mass(V).sum(axis=1)).ravel()[free], rtol=1e-13)
    assert not np.any(forms.assemble_load(W, None))
    fh = forms.project_source(W, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
    assert fh(np.array([[0.5, 0.5]]))[0] == pytest.approx(1.0, abs=0.05)
    assert not np.any(forms.project_source(W, None).coeffs)


def test_data_term_scalar_example():
    m = build_structured_mesh(4, omega=OMEGA, b_region=B_REGION)
    V = lagrange_space(m, 1)
    c = 1.7
    obs = ObservationSet([[0.5, 0.375]], [0.0], NoiseModel(1.0, np.array([0.09])))
    d = forms.assemble_data_term(V, obs)
    v = np.full(V.dof_count, c)
    assert d.quadratic(v) == pytest.approx(c ** 2 / 0.09, rel=1e-13)


def test_data_term_law_of_large_numbers():
    m = build_structured_mesh(4, omega=OMEGA, b_region=B_REGION)
    V = lagrange_space(m, 2)
    f = nodal_interpolate(V, lambda x, y: np.cos(3 * x) + y)
    locs = sample_locations(200_000, OMEGA, 9)
    d = forms.assemble_data_term(V, ObservationSet(locs, np.zeros(len(locs)), NoiseModel(0.3)))
    M = forms.assemble_mass(V, region="omega")
    exact = f.coeffs @ (M @ f.coeffs) / 0.125
    assert d.quadratic(f.coeffs) == pytest.approx(exact, rel=5e-3)


def test_data_term_noise_kinds_agree():
    m = build_structured_mesh(4, omega=OMEGA, b_region=B_REGION)
    V = lagrange_space(m, 1)
    locs = sample_locations(30, OMEGA, 1)
    y = np.arange(30.0)
    shape = np.linspace(0.5, 1.5, 30)
    dd = forms.assemble_data_term(V, ObservationSet(locs, y, NoiseModel(0.1, shape)))
    dm = forms.assemble_data_term(V, ObservationSet(locs, y, NoiseModel(0.1, np.diag(shape))))
    np.testing.assert_allclose(dd.gram().toarray(), dm.gram().toarray(), atol=1e-12)
    np.testing.assert_allclose(dd.rhs(y), dm.rhs(y), atol=1e-12)


def test_data_term_outside_omega_rejected():
    m = build_structured_mesh(4, omega=OMEGA, b_region=B_REGION)
    V = lagrange_space(m, 1)
    with pytest.raises(ValueError, match="omega"):
        forms.assemble_data_term(V, ObservationSet([[0.9, 0.9]], [1.0], NoiseModel(0.1)))


def test_coo_roundtrip(tmp_path):
    V = lagrange_space(build_structured_mesh(3), 2)
    A = forms.assemble_stiffness(V)
    forms.write_coo(tmp_path / "a.txt", A)
    B = forms.read_coo(tmp_path / "a.txt")
    assert abs(A - B).max() == 0.0
