import numpy as np
import pytest
from scipy.linalg import expm

from lindbladqmc import oracle
from lindbladqmc.errors import SizeCapError
from lindbladqmc.lattice import LatticeSpec
from lindbladqmc.model import ModelParams


def test_fock_anticommutators():
    ops = oracle.FockOperators.build(4)
    eye = np.eye(ops.dim)
    for p in range(4):
        cp = ops.lowering[p].toarray()
        for q in range(4):
            cq = ops.lowering[q].toarray()
            cq_dag = ops.raising(q).toarray()
            assert np.allclose(cp @ cq + cq @ cp, 0.0, atol=1e-14)
            want = eye if p == q else 0.0
            assert np.allclose(cp @ cq_dag + cq_dag @ cp, want, atol=1e-14)


def test_fock_number_operator():
    ops = oracle.FockOperators.build(3)
    for p in range(3):
        n_op = (ops.raising(p) @ ops.lowering[p]).toarray()
        assert np.allclose(n_op, np.diag(ops.occupation_diagonal(p)), atol=1e-14)


def test_quadratic_shape_check():
    ops = oracle.FockOperators.build(3)
    with pytest.raises(ValueError):
        ops.quadratic(np.zeros((2, 2)))


def test_quadratic_single_mode_phase():
    # exp(i theta n) on one mode
    ops = oracle.FockOperators.build(1)
    q = ops.quadratic(np.array([[1.0j]])).toarray()
    assert np.allclose(expm(q), np.diag([1.0, np.exp(1.0j)]), atol=1e-12)


def test_trace_determinant_identity():
    # tr exp(c+ X c) exp(c+ Y c) = det(1 + e^X e^Y), random non-Hermitian pairs
    rng = np.random.default_rng(12)
    for _ in range(20):
        m = int(rng.integers(2, 5))
        ops = oracle.FockOperators.build(m)
        x = (rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))) * 0.7 / np.sqrt(m)
        y = (rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))) * 0.7 / np.sqrt(m)
        lhs = np.trace(expm(ops.quadratic(x).toarray()) @ expm(ops.quadratic(y).toarray()))
        rhs = np.linalg.det(np.eye(m) + expm(x) @ expm(y))
        assert abs(lhs - rhs) <= 1e-10 * abs(rhs)


def test_single_site_generator_spectrum():
    # one site: eigenvalues 0, -gamma/2, -gamma/2, 0 on the doubled space
    gamma = 4.0
    liou = oracle.liouvillian_from_adjacency(np.zeros((1, 1)), 0.0, gamma)
    evals = np.sort(np.linalg.eigvals(liou.dense()).real)
    assert np.allclose(evals, [-gamma / 2, -gamma / 2, 0.0, 0.0], atol=1e-12)


def test_single_site_purity_decay():
    gamma = 4.0
    liou = oracle.liouvillian_from_adjacency(np.zeros((1, 1)), 0.0, gamma)
    for t in (0.1, 0.5, 2.0):
        got = np.trace(expm(liou.dense() * t)).real
        assert got == pytest.approx(2.0 + 2.0 * np.exp(-gamma * t / 2.0), rel=1e-12)


def test_trace_preservation():
    # Lindblad evolution preserves the trace of any density matrix
    rng = np.random.default_rng(7)
    adj = np.array([[0.0, 2.0], [2.0, 0.0]])
    liou = oracle.liouvillian_from_adjacency(adj, 1.0, 3.0)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    vec = oracle.vectorize_density_matrix(rho, 2)
    assert oracle.trace_of_vectorized(vec, 2) == pytest.approx(1.0, abs=1e-12)
    for t in (0.3, 1.7):
        evolved = expm(liou.dense() * t) @ vec
        assert oracle.trace_of_vectorized(evolved, 2) == pytest.approx(1.0, abs=1e-10)


def test_vectorize_shape_check():
    with pytest.raises(ValueError):
        oracle.vectorize_density_matrix(np.eye(3), 2)


def test_exact_fidelities_zero_coupling():
    # gamma = 0: the echo trace is the doubled-space dimension 2^(2V), the
    # purity trace is the free-fermion value |det(1 + exp(-i w t A))|^2
    from lindbladqmc.lattice import adjacency_matrix

    spec = LatticeSpec(2, 2)
    params = ModelParams(w=1.0, gamma=0.0, dt=0.1, n_t=3)
    echo, purity = oracle.exact_fidelities(spec, params)
    assert echo.real == pytest.approx(2.0 ** 8, rel=1e-10)
    adj = adjacency_matrix(spec)
    free = abs(np.linalg.det(np.eye(4) + expm(-1j * params.w * params.t * adj))) ** 2
    assert purity.real == pytest.approx(free, rel=1e-10)
    assert abs(echo.imag) < 1e-8 and abs(purity.imag) < 1e-8


def test_exact_fidelities_zero_hopping():
    # w = 0: sites decouple, each contributing 2 + 2 exp(-gamma t / 2)
    spec = LatticeSpec(2, 2)
    params = ModelParams(w=0.0, gamma=4.0, dt=0.1, n_t=5)
    echo, purity = oracle.exact_fidelities(spec, params)
    want = (2.0 + 2.0 * np.exp(-params.gamma * params.t / 2.0)) ** 4
    assert purity.real == pytest.approx(want, rel=1e-10)
    assert echo.real == pytest.approx(want, rel=1e-10)


def test_trotter_single_slice_definition():
    # one slice: quadratic factor then diagonal factor, traced
    spec = LatticeSpec(2, 2)
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=1)
    liou = oracle.build_liouvillian(spec, params)
    kin = liou.dense_kinetic()
    want = np.trace(expm(kin * params.dt) * np.exp(liou.potential_diag * params.dt)[None, :])
    got = oracle.trotter_trace(spec, params, "purity")
    assert got == pytest.approx(want, rel=1e-12)


def test_trotter_converges_to_exact():
    spec = LatticeSpec(2, 2)
    for kind in ("echo", "purity"):
        errs = []
        for n_t in (2, 8):
            params = ModelParams(w=1.0, gamma=4.0, dt=0.4 / n_t, n_t=n_t)
            idx = 0 if kind == "echo" else 1
            exact = oracle.exact_fidelities(spec, params)[idx].real
            errs.append(abs(oracle.trotter_trace(spec, params, kind).real - exact))
        assert errs[1] < errs[0] / 4


def test_trotter_kind_validation():
    spec = LatticeSpec(2, 2)
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=1)
    with pytest.raises(ValueError):
        oracle.trotter_trace(spec, params, "both")


@pytest.mark.parametrize("kind", ["echo", "purity"])
@pytest.mark.parametrize("n_t", [1, 2])
def test_brute_force_matches_trotter(kind, n_t):
    spec = LatticeSpec(2, 2)
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=n_t)
    want = oracle.trotter_trace(spec, params, kind)
    assert abs(want.imag) < 1e-10 * abs(want.real)
    got = oracle.brute_force_hs(spec, params, kind)
    assert got == pytest.approx(want.real, rel=1e-10)


def test_brute_force_weight_injection():
    # a corrupted weight must break the agreement; guards the oracle harness
    from lindbladqmc import bss

    spec = LatticeSpec(2, 2)
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=1)
    want = oracle.trotter_trace(spec, params, "purity").real

    def flipped_sign(config, props, lam, n_stab=bss.DEFAULT_N_STAB):
        return bss.log_weight(config, props, lam, n_stab) + 2.0 * lam * config.spin_sum

    got = oracle.brute_force_hs(spec, params, "purity", weight_fn=flipped_sign)
    assert abs(got - want) > 1e-6 * abs(want)


def test_size_caps():
    with pytest.raises(SizeCapError):
        oracle.liouvillian_from_adjacency(np.zeros((7, 7)), 1.0, 1.0)
    spec = LatticeSpec(2, 2)
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=6)
    with pytest.raises(SizeCapError):
        oracle.brute_force_hs(spec, params, "purity")
