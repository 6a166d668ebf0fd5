import numpy as np
import pytest

from lindbladqmc import bss, estimator, oracle, sampler
from lindbladqmc.errors import EstimatorError
from lindbladqmc.estimator import FactorEstimate
from lindbladqmc.lattice import LatticeSpec, adjacency_matrix
from lindbladqmc.model import FieldConfig, ModelParams


def make_factor(index, mean, stderr=0.0, lo=0.0, hi=1.0):
    return FactorEstimate(
        factor_index=index,
        coupling_lo=lo,
        coupling_hi=hi,
        mean=mean,
        stderr=stderr,
        n_samples=100,
        acceptance_rate=0.5,
        max_drift=0.0,
    )


def test_binned_stderr_iid():
    rng = np.random.default_rng(0)
    values = rng.normal(size=4096)
    mean, err = estimator.binned_stderr(values)
    assert mean == pytest.approx(values.mean())
    assert err == pytest.approx(1.0 / 64.0, rel=0.3)


def test_binned_stderr_grows_for_correlated_data():
    rng = np.random.default_rng(1)
    base = rng.normal(size=256)
    values = np.repeat(base, 16)  # correlation length 16
    _, naive = estimator.binned_stderr(base)
    _, err = estimator.binned_stderr(values)
    # true error equals that of the 256 independent values
    assert err > 3.0 * values.std(ddof=1) / np.sqrt(values.size)
    assert err == pytest.approx(naive, rel=0.2)


def test_binned_stderr_edge_cases():
    mean, err = estimator.binned_stderr([2.5])
    assert mean == 2.5 and err == float("inf")
    mean, err = estimator.binned_stderr(np.full(100, 0.75))
    assert mean == 0.75 and err == 0.0
    with pytest.raises(EstimatorError):
        estimator.binned_stderr([])


def test_estimate_factor_plumbing():
    adj = adjacency_matrix(LatticeSpec(2, 2))
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=4, n_ratio=4)
    settings = sampler.ChainSettings(n_warmup=10, n_sweeps=40, meas_interval=2)
    res = sampler.run_chain(settings, adj, params, 1, "purity", (5, 0, 1))
    fac = estimator.estimate_factor(res)
    assert fac.factor_index == 1
    assert fac.mean == pytest.approx(res.values.mean())
    assert fac.n_samples == len(res.samples)
    assert fac.coupling_lo == res.coupling_lo
    assert fac.acceptance_rate == res.acceptance_rate


def test_telescope_arithmetic():
    factors = [make_factor(0, 0.5, 0.01), make_factor(1, 0.8, 0.02)]
    log_ratio, err = estimator.telescope(factors)
    assert log_ratio == pytest.approx(-(np.log(0.5) + np.log(0.8)), rel=1e-14)
    assert err == pytest.approx(np.hypot(0.01 / 0.5, 0.02 / 0.8), rel=1e-14)


def test_telescope_rejects_bad_means():
    factors = [make_factor(0, 0.5), make_factor(1, -0.2), make_factor(2, float("nan"))]
    with pytest.raises(EstimatorError, match=r"\[1, 2\]"):
        estimator.telescope(factors)


def test_anchor_echo_is_doubled_space_dimension():
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=8)
    for volume in (1, 4, 16):
        assert estimator.anchor_log_value("echo", params, volume) == pytest.approx(
            2.0 * volume * np.log(2.0), rel=1e-15
        )
    with pytest.raises(ValueError):
        estimator.anchor_log_value("trace", params, 4)


def test_anchor_purity_matches_dense_reference_at_zero_hopping():
    spec = LatticeSpec(2, 2)
    for n_t in (3, 7):
        params = ModelParams(w=0.0, gamma=3.0, dt=0.11, n_t=n_t)
        _, purity = oracle.exact_fidelities(spec, params)
        anchor = estimator.anchor_log_value("purity", params, 4)
        assert anchor == pytest.approx(float(np.log(purity.real)), rel=1e-12)


def test_alt_anchor_decays_faster():
    params = ModelParams(w=1.0, gamma=2.0, dt=0.1, n_t=10)
    main = estimator.anchor_log_value("purity", params, 4)
    alt = estimator.anchor_log_value_alt("purity", params, 4)
    assert alt < main
    assert estimator.anchor_log_value_alt("echo", params, 4) == estimator.anchor_log_value(
        "echo", params, 4
    )


def test_assemble_point_and_zero_time():
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=8)
    factors = [make_factor(0, 1.0), make_factor(1, np.exp(-0.3))]
    point = estimator.assemble_point(factors, params, 4, "echo")
    assert point.t_w == pytest.approx(0.4)
    # echo anchor cancels the normalization, leaving the bare telescoped log
    assert point.log_ratio == pytest.approx(0.3, rel=1e-12)
    assert point.volume == 4 and point.kind == "echo"
    zero = estimator.zero_time_point(4, "purity")
    assert zero.t_w == 0.0 and zero.log_ratio == 0.0 and zero.stderr == 0.0


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["echo", "purity"])
def test_exhaustive_telescope_reproduces_slice_split_trace(kind):
    # with exact (exhaustively summed) factor means the telescoped product
    # collapses to sum_w(full) / sum_w(zero), and the zero-coupling sum is the
    # anchor itself, so the assembled point must equal the slice-split trace
    # over the initial value with no statistical error at all
    spec = LatticeSpec(2, 2)
    adj = adjacency_matrix(spec)
    params = ModelParams(w=1.0, gamma=2.0, dt=0.3, n_t=2, n_ratio=2)

    def total_weight(coupling):
        if kind == "echo":
            props = bss.make_propagators(adj, params.w, params.dt, 2, kind)
            lam = coupling
        else:
            props = bss.make_propagators(adj, coupling, params.dt, 2, kind)
            lam = params.lam
        total = 0.0
        for i in range(2 ** 8):
            bits = [1 - 2 * ((i >> b) & 1) for b in range(8)]
            s = np.array(bits, dtype=np.int8).reshape(2, 4)
            total += np.exp(bss.log_weight(FieldConfig(s), props, lam))
        return total

    grid = [sampler.coupling_steps(params, kind, 0)[0]]
    grid += [sampler.coupling_steps(params, kind, f)[1] for f in range(2)]
    sums = [total_weight(c) for c in grid]
    factors = [
        make_factor(f, sums[f] / sums[f + 1], lo=grid[f], hi=grid[f + 1])
        for f in range(2)
    ]
    point = estimator.assemble_point(factors, params, 4, kind)

    want = float(np.log(oracle.trotter_trace(spec, params, kind).real / 4.0 ** 4))
    assert point.log_ratio == pytest.approx(want, rel=1e-10, abs=1e-12)
    assert point.stderr == 0.0
