"""Release-gate invariant suite behind ``lindbladqmc validate``.

Fast, deterministic versions of the package's cross-checks: every check
returns a :class:`CheckResult` and the CLI prints one pass/fail line per
check.  The heavyweight statistical versions of the same checks live in the
acceptance test module; here sizes are trimmed so a fresh checkout can be
gated in under a minute or two.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm
from scipy.stats import chi2

from . import bss, estimator, oracle, sampler
from .lattice import LatticeSpec, adjacency_matrix
from .model import FieldConfig, ModelParams, hs_identity_residual


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_hs_identity():
    """Field-decoupling identity at all four occupation pairs, grid of couplings."""
    worst = 0.0
    for gamma_dt in (0.005, 0.05, 0.2, 1.0):
        for nc in (0, 1):
            for nd in (0, 1):
                worst = max(worst, hs_identity_residual(nc, nd, gamma_dt))
    return CheckResult(
        name="field decoupling identity",
        passed=worst <= 1e-12,
        detail=f"max residual {worst:.2e} (tol 1e-12)",
    )


def check_trace_det_identity(n_pairs=30, seed=20):
    """Fock trace of quadratic exponentials equals single-particle determinant.

    For random complex ``X``, ``Y``:
    ``tr exp(c+ X c) exp(c+ Y c) = det(1 + e^X e^Y)``.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_pairs):
        n_modes = int(rng.integers(2, 5))
        ops = oracle.FockOperators.build(n_modes)
        x = rng.standard_normal((n_modes, n_modes)) + 1j * rng.standard_normal((n_modes, n_modes))
        y = rng.standard_normal((n_modes, n_modes)) + 1j * rng.standard_normal((n_modes, n_modes))
        x *= 0.7 / np.sqrt(n_modes)
        y *= 0.7 / np.sqrt(n_modes)
        lhs = np.trace(expm(ops.quadratic(x).toarray()) @ expm(ops.quadratic(y).toarray()))
        rhs = np.linalg.det(np.eye(n_modes) + expm(x) @ expm(y))
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return CheckResult(
        name="fermion trace-determinant identity",
        passed=worst <= 1e-10,
        detail=f"max relative error {worst:.2e} over {n_pairs} pairs (tol 1e-10)",
    )


def check_brute_vs_trotter(weight_fn=None, slice_counts=(1, 2)):
    """Exhaustive field sum against the dense sliced trace, both kinds.

    ``weight_fn`` may be swapped out to confirm that corrupted weights are
    actually caught (see the mutation tests).
    """
    spec = LatticeSpec(2, 2)
    worst = 0.0
    for n_t in slice_counts:
        params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=n_t)
        for kind in ("echo", "purity"):
            target = oracle.trotter_trace(spec, params, kind)
            total = oracle.brute_force_hs(spec, params, kind, weight_fn=weight_fn)
            worst = max(worst, abs(total - target) / abs(target))
    return CheckResult(
        name="field sum vs sliced trace",
        passed=worst <= 1e-8,
        detail=f"max relative error {worst:.2e} (tol 1e-8)",
    )


def check_mc_vs_oracle(seed=2):
    """Short telescoped runs on 2x2 against the dense sliced trace, 3 sigma."""
    spec = LatticeSpec(2, 2)
    adj = adjacency_matrix(spec)
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=4, n_ratio=8)
    settings = sampler.ChainSettings(n_warmup=100, n_sweeps=400, meas_interval=2)
    pulls = []
    for kind in ("echo", "purity"):
        factors = []
        for f in range(params.n_ratio):
            res = sampler.run_chain(settings, adj, params, f, kind, (seed, 0, f))
            factors.append(estimator.estimate_factor(res))
        log_ratio, stderr = estimator.telescope(factors)
        target = float(
            np.log(oracle.trotter_trace(spec, params, kind).real)
            - estimator.anchor_log_value(kind, params, spec.volume)
        )
        pulls.append(abs(log_ratio - target) / stderr)
    worst = max(pulls)
    return CheckResult(
        name="Monte Carlo vs dense reference",
        passed=worst <= 3.0,
        detail=f"pulls echo {pulls[0]:.2f}, purity {pulls[1]:.2f} sigma (tol 3)",
    )


def check_stabilization(seed=3):
    """Long-chain stress: drift at rebuilds, finite and grouping-stable weight."""
    spec = LatticeSpec(4, 4)
    adj = adjacency_matrix(spec)
    params = ModelParams(w=1.0, gamma=4.0, dt=0.05, n_t=200)
    lam = params.lam
    rng = np.random.default_rng(seed)
    worst_drift = 0.0
    worst_rel = 0.0
    for kind in ("echo", "purity"):
        props = bss.make_propagators(adj, params.w, params.dt, params.n_t, kind)
        config = FieldConfig.random(params.n_t, spec.volume, rng)
        green = bss.green_from_scratch(config, props, lam, 0)
        sampler.sweep(green, config, props, lam, rng)
        worst_drift = max(worst_drift, green.max_drift)
        lw = bss.log_weight(config, props, lam)
        lw_fine = bss.log_weight(config, props, lam, n_stab=1)
        if not np.isfinite(lw):
            return CheckResult("stabilized chain", False, "non-finite log weight")
        worst_rel = max(worst_rel, abs(lw - lw_fine) / abs(lw))
    return CheckResult(
        name="stabilized chain",
        passed=worst_drift < 1e-6 and worst_rel <= 1e-9,
        detail=(
            f"max drift {worst_drift:.2e} (tol 1e-6), "
            f"grouping spread {worst_rel:.2e} rel (tol 1e-9)"
        ),
    )


def check_detailed_balance(seed=4):
    """Stationary distribution of the sampler against exact weights.

    Chi-square test over all 256 field configurations of a 2x2 lattice with
    two slices, run for both estimator kinds.  The regime must avoid exact
    weight ties: a tied proposal is always accepted, and under the fixed
    slice-major scan exact ties can close short deterministic orbits that
    carve the sweep chain into separate components (zero hopping does this
    through the evenness of the weight in the field sum).  Strong hopping
    breaks all ties, and states with expected count below 10 are pooled into
    one tail bin to keep the chi-square statistic valid.
    """
    spec = LatticeSpec(2, 2)
    adj = adjacency_matrix(spec)
    n_t = 2
    n_spins = n_t * spec.volume
    params = ModelParams(w=1.0, gamma=2.0, dt=0.3, n_t=n_t)
    lam = params.lam
    details = []
    passed = True
    for kind in ("purity", "echo"):
        props = bss.make_propagators(adj, params.w, params.dt, n_t, kind)
        log_w = np.empty(2 ** n_spins)
        for i in range(2 ** n_spins):
            bits = [1 - 2 * ((i >> b) & 1) for b in range(n_spins)]
            s = np.array(bits, dtype=np.int8).reshape(n_t, spec.volume)
            log_w[i] = bss.log_weight(FieldConfig(s), props, lam)
        probs = np.exp(log_w - log_w.max())
        probs /= probs.sum()

        rng = np.random.default_rng(seed)
        config = FieldConfig.random(n_t, spec.volume, rng)
        green = bss.green_from_scratch(config, props, lam, 0)
        n_draws, thin = 8000, 6
        for _ in range(300):
            sampler.sweep(green, config, props, lam, rng)
        counts = np.zeros(2 ** n_spins)
        for _ in range(n_draws):
            for _ in range(thin):
                sampler.sweep(green, config, props, lam, rng)
            flat = config.s.reshape(-1)
            idx = sum(((1 - int(flat[b])) // 2) << b for b in range(n_spins))
            counts[idx] += 1
        expected = probs * n_draws
        main = expected >= 10.0
        obs = np.append(counts[main], counts[~main].sum())
        exp = np.append(expected[main], expected[~main].sum())
        stat = float(((obs - exp) ** 2 / exp).sum())
        df = len(obs) - 1
        p_value = float(chi2.sf(stat, df=df))
        passed = passed and p_value >= 0.01
        details.append(f"{kind} chi2 {stat:.1f} (df {df}), p = {p_value:.3f}")
    return CheckResult(
        name="sampler stationary distribution",
        passed=passed,
        detail="; ".join(details) + " (tol 0.01)",
    )


ALL_CHECKS = (
    check_hs_identity,
    check_trace_det_identity,
    check_brute_vs_trotter,
    check_mc_vs_oracle,
    check_stabilization,
    check_detailed_balance,
)


def run_all():
    return [check() for check in ALL_CHECKS]
