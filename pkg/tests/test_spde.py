import numpy as np
import pytest

from macrohydro import (
    BoundaryData,
    InsufficientSamples,
    Mesh1D,
    SimConfig,
    StabilityViolation,
    assemble,
    autocorrelation,
    discrete_stationary_covariance,
    ensemble_mean_check,
    gaussian_markov_tests,
    increment_tests,
    lyapunov_solve,
    noise_covariance,
    semigroup_apply,
    sep,
    simulate,
    solve_steady,
    stationary_covariance,
)
from macrohydro.stats import path_seed, splitmix64


@pytest.fixture(scope="module")
def sep32():
    model = sep()
    prof = solve_steady(model, Mesh1D(32), BoundaryData([0.3], [0.7]))
    sys = assemble(model, prof)
    noise = noise_covariance(model, prof)
    return model, prof, sys, noise


def bound_dt(prof):
    return 0.4 * prof.mesh.h**2 / 2.0


def test_splitmix64_reference_value():
    # first output of the standard SplitMix64 sequence seeded at 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert path_seed(7, 3) == splitmix64(7 ^ 3)
    seeds = {path_seed(42, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert all(0 <= s < 2**64 for s in seeds)


def test_zero_noise_stays_zero(sep32):
    model, prof, sys, noise = sep32
    cfg = SimConfig(dt=bound_dt(prof), steps=50, burn_in=0, n_paths=3, seed=1, record_stride=10)
    ens = simulate(model, sys, None, cfg)
    assert np.all(ens.states == 0.0)


def test_zero_noise_matches_power_iteration_and_semigroup(sep32):
    model, prof, sys, _ = sep32
    dt = bound_dt(prof)
    k = int(round(0.05 / dt))
    rng = np.random.default_rng(5)
    v = rng.standard_normal(32)
    cfg = SimConfig(dt=dt, steps=k, burn_in=0, n_paths=2, seed=1, record_stride=k)
    ens = simulate(model, sys, None, cfg, initial=v)
    A = np.eye(32) + dt * sys.L
    power = np.linalg.matrix_power(A, k) @ v
    assert np.max(np.abs(ens.states[-1, 0] - power)) < 1e-11 * np.max(np.abs(v))
    exact = semigroup_apply(sys, k * dt, v)
    # Euler drift error is O(dt) over a fixed horizon
    assert np.max(np.abs(ens.states[-1, 0] - exact)) < 5 * dt * abs(sys.spectral_abscissa) * np.max(np.abs(v))


def test_bit_reproducibility_and_chunk_independence(sep32):
    model, prof, sys, noise = sep32
    cfg = SimConfig(dt=bound_dt(prof), steps=40, burn_in=10, n_paths=33, seed=9,
                    record_stride=10, record_increments=True)
    a = simulate(model, sys, noise, cfg)
    b = simulate(model, sys, noise, cfg)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.increments, b.increments)
    cfg_chunked = SimConfig(dt=cfg.dt, steps=40, burn_in=10, n_paths=33, seed=9,
                            record_stride=10, record_increments=True, path_chunk=7)
    c = simulate(model, sys, noise, cfg_chunked, workers=2)
    assert np.array_equal(a.states, c.states)
    assert np.array_equal(a.increments, c.increments)


def test_stability_guard(sep32):
    model, prof, sys, noise = sep32
    with pytest.raises(StabilityViolation):
        simulate(model, sys, noise, SimConfig(dt=3 * bound_dt(prof), steps=10,
                                              burn_in=0, n_paths=2, seed=1, record_stride=1))


def test_closed_walls_conserve_total(sep32):
    model, prof, sys, noise = sep32
    cfg = SimConfig(dt=bound_dt(prof), steps=200, burn_in=0, n_paths=4, seed=11,
                    record_stride=1, closed_walls=True)
    ens = simulate(model, sys, noise, cfg)
    totals = ens.states.sum(axis=2)   # (S, P)
    drift = np.max(np.abs(totals - totals[0]))
    assert drift < 200 * 1e-12 * max(1.0, np.max(np.abs(ens.states)))


def test_ensemble_matches_exact_chain_law(sep32):
    # strong validation: the sample covariance agrees entrywise with the
    # discrete-Lyapunov solution for the chain actually simulated
    model, prof, sys, noise = sep32
    relax = 1.0 / abs(sys.spectral_abscissa)
    dt = bound_dt(prof) / 4
    stride = int(round(0.5 * relax / dt))
    cfg = SimConfig(dt=dt, steps=12 * stride, burn_in=int(np.ceil(8 * relax / dt)),
                    n_paths=300, seed=21, record_stride=stride)
    ens = simulate(model, sys, noise, cfg, workers=2)
    C_chain = discrete_stationary_covariance(sys, noise, dt)
    C_hat, SE = stationary_covariance(ens)
    z = np.abs(C_hat - C_chain) / SE
    assert np.mean(z <= 4.0) > 0.985
    assert np.max(z) < 8.0


def test_em_stationary_bias_first_order(sep32):
    # the integrator's stationary covariance approaches the Lyapunov solution
    # at first order in dt (measured exactly, no Monte-Carlo error)
    model, prof, sys, noise = sep32
    C = lyapunov_solve(sys, noise)
    dt0 = bound_dt(prof)
    e1 = np.linalg.norm(discrete_stationary_covariance(sys, noise, dt0 / 4) - C)
    e2 = np.linalg.norm(discrete_stationary_covariance(sys, noise, dt0 / 8) - C)
    assert e1 / e2 == pytest.approx(2.0, abs=0.35)


def test_mean_check_and_autocorrelation(sep32):
    model, prof, sys, noise = sep32
    relax = 1.0 / abs(sys.spectral_abscissa)
    dt = bound_dt(prof)
    stride = int(round(0.5 * relax / dt))
    cfg = SimConfig(dt=dt, steps=12 * stride, burn_in=int(np.ceil(6 * relax / dt)),
                    n_paths=400, seed=31, record_stride=stride)
    ens = simulate(model, sys, noise, cfg, workers=2)
    assert ensemble_mean_check(ens)["pass"]

    spacing = ens.snapshot_spacing
    acf = autocorrelation(ens, [0.0, spacing, 10 * spacing])
    C0, SE0 = acf[0.0]
    C1, _ = acf[spacing]
    # lag-0 reduces to the stationary covariance
    Cs, _ = stationary_covariance(ens)
    assert np.array_equal(C0, Cs)
    # a half-relaxation lag damps the trace visibly
    assert np.trace(C1) < 0.75 * np.trace(C0)
    # five relaxation times: correlations gone within noise
    C5, SE5 = acf[10 * spacing]
    assert np.mean(np.abs(C5) <= 4.0 * SE5) > 0.99
    with pytest.raises(ValueError, match="multiple"):
        autocorrelation(ens, [0.3 * spacing])
    with pytest.raises(InsufficientSamples):
        autocorrelation(ens, [40 * spacing])


def test_doubling_paths_shrinks_se(sep32):
    model, prof, sys, noise = sep32
    dt = bound_dt(prof)
    base = dict(dt=dt, steps=400, burn_in=400, record_stride=100, seed=71)
    _, se_small = stationary_covariance(simulate(model, sys, noise,
                                                 SimConfig(n_paths=150, **base), workers=2))
    _, se_big = stationary_covariance(simulate(model, sys, noise,
                                               SimConfig(n_paths=600, **base), workers=2))
    ratio = np.median(se_small / se_big)
    assert ratio == pytest.approx(2.0, abs=0.35)


def test_increment_battery_small_scale(sep32):
    model, prof, sys, noise = sep32
    relax = 1.0 / abs(sys.spectral_abscissa)
    dt = bound_dt(prof)
    stride = max(1, int(np.ceil(0.2 * relax / dt)))
    cfg = SimConfig(dt=dt, steps=10 * stride, burn_in=int(np.ceil(relax / dt)),
                    n_paths=800, seed=41, record_stride=stride, record_increments=True)
    ens = simulate(model, sys, noise, cfg, workers=2)
    report = increment_tests(ens, noise, sys)
    slope = next(c for c in report["checks"] if c["name"] == "variance_slope_ratio")
    assert abs(slope["value"] - 1.0) < 0.1    # 800 paths: ~2.5% standard error
    zero_checks = [c for c in report["checks"] if "orthogonality" in c["name"] or "disjoint" in c["name"]]
    assert all(c["pass"] for c in zero_checks)


def test_increments_require_recording(sep32):
    model, prof, sys, noise = sep32
    cfg = SimConfig(dt=bound_dt(prof), steps=50, burn_in=0, n_paths=20, seed=3, record_stride=10)
    ens = simulate(model, sys, noise, cfg)
    with pytest.raises(InsufficientSamples):
        increment_tests(ens, noise, sys)


def test_gaussian_markov_pass_and_surrogate_detection(sep32):
    model, prof, sys, noise = sep32
    dt = bound_dt(prof)
    relax = 1.0 / abs(sys.spectral_abscissa)
    base = dict(dt=dt, steps=120, burn_in=int(np.ceil(relax / dt)), n_paths=300,
                record_stride=1)
    good = simulate(model, sys, noise, SimConfig(seed=51, **base), workers=2)
    report = gaussian_markov_tests(good, markov_lag_snapshots=1)
    assert report["pass"]

    bad = simulate(model, sys, noise, SimConfig(seed=51, noise_memory=True, **base), workers=2)
    report_bad = gaussian_markov_tests(bad, markov_lag_snapshots=1)
    markov = next(c for c in report_bad["checks"] if "markov" in c["name"])
    assert not markov["pass"]
    assert abs(markov["z"]) > 10


def test_stationary_covariance_needs_paths(sep32):
    model, prof, sys, noise = sep32
    cfg = SimConfig(dt=bound_dt(prof), steps=10, burn_in=0, n_paths=1, seed=2, record_stride=5)
    ens = simulate(model, sys, noise, cfg)
    with pytest.raises(InsufficientSamples):
        stationary_covariance(ens)


def test_no_blowup_long_run(sep32):
    # stability bound respected: 10^6 steps remain finite (single path)
    model, prof, sys, noise = sep32
    cfg = SimConfig(dt=bound_dt(prof), steps=1_000_000, burn_in=0, n_paths=1,
                    seed=61, record_stride=100_000)
    ens = simulate(model, sys, noise, cfg)
    assert np.all(np.isfinite(ens.states))
