"""Langevin simulation of the fluctuation field and its statistical tests.

The linearized fluctuation field obeys the additive-noise Langevin equation
d xi = L xi dt + dw, where w is the divergence of a face-current white noise
with local covariance 2 K_theta. Euler-Maruyama steps are used:

    xi  <-  xi + dt L xi + Div dW,   dW_f ~ N(0, 2 K_theta(face f) dt / d_f)

with independent draws per face and step. Generating the noise on faces and
taking the discrete divergence makes the cell-space noise covariance equal
to Gamma from :mod:`macrohydro.covariance` *by construction* and preserves
the conservation-law structure: with the walls closed (diagnostic mode) the
total of each component is constant along every path.

Paths draw from per-path RNG streams (see :mod:`macrohydro.stats`), so an
ensemble is bit-reproducible regardless of chunking or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InsufficientSamples, NonFiniteState, StabilityViolation
from .linop import LinearizedSystem, operator_matrices
from .covariance import NoiseCovariance
from .stats import (
    batch_mean_se,
    cluster_regression,
    path_generator,
    pooled_kurtosis_jackknife,
    rng_trace,
)
from .steady import stability_limit
from .thermo import ThermoModel

__all__ = [
    "SimConfig",
    "Ensemble",
    "simulate",
    "discrete_stationary_covariance",
    "stationary_covariance",
    "autocorrelation",
    "increment_tests",
    "gaussian_markov_tests",
    "ensemble_mean_check",
]

SAFETY = 0.4


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings; identical configs give bit-identical ensembles."""

    dt: float
    steps: int                 # recorded phase, after burn_in
    burn_in: int               # discarded steps
    n_paths: int
    seed: int
    record_stride: int
    record_increments: bool = False
    noise_memory: bool = False   # diagnostic: one-step AR noise, breaks Markov
    closed_walls: bool = False   # diagnostic: zero-flux walls, conserves totals
    path_chunk: int = 256

    def __post_init__(self):
        if self.steps < 0 or self.burn_in < 0 or self.n_paths < 1:
            raise ValueError("steps/burn_in must be >= 0 and n_paths >= 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def n_snapshots(self) -> int:
        return self.steps // self.record_stride


@dataclass
class Ensemble:
    """Recorded snapshots of a path ensemble (times, states, noise sums)."""

    config: SimConfig
    times: np.ndarray          # (S,) absolute times of snapshots
    states: np.ndarray         # (S, P, N)
    increments: np.ndarray | None   # (S, P, N) accumulated noise since burn-in
    rng: dict                  # stream derivation record

    @property
    def snapshot_spacing(self) -> float:
        return self.config.dt * self.config.record_stride


def _noise_map(sys: LinearizedSystem, noise: NoiseCovariance, closed_walls: bool) -> np.ndarray:
    """Cells x face-noise matrix M with M M^T = Gamma."""
    n_faces, m, _ = noise.face_factors.shape
    big = np.zeros((n_faces * m, n_faces * m))
    for f in range(n_faces):
        if closed_walls and f in (0, n_faces - 1):
            continue
        big[f * m:(f + 1) * m, f * m:(f + 1) * m] = noise.face_factors[f]
    return sys.Div @ big


def simulate(
    model: ThermoModel,
    sys: LinearizedSystem,
    noise: NoiseCovariance | None,
    cfg: SimConfig,
    initial: np.ndarray | None = None,
    workers: int = 1,
) -> Ensemble:
    """Run the Euler-Maruyama ensemble, by default from xi = 0.

    ``noise=None`` switches the forcing off entirely (deterministic decay,
    used to cross-check the integrator against the semigroup). ``initial``
    seeds every path with the same state. ``workers`` may thread path chunks
    across cores; outputs are bit-identical for any worker count. Raises
    StabilityViolation if dt exceeds the explicit diffusive bound (safety
    factor 0.4) or the slow-mode limit 2/|spectral abscissa|, and
    NonFiniteState on blow-up.
    """
    profile = sys.profile
    limit = stability_limit(model, profile.mesh, profile.q, SAFETY)
    if cfg.dt > limit * (1 + 1e-12):
        raise StabilityViolation(f"dt={cfg.dt:.3e} exceeds diffusive bound {limit:.3e}")
    if cfg.dt >= 2.0 / abs(sys.spectral_abscissa):
        raise StabilityViolation("dt exceeds 2/|spectral abscissa|")

    L = sys.L
    if cfg.closed_walls:
        L, _, _ = operator_matrices(
            model, profile.mesh, profile.q, profile.q_left, profile.q_right, closed_walls=True
        )
    N = L.shape[0]
    if noise is None:
        M = np.zeros((N, profile.q.shape[1] * (profile.mesh.n + 1)))
    else:
        M = _noise_map(sys, noise, cfg.closed_walls)
    F = M.shape[1]
    Lt = np.ascontiguousarray(L.T)
    Mt = np.ascontiguousarray(M.T)

    S = cfg.n_snapshots
    states = np.empty((S, cfg.n_paths, N))
    increments = np.empty((S, cfg.n_paths, N)) if cfg.record_increments else None
    total = cfg.burn_in + cfg.steps
    sqrt_dt = np.sqrt(cfg.dt)
    block = max(16, min(4096, (1 << 23) // max(1, min(cfg.n_paths, cfg.path_chunk) * F)))

    def run_chunk(start: int, stop: int):
        gens = [path_generator(cfg.seed, p) for p in range(start, stop)]
        width = stop - start
        if initial is None:
            xi = np.zeros((width, N))
        else:
            xi = np.tile(np.asarray(initial, dtype=float).reshape(1, N), (width, 1))
        w_acc = np.zeros((width, N))
        z_prev = np.zeros((width, F))
        done = 0
        while done < total:
            blk = min(block, total - done)
            z_block = np.empty((width, blk, F))
            for i, gen in enumerate(gens):
                z_block[i] = gen.standard_normal((blk, F))
            for b in range(blk):
                z = z_block[:, b, :]
                if cfg.noise_memory:
                    z, z_prev = (z + z_prev) / np.sqrt(2.0), z
                kick = sqrt_dt * (z @ Mt)
                xi += cfg.dt * (xi @ Lt) + kick
                k_abs = done + b + 1
                if k_abs > cfg.burn_in:
                    if cfg.record_increments:
                        w_acc += kick
                    rec = k_abs - cfg.burn_in
                    if rec % cfg.record_stride == 0 and rec // cfg.record_stride <= S:
                        idx = rec // cfg.record_stride - 1
                        states[idx, start:stop] = xi
                        if cfg.record_increments:
                            increments[idx, start:stop] = w_acc
            if not np.isfinite(xi).all():
                raise NonFiniteState(f"state blew up before step {done + blk}")
            done += blk

    # Chunk boundaries come from the config alone, and every path owns its RNG
    # stream, so the worker count cannot change a single bit of the output.
    chunks = [(s, min(s + cfg.path_chunk, cfg.n_paths)) for s in range(0, cfg.n_paths, cfg.path_chunk)]
    if workers > 1 and len(chunks) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda c: run_chunk(*c), chunks))
    else:
        for c in chunks:
            run_chunk(*c)

    times = (cfg.burn_in + (1 + np.arange(S)) * cfg.record_stride) * cfg.dt
    return Ensemble(config=cfg, times=times, states=states, increments=increments,
                    rng=rng_trace(cfg.seed, cfg.n_paths))


def discrete_stationary_covariance(sys: LinearizedSystem, noise: NoiseCovariance, dt: float) -> np.ndarray:
    """Exact stationary covariance of the Euler-Maruyama chain at step dt.

    Solves C = A C A^T + dt Gamma with A = I + dt L; the continuous-time
    covariance is recovered as dt -> 0 at first order, which quantifies the
    integrator's stationary bias without Monte-Carlo error.
    """
    A = np.eye(sys.size) + dt * sys.L
    C = scipy.linalg.solve_discrete_lyapunov(A, dt * noise.gamma)
    return 0.5 * (C + C.T)


def _require(cond: bool, msg: str):
    if not cond:
        raise InsufficientSamples(msg)


def stationary_covariance(ens: Ensemble) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance over paths and recorded times, with standard errors.

    Each path contributes its own time-averaged moment matrix; the spread of
    those independent contributions gives the entrywise standard error.
    """
    _require(ens.states.shape[0] >= 1, "no snapshots recorded")
    _require(ens.states.shape[1] >= 2, "need at least 2 paths")
    xc = ens.states - ens.states.mean(axis=(0, 1), keepdims=True)
    per_path = np.einsum("spi,spj->pij", xc, xc) / xc.shape[0]
    return batch_mean_se(per_path)


def autocorrelation(
    ens: Ensemble,
    lags: list[float],
) -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """Lagged covariance cov(xi_{t+tau}, xi_t) for each requested lag.

    Lags must be integer multiples of the snapshot spacing.
    """
    spacing = ens.snapshot_spacing
    S = ens.states.shape[0]
    out = {}
    xc = ens.states - ens.states.mean(axis=(0, 1), keepdims=True)
    for lag in lags:
        j = int(round(lag / spacing))
        if abs(j * spacing - lag) > 1e-9 * max(1.0, abs(lag)):
            raise ValueError(f"lag {lag} is not a multiple of the snapshot spacing {spacing}")
        _require(0 <= j < S, f"lag {lag} needs more than {S} snapshots")
        if j == 0:
            out[lag] = stationary_covariance(ens)
            continue
        per_path = np.einsum("spi,spj->pij", xc[j:], xc[:-j]) / (S - j)
        out[lag] = batch_mean_se(per_path)
    return out


def _default_functional(N: int) -> np.ndarray:
    f = np.zeros(N)
    f[N // 2] = 1.0
    return f


def increment_tests(
    ens: Ensemble,
    noise: NoiseCovariance,
    sys: LinearizedSystem,
    functional: np.ndarray | None = None,
) -> dict:
    """Wiener-structure battery for the accumulated noise increments.

    (a) increments over [s, t] are uncorrelated with the field at u <= s;
    (b) the variance of a projected increment grows linearly in the window
        length with slope f^T Gamma f;
    (c) increments over disjoint windows are uncorrelated.
    Zero-tests are reported as correlations with 1/sqrt(P) standard errors.
    """
    _require(ens.increments is not None, "ensemble recorded without increments")
    S, P, N = ens.increments.shape
    _require(S >= 5 and P >= 16, "need >= 5 increment snapshots and >= 16 paths")
    f = _default_functional(N) if functional is None else np.asarray(functional, dtype=float)

    w = ens.increments @ f      # (S, P)
    xi = ens.states @ f         # (S, P)
    report = {"functional": "midpoint hat" if functional is None else "custom", "checks": []}

    def corr_check(name, a, b):
        za = (a - a.mean()) / a.std(ddof=1)
        zb = (b - b.mean()) / b.std(ddof=1)
        corr = float(np.mean(za * zb))
        se = 1.0 / np.sqrt(P)
        report["checks"].append({
            "name": name, "value": corr, "se": se, "z": corr / se, "pass": bool(abs(corr) <= 4 * se),
        })

    # (a) orthogonality to the past
    triples = [(0, 1, 2), (0, 2, 4), (1, 2, 4), (1, 3, 4), (0, 3, 4)]
    for u, s, t in triples:
        u, s, t = min(u, S - 3), min(s, S - 2), min(t, S - 1)
        corr_check(f"past_orthogonality[u={u},s={s},t={t}]", w[t] - w[s], xi[u])

    # (b) linear growth of the window variance
    k_max = min(6, S - 1)
    durations = np.arange(1, k_max + 1) * ens.snapshot_spacing
    variances = np.array([np.var(w[k] - w[0], ddof=1) for k in range(1, k_max + 1)])
    var_of_var = 2.0 * variances**2 / (P - 1)
    weights = 1.0 / var_of_var
    slope = float(np.sum(weights * durations * variances) / np.sum(weights * durations**2))
    slope_se = float(1.0 / np.sqrt(np.sum(weights * durations**2)))
    expected = float(f @ noise.gamma @ f)
    ratio = slope / expected
    report["checks"].append({
        "name": "variance_slope_ratio", "value": ratio,
        "se": slope_se / expected, "z": (ratio - 1.0) / (slope_se / expected),
        "pass": bool(0.95 <= ratio <= 1.05),
    })
    for k, (dur, var) in enumerate(zip(durations, variances), start=1):
        z = (var - expected * dur) / np.sqrt(var_of_var[k - 1])
        report["checks"].append({
            "name": f"variance_linearity[window={k}]", "value": float(var / dur),
            "se": float(np.sqrt(var_of_var[k - 1]) / dur), "z": float(z), "pass": bool(abs(z) <= 4),
        })

    # (c) disjoint windows
    pairs = [((0, 1), (2, 3)), ((1, 2), (3, 4)), ((0, 2), (3, 4))]
    for (a0, a1), (b0, b1) in pairs:
        corr_check(f"disjoint_windows[{a0}:{a1}]x[{b0}:{b1}]", w[a1] - w[a0], w[b1] - w[b0])

    report["pass"] = bool(all(c["pass"] for c in report["checks"]))
    return report


def _functional_bank(N: int, count: int = 10) -> list[tuple[str, np.ndarray]]:
    """Fixed bank of linear functionals: point hats and Fourier modes."""
    bank = []
    positions = np.linspace(0, N - 1, num=5, dtype=int)
    for p in positions:
        v = np.zeros(N)
        v[p] = 1.0
        bank.append((f"hat[{p}]", v))
    x = (np.arange(N) + 0.5) / N
    for k in range(1, count - len(bank) + 1):
        bank.append((f"sine[{k}]", np.sin(np.pi * k * x)))
    return bank[:count]


def gaussian_markov_tests(ens: Ensemble, markov_lag_snapshots: int = 1) -> dict:
    """Gaussianity and Markov-property battery on the stationary snapshots.

    Kurtosis of fixed linear functionals must vanish (4 SE, jackknife over
    paths); in the regression of xi_{t+tau} on (xi_t, xi_{t-tau}) the
    coefficient on the older value must vanish (4 cluster-robust SE). With
    one-step noise memory switched on, the regression test at one-snapshot
    lag detects the violation. The companion statement that noise increments
    are independent of the earlier field is the past-orthogonality statistic
    of :func:`increment_tests`, run on ensembles that record increments.
    """
    S, P, N = ens.states.shape
    j = markov_lag_snapshots
    _require(S >= 2 * j + 1, f"need at least {2 * j + 1} snapshots for lag {j}")
    _require(P >= 16, "need >= 16 paths")
    report = {"checks": [], "markov_lag": j * ens.snapshot_spacing}

    for name, vec in _functional_bank(N):
        samples = (ens.states @ vec).T        # (P, S)
        g2, se = pooled_kurtosis_jackknife(samples)
        report["checks"].append({
            "name": f"excess_kurtosis[{name}]", "value": g2, "se": se,
            "z": g2 / se if se > 0 else 0.0, "pass": bool(abs(g2) <= 4 * se),
        })

    vec = _functional_bank(N)[5][1]           # first sine mode: slowest functional
    y_ser = ens.states @ vec                  # (S, P)
    y = y_ser[2 * j:].reshape(-1)
    x1 = y_ser[j:-j].reshape(-1)
    x2 = y_ser[:-2 * j].reshape(-1)
    clusters = np.tile(np.arange(P), S - 2 * j)
    beta, se = cluster_regression(y, np.column_stack([x1, x2]), clusters)
    report["checks"].append({
        "name": "markov_regression_coeff_on_older", "value": float(beta[1]), "se": float(se[1]),
        "z": float(beta[1] / se[1]), "pass": bool(abs(beta[1]) <= 4 * se[1]),
    })
    report["pass"] = bool(all(c["pass"] for c in report["checks"]))
    return report


def ensemble_mean_check(ens: Ensemble) -> dict:
    """Zero-mean test: max |mean| over cells against 4 path-batch SEs."""
    per_path = ens.states.mean(axis=0)        # (P, N)
    mean, se = batch_mean_se(per_path)
    z = np.abs(mean) / se
    worst = int(np.argmax(z))
    return {
        "max_abs_mean": float(np.max(np.abs(mean))),
        "worst_z": float(z[worst]),
        "pass": bool(np.max(z) <= 4.0),
    }
