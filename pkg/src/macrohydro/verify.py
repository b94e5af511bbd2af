"""Acceptance battery: one callable per criterion, each with pinned settings.

Every criterion prints a single PASS/FAIL line and returns its numbers, so
the battery serves both as the `verify` CLI task and as the backing of the
acceptance test module. Statistical criteria use fixed seeds; with a reduced
path count (``--paths``) their fixed-percentage gates are reported as
WIDENED (inconclusive) instead of FAIL when the Monte-Carlo noise floor
swamps the gate.

The Langevin criteria run at dt = (0.4 h^2/2)/12 rather than at the
stability bound itself: the Euler-Maruyama stationary covariance carries an
O(dt) bias of 38% (relative Frobenius) at the bound, incompatible with the
10%/4-SE gates, while bound/12 brings it to 2.1% with the worst diagonal
entry at 2.6% (about 2 standard errors at the pinned sample sizes). The
step-size-independent criteria (Wiener structure, Gaussianity, Markov
property) do run at the stability bound.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .covariance import (
    NoiseCovariance,
    fd_residual,
    integral_covariance,
    longrange_criterion,
    lyapunov_solve,
    noise_covariance,
    onsager_check,
    split_local_longrange,
)
from .grid import BoundaryData, Mesh1D
from .linop import assemble
from .spde import (
    SimConfig,
    autocorrelation,
    gaussian_markov_tests,
    increment_tests,
    simulate,
    stationary_covariance,
)
from .steady import solve_steady
from .thermo import J_of_q, gaussian, sep, twocomp, with_antisymmetric_mobility

__all__ = ["CriterionResult", "run_battery", "write_matrix_csv", "sep_longrange_oracle"]

NOMINAL_PATHS_MAIN = 2000
NOMINAL_PATHS_WIENER = 4000
NOMINAL_PATHS_SENSITIVITY = 256
MAIN_SEED = 42
WIENER_SEED = 43
SENSITIVITY_SEED = 44
DT_DIVISOR = 12          # acceptance dt = stability bound / 12 (see module docstring)
MAIN_SNAPSHOTS = 16


@dataclass
class CriterionResult:
    number: int
    name: str
    status: str                  # PASS / FAIL / WIDENED
    seconds: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        info = " ".join(f"{k}={_fmt(v)}" for k, v in self.details.items())
        return f"{self.status:7s} {self.number:2d} {self.name}: {info} [{self.seconds:.1f}s]"


def _fmt(v):
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return f"{v:.3g}"
    return str(v)


def sep_longrange_oracle(x: np.ndarray, b: float) -> np.ndarray:
    """Continuum long-range part for a linear profile: -b^2 x (1 - y), x <= y."""
    return -b * b * np.minimum.outer(x, x) * (1.0 - np.maximum.outer(x, x))


def write_matrix_csv(path, M, prefix: str = "c"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"{prefix}{j}" for j in range(M.shape[1])) + "\r\n")
        for row in M:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\r\n")


class _Lab:
    """Shared scenario cache so criteria reuse profiles, systems and ensembles."""

    def __init__(self, paths_factor=1.0, workers=1, gamma_transform=None):
        self.paths_factor = paths_factor
        self.workers = workers
        self.gamma_transform = gamma_transform
        self._cache = {}

    def scale_paths(self, nominal: int) -> int:
        # Floor keeps the statistical machinery above its minimum sample sizes.
        return max(32, int(round(nominal * self.paths_factor)))

    def profile(self, model_name, n, left, right):
        key = ("profile", model_name, n, tuple(left), tuple(right))
        if key not in self._cache:
            model = _MODELS[model_name]()
            prof = solve_steady(model, Mesh1D(n), BoundaryData(left, right))
            self._cache[key] = (model, prof)
        return self._cache[key]

    def system(self, model_name, n, left, right):
        key = ("system", model_name, n, tuple(left), tuple(right))
        if key not in self._cache:
            model, prof = self.profile(model_name, n, left, right)
            self._cache[key] = assemble(model, prof)
        return self._cache[key]

    def noise(self, model_name, n, left, right) -> NoiseCovariance:
        key = ("noise", model_name, n, tuple(left), tuple(right))
        if key not in self._cache:
            model, prof = self.profile(model_name, n, left, right)
            nc = noise_covariance(model, prof)
            if self.gamma_transform is not None:
                nc = NoiseCovariance(
                    gamma=self.gamma_transform(nc.gamma),
                    face_onsager=nc.face_onsager, face_factors=nc.face_factors,
                    face_dists=nc.face_dists, h=nc.h,
                )
            self._cache[key] = nc
        return self._cache[key]

    def lyapunov(self, model_name, n, left, right):
        key = ("lyap", model_name, n, tuple(left), tuple(right))
        if key not in self._cache:
            sys = self.system(model_name, n, left, right)
            self._cache[key] = lyapunov_solve(sys, self.noise(model_name, n, left, right))
        return self._cache[key]

    def main_ensemble(self):
        """Criterion-7 ensemble: SEP, n=32, seed 42, pinned step/burn-in/stride."""
        if "main_ens" not in self._cache:
            model, prof = self.profile("sep", 32, [0.3], [0.7])
            sys = self.system("sep", 32, [0.3], [0.7])
            relax = 1.0 / abs(sys.spectral_abscissa)
            h = prof.mesh.h
            dt = (0.4 * h * h / 2.0) / DT_DIVISOR
            stride = int(round(0.5 * relax / dt))
            cfg = SimConfig(
                dt=dt,
                steps=MAIN_SNAPSHOTS * stride,
                burn_in=int(np.ceil(10 * relax / dt)),
                n_paths=self.scale_paths(NOMINAL_PATHS_MAIN),
                seed=MAIN_SEED,
                record_stride=stride,
            )
            noise = self.noise("sep", 32, [0.3], [0.7])
            ens = simulate(model, sys, noise, cfg, workers=self.workers)
            self._cache["main_ens"] = ens
        return self._cache["main_ens"]


_MODELS = {"sep": sep, "gaussian": gaussian, "twocomp": twocomp}

_EQUILIBRIUM_POINTS = {
    "sep": [0.5],
    "gaussian": [0.25],
    "twocomp": [0.4, -0.3],
}

_NONEQ_BC = {
    "sep": ([0.3], [0.7]),
    "gaussian": ([-0.5], [0.5]),
    "twocomp": ([0.5, -0.2], [-0.4, 0.3]),
}


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------

def _c1_steady_profile(lab: _Lab) -> CriterionResult:
    def body():
        _, prof = lab.profile("sep", 128, [0.3], [0.7])
        exact = 0.3 + 0.4 * prof.mesh.centers
        return float(np.max(np.abs(prof.q[:, 0] - exact)))

    err, secs = _timed(body)
    ok = err < 1e-10 and secs < 1.0
    return CriterionResult(1, "sep-steady-profile", "PASS" if ok else "FAIL", secs,
                           {"max_err": err, "tol": 1e-10, "budget_s": 1.0})


def _b_error(lab: _Lab, n: int, fixed_region: bool) -> float:
    """Sup-norm error of the long-range part against the Green-function oracle.

    ``fixed_region=False`` excludes 4 cells around walls and diagonal (the
    acceptance region for the 2% gate); that band shrinks with h and its sup
    is dominated by the near-field of the delta ridge, so the convergence
    *order* is measured on a fixed physical region (1/8 away from walls and
    diagonal) where the field is smooth.
    """
    model, prof = lab.profile("sep", n, [0.3], [0.7])
    C = lab.lyapunov("sep", n, [0.3], [0.7])
    _, B = split_local_longrange(C, model, prof)
    oracle = sep_longrange_oracle(prof.mesh.centers, 0.4)
    if fixed_region:
        x = prof.mesh.centers
        keep = np.abs(x[:, None] - x[None, :]) >= 0.125
        keep &= np.minimum(x[:, None], x[None, :]) >= 0.125
        keep &= np.maximum(x[:, None], x[None, :]) <= 0.875
    else:
        idx = np.arange(n)
        keep = (np.abs(idx[:, None] - idx[None, :]) >= 4)
        keep &= (idx[:, None] >= 4) & (idx[:, None] <= n - 5)
        keep &= (idx[None, :] >= 4) & (idx[None, :] <= n - 5)
    return float(np.max(np.abs((B - oracle)[keep])) / np.max(np.abs(oracle[keep])))


def _c2_longrange_covariance(lab: _Lab) -> CriterionResult:
    def body():
        return (_b_error(lab, 128, fixed_region=False),
                _b_error(lab, 64, fixed_region=True),
                _b_error(lab, 128, fixed_region=True))

    (err128, smooth64, smooth128), secs = _timed(body)
    ratio = smooth64 / smooth128
    ok = err128 < 0.02 and 2.0 ** 1.5 <= ratio <= 2.0 ** 2.5 and secs < 30.0
    return CriterionResult(2, "sep-longrange-covariance", "PASS" if ok else "FAIL", secs,
                           {"rel_sup_err_n128": err128, "tol": 0.02,
                            "convergence_ratio": ratio, "ratio_range": "[2.83,5.66]"})


def _c3_longrange_criterion(lab: _Lab) -> CriterionResult:
    def body():
        model, prof = lab.profile("sep", 128, [0.3], [0.7])
        lr = longrange_criterion(model, prof)
        phi_err = float(np.max(np.abs(lr.phi[lr.interior] + 0.32)))
        model_eq, prof_eq = lab.profile("sep", 128, [0.5], [0.5])
        lr_eq = longrange_criterion(model_eq, prof_eq)
        phi_eq = float(np.max(np.abs(lr_eq.phi[lr_eq.interior])))
        C_eq = lab.lyapunov("sep", 128, [0.5], [0.5])
        C_local, B_eq = split_local_longrange(C_eq, model_eq, prof_eq)
        b_rel = float(np.max(np.abs(B_eq)) / np.max(np.abs(C_local)))
        return phi_err, lr.long_range, phi_eq, lr_eq.long_range, b_rel

    (phi_err, lr_flag, phi_eq, lr_eq_flag, b_rel), secs = _timed(body)
    ok = (phi_err < 1e-8 and lr_flag and phi_eq < 1e-8 and not lr_eq_flag
          and b_rel < 1e-8 and secs < 5.0)
    return CriterionResult(3, "longrange-criterion", "PASS" if ok else "FAIL", secs,
                           {"phi_err_sep": phi_err, "verdict_sep": lr_flag,
                            "phi_eq": phi_eq, "verdict_eq": lr_eq_flag, "B_eq_rel": b_rel})


def _c4_fluctuation_dissipation(lab: _Lab) -> CriterionResult:
    def body():
        worst_res, worst_diff = 0.0, 0.0
        for name, (left, right) in _NONEQ_BC.items():
            sys = lab.system(name, 32, left, right)
            noise = lab.noise(name, 32, left, right)
            C = lab.lyapunov(name, 32, left, right)
            worst_res = max(worst_res, fd_residual(sys, noise, C))
            CI = integral_covariance(sys, noise, rtol=1e-8)
            worst_diff = max(worst_diff, float(np.max(np.abs(CI - C)) / np.max(np.abs(C))))
        return worst_res, worst_diff

    (worst_res, worst_diff), secs = _timed(body)
    ok = worst_res < 1e-10 and worst_diff < 1e-6 and secs < 60.0
    return CriterionResult(4, "fluctuation-dissipation", "PASS" if ok else "FAIL", secs,
                           {"max_fd_residual": worst_res, "res_tol": 1e-10,
                            "max_oracle_diff": worst_diff, "diff_tol": 1e-6})


def _c5_equilibrium_exactness(lab: _Lab) -> CriterionResult:
    def body():
        worst = 0.0
        for name, point in _EQUILIBRIUM_POINTS.items():
            model = _MODELS[name]()
            for n in (16, 64):
                C = lab.lyapunov(name, n, point, point)
                J = J_of_q(model, np.asarray(point, dtype=float))
                target = np.kron(np.eye(n), J) * n
                rel = float(np.max(np.abs(C - target)) / np.max(np.abs(target)))
                worst = max(worst, rel)
        return worst

    worst, secs = _timed(body)
    ok = worst < 1e-12 and secs < 5.0
    return CriterionResult(5, "equilibrium-exactness", "PASS" if ok else "FAIL", secs,
                           {"max_rel_dev": worst, "tol": 1e-12})


def _c6_onsager(lab: _Lab) -> CriterionResult:
    def body():
        model, prof = lab.profile("twocomp", 32, *_NONEQ_BC["twocomp"])
        defect = onsager_check(model, prof)
        injected = with_antisymmetric_mobility(model, 1e-3)
        recovered = onsager_check(injected, prof)
        return defect, abs(recovered - 1e-3)

    (defect, inj_err), secs = _timed(body)
    ok = defect < 1e-12 and inj_err < 1e-10 and secs < 5.0
    return CriterionResult(6, "onsager-reciprocity", "PASS" if ok else "FAIL", secs,
                           {"defect": defect, "tol": 1e-12, "injection_err": inj_err})


def _c7_monte_carlo(lab: _Lab) -> CriterionResult:
    def body():
        ens = lab.main_ensemble()
        C = lab.lyapunov("sep", 32, [0.3], [0.7])
        C_hat, SE = stationary_covariance(ens)
        rel = float(np.linalg.norm(C_hat - C) / np.linalg.norm(C))
        frac = float(np.mean(np.abs(C_hat - C) <= 4.0 * SE))
        floor = float(np.sqrt(np.sum(SE**2)) / np.linalg.norm(C))
        return rel, frac, floor

    (rel, frac, floor), secs = _timed(body)
    ok = rel < 0.10 and frac >= 0.99 and secs < 300.0
    status = "PASS" if ok else ("WIDENED" if lab.paths_factor < 0.999 and floor > 0.05 else "FAIL")
    return CriterionResult(7, "monte-carlo-covariance", status, secs,
                           {"rel_frobenius": rel, "tol": 0.10,
                            "frac_within_4se": frac, "frac_tol": 0.99, "mc_floor": floor})


def _c8_regression(lab: _Lab) -> CriterionResult:
    def body():
        ens = lab.main_ensemble()
        sys = lab.system("sep", 32, [0.3], [0.7])
        C = lab.lyapunov("sep", 32, [0.3], [0.7])
        tau = ens.snapshot_spacing
        C_tau, SE = autocorrelation(ens, [tau])[tau]
        predicted = scipy.linalg.expm(sys.L * tau) @ C
        rel = float(np.linalg.norm(C_tau - predicted) / np.linalg.norm(C))
        floor = float(np.sqrt(np.sum(SE**2)) / np.linalg.norm(C))
        return rel, tau, floor

    (rel, tau, floor), secs = _timed(body)
    ok = rel < 0.10
    status = "PASS" if ok else ("WIDENED" if lab.paths_factor < 0.999 and floor > 0.05 else "FAIL")
    return CriterionResult(8, "regression-hypothesis", status, secs,
                           {"rel_frobenius": rel, "tol": 0.10, "lag": tau, "mc_floor": floor})


def _c9_wiener(lab: _Lab) -> CriterionResult:
    def body():
        model, prof = lab.profile("sep", 32, [0.3], [0.7])
        sys = lab.system("sep", 32, [0.3], [0.7])
        noise = lab.noise("sep", 32, [0.3], [0.7])
        relax = 1.0 / abs(sys.spectral_abscissa)
        h = prof.mesh.h
        dt = 0.4 * h * h / 2.0
        stride = int(np.ceil(0.2 * relax / dt))
        cfg = SimConfig(
            dt=dt, steps=10 * stride, burn_in=int(np.ceil(relax / dt)),
            n_paths=lab.scale_paths(NOMINAL_PATHS_WIENER), seed=WIENER_SEED,
            record_stride=stride, record_increments=True,
        )
        ens = simulate(model, sys, noise, cfg, workers=lab.workers)
        return increment_tests(ens, noise, sys)

    report, secs = _timed(body)
    slope = next(c for c in report["checks"] if c["name"] == "variance_slope_ratio")
    zero_ok = all(c["pass"] for c in report["checks"] if c["name"] != "variance_slope_ratio")
    ok = report["pass"] and secs < 120.0
    widened = (lab.paths_factor < 0.999 and zero_ok
               and abs(slope["value"] - 1.0) <= 4 * slope["se"])
    status = "PASS" if ok else ("WIDENED" if widened else "FAIL")
    return CriterionResult(9, "wiener-structure", status, secs,
                           {"slope_ratio": slope["value"], "ratio_range": "[0.95,1.05]",
                            "zero_tests_pass": zero_ok})


def _c10_gaussian_markov(lab: _Lab) -> CriterionResult:
    def body():
        ens = lab.main_ensemble()
        battery = gaussian_markov_tests(ens, markov_lag_snapshots=1)

        model, _ = lab.profile("sep", 32, [0.3], [0.7])
        sys = lab.system("sep", 32, [0.3], [0.7])
        noise = lab.noise("sep", 32, [0.3], [0.7])
        relax = 1.0 / abs(sys.spectral_abscissa)
        h = sys.profile.mesh.h
        dt = 0.4 * h * h / 2.0
        cfg = SimConfig(
            dt=dt, steps=120, burn_in=int(np.ceil(relax / dt)),
            n_paths=lab.scale_paths(NOMINAL_PATHS_SENSITIVITY), seed=SENSITIVITY_SEED,
            record_stride=1, noise_memory=True,
        )
        ens_bad = simulate(model, sys, noise, cfg, workers=lab.workers)
        surrogate = gaussian_markov_tests(ens_bad, markov_lag_snapshots=1)
        markov_bad = next(c for c in surrogate["checks"]
                          if c["name"] == "markov_regression_coeff_on_older")
        return battery, markov_bad

    (battery, markov_bad), secs = _timed(body)
    detected = not markov_bad["pass"]
    ok = battery["pass"] and detected
    status = "PASS" if ok else ("WIDENED" if lab.paths_factor < 0.999 and battery["pass"] else "FAIL")
    worst = max(abs(c["z"]) for c in battery["checks"])
    return CriterionResult(10, "gaussian-markov", status, secs,
                           {"battery_pass": battery["pass"], "worst_z": worst,
                            "surrogate_detected": detected,
                            "surrogate_z": markov_bad["z"]})


def _c11_determinism(lab: _Lab, out_dir) -> CriterionResult:
    def body():
        ens = lab.main_ensemble()
        C_hat, _ = stationary_covariance(ens)
        model, _ = lab.profile("sep", 32, [0.3], [0.7])
        sys = lab.system("sep", 32, [0.3], [0.7])
        noise = lab.noise("sep", 32, [0.3], [0.7])
        other_workers = 2 if lab.workers == 1 else 1
        ens2 = simulate(model, sys, noise, ens.config, workers=other_workers)
        C_hat2, _ = stationary_covariance(ens2)
        p1 = os.path.join(out_dir, "ensemble_cov_run1.csv")
        p2 = os.path.join(out_dir, "ensemble_cov_run2.csv")
        write_matrix_csv(p1, C_hat)
        write_matrix_csv(p2, C_hat2)
        with open(p1, "rb") as f1, open(p2, "rb") as f2:
            identical = f1.read() == f2.read()
        return identical, other_workers

    (identical, other_workers), secs = _timed(body)
    return CriterionResult(11, "determinism", "PASS" if identical else "FAIL", secs,
                           {"byte_identical": identical,
                            "worker_counts": f"{lab.workers} vs {other_workers}"})


def run_battery(
    paths_factor: float = 1.0,
    workers: int | None = None,
    out_dir: str | None = None,
    gamma_transform=None,
    progress=print,
) -> list[CriterionResult]:
    """Run all acceptance criteria; prints one line per criterion."""
    if workers is None:
        workers = int(os.environ.get("MACROHYDRO_THREADS", "0")) or (os.cpu_count() or 1)
    lab = _Lab(paths_factor=paths_factor, workers=max(1, workers), gamma_transform=gamma_transform)
    out_dir = out_dir or "."
    os.makedirs(out_dir, exist_ok=True)

    criteria = [
        _c1_steady_profile,
        _c2_longrange_covariance,
        _c3_longrange_criterion,
        _c4_fluctuation_dissipation,
        _c5_equilibrium_exactness,
        _c6_onsager,
        _c7_monte_carlo,
        _c8_regression,
        _c9_wiener,
        _c10_gaussian_markov,
        lambda l: _c11_determinism(l, out_dir),
    ]
    results = []
    for fn in criteria:
        res = fn(lab)
        results.append(res)
        if progress is not None:
            progress(res.line())
    if progress is not None:
        n_pass = sum(r.status == "PASS" for r in results)
        n_wide = sum(r.status == "WIDENED" for r in results)
        n_fail = sum(r.status == "FAIL" for r in results)
        total = sum(r.seconds for r in results)
        progress(f"summary: {n_pass} pass, {n_wide} widened, {n_fail} fail "
                 f"({len(results)} criteria, {total:.0f}s)")
    return results
