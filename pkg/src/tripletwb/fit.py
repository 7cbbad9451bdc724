"""Estimate the 14 field parameters from a photocount histogram.

The recipe is moment matching plus declination minimization. First and
second photocount moments pin down most of the parameter set through the
moment structure of the field (axis means, axis variances, and the
signal-idler covariances carried by the pair components). That leaves
three weakly identified degrees of freedom - how each idler axis mean
splits between its pair component and its noise component - which are
optimized by a derivative-free simplex descent of the Pearson-weighted
declination between the histogram and the model prediction. Detector
efficiencies default to the configured constants and can optionally be
freed as additional simplex variables.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .detector import DetectorConfig, detection_matrix, forward_counts
from .errors import CutoffError, DataError, NumericalError, ParameterError
from .fock import AXIS_ORDER, Histogram, JointDistribution
from .gaussian import GaussianFieldModel, MandelRiceComponent, TripleTwbParams

DECLINATION_EPS = 1e-10
B_MIN, B_MAX = 1e-8, 1e3
M_MIN, M_MAX = 1e-6, 1e4
MEAN_FLOOR = 1e-8


@dataclass(frozen=True)
class FitReport:
    params: TripleTwbParams
    efficiencies: dict[str, float]
    declination: float
    moment_residuals: list[tuple[str, float, float]]
    iterations: int = 0
    converged: bool = True

    def to_json(self) -> str:
        return json.dumps({
            "params": self.params.to_dict(),
            "efficiencies": self.efficiencies,
            "declination": self.declination,
            "moment_residuals": [
                {"moment": mid, "experimental": ex, "model": mo}
                for mid, ex, mo in self.moment_residuals],
            "iterations": self.iterations,
            "converged": self.converged,
        }, indent=2)


def photocount_moments(h: Histogram) -> dict:
    """Means <c_a> and covariances <dc_a dc_b> of the click histogram."""
    if h.trials <= 0:
        raise DataError("empty histogram")
    return table_moments(h.counts / h.trials, h.axis_labels)


def table_moments(rel: np.ndarray, labels) -> dict:
    """Means and covariances of any normalized multivariate table."""
    means = {}
    cov = {}
    grids = [np.arange(n, dtype=np.float64) for n in rel.shape]
    for a, la in enumerate(labels):
        marg = rel.sum(axis=tuple(x for x in range(rel.ndim) if x != a))
        means[la] = float(np.dot(grids[a], marg))
    for a, la in enumerate(labels):
        for b, lb in enumerate(labels):
            if b < a:
                cov[(la, lb)] = cov[(lb, la)]
                continue
            keep = (a, b) if a != b else (a,)
            marg = rel.sum(axis=tuple(x for x in range(rel.ndim) if x not in keep))
            if a == b:
                second = float(np.dot(grids[a] ** 2, marg))
                cov[(la, lb)] = second - means[la] ** 2
            else:
                second = float(grids[a] @ marg @ grids[b])
                cov[(la, lb)] = second - means[la] * means[lb]
    return {"mean": means, "cov": cov}


def declination(h: Histogram, f_model: JointDistribution) -> float:
    """Pearson-weighted squared deviation between histogram and model."""
    rel = h.counts / h.trials
    f = f_model.values
    if rel.shape != f.shape:
        raise DataError("histogram and model cutoffs do not match")
    return float(np.sum((rel - f) ** 2 / np.maximum(f, DECLINATION_EPS)))


def _component_from(mean: float, variance: float) -> MandelRiceComponent:
    """Mandel-Rice component with the given mean and (clipped) variance."""
    mean = max(mean, MEAN_FLOOR)
    B = min(max(variance / mean - 1.0, B_MIN), B_MAX)
    M = min(max(mean / B, M_MIN), M_MAX)
    return MandelRiceComponent(M, B)


def params_from_photon_moments(mom: dict, splits: tuple[float, float, float]) -> TripleTwbParams:
    """Close the 14 parameters from photon-level moments and mean splits.

    ``splits[j]`` is the fraction of the idler-j axis mean carried by its
    pair component; pair variances are set by the signal-idler covariance,
    and the noise components absorb the moment residuals.
    """
    means, cov = mom["mean"], mom["cov"]
    pairs = []
    noises_i = []
    for j, l in enumerate(("i1", "i2", "i3")):
        mu_p = max(splits[j] * means[l], MEAN_FLOOR)
        v_p = max(cov[("s", l)], mu_p * (1.0 + B_MIN))
        pairs.append(_component_from(mu_p, v_p))
        mu_n = max((1.0 - splits[j]) * means[l], MEAN_FLOOR)
        v_n = max(cov[(l, l)] - pairs[-1].variance, mu_n * (1.0 + B_MIN))
        noises_i.append(_component_from(mu_n, v_n))
    mu_ns = max(means["s"] - sum(p.mean for p in pairs), MEAN_FLOOR)
    v_ns = max(cov[("s", "s")] - sum(p.variance for p in pairs),
               mu_ns * (1.0 + B_MIN))
    noise_s = _component_from(mu_ns, v_ns)
    return TripleTwbParams(pairs[0], pairs[1], pairs[2],
                           noise_s, noises_i[0], noises_i[1], noises_i[2])


def _moment_vector(mom: dict) -> np.ndarray:
    keys = _moment_keys()
    out = []
    for kind, key in keys:
        out.append(mom[kind][key])
    return np.asarray(out)


def _moment_keys():
    keys = [("mean", l) for l in AXIS_ORDER]
    keys += [("cov", (l, l)) for l in AXIS_ORDER]
    keys += [("cov", ("s", l)) for l in ("i1", "i2", "i3")]
    return keys


class _ForwardCache:
    """Model photocount tables and moments for candidate parameters."""

    def __init__(self, shape, cfgs: dict[str, DetectorConfig],
                 photon_cutoffs: tuple[int, int, int, int], tail_tol: float):
        self.shape = shape
        self.cfgs = cfgs
        self.cutoffs = photon_cutoffs
        self.tail_tol = tail_tol
        self._mats = None

    def matrices(self):
        if self._mats is None:
            self._mats = {}
            for axis, l in enumerate(AXIS_ORDER):
                cfg = self.cfgs[l]
                self._mats[l] = detection_matrix(
                    cfg, self.cutoffs[axis], self.shape[axis] - 1)
        return self._mats

    def set_efficiencies(self, eff: dict[str, float]):
        self.cfgs = {l: replace(c, efficiency=eff[l]) for l, c in self.cfgs.items()}
        self._mats = None

    def click_table(self, params: TripleTwbParams) -> JointDistribution:
        model = GaussianFieldModel(params, self.cutoffs[0],
                                   tuple(self.cutoffs[1:]), tail_tol=self.tail_tol)
        return forward_counts(model.distribution(), self.matrices())

    def click_moments(self, params: TripleTwbParams) -> dict:
        f = self.click_table(params)
        return table_moments(f.values, f.axis_labels)


def _unfold_photon_moments(exp_mom: dict, splits, cache: _ForwardCache,
                           start_mom: dict, iterations: int = 12,
                           rel_tol: float = 1e-4) -> tuple[dict, TripleTwbParams]:
    """Fixed-point update of photon-level moment targets.

    Adjusts the photon moments multiplicatively until the exact model
    photocount moments match the experimental ones.
    """
    exp_vec = _moment_vector(exp_mom)
    mom = {"mean": dict(start_mom["mean"]), "cov": dict(start_mom["cov"])}
    params = params_from_photon_moments(mom, splits)
    for _ in range(iterations):
        model_vec = _moment_vector(cache.click_moments(params))
        ratio = np.clip(exp_vec / np.maximum(model_vec, 1e-12), 0.2, 5.0)
        if np.max(np.abs(ratio - 1.0)) < rel_tol:
            break
        vec = _moment_vector(mom) * ratio
        for i, (kind, key) in enumerate(_moment_keys()):
            mom[kind][key] = float(vec[i])
        mom["cov"].update({(b, a): v for (a, b), v in list(mom["cov"].items())})
        params = params_from_photon_moments(mom, splits)
    return mom, params


def _initial_photon_moments(exp_mom: dict, cfgs: dict[str, DetectorConfig]) -> dict:
    """Crude linear inversion of the click moments through the detectors.

    Uses <c> ~ eta <n> + D and the binomial-thinning variance relation;
    serves only as a starting point for the exact unfolding loop.
    """
    means, cov = {}, {}
    for l in AXIS_ORDER:
        cfg = cfgs[l]
        means[l] = max((exp_mom["mean"][l] - cfg.dark_rate) / cfg.efficiency,
                       MEAN_FLOOR)
    for a in AXIS_ORDER:
        for b in AXIS_ORDER:
            ea, eb = cfgs[a].efficiency, cfgs[b].efficiency
            if a == b:
                dark_var = cfgs[a].dark_rate * (1.0 - cfgs[a].dark_prob)
                v = (exp_mom["cov"][(a, a)] - dark_var
                     - ea * (1.0 - ea) * means[a]) / ea**2
                cov[(a, a)] = max(v, MEAN_FLOOR)
            else:
                cov[(a, b)] = max(exp_mom["cov"][(a, b)] / (ea * eb), 0.0)
    return {"mean": means, "cov": cov}


def fit(h: Histogram, cfgs: dict[str, DetectorConfig],
        fix_efficiencies: bool = True,
        photon_cutoffs: tuple[int, int, int, int] = (32, 20, 20, 20),
        tail_tol: float = 1e-3, start_splits: tuple[float, float, float] = (0.95,) * 3,
        max_evals: int = 200) -> FitReport:
    """Fit the 14 parameters (optionally plus efficiencies) to a histogram.

    The simplex variables are the logit pair-mean splits (and logit
    efficiencies when freed); every objective evaluation re-solves the
    remaining parameters from the moment-matching closure before scoring
    the Pearson declination of the predicted click table.
    """
    if h.trials <= 0:
        raise DataError("empty histogram")
    exp_mom = photocount_moments(h)
    for l in AXIS_ORDER:
        if exp_mom["cov"][(l, l)] <= 0:
            raise DataError(f"histogram has zero variance on axis {l}")
    cache = _ForwardCache(h.counts.shape, dict(cfgs), photon_cutoffs, tail_tol)
    start_mom = _initial_photon_moments(exp_mom, cfgs)
    state = {"best": None, "evals": 0}

    def logit(x):
        return math.log(x / (1.0 - x))

    def expit(z):
        return 1.0 / (1.0 + math.exp(-z))

    x0 = [logit(min(max(s, 1e-3), 1 - 1e-3)) for s in start_splits]
    if not fix_efficiencies:
        x0 += [logit(cfgs[l].efficiency) for l in AXIS_ORDER]

    def objective(x):
        splits = tuple(expit(z) for z in x[:3])
        if not fix_efficiencies:
            eff = {l: expit(x[3 + i]) for i, l in enumerate(AXIS_ORDER)}
            cache.set_efficiencies(eff)
        else:
            eff = {l: cfgs[l].efficiency for l in AXIS_ORDER}
        try:
            mom, params = _unfold_photon_moments(exp_mom, splits, cache, start_mom)
            f_model = cache.click_table(params)
        except (CutoffError, ParameterError, DataError):
            # infeasible vertex (e.g. moment split implies a tail heavier
            # than the truncation box admits): steer the simplex away
            state["evals"] += 1
            return 1e12
        d = declination(h, f_model)
        state["evals"] += 1
        if state["best"] is None or d < state["best"][0]:
            state["best"] = (d, params, eff, mom)
        return d

    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"maxfev": max_evals, "xatol": 1e-3, "fatol": 1e-10})
    if state["best"] is None:
        raise NumericalError("fit objective was never evaluated")
    d_best, params, eff, _ = state["best"]
    model_mom = cache.click_moments(params)
    residuals = [
        (f"{kind}:{key}", float(exp_mom[kind][key]), float(model_mom[kind][key]))
        for kind, key in _moment_keys()]
    report = FitReport(params, eff, d_best, residuals,
                       iterations=state["evals"], converged=bool(res.success))
    if not res.success and not _moments_close(residuals):
        err = NumericalError("fit optimizer did not converge")
        err.report = report
        raise err
    return report


def _moments_close(residuals, rel_tol: float = 1e-2) -> bool:
    return all(abs(ex - mo) <= rel_tol * max(abs(ex), 1e-6)
               for _, ex, mo in residuals)
