"""Expectation-maximization inversion of photocount tables.

The update is the multidimensional Richardson-Lucy / Vardi iteration

    p_{k+1}(n) = p_k(n) * sum_c K(c|n) f(c) / sum_n' K(c|n') p_k(n')

with the separable kernel K(c|n) = prod_axes T(c_axis|n_axis). Because the
kernel factorizes, both the forward projection and the back projection are
sequences of per-axis matrix contractions; no dense 8-dimensional kernel is
ever formed. Starting point is the uniform distribution.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .detector import DetectionMatrix, _matrices_for
from .errors import DataError
from .fock import JointDistribution, apply_matrix


@dataclass(frozen=True)
class EmSettings:
    max_iterations: int = 100_000
    stop_tolerance: float = 1e-9  # max absolute per-cell change

    def __post_init__(self):
        if self.max_iterations < 1:
            raise DataError("max_iterations must be >= 1")
        if not (self.stop_tolerance > 0):
            raise DataError("stop_tolerance must be > 0")


@dataclass(frozen=True)
class EmResult:
    distribution: JointDistribution
    iterations: int
    residual: float
    loglik_trace: np.ndarray
    converged: bool

    def trace_csv(self) -> str:
        lines = ["iteration,loglik,residual"]
        for i, (ll, r) in enumerate(zip(self.loglik_trace, self._residuals), start=1):
            lines.append(f"{i},{ll:.12g},{r:.6g}")
        return "\n".join(lines) + "\n"

    _residuals: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]


def _forward(values: np.ndarray, mats: list[np.ndarray]) -> np.ndarray:
    for axis, mat in enumerate(mats):
        values = apply_matrix(values, mat, axis)
    return values


def _backward(values: np.ndarray, mats: list[np.ndarray]) -> np.ndarray:
    for axis, mat in enumerate(mats):
        values = apply_matrix(values, mat.T, axis)
    return values


def em_reconstruct(f: JointDistribution,
                   matrices: dict[str, DetectionMatrix] | list[DetectionMatrix],
                   settings: EmSettings = EmSettings(),
                   photon_cutoffs: tuple[int, ...] | None = None,
                   start: JointDistribution | None = None) -> EmResult:
    """Invert a photocount distribution into a photon-number distribution.

    ``photon_cutoffs`` defaults to the n ranges of the supplied matrices.
    """
    if not f.normalized:
        raise DataError("EM needs a normalized photocount distribution")
    mat_objs = _matrices_for(f.axis_labels, matrices)
    if photon_cutoffs is None:
        photon_cutoffs = tuple(m.n_max for m in mat_objs)
    mats = []
    for mat, cut, cdim in zip(mat_objs, photon_cutoffs, f.values.shape):
        if cut > mat.n_max:
            raise DataError(f"photon cutoff {cut} exceeds matrix n_max {mat.n_max}")
        if cdim > mat.entries.shape[0]:
            raise DataError("photocount table exceeds matrix click range")
        mats.append(np.ascontiguousarray(mat.entries[: cdim, : cut + 1]))

    fv = f.values
    if start is not None:
        p = start.values.astype(np.float64).copy()
        p /= p.sum()
    else:
        p = np.full([c + 1 for c in photon_cutoffs], 1.0)
        p /= p.size
    support = fv > 0
    logliks = []
    residuals = []
    converged = False
    it = 0
    for it in range(1, settings.max_iterations + 1):
        den = _forward(p, mats)
        if np.any(den[support] <= 0.0):
            raise DataError(
                "unsupported outcome: observed cell with zero model probability "
                "(photon cutoffs too small)")
        ratio = np.where(support, fv / np.where(den > 0, den, 1.0), 0.0)
        logliks.append(float(np.sum(fv[support] * np.log(den[support]))))
        p_new = p * _backward(ratio, mats)
        p_new /= p_new.sum()
        residual = float(np.max(np.abs(p_new - p)))
        residuals.append(residual)
        p = p_new
        if residual < settings.stop_tolerance:
            converged = True
            break
    dist = JointDistribution(p, f.axis_labels, normalized=True)
    return EmResult(dist, it, residuals[-1], np.asarray(logliks), converged,
                    _residuals=np.asarray(residuals))


def em_reconstruct_conditional(f_cs: JointDistribution,
                               matrices: dict[str, DetectionMatrix] | list[DetectionMatrix],
                               settings: EmSettings = EmSettings(),
                               photon_cutoffs: tuple[int, ...] | None = None) -> EmResult:
    """Partial (3D idler) reconstruction for one post-selected c_s slice."""
    if f_cs.values.ndim != 3:
        raise DataError("conditional reconstruction expects a 3-axis table")
    return em_reconstruct(f_cs, matrices, settings, photon_cutoffs)


def derive_photocount_conditional(p4: JointDistribution, t_s: DetectionMatrix,
                                  mass_floor: float = 0.0
                                  ) -> dict[int, tuple[float, JointDistribution]]:
    """Map the signal axis through T_s and condition on each click number c_s.

    Returns {c_s: (slice mass, normalized 3D idler distribution)}; zero-mass
    slices are skipped.
    """
    if not p4.normalized or p4.values.ndim != 4 or p4.axis_labels[0] != "s":
        raise DataError("expected a normalized 4-axis table with leading signal axis")
    if t_s.n_max + 1 < p4.values.shape[0]:
        raise DataError("signal detection matrix does not cover the signal cutoff")
    mixed = np.tensordot(t_s.entries[:, : p4.values.shape[0]], p4.values, axes=(1, 0))
    out = {}
    for c_s in range(mixed.shape[0]):
        mass = float(mixed[c_s].sum())
        if mass <= max(mass_floor, 0.0):
            continue
        out[c_s] = (mass, JointDistribution(mixed[c_s] / mass, p4.axis_labels[1:],
                                            normalized=True))
    return out
