"""Hot numeric kernels with numba and pure-NumPy implementations.

Each kernel ships in two versions: ``*_numba`` (compiled with ``@njit``)
and ``*_numpy`` (vectorized fallback). The public names dispatch on the
backend chosen in :mod:`tripletwb._backend`.
"""
from __future__ import annotations

import numpy as np

from ._backend import HAVE_NUMBA, njit

# ---------------------------------------------------------------------------
# Pixel-level Monte Carlo of a multiplexed on/off detector.
#
# Model: each of the n photons is registered with probability eta and then
# lands on one of N pixels uniformly at random; every pixel additionally
# dark-fires with probability d. A frame's click count is the number of
# pixels with at least one event. Dark pixels are aggregated exactly as a
# Binomial(N, d) draw, and the overlap between the dark set and the set of
# distinct photon-hit pixels is an exact Hypergeometric draw.
# ---------------------------------------------------------------------------


def pixel_mc_clicks_numpy(n: int, pixels: int, eta: float, d: float,
                          frames: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    dark = rng.binomial(pixels, d, size=frames)
    detected = rng.binomial(n, eta, size=frames) if n > 0 else np.zeros(frames, dtype=np.int64)
    kmax = int(detected.max()) if frames else 0
    if kmax == 0:
        return dark
    # distinct pixel ids among the detected photons of each frame
    hits = rng.integers(0, pixels, size=(frames, kmax))
    hits[np.arange(kmax)[None, :] >= detected[:, None]] = -1
    hits.sort(axis=1)
    distinct = (np.diff(hits, axis=1) != 0).sum(axis=1) + 1
    distinct -= (hits[:, 0] == -1)  # the sentinel column is not a pixel
    distinct = np.where(detected > 0, distinct, 0)
    overlap = rng.hypergeometric(dark, pixels - dark, np.maximum(distinct, 1))
    overlap = np.where(distinct > 0, overlap, 0)
    return dark + distinct - overlap


@njit(cache=True)
def _pixel_mc_clicks_jit(n, pixels, eta, d, frames, seed):  # pragma: no cover
    np.random.seed(seed)
    out = np.empty(frames, dtype=np.int64)
    scratch = np.empty(max(n, 1), dtype=np.int64)
    for f in range(frames):
        dark = np.random.binomial(pixels, d)
        distinct = 0
        for _ in range(n):
            if np.random.random() < eta:
                pix = np.random.randint(0, pixels)
                seen = False
                for j in range(distinct):
                    if scratch[j] == pix:
                        seen = True
                        break
                if not seen:
                    scratch[distinct] = pix
                    distinct += 1
        overlap = np.random.hypergeometric(dark, pixels - dark, distinct) if distinct > 0 else 0
        out[f] = dark + distinct - overlap
    return out


def pixel_mc_clicks_numba(n: int, pixels: int, eta: float, d: float,
                          frames: int, seed: int) -> np.ndarray:
    return _pixel_mc_clicks_jit(n, pixels, eta, d, frames, seed)


# ---------------------------------------------------------------------------
# Laguerre kernel table for s-ordered quasi-distributions of intensity.
#
# K_{s,M}(W, n) = 2/(1-s) * (2W/(1-s))^(M-1) * exp(-2W/(1-s))
#                * n! Gamma(M) / Gamma(n+M) * ((s+1)/(s-1))^n
#                * L_n^(M-1)(4W/(1-s^2))
#
# evaluated by the upward three-term recurrence in n:
#   (n+1) L_{n+1}^a(x) = (2n+1+a-x) L_n^a(x) - (n+a) L_{n-1}^a(x)
# ---------------------------------------------------------------------------

_GUARD = 1e250


def laguerre_kernel_numpy(w: np.ndarray, n_max: int, s: float, M: float) -> np.ndarray:
    from scipy.special import gammaln

    w = np.asarray(w, dtype=np.float64)
    y = 2.0 * w / (1.0 - s)
    x = 4.0 * w / (1.0 - s * s)
    pref = (2.0 / (1.0 - s)) * np.exp((M - 1.0) * np.log(np.maximum(y, 1e-300)) - y)
    ratio = (s + 1.0) / (s - 1.0)
    out = np.empty((w.size, n_max + 1), dtype=np.float64)
    lm1 = np.zeros_like(w)
    l0 = np.ones_like(w)
    a = M - 1.0
    for n in range(n_max + 1):
        cn = np.exp(gammaln(n + 1.0) - gammaln(n + M)) * ratio**n
        out[:, n] = pref * cn * l0
        lnext = ((2 * n + 1 + a - x) * l0 - (n + a) * lm1) / (n + 1.0)
        lm1, l0 = l0, lnext
        if np.max(np.abs(l0)) > _GUARD:
            raise FloatingPointError("Laguerre recurrence overflow")
    return out


@njit(cache=True)
def _laguerre_kernel_jit(w, n_max, s, M, lgam):  # pragma: no cover
    m = w.shape[0]
    out = np.empty((m, n_max + 1), dtype=np.float64)
    ratio = (s + 1.0) / (s - 1.0)
    a = M - 1.0
    for i in range(m):
        y = 2.0 * w[i] / (1.0 - s)
        x = 4.0 * w[i] / (1.0 - s * s)
        yy = y if y > 1e-300 else 1e-300
        pref = (2.0 / (1.0 - s)) * np.exp((M - 1.0) * np.log(yy) - y)
        lm1 = 0.0
        l0 = 1.0
        rn = 1.0
        for n in range(n_max + 1):
            out[i, n] = pref * lgam[n] * rn * l0
            lnext = ((2 * n + 1 + a - x) * l0 - (n + a) * lm1) / (n + 1.0)
            lm1 = l0
            l0 = lnext
            rn *= ratio
            if abs(l0) > _GUARD:
                raise FloatingPointError("Laguerre recurrence overflow")
    return out


def laguerre_kernel_numba(w: np.ndarray, n_max: int, s: float, M: float) -> np.ndarray:
    from scipy.special import gammaln

    n = np.arange(n_max + 1, dtype=np.float64)
    lgam = np.exp(gammaln(n + 1.0) - gammaln(n + M))
    return _laguerre_kernel_jit(np.ascontiguousarray(w, dtype=np.float64),
                                n_max, float(s), float(M), lgam)


if HAVE_NUMBA:
    pixel_mc_clicks = pixel_mc_clicks_numba
    laguerre_kernel = laguerre_kernel_numba
else:
    pixel_mc_clicks = pixel_mc_clicks_numpy
    laguerre_kernel = laguerre_kernel_numpy
