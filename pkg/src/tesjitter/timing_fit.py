"""
Exponentially modified Gaussian (EMG) model of crossing-time histograms.

The model is the convolution of a Gaussian of width ``sigma`` centred on
``t0`` with a one-sided exponential ``u(t) exp(-tau t)``; ``tau`` is a rate.
A tail-free Gaussian is the ``tau -> inf`` limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import erfc, erfcx

SQRT2 = math.sqrt(2.0)
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass(frozen=True)
class EmgParams:
    amplitude: float
    t0: float
    sigma: float
    tau: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"EmgParams.sigma must be > 0, got {self.sigma!r}")
        if not self.tau >= 0:
            raise ValueError(f"EmgParams.tau must be >= 0, got {self.tau!r}")
        if not self.amplitude > 0:
            raise ValueError(f"EmgParams.amplitude must be > 0, got {self.amplitude!r}")

    @property
    def decay_time(self) -> float:
        return math.inf if self.tau == 0 else 1.0 / self.tau


@dataclass(frozen=True)
class EmgFit:
    """
    Result of `fit_emg`.

    ``covariance`` is ordered as (amplitude, t0, sigma, tau); ``area`` is the
    fitted number of events.
    """

    params: EmgParams
    covariance: np.ndarray
    fwhm: float
    fwhm_err: float
    reduced_chi2: float
    status: str
    n_iter: int
    area: float
    n_bins: int


def emg_eval(p: EmgParams, t):
    """Evaluate the convolution at `t` without intermediate overflow."""
    t = np.asarray(t, dtype=float)
    s, tau = p.sigma, p.tau
    x = t - p.t0
    z = (tau * s * s - x) / (SQRT2 * s)
    out = np.empty(np.broadcast(x, z).shape)
    x, z = np.broadcast_arrays(x, z)
    pos = z >= 0
    # exp(tau^2 s^2/2 - tau x) erfc(z) == exp(-x^2 / 2 s^2) erfcx(z)
    out[pos] = np.exp(-x[pos] ** 2 / (2 * s * s)) * erfcx(z[pos])
    neg = ~pos
    out[neg] = np.exp(0.5 * (tau * s) ** 2 - tau * x[neg]) * erfc(z[neg])
    out *= p.amplitude * s * math.sqrt(math.pi / 2.0)
    return out if out.ndim else float(out)


def emg_pdf(t, t0: float, sigma: float, decay_time: float):
    """Unit-area EMG with exponential time constant `decay_time` (0 gives a Gaussian)."""
    x = np.asarray(t, dtype=float) - t0
    if decay_time == 0:
        return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))
    tau = 1.0 / decay_time
    z = (tau * sigma * sigma - x) / (SQRT2 * sigma)
    x, z = np.broadcast_arrays(x, z)
    out = np.empty(x.shape)
    pos = z >= 0
    out[pos] = np.exp(-x[pos] ** 2 / (2 * sigma * sigma)) * erfcx(z[pos])
    neg = ~pos
    out[neg] = np.exp(0.5 * (tau * sigma) ** 2 - tau * x[neg]) * erfc(z[neg])
    out *= 0.5 * tau
    return out


def _shape_fwhm(sigma: float, decay_time: float) -> float:
    if sigma == 0:
        return math.log(2.0) * decay_time
    if decay_time == 0 or decay_time < 1e-8 * sigma:
        return FWHM_PER_SIGMA * sigma
    if math.isinf(decay_time):
        return math.inf

    def f(x):
        return float(emg_pdf(x, 0.0, sigma, decay_time))

    lo, hi = -8.0 * sigma, 8.0 * sigma + 40.0 * decay_time
    grid = np.linspace(lo, hi, 20001)
    vals = emg_pdf(grid, 0.0, sigma, decay_time)
    k = int(np.argmax(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    scale = max(sigma, decay_time)
    res = minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12 * scale})
    mode = res.x if -res.fun >= vals[k] else grid[k]
    half = 0.5 * f(mode)
    xtol = min(1e-6 * sigma, 1e-9 * scale)
    left = brentq(lambda x: f(x) - half, lo, mode, xtol=xtol, rtol=1e-15)
    right = brentq(lambda x: f(x) - half, mode, hi, xtol=xtol, rtol=1e-15)
    return right - left


def emg_fwhm(p: EmgParams) -> float:
    """Full width at half maximum of the EMG shape (mode and half-maximum roots found numerically)."""
    if p.tau == 0:
        return math.inf
    return _shape_fwhm(p.sigma, 1.0 / p.tau)


def emg_fwhm_from(sigma: float, tau: float) -> float:
    """FWHM for raw (sigma, rate) values; ``tau = inf`` is the Gaussian limit, ``sigma = 0`` the exponential."""
    if tau == 0:
        return math.inf
    return _shape_fwhm(sigma, 0.0 if math.isinf(tau) else 1.0 / tau)


# -- fitting ------------------------------------------------------------------------

def _initial_guess(centers, counts, width):
    k = int(np.argmax(counts))
    mode = centers[k]
    half = counts[k] / 2.0
    left = k
    while left > 0 and counts[left] > half:
        left -= 1
    if counts[left] < half < counts[left + 1] if left + 1 < counts.size else False:
        frac = (half - counts[left]) / (counts[left + 1] - counts[left])
        hw = mode - (centers[left] + frac * width)
    else:
        hw = mode - centers[left]
    sigma = max(hw, 0.5 * width) / math.sqrt(2 * math.log(2))
    total = counts.sum()
    mean = float((centers * counts).sum() / total)
    lam = float(np.clip(mean - mode, 1e-3 * width, 1e3 * width))
    return np.array([total, mode, sigma, lam])


def _model(q, centers, width):
    n, t0, s, lam = q
    return n * width * emg_pdf(centers, t0, s, lam)


def _jacobian(q, centers, width, bounds_lo):
    m0 = _model(q, centers, width)
    jac = np.empty((centers.size, 4))
    for i in range(4):
        h = 1e-6 * max(abs(q[i]), 1.0 if i != 3 else 1e-3)
        qp, qm = q.copy(), q.copy()
        qp[i] += h
        qm[i] -= h
        if qm[i] < bounds_lo[i]:
            qm[i] = q[i]
            jac[:, i] = (_model(qp, centers, width) - m0) / h
        else:
            jac[:, i] = (_model(qp, centers, width) - _model(qm, centers, width)) / (2 * h)
    return jac


def fit_emg(edges, counts, max_iter: int = 500, xtol: float = 1e-10) -> EmgFit:
    """
    Weighted least-squares EMG fit to a histogram.

    Bin variance is ``max(count, 1)``. The solver is a damped Gauss-Newton
    (Levenberg-Marquardt) iteration that only accepts cost-decreasing steps and
    stops when the relative step falls below `xtol`.

    Parameters
    ----------
    edges : array, shape (n + 1,)
        Uniform bin edges, seconds.
    counts : array, shape (n,)
    """
    edges = np.asarray(edges, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if edges.ndim != 1 or edges.size != counts.size + 1:
        raise ValueError("edges must have one more entry than counts")
    if np.count_nonzero(counts) < 8:
        raise ValueError("need at least 8 occupied bins")
    width_s = float(edges[1] - edges[0])
    ref = float(edges[0])
    # work in bin units, event counts normalised to the total
    centers = (0.5 * (edges[:-1] + edges[1:]) - ref) / width_s
    total = counts.sum()
    y = counts / total
    w = np.sqrt(np.maximum(counts, 1.0)) / total

    q = _initial_guess(centers, y, 1.0)
    lo = np.array([1e-12, -np.inf, 1e-6, 1e-3])
    hi = np.array([np.inf, np.inf, np.inf, 1e3])
    q = np.clip(q, lo, hi)

    def cost_of(qq):
        r = (y - _model(qq, centers, 1.0)) / w
        return 0.5 * float(r @ r), r

    cost, r = cost_of(q)
    mu = 1e-3
    status = "max-iter"
    it = 0
    for it in range(1, max_iter + 1):
        jac = _jacobian(q, centers, 1.0, lo) / w[:, None]
        a = jac.T @ jac
        g = jac.T @ r
        step_ok = False
        while mu < 1e16:
            damp = a + mu * np.diag(np.maximum(np.diag(a), 1e-12))
            try:
                delta = np.linalg.solve(damp, g)
            except np.linalg.LinAlgError:
                mu *= 4
                continue
            trial = np.clip(q + delta, lo, hi)
            c_new, r_new = cost_of(trial)
            if c_new <= cost:
                step = trial - q
                q, cost, r = trial, c_new, r_new
                mu = max(mu / 3, 1e-12)
                step_ok = True
                break
            mu *= 2
        scale = np.abs(q) + np.array([1e-12, 1.0, 1e-12, 1e-12])
        if not step_ok or np.all(np.abs(step) <= xtol * scale):
            status = "converged"
            break

    if q[2] < 1e-2:  # core narrower than a hundredth of a bin
        status = "degenerate"

    jac = _jacobian(q, centers, 1.0, lo) / w[:, None]
    try:
        cov_q = np.linalg.inv(jac.T @ jac)
    except np.linalg.LinAlgError:
        cov_q = np.full((4, 4), np.nan)

    n_ev, t0_b, s_b, lam_b = q
    t0 = ref + t0_b * width_s
    sigma = s_b * width_s
    lam = lam_b * width_s
    area = n_ev * total
    tau = 1.0 / lam
    amplitude = area * tau / (sigma * math.sqrt(2 * math.pi))

    # derivatives of (A, t0, sigma, tau) wrt (n, t0_b, s_b, lam_b)
    d = np.zeros((4, 4))
    d[0, 0] = amplitude / n_ev
    d[0, 2] = -amplitude / s_b
    d[0, 3] = -amplitude / lam_b
    d[1, 1] = width_s
    d[2, 2] = width_s
    d[3, 3] = -1.0 / (lam_b ** 2 * width_s)
    cov = d @ cov_q @ d.T

    fwhm = _shape_fwhm(sigma, lam)
    gs = (_shape_fwhm(sigma * (1 + 1e-5), lam) - fwhm) / (1e-5 * sigma)
    gl = (_shape_fwhm(sigma, lam * (1 + 1e-5)) - fwhm) / (1e-5 * lam)
    cov_sl = cov_q[np.ix_([2, 3], [2, 3])] * width_s ** 2
    grad = np.array([gs, gl])
    fwhm_err = float(math.sqrt(max(grad @ cov_sl @ grad, 0.0)))

    dof = max(counts.size - 4, 1)
    return EmgFit(EmgParams(amplitude, t0, sigma, tau), cov, fwhm, fwhm_err,
                  2 * cost / dof, status, it, area, int(counts.size))
