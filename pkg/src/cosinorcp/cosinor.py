"""Cosinor circadian-rhythm model: nonlinear least-squares fit and dichotomization.

The rhythm is ``r(t) = mes + amp * cos(2*pi*(t - phi) / T)`` with the period
T fixed at 1440 minutes.  The fitted curve is cut at the lower 18% of its
range to separate nocturnal from diurnal samples; the resulting edges are
rough sleep/wake boundaries that seed the change-point refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import EpochSeries

__all__ = [
    "PERIOD_MINUTES",
    "NonIdentifiableError",
    "CosinorParams",
    "CosinorFit",
    "CycleBoundaries",
    "eval_cosinor",
    "fit_cosinor",
    "dichotomize",
]

PERIOD_MINUTES = 1440.0
MIN_FIT_SAMPLES = 2880  # two full periods, so the phase is well-determined

# Convergence per damped step: both must hold (iteration cap 200).
_RSS_RTOL = 1e-9
_STEP_ATOL = 1e-7
_MAX_ITER = 200


class NonIdentifiableError(ValueError):
    """The fitted rhythm is flat; amplitude and phase carry no information."""


@dataclass(frozen=True)
class CosinorParams:
    """Midline (``mes``), amplitude (``amp``) and acrophase (``phi``, minutes)."""

    mes: float
    amp: float
    phi: float

    def __post_init__(self):
        for name in ("mes", "amp", "phi"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def canonical(self) -> CosinorParams:
        """Fold a negative amplitude into a half-period phase shift; wrap phi to [0, T)."""
        mes, amp, phi = self.mes, self.amp, self.phi
        if amp < 0:
            amp = -amp
            phi = phi + PERIOD_MINUTES / 2
        return CosinorParams(mes, amp, phi % PERIOD_MINUTES)


@dataclass(frozen=True)
class CosinorFit:
    params: CosinorParams
    fitted: np.ndarray
    rss: float
    converged: bool
    iterations: int
    identifiable: bool


@dataclass(frozen=True)
class CycleBoundaries:
    """Dichotomized rhythm: 1 = diurnal, with state-change indices.

    A boundary is recorded at the first sample of the new state;
    ``wake_edges`` are the 0->1 (night-to-day) boundaries.
    """

    binary: np.ndarray
    boundaries: np.ndarray
    wake_edges: np.ndarray
    threshold: float


def eval_cosinor(p: CosinorParams, t) -> float | np.ndarray:
    """Rhythm value at minute index ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    value = p.mes + p.amp * np.cos(2.0 * np.pi * (t - p.phi) / PERIOD_MINUTES)
    return float(value) if value.ndim == 0 else value


def _normal_equations(p: np.ndarray, t: np.ndarray, y: np.ndarray):
    """Residual and Gauss-Newton system for the current parameters.

    The Jacobian columns are [1, cos(theta), amp*w*sin(theta)], so J'J and
    J'r reduce to a handful of vector sums; the n-by-3 matrix is never built.
    """
    mes, amp, phi = p
    w = 2.0 * np.pi / PERIOD_MINUTES
    theta = w * (t - phi)
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    residual = y - mes - amp * cos_t

    n = t.size
    dphi = amp * w
    sum_c = float(np.sum(cos_t))
    sum_s = float(np.sum(sin_t))
    sum_cc = float(cos_t @ cos_t)
    sum_ss = float(sin_t @ sin_t)
    sum_cs = float(cos_t @ sin_t)
    h = np.array(
        [
            [n, sum_c, dphi * sum_s],
            [sum_c, sum_cc, dphi * sum_cs],
            [dphi * sum_s, dphi * sum_cs, dphi * dphi * sum_ss],
        ]
    )
    g = np.array(
        [
            float(np.sum(residual)),
            float(residual @ cos_t),
            dphi * float(residual @ sin_t),
        ]
    )
    rss = float(residual @ residual)
    return rss, h, g


def fit_cosinor(
    s: EpochSeries | np.ndarray,
    init: CosinorParams = CosinorParams(500.0, 550.0, 227.0),
) -> CosinorFit:
    """Least-squares cosinor fit by damped Gauss-Newton descent from ``init``.

    Accepts a 60-second :class:`EpochSeries` or a bare minute-sampled array.
    Steps solve ``(J'J + mu I) d = J' r`` with the damping ``mu`` shrunk on
    accepted steps and inflated on rejected ones, so the residual norm never
    increases.  The fit converges when both the parameter step and the
    relative residual change fall below tolerance; hitting the iteration cap
    returns ``converged=False`` rather than raising.

    Parameters are canonicalized (positive amplitude, phase in [0, 1440)),
    and the fit is marked non-identifiable when the fitted curve is flat
    relative to its level.
    """
    if isinstance(s, EpochSeries):
        if s.epoch_seconds != 60:
            raise ValueError("cosinor fit expects 60-second epochs")
        y = s.counts.astype(float)
    else:
        y = np.asarray(s, dtype=float)
    n = y.size
    if n < MIN_FIT_SAMPLES:
        raise ValueError(f"need at least {MIN_FIT_SAMPLES} samples (two periods), got {n}")
    t = np.arange(n, dtype=float)
    p = np.array([init.mes, init.amp, init.phi], dtype=float)
    rss, h, g = _normal_equations(p, t, y)

    mu = 1e-3
    converged = False
    iterations = 0
    for iterations in range(1, _MAX_ITER + 1):
        accepted = False
        for _ in range(50):
            try:
                step = np.linalg.solve(h + mu * np.eye(3), g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            candidate = p + step
            rss_new, h_new, g_new = _normal_equations(candidate, t, y)
            if rss_new <= rss:
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            break
        p, h, g = candidate, h_new, g_new
        mu = max(mu * 0.3, 1e-12)
        rel_drop = (rss - rss_new) / max(rss, np.finfo(float).tiny)
        rss = rss_new
        if np.max(np.abs(step)) < _STEP_ATOL and rel_drop < _RSS_RTOL:
            converged = True
            break

    params = CosinorParams(*(float(v) for v in p)).canonical()
    fitted = eval_cosinor(params, t)
    residual = y - fitted
    rss = float(residual @ residual)
    spread = float(fitted.max() - fitted.min())
    level = max(abs(float(fitted.mean())), np.finfo(float).tiny)
    return CosinorFit(
        params=params,
        fitted=fitted,
        rss=rss,
        converged=converged,
        iterations=iterations,
        identifiable=spread >= 1e-9 * level,
    )


def dichotomize(fit: CosinorFit, q: float = 0.18) -> CycleBoundaries:
    """Cut the fitted curve at ``min + q * range``: above is diurnal (1).

    Returns the binary sequence, the state-change indices, and the subset of
    changes that are wake (0->1) edges.
    """
    fitted = fit.fitted
    if fitted.size < 2:
        raise ValueError("need at least two fitted samples")
    lo = float(fitted.min())
    spread = float(fitted.max()) - lo
    if not fit.identifiable or spread <= 0:
        raise NonIdentifiableError("flat fitted curve cannot be dichotomized")
    threshold = lo + q * spread
    binary = (fitted > threshold).astype(np.uint8)
    boundaries = np.flatnonzero(np.diff(binary)) + 1
    wake_edges = boundaries[binary[boundaries] == 1]
    return CycleBoundaries(
        binary=binary,
        boundaries=boundaries,
        wake_edges=wake_edges,
        threshold=threshold,
    )
