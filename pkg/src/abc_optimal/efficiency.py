"""Acceptance and weight-variance functionals of a proposal density.

For a posterior ``p``, prior ``pi`` and proposal ``q``::

    A[q] = integral of (q / pi) p        (expected acceptance, up to constants)
    B[q] = integral of (pi / q) p        (importance-weight variance factor)
    omega[q] = A[q] / B[q]

Constant prefactors (acceptance volume, evidence, sample count) are
dropped, so proposing from the prior gives ``A = B = omega = 1``.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np

from .densities import LOG_SQRT_2PI, DiagonalGaussian, Gaussian
from .errors import DivergenceError, QuadratureError, UsageError
from .quadrature import integrate

FUNCTIONAL_ATOL = 1e-10
FUNCTIONAL_RTOL = 1e-10
# log of the largest integrand value accepted before declaring divergence
_LOG_OVERFLOW = 700.0
_LOG_UNDERFLOW = math.log(np.finfo(float).tiny)
MAX_EXTENSIONS = 6

SCHEMES = ("prior", "posterior", "beaumont_kde", "geometric_mean")


@dataclass(frozen=True)
class EfficiencyReport:
    A: float
    B: float
    omega: float
    method: str
    est_error: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=False)


def functional_domain(q, p, prior):
    """Interval carrying all the mass relevant to ``A`` and ``B``.

    The hull of the three quadrature intervals, clipped to where both the
    posterior and the prior can be positive.
    """
    bounds = [d.bounds for d in (p, q, prior)]
    lo = max(min(b[0] for b in bounds), p.support[0], prior.support[0])
    hi = min(max(b[1] for b in bounds), p.support[1], prior.support[1])
    if not lo < hi:
        raise UsageError("posterior and prior have no common support")
    return lo, hi


def _log_integrands(q, p, prior, x):
    lq = np.asarray(q.log_pdf(x), dtype=float)
    lp = np.asarray(p.log_pdf(x), dtype=float)
    lpi = np.asarray(prior.log_pdf(x), dtype=float)
    live = np.isfinite(lp)
    if np.any(live & np.isneginf(lpi)):
        theta = x[np.argmax(live & np.isneginf(lpi))]
        raise UsageError(f"prior vanishes at theta={theta:.12g} where the posterior is positive")
    # a numeric proposal may be exactly zero outside its domain where the posterior density
    # itself underflows; such points carry no representable mass
    gap = live & np.isneginf(lq)
    if np.any(gap & (lp > _LOG_UNDERFLOW)):
        theta = x[np.argmax(gap & (lp > _LOG_UNDERFLOW))]
        raise DivergenceError(
            f"B[q] diverges: proposal vanishes at theta={theta:.12g} where the posterior is positive")
    live &= ~gap
    with np.errstate(invalid="ignore"):
        log_a = np.where(live, lq - lpi + lp, -np.inf)
        log_b = np.where(live, lpi - lq + lp, -np.inf)
    both = np.stack([log_a, log_b], axis=1)
    if np.any(both > _LOG_OVERFLOW):
        i, j = np.argwhere(both > _LOG_OVERFLOW)[0]
        name = "AB"[j]
        raise DivergenceError(f"{name}[q] diverges: integrand overflows at theta={x[i]:.12g}")
    return both


def _integrate_functionals(q, p, prior, *, atol=FUNCTIONAL_ATOL, rtol=FUNCTIONAL_RTOL):
    """Return ``(values, errors)`` arrays for ``(A, B)`` by adaptive quadrature."""
    if any(d.ndim != 1 for d in (q, p, prior)):
        raise UsageError("quadrature functionals are one-dimensional")
    lo, hi = functional_domain(q, p, prior)
    hints = set(p.breakpoints) | set(q.breakpoints) | set(prior.breakpoints)

    def integrand(x):
        return np.exp(_log_integrands(q, p, prior, x))

    res = integrate(integrand, lo, hi, atol=atol, rtol=rtol, breakpoints=hints)
    values, errors = np.array(res.value), np.array(res.error)

    # Mass beyond a truncated edge must be negligible. If it is not, the
    # domain is widened; growth that persists after MAX_EXTENSIONS
    # widenings is reported as divergence.
    common = (max(p.support[0], prior.support[0], q.support[0]),
              min(p.support[1], prior.support[1], q.support[1]))
    for _ in range(MAX_EXTENSIONS):
        width = hi - lo
        new_lo = min(lo, max(lo - width, common[0]))
        new_hi = max(hi, min(hi + width, common[1]))
        growth = np.zeros(2)
        for a, b in ((new_lo, lo), (hi, new_hi)):
            if a == b:
                continue
            try:
                tail = integrate(integrand, a, b, atol=atol, rtol=rtol)
            except QuadratureError as exc:
                raise DivergenceError(f"functional diverges on [{a:.6g}, {b:.6g}]: {exc}") from exc
            growth += tail.value
            errors = errors + tail.error
        values = values + growth
        lo, hi = new_lo, new_hi
        if np.all(growth <= np.maximum(1e-6 * np.abs(values), 100.0 * atol)):
            return values, errors
    name = "AB"[int(np.argmax(growth / np.abs(values)))]
    raise DivergenceError(
        f"{name}[q] keeps growing as the domain widens (last extension to "
        f"[{lo:.6g}, {hi:.6g}] added {float(np.max(growth)):.3g})")


def _diagonal_functionals(q, p, prior):
    if not all(isinstance(d, DiagonalGaussian) for d in (q, p, prior)):
        raise UsageError("multi-dimensional functionals need three DiagonalGaussian densities")
    if not q.ndim == p.ndim == prior.ndim:
        raise UsageError("dimension mismatch between q, p and prior")
    values = np.ones(2)
    rel_err = np.zeros(2)
    for i in range(p.ndim):
        v, e = _integrate_functionals(q.marginal(i), p.marginal(i), prior.marginal(i))
        values *= v
        rel_err += e / v
    return values, rel_err * values


def _functionals(q, p, prior):
    if p.ndim > 1 or q.ndim > 1 or prior.ndim > 1:
        return _diagonal_functionals(q, p, prior)
    return _integrate_functionals(q, p, prior)


def functional_A(q, p, prior):
    """Acceptance functional ``A[q]``, the integral of ``(q / pi) p``."""
    return float(_functionals(q, p, prior)[0][0])


def functional_B(q, p, prior):
    """Weight-variance functional ``B[q]``, the integral of ``(pi / q) p``.

    Raises :class:`DivergenceError` if ``q`` vanishes or decays too fast
    where ``p`` has mass.
    """
    return float(_functionals(q, p, prior)[0][1])


def sampling_efficiency(q, p, prior):
    """``omega[q] = A[q] / B[q]`` with a first-order error estimate."""
    (a, b), (ea, eb) = _functionals(q, p, prior)
    omega = a / b
    return EfficiencyReport(float(a), float(b), float(omega), "quadrature",
                            float(abs(omega) * (ea / a + eb / b)))


@dataclass(frozen=True)
class MCFunctionals:
    A_hat: float
    B_hat: float
    A_se: float
    B_se: float


def _self_normalized_jackknife(w, r):
    """Weighted mean of ``r`` and its jackknife standard error."""
    sw = w.sum()
    swr = np.dot(w, r)
    est = swr / sw
    n = w.size
    with np.errstate(invalid="ignore", divide="ignore"):
        loo = (swr - w * r) / (sw - w)
    loo = loo[np.isfinite(loo)]
    se = math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)) if loo.size > 1 else math.inf
    return float(est), se


def mc_functionals(q, thetas, prior, weights=None):
    """Estimate ``A`` and ``B`` as weighted posterior averages of ``q/pi`` and ``pi/q``.

    ``thetas`` are posterior draws (or weighted particles). Standard errors
    come from the delete-one jackknife of the self-normalized estimator.
    """
    thetas = np.asarray(thetas, dtype=float)
    n = thetas.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise UsageError("weights must have one entry per sample")
    if np.any(w < 0) or not np.any(w > 0):
        raise UsageError("weights must be non-negative and not all zero")
    log_ratio = np.asarray(q.log_pdf(thetas)) - np.asarray(prior.log_pdf(thetas))
    a_hat, a_se = _self_normalized_jackknife(w, np.exp(log_ratio))
    b_hat, b_se = _self_normalized_jackknife(w, np.exp(-log_ratio))
    return MCFunctionals(a_hat, b_hat, a_se, b_se)


def kish_ess(weights):
    """Kish effective sample size ``(sum w)^2 / sum w^2``."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise UsageError("kish_ess needs a non-empty 1-D weight array")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise UsageError("weights must be finite and non-negative")
    if not np.any(w > 0):
        raise UsageError("all weights are zero")
    # scale first so large weights cannot overflow the squares
    w = w / w.max()
    return float(w.sum() ** 2 / np.dot(w, w))


@dataclass(frozen=True)
class GaussianToyParams:
    """Isotropic Gaussian toy: posterior N(0, 1) and prior N(mu_pi, sigma_pi) per dimension."""

    n_theta: int
    mu_pi: float
    sigma_pi: float

    def __post_init__(self):
        if int(self.n_theta) != self.n_theta or self.n_theta < 1:
            raise UsageError(f"n_theta must be a positive integer, got {self.n_theta}")
        if not self.sigma_pi > 0:
            raise UsageError(f"sigma_pi must be positive, got {self.sigma_pi}")


def log_gaussian_ratio_integral(terms):
    """Log of the integral of a product of normal pdfs raised to powers +/-1.

    ``terms`` is a sequence of ``(mean, std, power)``. The exponent is a
    quadratic in theta; completing the square gives the closed form, which
    exists only when the net precision is positive.
    """
    prec = sum(c / s ** 2 for _, s, c in terms)
    lin = sum(c * m / s ** 2 for m, s, c in terms)
    const = sum(c * m ** 2 / s ** 2 for m, s, c in terms)
    log_norm = -sum(c * (math.log(s) + LOG_SQRT_2PI) for _, s, c in terms)
    if not prec > 0:
        raise DivergenceError(f"Gaussian functional diverges (net precision {prec:.6g} <= 0)")
    return log_norm - 0.5 * const + 0.5 * lin ** 2 / prec + 0.5 * math.log(2.0 * math.pi / prec)


def toy_proposal(params, scheme):
    """Per-dimension proposal ``(mean, std)`` of a closed-form scheme in the Gaussian toy."""
    if scheme == "prior":
        return params.mu_pi, params.sigma_pi
    if scheme == "posterior":
        return 0.0, 1.0
    if scheme == "beaumont_kde":
        # posterior variance 1 plus a kernel of twice that variance
        return 0.0, math.sqrt(3.0)
    if scheme == "geometric_mean":
        prec = 0.5 * (1.0 + 1.0 / params.sigma_pi ** 2)
        mean = 0.5 * (params.mu_pi / params.sigma_pi ** 2) / prec
        return mean, 1.0 / math.sqrt(prec)
    raise UsageError(f"unknown closed-form scheme {scheme!r}; expected one of {SCHEMES}")


def _log_functionals(params, scheme):
    qm, qs = toy_proposal(params, scheme)
    post = (0.0, 1.0)
    prior = (params.mu_pi, params.sigma_pi)
    log_a = log_gaussian_ratio_integral([(qm, qs, 1), (*post, 1), (*prior, -1)])
    log_b = log_gaussian_ratio_integral([(*prior, 1), (*post, 1), (qm, qs, -1)])
    return params.n_theta * log_a, params.n_theta * log_b


def analytic_gaussian_efficiency(params, scheme):
    """Closed-form ``A``, ``B`` and ``omega`` for the isotropic Gaussian toy.

    All three densities factorize over dimensions, so the 1-D values are
    raised to the power ``n_theta``.
    """
    log_a, log_b = _log_functionals(params, scheme)
    if max(abs(log_a), abs(log_b), abs(log_a - log_b)) > _LOG_OVERFLOW:
        raise DivergenceError(f"{scheme} functionals at {params} exceed the floating-point range")
    return EfficiencyReport(math.exp(log_a), math.exp(log_b), math.exp(log_a - log_b),
                            "analytic", 0.0)


def toy_densities(params, scheme):
    """The toy's (q, posterior, prior) as density objects (1-D when ``n_theta == 1``)."""
    qm, qs = toy_proposal(params, scheme)
    n = params.n_theta
    if n == 1:
        return Gaussian(qm, qs), Gaussian(0.0, 1.0), Gaussian(params.mu_pi, params.sigma_pi)
    return (DiagonalGaussian((qm,) * n, (qs,) * n), DiagonalGaussian((0.0,) * n, (1.0,) * n),
            DiagonalGaussian((params.mu_pi,) * n, (params.sigma_pi,) * n))


@dataclass(frozen=True)
class SurfaceRow:
    mu_pi: float
    sigma_pi: float
    n_theta: int
    a: float
    admissible: bool


SURFACE_HEADER = ("mu_pi", "sigma_pi", "n_theta", "a", "admissible")


def improvement_surface(grid: Iterable[GaussianToyParams], numerator_scheme, denominator_scheme):
    """Improvement factor ``omega[numerator] / omega[denominator]`` per grid point.

    Grid points where either scheme diverges are kept with ``a = nan`` and
    ``admissible = False``. Rows come back in grid order.
    """
    rows = []
    for params in grid:
        try:
            num_a, num_b = _log_functionals(params, numerator_scheme)
            den_a, den_b = _log_functionals(params, denominator_scheme)
            a, ok = math.exp((num_a - num_b) - (den_a - den_b)), True
        except DivergenceError:
            a, ok = math.nan, False
        rows.append(SurfaceRow(params.mu_pi, params.sigma_pi, params.n_theta, a, ok))
    return rows


def surface_grid(n_theta, mu_range=(0.0, 10.0), sigma_range=(1.0, 20.0), n_mu=101, n_sigma=101):
    return [GaussianToyParams(n_theta, float(m), float(s))
            for m in np.linspace(*mu_range, n_mu)
            for s in np.linspace(*sigma_range, n_sigma)]


def surface_to_csv(rows, stream=None):
    """Write surface rows as CSV; returns the text when no stream is given."""
    out = stream if stream is not None else io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SURFACE_HEADER)
    for r in rows:
        writer.writerow([repr(r.mu_pi), repr(r.sigma_pi), r.n_theta, repr(r.a),
                         str(r.admissible).lower()])
    return out.getvalue() if stream is None else None
