"""Proposal constructions for ABC importance sampling.

The optimal proposal has the one-parameter form::

    q(theta; A) ∝ sqrt( p pi / (2 A - p / pi) )

valid for ``A > sup(p / pi) / 2``. The bounded approximation fixes
``A = 3/4 sup(p / pi)``; the optimal proposal picks the ``A`` that
maximizes ``omega``. The geometric mean ``sqrt(p pi)`` is the leading term
of the binomial series of the same expression.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .densities import (
    DiagonalGaussian,
    Gaussian,
    convolve_gaussian,
    normalize,
    sup_ratio,
    truncate,
)
from .efficiency import functional_A, functional_domain, sampling_efficiency
from .errors import ConvergenceError, InadmissibleParameterError, UsageError
from .search import golden_max

SCHEMES = ("prior", "posterior", "beaumont_kde", "geometric_mean", "bounded", "optimal", "series")
LOWER_MARGIN = 1e-3


@dataclass(frozen=True)
class Proposal:
    density: object
    scheme: str
    params: dict = field(default_factory=dict, compare=False)

    def log_pdf(self, theta):
        return self.density.log_pdf(theta)

    def pdf(self, theta):
        return self.density.pdf(theta)


def proposal_domain(p, prior):
    """Domain for numeric proposals: covers every theta where ``p`` has mass."""
    return functional_domain(p, p, prior)


def _hints(p, prior, *extra):
    return tuple(sorted(set(p.breakpoints) | set(prior.breakpoints) | set(extra)))


def prior_proposal(prior):
    return Proposal(prior, "prior")


def posterior_proposal(p):
    return Proposal(p, "posterior")


def geometric_mean_proposal(p, prior):
    """Normalized ``sqrt(p * prior)``.

    Closed form for Gaussian pairs: the precision is the average of the two
    precisions and the mean is the precision-weighted average.
    """
    if p == prior:
        return Proposal(p, "geometric_mean")
    if isinstance(p, Gaussian) and isinstance(prior, Gaussian):
        m, s = _gaussian_geometric_mean(p.mean, p.std, prior.mean, prior.std)
        return Proposal(Gaussian(m, s), "geometric_mean")
    if isinstance(p, DiagonalGaussian) and isinstance(prior, DiagonalGaussian):
        pairs = [_gaussian_geometric_mean(pm, ps, qm, qs)
                 for pm, ps, qm, qs in zip(p.means, p.stds, prior.means, prior.stds)]
        return Proposal(DiagonalGaussian(*zip(*pairs)), "geometric_mean")

    def log_q(x):
        return 0.5 * (np.asarray(p.log_pdf(x)) + np.asarray(prior.log_pdf(x)))

    density = normalize(log_q, proposal_domain(p, prior), breakpoints=_hints(p, prior),
                        label="geometric_mean")
    return Proposal(density, "geometric_mean")


def _gaussian_geometric_mean(m1, s1, m2, s2):
    prec = 0.5 * (1.0 / s1 ** 2 + 1.0 / s2 ** 2)
    mean = 0.5 * (m1 / s1 ** 2 + m2 / s2 ** 2) / prec
    return mean, 1.0 / math.sqrt(prec)


def _above_lower_bound(A, sup):
    # the located supremum can sit a few ulps below the true one
    return A > 0.5 * sup * (1.0 + 1e-9)


def optimal_form_log(p, prior, A):
    """Un-normalized log density of ``sqrt(p pi / (2A - p/pi))``."""

    def log_q(x):
        lp = np.asarray(p.log_pdf(x), dtype=float)
        lpi = np.asarray(prior.log_pdf(x), dtype=float)
        live = np.isfinite(lp) & np.isfinite(lpi)
        out = np.full(lp.shape, -np.inf)
        ratio = np.exp(lp[live] - lpi[live])
        out[live] = 0.5 * (lp[live] + lpi[live] - np.log(2.0 * A - ratio))
        return out

    return log_q


def optimal_form(p, prior, A, *, sup=None, label="optimal_form"):
    """Normalized member of the optimal family for a given ``A``."""
    sup = sup or sup_ratio(p, prior)
    if not _above_lower_bound(A, sup.sup_value):
        raise InadmissibleParameterError(
            f"A={A:.6g} must exceed half the supremum of p/pi "
            f"({0.5 * sup.sup_value:.6g}); it lies below the lower bound on A[q*]")
    return normalize(optimal_form_log(p, prior, A), proposal_domain(p, prior),
                     breakpoints=_hints(p, prior, sup.theta_star), label=label)


def bounded_proposal(p, prior, A_bar=None):
    """Optimal-form proposal with ``A`` fixed (default: 3/4 of ``sup p/pi``)."""
    sup = sup_ratio(p, prior)
    if A_bar is None:
        A_bar = 0.75 * sup.sup_value
    density = optimal_form(p, prior, A_bar, sup=sup, label="bounded")
    return Proposal(density, "bounded",
                    {"A_bar": A_bar, "sup": sup.sup_value, "theta_star": sup.theta_star})


def optimal_proposal(p, prior, tol=1e-6, *, method="golden", delta=LOWER_MARGIN,
                     n_probe=9, n_scan=256):
    """Maximize ``omega`` over the one-parameter optimal family.

    ``method="golden"`` probes the admissible range of ``A`` and runs a
    golden-section search around the best probe; a multi-modal probe
    profile triggers a dense scan instead (``params["fallback_scan"]``).
    ``method="fixed_point"`` iterates ``A <- A[q(A)]`` from the bounded
    approximation until successive values differ by less than 1e-8.
    """
    sup = sup_ratio(p, prior)
    s = sup.sup_value
    lo, hi = 0.5 * s * (1.0 + delta), s
    cache = {}

    def candidate(A):
        if A not in cache:
            q = optimal_form(p, prior, A, sup=sup, label="optimal")
            cache[A] = (q, sampling_efficiency(q, p, prior))
        return cache[A]

    def omega(A):
        return candidate(A)[1].omega

    params = {"sup": s, "theta_star": sup.theta_star, "method": method, "fallback_scan": False}
    if method == "fixed_point":
        A = 0.75 * s
        for it in range(500):
            A_next = functional_A(candidate(A)[0], p, prior)
            A_next = min(max(A_next, lo), hi)
            if abs(A_next - A) < 1e-8:
                A = A_next
                break
            A = A_next
        else:
            raise ConvergenceError("fixed-point iteration for A* did not converge in 500 steps")
        params["iterations"] = it + 1
    elif method == "golden":
        probes = np.linspace(lo, hi, n_probe)
        values = np.array([omega(a) for a in probes])
        if not _unimodal(values):
            params["fallback_scan"] = True
            probes = np.linspace(lo, hi, n_scan)
            values = np.array([omega(a) for a in probes])
        i = int(np.argmax(values))
        a_lo, a_hi = probes[max(i - 1, 0)], probes[min(i + 1, len(probes) - 1)]
        A, _, n_eval = golden_max(omega, a_lo, a_hi, rtol=tol)
        params["n_eval"] = len(cache)
    else:
        raise UsageError(f"unknown optimal_proposal method {method!r}")

    q, report = candidate(A)
    params.update(A_star=A, omega_star=report.omega, A_of_q=report.A, B_of_q=report.B)
    return Proposal(q, "optimal", params)


def _unimodal(values, rel=1e-12):
    """True when the sequence rises (weakly) to one peak and then falls."""
    scale = rel * np.max(np.abs(values))
    diffs = np.diff(values)
    signs = np.where(diffs > scale, 1, np.where(diffs < -scale, -1, 0))
    nonzero = signs[signs != 0]
    return not np.any(np.diff(nonzero) > 0)


def series_coefficients(order):
    """``binom(i - 1/2, i)`` for ``i = 0..order``, the coefficients of ``(1 - x)^(-1/2)``."""
    i = np.arange(order + 1)
    return special.binom(i - 0.5, i)


def series_proposal(p, prior, order, A_star):
    """Normalized truncation of the series expansion of the optimal form.

    ``q ∝ sqrt(p pi) * sum_{i<=order} binom(i-1/2, i) (p / (2 A* pi))^i``;
    order 0 is the geometric mean itself.
    """
    if int(order) != order or order < 0:
        raise UsageError(f"series order must be a non-negative integer, got {order}")
    sup = sup_ratio(p, prior)
    if not _above_lower_bound(A_star, sup.sup_value):
        raise InadmissibleParameterError(
            f"series diverges: A*={A_star:.6g} is not above half the supremum of p/pi "
            f"({0.5 * sup.sup_value:.6g})")
    params = {"order": int(order), "A_star": A_star}
    if order == 0:
        return Proposal(geometric_mean_proposal(p, prior).density, "series", params)
    coeffs = series_coefficients(int(order))

    def log_q(x):
        lp = np.asarray(p.log_pdf(x), dtype=float)
        lpi = np.asarray(prior.log_pdf(x), dtype=float)
        live = np.isfinite(lp) & np.isfinite(lpi)
        out = np.full(lp.shape, -np.inf)
        z = np.exp(lp[live] - lpi[live]) / (2.0 * A_star)
        total = np.zeros_like(z)
        for c in coeffs[::-1]:
            total = total * z + c
        out[live] = 0.5 * (lp[live] + lpi[live]) + np.log(total)
        return out

    density = normalize(log_q, proposal_domain(p, prior),
                        breakpoints=_hints(p, prior, sup.theta_star), label=f"series{order}")
    return Proposal(density, "series", params)


def beaumont_kde_proposal(p, kernel_variance=None, support=None):
    """Posterior smoothed by a Gaussian kernel (default variance ``2 Var[p]``).

    With ``support`` the smoothed density is truncated to that interval and
    renormalized.
    """
    if kernel_variance is None:
        kernel_variance = 2.0 * float(p.var)
    density = convolve_gaussian(p, kernel_variance)
    if support is not None:
        density = truncate(density, support, label="beaumont_kde")
    return Proposal(density, "beaumont_kde",
                    {"kernel_variance": kernel_variance, "support": support})


def build_proposal(scheme, p, prior, **options):
    """Construct a proposal by scheme name; ``options`` go to the constructor."""
    if scheme == "prior":
        return prior_proposal(prior)
    if scheme == "posterior":
        return posterior_proposal(p)
    if scheme == "beaumont_kde":
        return beaumont_kde_proposal(p, **options)
    if scheme == "geometric_mean":
        return geometric_mean_proposal(p, prior)
    if scheme == "bounded":
        return bounded_proposal(p, prior, **options)
    if scheme == "optimal":
        return optimal_proposal(p, prior, **options)
    if scheme == "series":
        return series_proposal(p, prior, **options)
    raise UsageError(f"unknown proposal scheme {scheme!r}; expected one of {SCHEMES}")
