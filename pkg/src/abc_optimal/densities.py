"""Probability densities used as posteriors, priors and proposals.

Every density is an immutable object with a vectorized ``log_pdf``. One
dimensional densities accept scalars or arrays of points; a trailing axis
of length one is also accepted. :class:`DiagonalGaussian` takes points of
shape ``(..., ndim)``.

Quadrature over a density with unbounded support uses its ``bounds``: the
mean +/- 12 standard deviations (per component for mixtures), or the
``1 - 1e-12`` quantile for the chi-squared upper tail.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import NormalizationError, QuadratureError, UnsupportedOperationError, UsageError
from .quadrature import integrate
from .search import golden_max

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
TAIL_STDS = 12.0
CHI2_TAIL = 1e-12


def _points(theta):
    """Coerce 1-D input to a float array; report whether it was a scalar."""
    arr = np.asarray(theta, dtype=float)
    if arr.ndim >= 2:
        if arr.shape[-1] != 1:
            raise UsageError(
                f"one-dimensional density evaluated at points of shape {arr.shape}")
        arr = arr[..., 0]
    return arr, arr.ndim == 0


def _out(values, scalar):
    return float(values) if scalar else values


def _normal_logpdf(x, mean, std):
    z = (x - mean) / std
    return -0.5 * z * z - math.log(std) - LOG_SQRT_2PI


class Density:
    """Common interface; concrete classes are frozen dataclasses."""

    ndim = 1

    def log_pdf(self, theta):
        raise NotImplementedError

    def pdf(self, theta):
        return np.exp(self.log_pdf(theta))

    def sample(self, rng, n):
        raise UnsupportedOperationError(
            f"{type(self).__name__} cannot be sampled directly; use smc.mh_sample")

    @property
    def support(self):
        """Closed interval outside which the density is exactly zero."""
        return (-math.inf, math.inf)

    @property
    def bounds(self):
        """Finite interval used for quadrature."""
        raise NotImplementedError

    @property
    def breakpoints(self):
        """Interior points worth splitting quadrature panels at."""
        return ()

    # concrete classes provide ``mean`` and ``var``

    def to_config(self):
        raise UnsupportedOperationError(f"{type(self).__name__} has no config form")


@dataclass(frozen=True)
class Gaussian(Density):
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise UsageError(f"Gaussian std must be positive, got {self.std}")

    def log_pdf(self, theta):
        x, scalar = _points(theta)
        return _out(_normal_logpdf(x, self.mean, self.std), scalar)

    def sample(self, rng, n):
        _check_count(n)
        return rng.normal(self.mean, self.std, size=n)

    @property
    def bounds(self):
        return (self.mean - TAIL_STDS * self.std, self.mean + TAIL_STDS * self.std)

    @property
    def breakpoints(self):
        return (self.mean,)

    @property
    def var(self):
        return self.std ** 2

    def to_config(self):
        return {"type": "gaussian", "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class GaussianMixture(Density):
    """Mixture of normals; ``components`` holds ``(weight, mean, std)`` triples."""

    components: tuple

    def __post_init__(self):
        comps = tuple(tuple(float(v) for v in c) for c in self.components)
        if not comps:
            raise UsageError("mixture needs at least one component")
        w = np.array([c[0] for c in comps])
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise UsageError(f"mixture weights must be non-negative and sum to 1, got {w.sum()!r}")
        if any(not c[2] > 0 for c in comps):
            raise UsageError("mixture component std must be positive")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_arrays(cls, weights, means, stds):
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        stds = np.broadcast_to(np.asarray(stds, dtype=float), w.shape)
        # renormalizing once more absorbs the last-ulp error of the division
        w = w / math.fsum(w)
        return cls(tuple(zip(w.tolist(), np.asarray(means, float).tolist(), stds.tolist())))

    @cached_property
    def _arrays(self):
        arr = np.array(self.components)
        return arr[:, 0], arr[:, 1], arr[:, 2]

    @property
    def weights(self):
        return self._arrays[0]

    @property
    def means(self):
        return self._arrays[1]

    @property
    def stds(self):
        return self._arrays[2]

    def log_pdf(self, theta):
        x, scalar = _points(theta)
        w, m, s = self._arrays
        flat = x.reshape(-1, 1)
        with np.errstate(divide="ignore"):
            logw = np.log(w)
        terms = logw - np.log(s) - LOG_SQRT_2PI - 0.5 * ((flat - m) / s) ** 2
        top = terms.max(axis=1, keepdims=True)
        top = np.where(np.isfinite(top), top, 0.0)
        with np.errstate(divide="ignore"):
            out = (top[:, 0] + np.log(np.exp(terms - top).sum(axis=1))).reshape(x.shape)
        return _out(out, scalar)

    def sample(self, rng, n):
        _check_count(n)
        w, m, s = self._arrays
        idx = rng.choice(len(w), size=n, p=w)
        return rng.normal(m[idx], s[idx])

    @property
    def bounds(self):
        _, m, s = self._arrays
        return (float(np.min(m - TAIL_STDS * s)), float(np.max(m + TAIL_STDS * s)))

    @property
    def breakpoints(self):
        if len(self.components) > 16:
            return ()
        return tuple(sorted(set(self.means.tolist())))

    @property
    def mean(self):
        w, m, _ = self._arrays
        return float(np.dot(w, m))

    @property
    def var(self):
        w, m, s = self._arrays
        mu = np.dot(w, m)
        return float(np.dot(w, s ** 2 + (m - mu) ** 2))

    def to_config(self):
        return {"type": "mixture", "components": [list(c) for c in self.components]}


@dataclass(frozen=True)
class ChiSquared(Density):
    dof: int

    def __post_init__(self):
        if int(self.dof) != self.dof or self.dof < 1:
            raise UsageError(f"chi-squared dof must be a positive integer, got {self.dof}")
        object.__setattr__(self, "dof", int(self.dof))

    def log_pdf(self, theta):
        x, scalar = _points(theta)
        with np.errstate(divide="ignore"):
            out = stats.chi2.logpdf(x, self.dof)
        return _out(out, scalar)

    def sample(self, rng, n):
        _check_count(n)
        return rng.chisquare(self.dof, size=n)

    @property
    def support(self):
        return (0.0, math.inf)

    @property
    def bounds(self):
        return (0.0, float(stats.chi2.isf(CHI2_TAIL, self.dof)))

    @property
    def breakpoints(self):
        return tuple(sorted({max(self.dof - 2.0, 0.0), float(self.dof)}))

    @property
    def mean(self):
        return float(self.dof)

    @property
    def var(self):
        return 2.0 * self.dof

    def to_config(self):
        return {"type": "chi2", "dof": self.dof}


@dataclass(frozen=True)
class Uniform(Density):
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise UsageError(f"uniform needs lo < hi, got [{self.lo}, {self.hi}]")

    def log_pdf(self, theta):
        x, scalar = _points(theta)
        inside = (x >= self.lo) & (x <= self.hi)
        out = np.where(inside, -math.log(self.hi - self.lo), -np.inf)
        return _out(out, scalar)

    def sample(self, rng, n):
        _check_count(n)
        return rng.uniform(self.lo, self.hi, size=n)

    @property
    def support(self):
        return (self.lo, self.hi)

    @property
    def bounds(self):
        return (self.lo, self.hi)

    @property
    def mean(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def var(self):
        return (self.hi - self.lo) ** 2 / 12.0

    def to_config(self):
        return {"type": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class DiagonalGaussian(Density):
    """Product of independent normals, one per parameter dimension."""

    means: tuple
    stds: tuple

    def __post_init__(self):
        means = tuple(float(v) for v in np.atleast_1d(self.means))
        stds = tuple(float(v) for v in np.atleast_1d(self.stds))
        if len(means) != len(stds) or not means:
            raise UsageError("DiagonalGaussian means and stds must have the same nonzero length")
        if any(not s > 0 for s in stds):
            raise UsageError("DiagonalGaussian stds must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)

    @property
    def ndim(self):
        return len(self.means)

    def marginal(self, i):
        return Gaussian(self.means[i], self.stds[i])

    def log_pdf(self, theta):
        x = np.asarray(theta, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.ndim:
            raise UsageError(
                f"expected points with trailing dimension {self.ndim}, got shape {x.shape}")
        m = np.asarray(self.means)
        s = np.asarray(self.stds)
        out = np.sum(-0.5 * ((x - m) / s) ** 2 - np.log(s) - LOG_SQRT_2PI, axis=-1)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, n):
        _check_count(n)
        return rng.normal(self.means, self.stds, size=(n, self.ndim))

    @property
    def bounds(self):
        raise UnsupportedOperationError("multi-dimensional densities have no quadrature interval")

    @property
    def mean(self):
        return np.asarray(self.means)

    @property
    def var(self):
        return np.asarray(self.stds) ** 2

    def to_config(self):
        return {"type": "diagonal_gaussian", "means": list(self.means), "stds": list(self.stds)}


@dataclass(frozen=True)
class Numeric(Density):
    """Density known through a vectorized log evaluator on a finite domain.

    ``log_pdf(x) = log_evaluator(x) - log_normalizer`` inside ``domain``
    and ``-inf`` outside, where ``exp(log_normalizer)`` is the integral of
    ``exp(log_evaluator)`` over the domain.
    """

    domain: tuple
    log_evaluator: Callable = field(repr=False, compare=False)
    log_normalizer: float = 0.0
    hints: tuple = ()
    label: str = "numeric"

    def log_pdf(self, theta):
        x, scalar = _points(theta)
        lo, hi = self.domain
        inside = (x >= lo) & (x <= hi)
        out = np.full(x.shape, -np.inf)
        if inside.any():
            out[inside] = np.asarray(self.log_evaluator(x[inside]), dtype=float) - self.log_normalizer
        return _out(out, scalar)

    @property
    def support(self):
        return tuple(self.domain)

    @property
    def bounds(self):
        return tuple(self.domain)

    @property
    def breakpoints(self):
        return self.hints

    def moment(self, k):
        lo, hi = self.domain
        res = integrate(lambda x: x ** k * self.pdf(x), lo, hi, atol=1e-12, rtol=1e-11,
                        breakpoints=self.hints)
        return res.value

    @cached_property
    def mean(self):
        return self.moment(1)

    @cached_property
    def var(self):
        mu = self.mean
        lo, hi = self.domain
        res = integrate(lambda x: (x - mu) ** 2 * self.pdf(x), lo, hi, atol=1e-12, rtol=1e-11,
                        breakpoints=self.hints)
        return res.value


def _check_count(n):
    if int(n) != n or n < 1:
        raise UsageError(f"sample count must be a positive integer, got {n}")


def normalize(log_evaluator, domain, *, breakpoints=(), label="numeric"):
    """Turn an un-normalized vectorized log density into a :class:`Numeric`.

    Raises
    ------
    NormalizationError
        If the evaluator's integral over ``domain`` is zero or not finite.
    """
    lo, hi = map(float, domain)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise UsageError(f"normalize needs a finite domain with lo < hi, got {domain}")
    hints = tuple(sorted(b for b in set(map(float, breakpoints)) if lo < b < hi))
    probe = np.unique(np.concatenate([np.linspace(lo, hi, 1025), hints]))
    with np.errstate(all="ignore"):
        values = np.asarray(log_evaluator(probe), dtype=float)
    if np.any(np.isnan(values)) or np.any(values == np.inf):
        raise NormalizationError("log evaluator returned nan or +inf on the domain")
    finite = np.isfinite(values)
    if not finite.any():
        raise NormalizationError("log evaluator is -inf everywhere on the probe grid")
    shift = float(values[finite].max())

    def shifted(x):
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(np.asarray(log_evaluator(x), dtype=float) - shift)

    try:
        res = integrate(shifted, lo, hi, atol=1e-14, rtol=1e-12, breakpoints=hints)
    except QuadratureError as exc:
        raise NormalizationError(f"normalizing integral failed: {exc}") from exc
    if not (np.isfinite(res.value) and res.value > 0):
        raise NormalizationError(f"normalizing integral is {res.value!r}")
    return Numeric((lo, hi), log_evaluator, shift + math.log(res.value), hints, label)


def convolve_gaussian(spec, added_variance):
    """Density of ``theta + noise`` with ``noise ~ N(0, added_variance)``.

    Gaussians and mixtures stay analytic. Other one-dimensional densities
    become :class:`Numeric`, with each point evaluated by adaptive
    quadrature of the convolution integral.
    """
    if not added_variance > 0:
        raise UsageError(f"added_variance must be positive, got {added_variance}")
    if isinstance(spec, Gaussian):
        return Gaussian(spec.mean, math.sqrt(spec.var + added_variance))
    if isinstance(spec, GaussianMixture):
        return GaussianMixture(tuple(
            (w, m, math.sqrt(s * s + added_variance)) for w, m, s in spec.components))
    if spec.ndim != 1:
        raise UsageError("numerical convolution is one-dimensional only")

    kernel_std = math.sqrt(added_variance)
    u_lo, u_hi = spec.bounds
    u_hints = spec.breakpoints

    def conv(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        for start in range(0, t.size, 256):
            chunk = t[start:start + 256]

            def integrand(u):
                pu = spec.pdf(u)[:, None]
                z = (chunk[None, :] - u[:, None]) / kernel_std
                return pu * np.exp(-0.5 * z * z) / (kernel_std * math.sqrt(2.0 * math.pi))

            res = integrate(integrand, u_lo, u_hi, atol=0.0, rtol=1e-10, breakpoints=u_hints)
            out[start:start + 256] = np.atleast_1d(res.value)
        return out

    def log_conv(t):
        with np.errstate(divide="ignore"):
            return np.log(conv(t))

    domain = (u_lo - TAIL_STDS * kernel_std, u_hi + TAIL_STDS * kernel_std)
    return normalize(log_conv, domain, breakpoints=u_hints, label="convolution")


def truncate(spec, interval, *, label=None):
    """Restrict a one-dimensional density to ``interval`` and renormalize."""
    lo = max(interval[0], spec.bounds[0])
    hi = min(interval[1], spec.bounds[1])
    return normalize(spec.log_pdf, (lo, hi), breakpoints=spec.breakpoints,
                     label=label or f"truncated {getattr(spec, 'label', type(spec).__name__)}")


@dataclass(frozen=True)
class SupRatioResult:
    theta_star: float
    sup_value: float
    boundary_warning: bool = False


def default_search_domain(p, prior):
    lo = max(p.bounds[0], prior.support[0])
    hi = min(p.bounds[1], prior.support[1])
    if not lo < hi:
        raise UsageError("posterior and prior supports do not overlap")
    return (lo, hi)


def sup_ratio(p, prior, search_domain=None, *, n_grid=4097):
    """Locate the supremum of ``p / prior`` on a one-dimensional interval.

    A grid scan picks the best node (ties within 1e-12 go to the smallest
    theta), then golden-section search refines the log ratio between the
    neighbouring nodes.
    """
    if n_grid < 2048:
        raise UsageError("sup_ratio needs at least 2048 grid nodes")
    lo, hi = search_domain if search_domain is not None else default_search_domain(p, prior)

    def log_ratio(x):
        lp = np.asarray(p.log_pdf(x), dtype=float)
        lq = np.asarray(prior.log_pdf(x), dtype=float)
        if np.any(np.isneginf(lq) & np.isfinite(lp)):
            raise UsageError("prior vanishes where the posterior is positive")
        with np.errstate(invalid="ignore"):
            r = np.where(np.isneginf(lp), -np.inf, lp - lq)
        return r

    grid = np.linspace(lo, hi, n_grid)
    r = log_ratio(grid)
    if not np.isfinite(r).any():
        raise UsageError("posterior is zero on the whole search domain")
    best = float(np.max(r))
    i = int(np.argmax(r >= best - 1e-12))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, n_grid - 1)]
    x, fx, _ = golden_max(lambda t: float(log_ratio(t)), a, b, rtol=1e-10)
    if not fx > r[i]:
        x, fx = float(grid[i]), float(r[i])

    warning = False
    if i in (0, n_grid - 1):
        step = (hi - lo) / (n_grid - 1)
        outward = lo - step if i == 0 else hi + step
        inside_supports = (p.support[0] <= outward <= p.support[1]
                           and prior.support[0] <= outward <= prior.support[1])
        if inside_supports and float(log_ratio(outward)) > fx:
            warning = True
    return SupRatioResult(float(x), math.exp(fx), warning)


_CONFIG_TYPES = {
    "gaussian": lambda c: Gaussian(float(c["mean"]), float(c["std"])),
    "mixture": lambda c: GaussianMixture(tuple(tuple(comp) for comp in c["components"])),
    "chi2": lambda c: ChiSquared(int(c["dof"])),
    "uniform": lambda c: Uniform(float(c["lo"]), float(c["hi"])),
    "diagonal_gaussian": lambda c: DiagonalGaussian(tuple(c["means"]), tuple(c["stds"])),
}


def from_config(config):
    """Build a density from its tagged-record form, e.g. ``{"type": "chi2", "dof": 3}``."""
    try:
        kind = config["type"]
        return _CONFIG_TYPES[kind](config)
    except KeyError as exc:
        raise UsageError(f"bad density config {config!r}: missing or unknown {exc}") from None


def density_config_types() -> Sequence[str]:
    return tuple(_CONFIG_TYPES)
