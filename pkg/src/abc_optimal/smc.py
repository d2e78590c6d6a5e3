"""Sequential Monte Carlo ABC with pluggable proposal schemes.

Each iteration proposes parameters from a proposal density, simulates
summaries, accepts those within ``epsilon`` of the observed summary and
weights the accepted particles by ``prior / proposal``. Iteration one
proposes from the prior; later iterations fit a density to the previous
population and build the requested proposal scheme from it.

Randomness is counter based: proposals are processed in fixed-size blocks
and block ``b`` of iteration ``t`` draws from a generator seeded with
``(seed, t, b)``. Results therefore do not depend on how many workers
process the blocks.
"""

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .densities import Density, Gaussian, GaussianMixture, normalize
from .efficiency import kish_ess
from .errors import (
    DegeneratePopulationError,
    InadmissibleProposalError,
    StallError,
    UnsupportedOperationError,
    UsageError,
)
from .proposals import Proposal, build_proposal, prior_proposal

DEFAULT_BLOCK = 1024
STALL_FACTOR = 10_000
MIN_FIT_ESS = 10.0


def euclidean_distance(observed, simulated):
    return np.linalg.norm(np.asarray(simulated) - np.asarray(observed), axis=-1)


@dataclass(frozen=True)
class ForwardProblem:
    """Simulator, observed summary, distance and prior.

    ``simulate(thetas, rng)`` receives parameters of shape ``(m, ndim)`` and
    returns summaries of shape ``(m, k)``; ``distance(observed, simulated)``
    returns ``m`` non-negative distances.
    """

    simulate: Callable
    observed: np.ndarray
    prior: Density
    distance: Callable = euclidean_distance
    name: str = "custom"

    @property
    def ndim(self):
        return self.prior.ndim


@dataclass(frozen=True)
class EpsilonSchedule:
    thresholds: tuple

    def __post_init__(self):
        eps = tuple(float(e) for e in self.thresholds)
        if not eps:
            raise UsageError("epsilon schedule is empty")
        if any(not e > 0 for e in eps):
            raise UsageError("epsilon thresholds must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise UsageError(f"epsilon thresholds must strictly decrease, got {eps}")
        object.__setattr__(self, "thresholds", eps)

    def __iter__(self):
        return iter(self.thresholds)

    def __len__(self):
        return len(self.thresholds)


@dataclass(frozen=True, eq=False)
class Population:
    thetas: np.ndarray
    weights: np.ndarray
    epsilon: float
    ess: float
    n_proposed: int
    accepted: int
    info: dict = field(default_factory=dict)

    @property
    def acceptance_fraction(self):
        return self.accepted / self.n_proposed

    @property
    def ess_per_proposal(self):
        return self.ess / self.n_proposed

    def weighted_mean(self):
        w = self.weights / self.weights.sum()
        return w @ self.thetas

    def weighted_var(self):
        w = self.weights / self.weights.sum()
        mu = w @ self.thetas
        return w @ (self.thetas - mu) ** 2

    def to_csv(self, stream=None):
        out = stream if stream is not None else io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        d = self.thetas.shape[1]
        writer.writerow([f"theta_{i}" for i in range(d)] + ["weight"])
        for theta, w in zip(self.thetas, self.weights):
            writer.writerow([repr(float(v)) for v in theta] + [repr(float(w))])
        return out.getvalue() if stream is None else None


@dataclass
class RunDiagnostics:
    records: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"iterations": self.records}, indent=2, sort_keys=True)

    def table(self):
        lines = [f"{'iter':>4} {'epsilon':>10} {'scheme':>15} {'accept %':>9} "
                 f"{'ESS':>9} {'ESS/prop':>10} {'proposed':>10}"]
        for r in self.records:
            lines.append(
                f"{r['iteration']:>4} {r['epsilon']:>10.4g} {r['scheme']:>15} "
                f"{100 * r['acceptance_fraction']:>9.3f} {r['ess']:>9.1f} "
                f"{r['ess_per_proposal']:>10.5f} {r['n_proposed']:>10d}")
        return "\n".join(lines)


@dataclass(frozen=True)
class ChainResult:
    samples: np.ndarray
    acceptance_rate: float
    warning: str = None


def mh_sample(log_q, n, init, step_std, rng, burn_in=1000, thin=10, n_chains=1):
    """Random-walk Metropolis draws from an un-normalized log density.

    ``n_chains`` independent chains advance together (vectorized); each
    discards ``burn_in`` steps and keeps every ``thin``-th state. A scalar
    ``init`` selects one-dimensional mode, where ``log_q`` receives and the
    result holds a flat array.
    """
    if n < 1 or burn_in < 0 or thin < 1 or n_chains < 1:
        raise UsageError("mh_sample needs n >= 1, burn_in >= 0, thin >= 1, n_chains >= 1")
    scalar = np.ndim(init) == 0
    x = np.tile(np.atleast_1d(np.asarray(init, dtype=float)), (n_chains, 1))
    d = x.shape[1]
    step = np.broadcast_to(np.asarray(step_std, dtype=float), (d,))
    if np.any(step <= 0):
        raise UsageError("step_std must be positive")

    def evaluate(points):
        return np.asarray(log_q(points[:, 0] if scalar else points), dtype=float)

    lx = evaluate(x)
    if not np.all(np.isfinite(lx)):
        raise UsageError(f"log density is not finite at the initial state {init!r}")

    per_chain = -(-n // n_chains)
    total_steps = burn_in + thin * per_chain
    kept = np.empty((per_chain, n_chains, d))
    n_accept = 0
    for t in range(total_steps):
        prop = x + step * rng.standard_normal((n_chains, d))
        lp = evaluate(prop)
        accept = np.log(rng.random(n_chains)) < lp - lx
        x = np.where(accept[:, None], prop, x)
        lx = np.where(accept, lp, lx)
        if t >= burn_in:
            n_accept += int(accept.sum())
            k = t - burn_in
            if (k + 1) % thin == 0:
                kept[k // thin] = x
    samples = kept.reshape(-1, d)[:n]
    rate = n_accept / (n_chains * thin * per_chain)
    warning = None
    if not 0.05 <= rate <= 0.95:
        warning = f"acceptance rate {rate:.3f} outside [0.05, 0.95]"
    return ChainResult(samples[:, 0] if scalar else samples, rate, warning)


def _as_matrix(thetas, ndim):
    arr = np.asarray(thetas, dtype=float)
    return arr.reshape(-1, ndim)


def _log_density(density, thetas):
    """Log density at rows of ``thetas`` (shape ``(n, d)``)."""
    if getattr(density, "ndim", 1) == 1:
        return np.asarray(density.log_pdf(thetas[:, 0]), dtype=float)
    return np.asarray(density.log_pdf(thetas), dtype=float)


def importance_weights(thetas, prior, proposal):
    """``prior / proposal`` at each row of ``thetas``.

    Raises :class:`InadmissibleProposalError` where the proposal density is
    zero, since such a point cannot have been drawn from it.
    """
    density = proposal.density if isinstance(proposal, Proposal) else proposal
    thetas = _as_matrix(thetas, prior.ndim)
    lq = _log_density(density, thetas)
    if np.any(~np.isfinite(lq)):
        i = int(np.flatnonzero(~np.isfinite(lq))[0])
        raise InadmissibleProposalError(
            f"proposal density is zero at theta={thetas[i].tolist()}; "
            "the proposal must cover every point it produced")
    lpi = _log_density(prior, thetas)
    return np.exp(lpi - lq)


def _mh_start(density):
    lo, hi = density.bounds
    grid = np.linspace(lo, hi, 4097)
    lq = np.asarray(density.log_pdf(grid), dtype=float)
    return float(grid[int(np.argmax(lq))])


def _draw(density, n, rng, mh):
    """``n`` draws as an ``(n, d)`` array plus the MH acceptance rate if used."""
    try:
        return _as_matrix(density.sample(rng, n), density.ndim), None
    except UnsupportedOperationError:
        pass
    if density.ndim != 1:
        raise UsageError("MCMC proposal sampling is one-dimensional only")
    step = mh.get("step_std") or 2.4 * math.sqrt(density.var)
    chain = mh_sample(density.log_pdf, n, mh.get("init", _mh_start(density)), step, rng,
                      burn_in=mh.get("burn_in", 1000), thin=mh.get("thin", 10),
                      n_chains=mh.get("n_chains", 32))
    return chain.samples[:, None], chain.acceptance_rate


def _run_block(problem, density, epsilon, seed, iteration, block, size, mh):
    rng = np.random.default_rng(np.random.SeedSequence([seed, iteration, block]))
    thetas, mh_rate = _draw(density, size, rng, mh)
    sims = np.asarray(problem.simulate(thetas, rng), dtype=float).reshape(size, -1)
    dist = np.asarray(problem.distance(problem.observed, sims), dtype=float)
    return thetas, dist <= epsilon, mh_rate


def abc_iteration(problem, proposal, epsilon, n_target, *, seed, iteration=0,
                  max_proposals=None, block_size=DEFAULT_BLOCK, workers=1, mh=None):
    """One rejection-ABC pass with importance weights.

    Proposals are generated in blocks of ``block_size``; blocks are merged
    in index order and the last one is cut at the ``n_target``-th
    acceptance, so ``n_proposed`` counts exactly the proposals consumed.
    ``workers`` threads evaluate blocks concurrently without changing the
    result.

    Raises
    ------
    StallError
        When ``max_proposals`` (default ``10_000 * n_target``) proposals
        yield no acceptance at all.
    """
    if n_target < 1:
        raise UsageError("n_target must be positive")
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    if max_proposals is None:
        max_proposals = STALL_FACTOR * n_target
    density = proposal.density if isinstance(proposal, Proposal) else proposal
    scheme = proposal.scheme if isinstance(proposal, Proposal) else "custom"
    mh = dict(mh or {})

    kept, n_proposed, n_acc, rates = [], 0, 0, []
    block = 0
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        while n_acc < n_target and n_proposed < max_proposals:
            sizes = []
            for _ in range(max(1, workers)):
                size = min(block_size, max_proposals - n_proposed - sum(sizes))
                if size <= 0:
                    break
                sizes.append(size)
            futures = [pool.submit(_run_block, problem, density, epsilon, seed, iteration,
                                   block + j, size, mh) for j, size in enumerate(sizes)]
            block += len(sizes)
            for fut, size in zip(futures, sizes):
                thetas, accept, rate = fut.result()
                if rate is not None:
                    rates.append(rate)
                hits = np.flatnonzero(accept)
                need = n_target - n_acc
                if hits.size >= need:
                    cut = hits[need - 1] + 1
                    kept.append(thetas[hits[:need]])
                    n_proposed += int(cut)
                    n_acc = n_target
                    break
                kept.append(thetas[hits])
                n_acc += hits.size
                n_proposed += size

    if n_acc == 0:
        raise StallError(
            f"no proposal accepted at epsilon={epsilon:g} after {n_proposed} proposals",
            epsilon=epsilon, iteration=iteration)
    thetas = np.concatenate(kept)
    weights = importance_weights(thetas, problem.prior, density)
    info = {"scheme": scheme}
    if rates:
        info["mh_acceptance_rate"] = float(np.mean(rates))
        if not 0.05 <= info["mh_acceptance_rate"] <= 0.95:
            info["warning"] = (f"MH acceptance rate {info['mh_acceptance_rate']:.3f} "
                               "outside [0.05, 0.95]")
    return Population(thetas, weights, float(epsilon), kish_ess(weights), n_proposed,
                      int(n_acc), info)


def weighted_quantile(x, w, q):
    order = np.argsort(x)
    cw = np.cumsum(w[order])
    cw = (cw - 0.5 * w[order]) / cw[-1]
    return np.interp(q, cw, x[order])


BANDWIDTH_RULES = {
    "ess_two_fifths": lambda ess, n: ess ** -0.4,
    "variance": lambda ess, n: 1.0,
    "twice_variance": lambda ess, n: 2.0,
    "silverman": lambda ess, n: 1.06 ** 2 * ess ** -0.4,
}


def fit_density(population, method="gaussian_mixture", k=2, bandwidth_rule="ess_two_fifths",
                max_iter=200, tol=1e-8):
    """Smooth density estimate of a weighted one-dimensional population.

    ``weighted_kde`` places a Gaussian kernel on every particle with squared
    bandwidth ``Var_w * factor``, where the factor comes from
    ``bandwidth_rule`` (default ``ESS^(-2/5)``). ``gaussian_mixture`` fits
    ``k`` components by weighted EM, initialized at weighted quantiles.

    Raises
    ------
    DegeneratePopulationError
        If the population's ESS is below 10 or its weighted variance is 0.
    """
    thetas = np.asarray(population.thetas, dtype=float)
    if thetas.ndim == 2 and thetas.shape[1] != 1:
        raise UsageError("fit_density is one-dimensional only")
    x = thetas.reshape(-1)
    w = np.asarray(population.weights, dtype=float)
    w = w / w.sum()
    ess = kish_ess(w)
    if ess < MIN_FIT_ESS:
        raise DegeneratePopulationError(
            f"population ESS {ess:.2f} is below {MIN_FIT_ESS:g}; too few effective particles")
    mu = float(w @ x)
    var = float(w @ (x - mu) ** 2)
    if not var > 0:
        raise DegeneratePopulationError("population has zero weighted variance")

    if method == "weighted_kde":
        try:
            factor = BANDWIDTH_RULES[bandwidth_rule](ess, x.size)
        except KeyError:
            raise UsageError(f"unknown bandwidth rule {bandwidth_rule!r}; "
                             f"expected one of {sorted(BANDWIDTH_RULES)}") from None
        keep = w > 0
        return GaussianMixture.from_arrays(w[keep] / w[keep].sum(), x[keep],
                                           np.full(keep.sum(), math.sqrt(var * factor)))
    if method == "gaussian_mixture":
        return _weighted_em(x, w, k, var, var * ess ** -0.4, max_iter, tol)
    raise UsageError(f"unknown fit method {method!r}; expected weighted_kde or gaussian_mixture")


def _weighted_em(x, w, k, var, floor, max_iter, tol):
    # components may not be sharper than the KDE kernel the sample supports;
    # without the floor EM can collapse onto a handful of heavy particles
    if k < 1:
        raise UsageError("mixture needs at least one component")
    if k == 1:
        mu = float(w @ x)
        return GaussianMixture(((1.0, mu, math.sqrt(var)),))
    means = weighted_quantile(x, w, (np.arange(k) + 0.5) / k)
    variances = np.full(k, var / k)
    mix = np.full(k, 1.0 / k)
    prev = -np.inf
    for _ in range(max_iter):
        z = (x[:, None] - means) ** 2 / variances
        log_r = np.log(mix) - 0.5 * (z + np.log(2.0 * np.pi * variances))
        norm = special.logsumexp(log_r, axis=1)
        loglik = float(w @ norm)
        resp = np.exp(log_r - norm[:, None]) * w[:, None]
        mass = resp.sum(axis=0)
        mass = np.maximum(mass, 1e-300)
        mix = mass / mass.sum()
        means = (resp.T @ x) / mass
        variances = np.maximum((resp * (x[:, None] - means) ** 2).sum(axis=0) / mass, floor)
        if abs(loglik - prev) < tol:
            break
        prev = loglik
    live = mix > 1e-12
    mix = mix[live] / mix[live].sum()
    return GaussianMixture.from_arrays(mix, means[live], np.sqrt(variances[live]))


def smc_run(problem, schedule, scheme, n_particles, seed, *, fit_method="gaussian_mixture",
            fit_k=2, bandwidth_rule="ess_two_fifths", proposal_options=None,
            block_size=DEFAULT_BLOCK, workers=1, mh=None, max_proposals_factor=STALL_FACTOR):
    """Run the SMC-ABC sampler over ``schedule``.

    Returns ``(populations, diagnostics)``. On a stall the raised
    :class:`StallError` carries the populations and diagnostics produced
    so far as ``populations`` and ``diagnostics`` attributes.
    """
    if not isinstance(schedule, EpsilonSchedule):
        schedule = EpsilonSchedule(tuple(schedule))
    if scheme not in ("prior", "posterior", "beaumont_kde", "geometric_mean",
                      "bounded", "optimal", "series"):
        raise UsageError(f"unknown proposal scheme {scheme!r}")
    options = dict(proposal_options or {})
    populations = []
    diagnostics = RunDiagnostics()
    for t, eps in enumerate(schedule):
        if t == 0:
            proposal = prior_proposal(problem.prior)
            extras = {}
        else:
            p_hat = fit_density(populations[-1], fit_method, k=fit_k,
                                bandwidth_rule=bandwidth_rule)
            proposal = build_proposal(scheme, p_hat, problem.prior, **options)
            extras = {k: v for k, v in proposal.params.items()
                      if isinstance(v, (int, float, str, bool))}
        try:
            pop = abc_iteration(problem, proposal, eps, n_particles, seed=seed, iteration=t,
                                max_proposals=max_proposals_factor * n_particles,
                                block_size=block_size, workers=workers, mh=mh)
        except StallError as exc:
            exc.iteration = t
            exc.populations = populations
            exc.diagnostics = diagnostics
            raise
        populations.append(pop)
        record = {
            "iteration": t,
            "epsilon": pop.epsilon,
            "scheme": proposal.scheme,
            "acceptance_fraction": pop.acceptance_fraction,
            "ess": pop.ess,
            "ess_per_proposal": pop.ess_per_proposal,
            "n_proposed": pop.n_proposed,
            "accepted": pop.accepted,
            "proposal_params": extras,
        }
        record.update({k: v for k, v in pop.info.items() if k != "scheme"})
        diagnostics.records.append(record)
    return populations, diagnostics


# Toy problem: the summary is the mean of ten unit-variance draws

TOY_N_OBS = 10


def _gaussian_mean_simulator(n_obs):
    def simulate(thetas, rng):
        thetas = np.asarray(thetas, dtype=float).reshape(-1, 1)
        # the mean of n_obs N(theta, 1) draws is N(theta, 1/n_obs)
        return thetas + rng.standard_normal(thetas.shape) / math.sqrt(n_obs)

    return simulate


def gaussian_mean_problem(observed=0.0, prior=None, n_obs=TOY_N_OBS):
    prior = prior if prior is not None else Gaussian(0.0, 5.0)
    return ForwardProblem(_gaussian_mean_simulator(n_obs), np.array([float(observed)]), prior,
                          name="gaussian_mean")


def gaussian_mean_bimodal_problem(observed=0.5, n_obs=TOY_N_OBS):
    prior = GaussianMixture(((0.5, -3.0, 1.5), (0.5, 3.0, 1.5)))
    return ForwardProblem(_gaussian_mean_simulator(n_obs), np.array([float(observed)]), prior,
                          name="gaussian_mean_bimodal_prior")


TOY_PROBLEMS = {
    "gaussian_mean": gaussian_mean_problem,
    "gaussian_mean_bimodal_prior": gaussian_mean_bimodal_problem,
}


def abc_posterior(problem, epsilon, n_obs=TOY_N_OBS):
    """Exact epsilon-ABC posterior of a Gaussian-mean problem.

    ``p_eps(theta) ∝ prior(theta) * P(|xbar - observed| <= epsilon | theta)``
    with ``xbar ~ N(theta, 1/n_obs)``.
    """
    s = 1.0 / math.sqrt(n_obs)
    y = float(np.asarray(problem.observed).reshape(-1)[0])
    prior = problem.prior

    def log_p(theta):
        theta = np.asarray(theta, dtype=float)
        upper = (y + epsilon - theta) / s
        lower = (y - epsilon - theta) / s
        # P(lower < Z < upper), evaluated on the side that avoids cancellation
        flip = lower > 0
        hi = np.where(flip, -lower, upper)
        lo = np.where(flip, -upper, lower)
        with np.errstate(divide="ignore"):
            mass = special.log_ndtr(hi) + np.log1p(-np.exp(special.log_ndtr(lo) - special.log_ndtr(hi)))
        return np.asarray(prior.log_pdf(theta)) + mass

    lo, hi = prior.bounds
    return normalize(log_p, (min(lo, y - epsilon - 12 * s), max(hi, y + epsilon + 12 * s)),
                     breakpoints=(y - epsilon, y, y + epsilon) + tuple(prior.breakpoints),
                     label="abc_posterior")
