"""Cross-module invariant checks, grouped for the ``verify`` command."""

import math
from dataclasses import dataclass, field

import numpy as np

from .densities import Gaussian, GaussianMixture, sup_ratio
from .efficiency import (
    GaussianToyParams,
    analytic_gaussian_efficiency,
    sampling_efficiency,
    toy_densities,
)
from .errors import ABCOptimalError
from .proposals import (
    bounded_proposal,
    geometric_mean_proposal,
    optimal_proposal,
    series_proposal,
)
from .scenarios import SCENARIOS

JENSEN_TOL = 1e-9
IDENTITY_TOL = 1e-10
ANALYTIC_RTOL = 1e-6


@dataclass
class GroupResult:
    name: str
    passed: bool = True
    checks: int = 0
    failures: list = field(default_factory=list)

    def check(self, ok, message):
        self.checks += 1
        if not ok:
            self.passed = False
            self.failures.append(message)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.name}: {self.checks} checks"
        if self.failures:
            text += f", {len(self.failures)} failed; first: {self.failures[0]}"
        return text


def random_pair(rng):
    """A (posterior, prior) pair: Gaussian or two-component mixture posterior
    under a Gaussian prior at least as wide as the posterior's spread."""
    if rng.random() < 0.5:
        p = Gaussian(float(rng.uniform(-3, 3)), float(rng.uniform(0.3, 2.0)))
    else:
        w = float(rng.uniform(0.2, 0.8))
        m1, m2 = sorted(rng.uniform(-4, 4, size=2))
        s1, s2 = rng.uniform(0.3, 1.5, size=2)
        p = GaussianMixture(((w, float(m1), float(s1)), (1.0 - w, float(m2), float(s2))))
    spread = math.sqrt(p.var)
    prior = Gaussian(float(rng.uniform(-2, 2)), float(spread * rng.uniform(1.0, 5.0)))
    return p, prior


def check_prior_identity(rng, n_random=20):
    group = GroupResult("prior identity: omega[prior] = 1")
    pairs = [(f"case {k}", s.posterior, s.prior) for k, s in SCENARIOS.items()]
    pairs += [(f"random pair {i}", *random_pair(rng)) for i in range(n_random)]
    for label, p, prior in pairs:
        omega = sampling_efficiency(prior, p, prior).omega
        group.check(abs(omega - 1.0) <= IDENTITY_TOL, f"{label}: omega={omega!r}")
    return group


def check_jensen(rng, n_cases=50):
    group = GroupResult("Jensen: omega[q0] >= 1 and omega[posterior] >= 1")
    for i in range(n_cases):
        p, prior = random_pair(rng)
        q0 = geometric_mean_proposal(p, prior).density
        for name, q in (("q0", q0), ("posterior", p)):
            omega = sampling_efficiency(q, p, prior).omega
            group.check(omega >= 1.0 - JENSEN_TOL, f"case {i} {name}: omega={omega!r}")
    return group


def check_holder(corrupt_A_bar=False):
    """``A[q*]`` and ``A_bar`` must lie in ``(sup/2, sup]`` for every scenario.

    ``corrupt_A_bar`` injects ``A_bar = 0.4 sup`` as a negative control.
    """
    group = GroupResult("Hoelder bounds: sup/2 < A <= sup")
    for key, s in SCENARIOS.items():
        sup = sup_ratio(s.posterior, s.prior).sup_value
        lo, hi = 0.5 * sup, sup
        try:
            a_star = optimal_proposal(s.posterior, s.prior).params["A_of_q"]
            group.check(lo < a_star <= hi * (1 + 1e-12),
                        f"case {key}: A[q*]={a_star:.6g} not in ({lo:.6g}, {hi:.6g}]")
            A_bar = 0.4 * sup if corrupt_A_bar else None
            A_bar = bounded_proposal(s.posterior, s.prior, A_bar).params["A_bar"]
            group.check(lo < A_bar <= hi, f"case {key}: A_bar={A_bar:.6g} outside bounds")
        except ABCOptimalError as exc:
            group.check(False, f"case {key}: {exc}")
    return group


def check_analytic(rng, n_points=20):
    group = GroupResult("analytic Gaussian engine vs quadrature")
    for _ in range(n_points):
        params = GaussianToyParams(1, float(rng.uniform(0, 5)), float(rng.uniform(1.0, 8.0)))
        for scheme in ("prior", "posterior", "beaumont_kde", "geometric_mean"):
            exact = analytic_gaussian_efficiency(params, scheme).omega
            q, p, prior = toy_densities(params, scheme)
            numeric = sampling_efficiency(q, p, prior).omega
            rel = abs(numeric - exact) / abs(exact)
            group.check(rel <= ANALYTIC_RTOL,
                        f"{scheme} at {params}: relative error {rel:.3g}")
    return group


def check_series(max_order=12):
    group = GroupResult("series convergence on case I")
    s = SCENARIOS["I"]
    p, prior = s.posterior, s.prior
    opt = optimal_proposal(p, prior)
    A_star = opt.params["A_star"]
    omega_star = opt.params["omega_star"]
    q0 = geometric_mean_proposal(p, prior).density
    order0 = series_proposal(p, prior, 0, A_star).density
    grid = np.linspace(-6, 6, 241)
    dev = np.max(np.abs(order0.pdf(grid) - q0.pdf(grid)))
    group.check(dev <= 1e-12, f"order 0 differs from q0 by {dev:.3g}")
    prev = -math.inf
    for k in range(max_order + 1):
        omega = sampling_efficiency(series_proposal(p, prior, k, A_star).density, p, prior).omega
        group.check(omega >= prev * (1 - 1e-12), f"omega drops at order {k}: {omega!r} < {prev!r}")
        prev = omega
    rel = abs(prev - omega_star) / omega_star
    group.check(rel <= 1e-3, f"order {max_order} omega off by {rel:.3g} relative")
    return group


def run_invariants(seed=0, corrupt_A_bar=False):
    rng = np.random.default_rng(seed)
    return [
        check_prior_identity(rng),
        check_jensen(rng),
        check_holder(corrupt_A_bar),
        check_analytic(rng),
        check_series(),
    ]
