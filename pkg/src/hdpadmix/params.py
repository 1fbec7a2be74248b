"""Conditional updates for theta, alpha, alpha0, r and mu.

theta gets a conjugate Dirichlet draw per (population, locus).  The
concentration parameters use the auxiliary-variable schemes standard
for DP hierarchies: per-group Beta/Bernoulli augmentation for alpha,
the Beta-mixture-of-Gammas auxiliary draw for alpha0.  r and mu get
random-walk Metropolis steps on log / logit scale; proposal scales
adapt toward ~35% acceptance during burn-in only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gammaln

from .hdp import base_measure_mean


@dataclass
class Hyperparams:
    """Current scalar parameters plus their fixed prior constants.

    Gamma priors are parameterized as (shape, rate).  The split rate r
    has a uniform prior on log r over [log_r_lo, log_r_hi]; mu_l are
    the base-measure mean allele frequencies with Beta(mu_a, mu_b)
    priors shared across loci.  c is fixed, not sampled.
    """

    alpha: float = 1.0
    alpha0: float = 1.0
    r: float = 1.0
    mu: np.ndarray = field(default_factory=lambda: np.array([0.5]))
    c: float = 1.0
    alpha_prior: tuple = (1.0, 1.0)
    alpha0_prior: tuple = (5.0, 1.0)
    log_r_bounds: tuple = (-500.0, 5.0)
    mu_prior: tuple = (1.0, 1.0)
    r_scale: float = 0.5
    mu_scale: float = 0.3

    def copy(self) -> "Hyperparams":
        return replace(self, mu=np.array(self.mu, dtype=np.float64))

    def check(self) -> None:
        if min(self.alpha, self.alpha0, self.c) <= 0:
            raise ValueError("alpha, alpha0, c must be positive")
        lo, hi = self.log_r_bounds
        if not (lo <= np.log(self.r) <= hi):
            raise ValueError("r outside its prior support")
        if np.any(self.mu <= 0) or np.any(self.mu >= 1):
            raise ValueError("mu must lie strictly inside (0, 1)")


def update_theta(x_col, z_col, k, a_l, c, mu_l, rng):
    """Dirichlet draw for one population's frequencies at one locus.

    x_col / z_col are the L-th column of the genotype and label
    matrices.  Counts allele occurrences among individuals currently
    assigned to population k; prior is c * base_measure_mean(mu_l).
    """
    counts = np.bincount(np.asarray(x_col)[np.asarray(z_col) == k], minlength=a_l)
    shape = c * base_measure_mean(mu_l, a_l) + counts
    g = np.fmax(rng.gamma(shape), 1e-300)
    return g / g.sum()


def resample_theta_all(x, z, alleles_per_locus, k_total, c, mu, rng):
    """Dirichlet draws for every (population, locus) pair at once.

    Populations with no assignments at a locus fall back to the base
    measure.  Returns (k_total, L, A_max); padded allele slots are 0.
    """
    n_ind, L = x.shape
    a_max = int(np.max(alleles_per_locus))
    counts = np.zeros((k_total, L, a_max))
    cols = np.broadcast_to(np.arange(L), (n_ind, L)).ravel()
    np.add.at(counts, (z.ravel(), cols, x.ravel()), 1.0)
    prior = np.zeros((L, a_max))
    for l in range(L):
        a_l = int(alleles_per_locus[l])
        prior[l, :a_l] = c * base_measure_mean(mu[l], a_l)
    shape = counts + prior[None, :, :]
    g = rng.gamma(shape)           # gamma(0) == 0 keeps padded slots empty
    valid = np.arange(a_max)[None, :] < np.asarray(alleles_per_locus)[:, None]
    g = np.where(valid[None, :, :], np.fmax(g, 1e-300), 0.0)
    return g / g.sum(axis=2, keepdims=True)


def update_alpha(alpha, n_totals, m_total, a, b, rng) -> float:
    """Gibbs draw of the individual-level concentration alpha.

    Auxiliary w_i ~ Beta(alpha+1, n_i.), t_i ~ Bernoulli(n_i./(alpha+n_i.)),
    then alpha ~ Gamma(a + m_.. - sum t_i, b - sum log w_i).
    """
    n_totals = np.asarray(n_totals, dtype=np.float64)
    if np.any(n_totals < 1):
        raise ValueError("every individual has at least one segment")
    w = rng.beta(alpha + 1.0, n_totals)
    t = rng.random(n_totals.shape[0]) < n_totals / (alpha + n_totals)
    shape = a + m_total - t.sum()
    rate = b - np.log(w).sum()
    return float(rng.gamma(shape) / rate)


def update_alpha0(alpha0, k_star, m_total, a0, b0, rng) -> float:
    """Escobar-West auxiliary draw of the top-level concentration.

    gamma_aux ~ Beta(alpha0+1, m_total); alpha0 then comes from a
    two-component Gamma mixture with odds
    (a0 + K - 1) / (m_total * (b0 - log gamma_aux)).
    """
    if m_total < 1 or k_star < 1:
        raise ValueError("need at least one table and one population")
    g_aux = rng.beta(alpha0 + 1.0, m_total)
    rate = b0 - np.log(g_aux)
    odds = (a0 + k_star - 1.0) / (m_total * rate)
    pi = odds / (1.0 + odds)
    shape = a0 + k_star if rng.random() < pi else a0 + k_star - 1.0
    return float(rng.gamma(shape) / rate)


def split_log_likelihood(r, s, distances):
    """log P(s | r, d), the only factor of the joint involving r."""
    linked = np.asarray(s, dtype=np.float64)[:, 1:].sum(axis=0)
    n_ind = np.asarray(s).shape[0]
    rd = r * np.asarray(distances, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_split = np.log1p(-np.exp(-rd))
    split_count = n_ind - linked
    # d == 0 forces linkage; log_split = -inf only matters if a split occurred
    split_terms = np.zeros_like(rd)
    mask = split_count > 0
    split_terms[mask] = split_count[mask] * log_split[mask]
    return float((linked * (-rd) + split_terms).sum())


def update_r(r, s, distances, log_r_bounds, scale, rng):
    """Random-walk Metropolis on log r; returns (r_new, accepted)."""
    lo, hi = log_r_bounds
    log_prop = np.log(r) + scale * rng.standard_normal()
    u = rng.random()
    if not (lo <= log_prop <= hi):
        return r, False
    prop = float(np.exp(log_prop))
    delta = split_log_likelihood(prop, s, distances) - split_log_likelihood(r, s, distances)
    # uniform prior on log r and symmetric proposal: likelihood ratio only
    if np.log(u) < delta:
        return prop, True
    return r, False


def _mu_log_target(mu_l, theta_l, a, b, c, a_l):
    lp = (a - 1.0) * np.log(mu_l) + (b - 1.0) * np.log1p(-mu_l)
    if theta_l.shape[0]:
        shape = c * base_measure_mean(mu_l, a_l)
        log_norm = gammaln(c) - gammaln(shape).sum()
        lp += theta_l.shape[0] * log_norm
        lp += ((shape - 1.0) * np.log(np.fmax(theta_l[:, :a_l], 1e-300))).sum()
    return lp


def update_mu(mu_l, theta_l, a, b, c, a_l, scale, rng):
    """Logit-scale random-walk Metropolis for one locus' prior mean.

    theta_l holds the instantiated atoms' frequency rows at this locus
    (possibly zero rows, in which case the target is the Beta prior).
    Returns (mu_new, accepted).
    """
    logit = np.log(mu_l) - np.log1p(-mu_l)
    prop_logit = logit + scale * rng.standard_normal()
    prop = 1.0 / (1.0 + np.exp(-prop_logit))
    if not (0.0 < prop < 1.0):
        return mu_l, False
    delta = _mu_log_target(prop, theta_l, a, b, c, a_l) - _mu_log_target(mu_l, theta_l, a, b, c, a_l)
    # Jacobian of the logit transform: d mu / d logit = mu (1 - mu)
    delta += np.log(prop) + np.log1p(-prop) - np.log(mu_l) - np.log1p(-mu_l)
    if np.log(rng.random()) < delta:
        return float(prop), True
    return float(mu_l), False


@dataclass
class ScaleAdapter:
    """Window-based proposal-scale tuning, frozen after burn-in."""

    scale: float
    target: float = 0.35
    window: int = 50
    accepted: int = 0
    seen: int = 0

    def record(self, accepted: bool, adapting: bool) -> None:
        if not adapting:
            return
        self.seen += 1
        self.accepted += int(accepted)
        if self.seen >= self.window:
            rate = self.accepted / self.seen
            self.scale = float(np.clip(self.scale * np.exp(rate - self.target), 1e-3, 1e3))
            self.accepted = 0
            self.seen = 0
