"""Shared test machinery: joint-distribution (Geweke-style) harness.

Two ways to sample the same joint law:

* forward: hyperparameters from their priors, segment structure from
  the linkage chain, population assignments through the Chinese
  restaurant franchise, frequency profiles from the base measure,
  alleles from the profiles;
* successive-conditional: a forward draw to start, then alternate one
  full Gibbs sweep (conditioning on the data) with re-simulating the
  data given (z, theta).

If the sampler's transition kernel leaves the posterior invariant for
every dataset, both produce the same marginal distribution for any
statistic of the joint state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hdpadmix.data import Dataset
from hdpadmix.hdp import HdpState, count_segments, sample_base_atoms
from hdpadmix.hmm import LatentPaths, transition_prob
from hdpadmix.params import Hyperparams
from hdpadmix.sampler import AdmixtureSampler, RunConfig


@dataclass
class JointDraw:
    alpha: float
    alpha0: float
    r: float
    mu: np.ndarray
    z: np.ndarray        # (N, L) dish index per locus
    s: np.ndarray
    x: np.ndarray
    theta: np.ndarray    # (K_used, L, A_max)
    n: np.ndarray        # (N, K_used) segment counts
    m: np.ndarray        # (N, K_used) table counts


def draw_hypers(rng, priors: Hyperparams):
    a, b = priors.alpha_prior
    a0, b0 = priors.alpha0_prior
    lo, hi = priors.log_r_bounds
    ma, mb = priors.mu_prior
    return (
        float(rng.gamma(a) / b),
        float(rng.gamma(a0) / b0),
        float(np.exp(rng.uniform(lo, hi))),
        None,
        (ma, mb),
    )


def forward_joint_draw(rng, n_ind, distances, alleles, priors: Hyperparams) -> JointDraw:
    """One exact draw from the full generative model via the CRF."""
    L = len(alleles)
    alpha, alpha0, r, _, (ma, mb) = draw_hypers(rng, priors)
    mu = rng.beta(ma, mb, size=L)
    link = transition_prob(r, distances)

    s = np.zeros((n_ind, L), dtype=np.int64)
    if L > 1:
        s[:, 1:] = rng.random((n_ind, L - 1)) < link

    # seat every segment in the franchise
    dish_tables: list[int] = []        # tables serving each dish, across individuals
    theta_rows: list[np.ndarray] = []
    z = np.empty((n_ind, L), dtype=np.int64)
    m_cells: dict[tuple[int, int], int] = {}
    for i in range(n_ind):
        table_dishes: list[int] = []   # this individual's tables -> dish
        table_sizes: list[int] = []
        seg_starts = np.flatnonzero(s[i] == 0)
        seg_ends = np.append(seg_starts[1:], L)
        for start, end in zip(seg_starts, seg_ends):
            total = sum(table_sizes)
            u = rng.random() * (total + alpha)
            if u < total:
                t = int(np.searchsorted(np.cumsum(table_sizes), u, side="right"))
                table_sizes[t] += 1
                dish = table_dishes[t]
            else:
                n_tables = sum(dish_tables)
                u2 = rng.random() * (n_tables + alpha0)
                if u2 < n_tables:
                    dish = int(np.searchsorted(np.cumsum(dish_tables), u2, side="right"))
                    dish_tables[dish] += 1
                else:
                    dish = len(dish_tables)
                    dish_tables.append(1)
                    theta_rows.append(sample_base_atoms(1, mu, priors.c, alleles, rng)[0])
                table_dishes.append(dish)
                table_sizes.append(1)
                m_cells[i, dish] = m_cells.get((i, dish), 0) + 1
            z[i, start:end] = dish

    k_used = len(dish_tables)
    theta = np.stack(theta_rows, axis=0)
    x = np.empty((n_ind, L), dtype=np.int64)
    for l in range(L):
        probs = theta[:, l, : alleles[l]]
        cs = np.cumsum(probs[z[:, l]], axis=1)
        x[:, l] = (cs < rng.random((n_ind, 1)) * cs[:, -1:]).sum(axis=1)

    m = np.zeros((n_ind, k_used), dtype=np.int64)
    for (i, dish), cnt in m_cells.items():
        m[i, dish] = cnt
    paths = LatentPaths(z=z, s=s)
    n_mat = count_segments(paths, k_used)
    return JointDraw(alpha=alpha, alpha0=alpha0, r=r, mu=mu, z=z, s=s, x=x,
                     theta=theta, n=n_mat, m=m)


def joint_statistics(alpha, alpha0, r, mu0, z, s, x, theta, m_total) -> np.ndarray:
    """Ten label-invariant statistics of the joint state."""
    n_ind, L = z.shape
    assign = np.bincount(z.ravel())
    assign = assign[assign > 0]
    k_star = assign.shape[0]
    largest_share = assign.max() / (n_ind * L)
    segments = n_ind * L - int(s.sum())
    cols = np.broadcast_to(np.arange(L), (n_ind, L))
    loglik = float(np.log(np.fmax(theta[z, cols, x], 1e-300)).sum())
    return np.array([
        alpha,
        alpha0,
        np.log(r),
        mu0,
        float(k_star),
        float(segments),
        float(m_total),
        float(x.mean()),
        largest_share,
        loglik,
    ])


STAT_NAMES = ("alpha", "alpha0", "log_r", "mu_1", "k_star", "segments",
              "tables", "mean_allele", "largest_share", "loglik")


def gibbs_state_from_draw(draw: JointDraw, dataset: Dataset,
                          config: RunConfig, rng) -> AdmixtureSampler:
    """Instantiate the sampler exactly at the forward draw.

    Weights come from their exact conditionals given the CRF counts,
    so the chain starts in stationarity.
    """
    sampler = AdmixtureSampler(dataset, config)
    sampler.hyper.alpha = draw.alpha
    sampler.hyper.alpha0 = draw.alpha0
    sampler.hyper.r = draw.r
    sampler.hyper.mu = draw.mu.copy()
    k = draw.theta.shape[0]
    n0 = draw.m.sum(axis=0).astype(np.float64)
    g = rng.gamma(np.append(n0, draw.alpha0))
    g /= g.sum()
    q0, w0 = g[:-1], float(g[-1])
    shape = draw.alpha * q0 + draw.n
    g_i = rng.gamma(np.concatenate([shape, np.full((draw.n.shape[0], 1),
                                                   draw.alpha * w0)], axis=1))
    g_i /= g_i.sum(axis=1, keepdims=True)
    sampler.state = HdpState(
        theta=draw.theta.copy(), q0=q0, w0=w0, q=g_i[:, :-1], w=g_i[:, -1],
        atom_ids=np.arange(k, dtype=np.int64), next_atom_id=k, k_star=k,
    )
    sampler.paths = LatentPaths(z=draw.z.copy(), s=draw.s.copy())
    sampler.x = draw.x.copy()
    return sampler


def resimulate_data(sampler: AdmixtureSampler, rng) -> None:
    """x ~ P(x | z, theta): the data-refresh half of the Geweke cycle."""
    z = sampler.paths.z
    theta = sampler.state.theta
    n_ind, L = z.shape
    for l in range(L):
        probs = theta[z[:, l], l, : sampler.alleles[l]]
        cs = np.cumsum(probs, axis=1)
        sampler.x[:, l] = (cs < rng.random((n_ind, 1)) * cs[:, -1:]).sum(axis=1)


def successive_conditional_chain(draw, dataset, config, n_iter, rng):
    """Run the Gibbs/data-refresh cycle; rows of statistics per sweep."""
    sampler = gibbs_state_from_draw(draw, dataset, config, rng)
    stats = np.empty((n_iter, len(STAT_NAMES)))
    for it in range(n_iter):
        sampler.gibbs_sweep()
        resimulate_data(sampler, rng)
        stats[it] = joint_statistics(
            sampler.hyper.alpha, sampler.hyper.alpha0, sampler.hyper.r,
            sampler.hyper.mu[0], sampler.paths.z, sampler.paths.s,
            sampler.x, sampler.state.theta, sampler.last_m_total,
        )
    return stats


def forward_chain(n_iter, n_ind, distances, alleles, priors, rng):
    stats = np.empty((n_iter, len(STAT_NAMES)))
    for it in range(n_iter):
        draw = forward_joint_draw(rng, n_ind, distances, alleles, priors)
        stats[it] = joint_statistics(
            draw.alpha, draw.alpha0, draw.r, draw.mu[0], draw.z, draw.s,
            draw.x, draw.theta, int(draw.m.sum()),
        )
    return stats


def autocorr_time(x, max_lag=None) -> float:
    """Integrated autocorrelation time via the initial positive sequence."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    x = x - x.mean()
    if np.allclose(x, 0):
        return 1.0
    if max_lag is None:
        max_lag = min(n // 3, 2000)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[: max_lag + 1]
    acf /= acf[0]
    tau = 1.0
    for lag in range(1, max_lag + 1):
        if acf[lag] <= 0:
            break
        tau += 2.0 * acf[lag]
    return max(tau, 1.0)


def geweke_z_scores(forward_stats, gibbs_stats) -> np.ndarray:
    """Mean-difference z-scores with autocorrelation-adjusted errors."""
    z = np.empty(forward_stats.shape[1])
    for j in range(forward_stats.shape[1]):
        f = forward_stats[:, j]
        g = gibbs_stats[:, j]
        var_f = f.var(ddof=1) / f.shape[0]
        var_g = g.var(ddof=1) * autocorr_time(g) / g.shape[0]
        denom = np.sqrt(var_f + var_g)
        z[j] = 0.0 if denom == 0 else (f.mean() - g.mean()) / denom
    return z
