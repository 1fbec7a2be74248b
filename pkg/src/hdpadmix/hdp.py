"""Hierarchical Dirichlet process state and conditional updates.

The global measure keeps an explicit atom list: population k has an
allele-frequency profile theta[k] and a global weight q0[k], with w0
the mass of everything not instantiated.  Each individual i carries
its own weights q[i] over the same atoms plus leftover w[i].  Counts
from the latent paths (segments n_ik, tables m_ik) drive conditional
Dirichlet resampling of all weights; auxiliary slice variables C_i
plus retrospective stick-breaking extension keep the representation
finite without truncation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hmm import LatentPaths

STICK_CAP = 10**6  # safety net; never hit under tested configurations


class StickExtensionOverflow(RuntimeError):
    pass


@dataclass
class HdpState:
    """Instantiated portion of the random measures.

    Columns of q0 / q / theta / atom_ids line up.  k_star counts the
    occupied atoms (columns beyond k_star, if any, are unoccupied
    sticks appended by retrospective extension).  Invariant:
    q0.sum() + w0 == 1 and q[i].sum() + w[i] == 1, to float precision.
    """

    theta: np.ndarray       # (K, L, A_max)
    q0: np.ndarray          # (K,)
    w0: float
    q: np.ndarray           # (N, K)
    w: np.ndarray           # (N,)
    atom_ids: np.ndarray    # (K,) stable identifiers
    next_atom_id: int
    k_star: int
    slice_c: np.ndarray | None = None

    @property
    def n_atoms(self) -> int:
        return self.q0.shape[0]

    @property
    def n_individuals(self) -> int:
        return self.q.shape[0]

    def check(self, tol: float = 1e-12) -> None:
        if abs(self.q0.sum() + self.w0 - 1.0) > tol:
            raise AssertionError("global weights do not sum to 1")
        resid = np.abs(self.q.sum(axis=1) + self.w - 1.0)
        if np.any(resid > tol):
            raise AssertionError("individual weights do not sum to 1")
        if np.any(self.q0 < 0) or self.w0 < 0 or np.any(self.q < 0) or np.any(self.w < 0):
            raise AssertionError("negative weight")
        sums = _theta_row_sums(self.theta)
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise AssertionError("allele frequencies do not sum to 1")


def _theta_row_sums(theta):
    return theta.sum(axis=2)


@dataclass
class CountTables:
    """Segment counts n_ik, table counts m_ik, and dish totals n0_k."""

    n: np.ndarray   # (N, K)
    m: np.ndarray   # (N, K)

    @property
    def n0(self) -> np.ndarray:
        return self.m.sum(axis=0)

    def check(self) -> None:
        if np.any(self.m > self.n) or np.any(self.m < 0):
            raise AssertionError("m_ik outside [0, n_ik]")
        if np.any((self.n >= 1) & (self.m < 1)):
            raise AssertionError("occupied cell with zero tables")
        if np.any((self.n == 0) & (self.m != 0)):
            raise AssertionError("empty cell with tables")


def count_segments(paths: LatentPaths, n_atoms: int) -> np.ndarray:
    """n_ik = number of segments of individual i assigned to atom k.

    A segment starts wherever s_il = 0, so n_ik sums over k to
    1 + #{l >= 2 : s_il = 0} for each individual.
    """
    if np.any(paths.s[:, 0] != 0):
        raise ValueError("paths must have s[:, 0] == 0")
    n_ind = paths.z.shape[0]
    starts = paths.s == 0
    n = np.zeros((n_ind, n_atoms), dtype=np.int64)
    rows = np.repeat(np.arange(n_ind), starts.sum(axis=1))
    np.add.at(n, (rows, paths.z[starts]), 1)
    return n


def sample_table_counts(n, alpha, q0, rng) -> np.ndarray:
    """Table counts m_ik for a restaurant with n_ik customers.

    m_ik = sum_j Bernoulli(a / (a + j - 1)) for j = 1..n_ik with
    a = alpha * q0_k; the j = 1 term always succeeds, so m_ik >= 1
    whenever n_ik >= 1.
    """
    n = np.asarray(n, dtype=np.int64)
    scalar = n.ndim == 0
    n = np.atleast_2d(n)
    q0 = np.atleast_1d(np.asarray(q0, dtype=np.float64))
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    n_ind, k = n.shape
    m = np.zeros((n_ind, k), dtype=np.int64)
    for kk in range(k):
        col = n[:, kk]
        top = int(col.max())
        if top == 0:
            continue
        if q0[kk] <= 0:
            raise ValueError("occupied population needs positive global mass")
        a = alpha * q0[kk]
        p = a / (a + np.arange(top, dtype=np.float64))
        u = rng.random((n_ind, top))
        hits = (u < p) & (np.arange(top) < col[:, None])
        m[:, kk] = hits.sum(axis=1)
    return int(m[0, 0]) if scalar else m


def resample_global_weights(n0, alpha0, rng):
    """(q0, w0) ~ Dirichlet(n0_1, ..., n0_K, alpha0)."""
    n0 = np.asarray(n0, dtype=np.float64)
    if np.any(n0 < 1):
        raise ValueError("every retained population must be occupied (n0_k >= 1)")
    if alpha0 <= 0:
        raise ValueError("alpha0 must be positive")
    draw = _dirichlet(np.concatenate([n0, [alpha0]]), rng)
    return draw[:-1], float(draw[-1])


def resample_individual_weights(q0, w0, n, alpha, rng):
    """Rows (q_i, w_i) ~ Dirichlet(alpha*q0_k + n_ik, ..., alpha*w0)."""
    n = np.atleast_2d(np.asarray(n, dtype=np.float64))
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    shape = np.concatenate([alpha * np.asarray(q0) + n, np.full((n.shape[0], 1), alpha * w0)], axis=1)
    draws = _dirichlet_rows(shape, rng)
    return draws[:, :-1], draws[:, -1]


def _dirichlet(shape, rng):
    g = rng.gamma(shape)
    return g / g.sum()


def _dirichlet_rows(shape, rng):
    g = rng.gamma(shape)
    return g / g.sum(axis=1, keepdims=True)


def sample_slice(q, z, rng) -> np.ndarray:
    """C_i ~ Uniform(0, q_i_min] with q_i_min = min_l q[i, z[i, l]].

    Only atoms with q[i, k] > C_i stay eligible for individual i's
    path update, which is what makes a finite representation exact.
    """
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    z = np.atleast_2d(np.asarray(z, dtype=np.int64))
    used = np.take_along_axis(q, z, axis=1)
    q_min = used.min(axis=1)
    if np.any(q_min <= 0):
        bad = int(np.flatnonzero(q_min <= 0)[0])
        raise ValueError(f"individual {bad} references an atom with zero mass")
    return q_min * (1.0 - rng.random(q.shape[0]))


def extend_sticks(state: HdpState, alpha, alpha0, draw_atom, rng,
                  cap: int = STICK_CAP) -> int:
    """Append unoccupied atoms until every leftover w_i < C_i.

    Global sticks come from Beta(1, alpha0) fractions of the leftover
    w0; each individual's share of a new atom with absolute global
    mass g is Beta(alpha*g, alpha*w0') of its own leftover, w0' being
    the global mass still uninstantiated after the stick.  draw_atom(m)
    must return m fresh profiles from the base measure.  Returns the
    number of atoms appended.
    """
    c = state.slice_c
    if c is None:
        raise ValueError("slice variables must be set before extension")
    new_q0 = []
    new_q = []
    w0 = state.w0
    w = state.w.copy()
    count = 0
    while np.any(w >= c):
        if count >= cap:
            raise StickExtensionOverflow(
                f"stick extension exceeded {cap} atoms (w0={w0:.3e}, "
                f"min slice={c.min():.3e})"
            )
        u = rng.beta(1.0, alpha0)
        g = w0 * u
        w0 = w0 * (1.0 - u)
        if w0 <= 0.0:
            # nothing uninstantiated remains; close out the leftovers
            v = np.ones(w.shape[0])
        elif g <= 0.0:
            v = np.zeros(w.shape[0])
        else:
            v = rng.beta(alpha * g, alpha * w0, size=w.shape[0])
        new_q0.append(g)
        new_q.append(w * v)
        w = w * (1.0 - v)
        count += 1
    if count:
        state.theta = np.concatenate([state.theta, draw_atom(count)], axis=0)
        state.q0 = np.concatenate([state.q0, np.asarray(new_q0)])
        state.q = np.concatenate([state.q, np.column_stack(new_q)], axis=1)
        state.atom_ids = np.concatenate(
            [state.atom_ids, state.next_atom_id + np.arange(count, dtype=np.int64)]
        )
        state.next_atom_id += count
    state.w0 = w0
    state.w = w
    return count


def prune_unoccupied(state: HdpState, paths: LatentPaths, counts: CountTables):
    """Drop atoms with no segments anywhere; relabel z to match.

    Their global and individual masses fold back into w0 / w_i, which
    is exact because unoccupied atoms are exchangeable with the rest
    of the uninstantiated measure.  Returns the pruned CountTables.
    """
    occupied = counts.n.sum(axis=0) > 0
    if occupied.all():
        state.k_star = state.n_atoms
        return counts
    keep = np.flatnonzero(occupied)
    remap = np.full(state.n_atoms, -1, dtype=np.int64)
    remap[keep] = np.arange(keep.shape[0])
    state.w0 += state.q0[~occupied].sum()
    state.w = state.w + state.q[:, ~occupied].sum(axis=1)
    state.theta = state.theta[occupied]
    state.q0 = state.q0[occupied]
    state.q = state.q[:, occupied]
    state.atom_ids = state.atom_ids[occupied]
    state.k_star = keep.shape[0]
    paths.z = remap[paths.z]
    if np.any(paths.z < 0):
        raise AssertionError("a path references a pruned atom")
    return CountTables(n=counts.n[:, occupied], m=counts.m[:, occupied])


def base_measure_mean(mu_l: float, n_alleles: int) -> np.ndarray:
    """Prior mean allele-frequency vector at one locus.

    Allele code 1 has mean mu_l (so the biallelic case reduces to
    Beta(c*mu_l, c*(1-mu_l)) for the allele-1 frequency); remaining
    codes share the leftover uniformly.
    """
    if n_alleles < 2:
        raise ValueError("need at least two alleles")
    mean = np.full(n_alleles, (1.0 - mu_l) / (n_alleles - 1))
    mean[1] = mu_l
    return mean


def sample_base_atoms(count, mu, c, alleles_per_locus, rng) -> np.ndarray:
    """Draw fresh allele-frequency profiles theta ~ H; (count, L, A_max)."""
    L = len(alleles_per_locus)
    a_max = int(np.max(alleles_per_locus))
    out = np.zeros((count, L, a_max))
    for l in range(L):
        a_l = int(alleles_per_locus[l])
        shape = c * base_measure_mean(mu[l], a_l)
        g = np.fmax(rng.gamma(shape, size=(count, a_l)), 1e-300)
        out[:, l, :a_l] = g / g.sum(axis=1, keepdims=True)
    return out
