"""Linkage HMM over chromosome segments.

Each individual's ancestry sequence is a Markov chain: loci l-1 and l
are linked (s_il = 1, same segment, same population) with probability
exp(-r * d_{l-1}); on a split (s_il = 0) a fresh population is drawn
with probability proportional to that individual's weight q_ik.  The
allele at a locus is drawn from the assigned population's frequency
profile.  Forward filtering + backward sampling draws exact paths from
this chain restricted to an active population set; cost O(L * K).

Messages are rescaled per locus to dodge underflow; the accumulated
log scale factors give the log marginal likelihood.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


class FilterDegeneracyError(RuntimeError):
    """Every active population gave probability zero at some locus."""


@dataclass
class LatentPaths:
    """Ancestry labels z (N x L) and linkage indicators s (N x L).

    s[i, l] = 1 means loci l-1 and l sit in the same segment, which
    forces z[i, l] = z[i, l-1].  s[:, 0] is identically 0.
    """

    z: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int64)
        self.s = np.asarray(self.s, dtype=np.int64)

    def check(self) -> None:
        if self.z.shape != self.s.shape:
            raise ValueError("z and s must have the same shape")
        if np.any(self.s[:, 0] != 0):
            raise ValueError("s[:, 0] must be 0")
        linked = self.s[:, 1:] == 1
        if np.any(linked & (self.z[:, 1:] != self.z[:, :-1])):
            raise ValueError("linked loci must share their ancestry label")

    def copy(self) -> "LatentPaths":
        return LatentPaths(self.z.copy(), self.s.copy())


@dataclass
class ForwardMessages:
    """Per-locus filtered messages for one individual.

    m[l, b, k] is the scaled joint mass of (x_{1..l}, s_l = b, z_l = k);
    m_dot[l] = m[l, 0] + m[l, 1] sums to 1 after scaling, and
    log_scale[l] holds the log of the factor divided out at locus l.
    For l = 0 all mass sits in the b = 0 slot.
    """

    m: np.ndarray          # (L, 2, K)
    m_dot: np.ndarray      # (L, K)
    log_scale: np.ndarray  # (L,)

    @property
    def n_loci(self) -> int:
        return self.m.shape[0]

    @property
    def log_likelihood(self) -> float:
        return float(self.log_scale.sum())


def transition_prob(r, d):
    """Probability exp(-r d) that adjacent loci stay linked."""
    r = np.asarray(r, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(r < 0) or np.any(d < 0):
        raise ValueError("r and d must be non-negative")
    return np.exp(-r * d)


def _emissions(x, theta):
    # x: (N, L) codes; theta: (K, L, A) -> (L, N, K) emission factors.
    # (L, A, K) layout keeps the per-locus allele gather contiguous in K.
    L = x.shape[1]
    theta_lak = np.ascontiguousarray(theta.transpose(1, 2, 0))
    out = np.empty((L, x.shape[0], theta.shape[0]))
    for l in range(L):
        out[l] = theta_lak[l, x[:, l]]
    return out


def forward_filter_batch(x, q, theta, r, d):
    """Vectorized forward pass for N individuals sharing theta.

    q rows may be unnormalized and may contain zeros (inactive
    populations).  Returns (m0, m1, m_dot, log_scale); message arrays
    are shaped (L, N, K) with m_dot[l] rows summing to 1, log_scale is
    (L, N) and sums over loci to the log marginal likelihood.
    """
    x = np.asarray(x, dtype=np.int64)
    q = np.asarray(q, dtype=np.float64)
    n, L = x.shape
    k = q.shape[1]
    e = transition_prob(r, d) if L > 1 else np.empty(0)
    em = _emissions(x, theta)

    m0 = np.zeros((L, n, k))
    m1 = np.zeros((L, n, k))
    m_dot = np.empty((L, n, k))
    log_scale = np.empty((L, n))

    row = em[0] * q
    tot = row.sum(axis=1)
    _check_alive(tot, 0)
    m0[0] = row / tot[:, None]
    m_dot[0] = m0[0]
    log_scale[0] = np.log(tot)
    for l in range(1, L):
        # previous m_dot row sums to 1, so the split branch reduces to q
        a1 = em[l] * (e[l - 1] * m_dot[l - 1])
        a0 = em[l] * ((1.0 - e[l - 1]) * q)
        tot = a0.sum(axis=1) + a1.sum(axis=1)
        _check_alive(tot, l)
        m0[l] = a0 / tot[:, None]
        m1[l] = a1 / tot[:, None]
        m_dot[l] = m0[l] + m1[l]
        log_scale[l] = np.log(tot)
    return m0, m1, m_dot, log_scale


def _check_alive(tot, locus):
    if np.any(tot <= 0.0) or not np.all(np.isfinite(tot)):
        bad = np.flatnonzero(~(tot > 0.0) | ~np.isfinite(tot))
        raise FilterDegeneracyError(
            f"all-zero forward message at locus {locus + 1} "
            f"for individual(s) {bad.tolist()}"
        )


def forward_filter(x_i, active_q, active_theta, r, d) -> ForwardMessages:
    """Forward pass for a single individual over its active populations."""
    x_i = np.atleast_2d(np.asarray(x_i, dtype=np.int64))
    q = np.atleast_2d(np.asarray(active_q, dtype=np.float64))
    if np.any(q <= 0):
        raise ValueError("active weights must be strictly positive")
    m0, m1, m_dot, log_scale = forward_filter_batch(x_i, q, active_theta, r, d)
    m = np.stack([m0[:, 0, :], m1[:, 0, :]], axis=1)
    return ForwardMessages(m=m, m_dot=m_dot[:, 0, :], log_scale=log_scale[:, 0])


def backward_sample_batch(m0, m1, m_dot, uniforms):
    """Vectorized backward pass; one (z, s) path per individual.

    uniforms has shape (N, 2L): two pregenerated uniforms per locus per
    individual, so results do not depend on how individuals are chunked
    across workers.
    """
    L, n, k = m_dot.shape
    z = np.empty((n, L), dtype=np.int64)
    s = np.zeros((n, L), dtype=np.int64)
    z[:, L - 1] = _categorical_rows(m_dot[L - 1], uniforms[:, 2 * (L - 1)])
    if L > 1:
        rows = np.arange(n)
        p1 = m1[L - 1][rows, z[:, L - 1]] / m_dot[L - 1][rows, z[:, L - 1]]
        s[:, L - 1] = uniforms[:, 2 * (L - 1) + 1] < p1
        for l in range(L - 2, -1, -1):
            fresh = _categorical_rows(m_dot[l], uniforms[:, 2 * l])
            linked = s[:, l + 1] == 1
            z[:, l] = np.where(linked, z[:, l + 1], fresh)
            if l > 0:
                p1 = m1[l][rows, z[:, l]] / m_dot[l][rows, z[:, l]]
                s[:, l] = uniforms[:, 2 * l + 1] < p1
    return z, s


def _categorical_rows(probs, u):
    # probs rows sum to 1; inverse-CDF draw per row
    cs = np.cumsum(probs, axis=1)
    target = u * cs[:, -1]
    return np.argmax(cs >= target[:, None], axis=1)


def backward_sample(messages: ForwardMessages, rng) -> tuple[np.ndarray, np.ndarray]:
    """Sample one (z, s) path from the proposal defined by the messages."""
    L = messages.n_loci
    u = rng.random((1, 2 * L))
    m0 = messages.m[:, 0, :][:, None, :]
    m1 = messages.m[:, 1, :][:, None, :]
    m_dot = messages.m_dot[:, None, :]
    z, s = backward_sample_batch(m0, m1, m_dot, u)
    return z[0], s[0]


def mh_accept(q_min_current, q_min_proposed, rng) -> bool:
    """Accept the proposed path with probability min(1, cur/prop).

    The proposal ignores the slice-conditioning factor 1/q_min, so the
    correction is the ratio of current to proposed minimum weights.
    """
    if not (0 < q_min_current <= 1 and 0 < q_min_proposed <= 1):
        raise ValueError("q_min values must lie in (0, 1]")
    if q_min_proposed <= q_min_current:
        return True
    return rng.random() < q_min_current / q_min_proposed


def path_q_min(q_row, z_row):
    """Minimum population weight used along one individual's path."""
    return float(np.min(q_row[z_row]))


def brute_force_joint(x_i, q, theta, r, d, max_paths: int = 10**6):
    """Exact table of P(z, s, x) over every path; test oracle.

    Returns (table, total) where table maps (z_tuple, s_tuple) to the
    joint probability computed as a direct product of model factors,
    and total = sum over the table = marginal likelihood of x_i.  Only
    feasible for tiny instances.
    """
    x_i = np.asarray(x_i, dtype=np.int64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    L = x_i.shape[0]
    k = q.shape[0]
    n_paths = (k ** L) * (2 ** max(L - 1, 0))
    if n_paths > max_paths:
        raise ValueError(f"instance too large: {n_paths} paths exceeds {max_paths}")
    e = transition_prob(r, d) if L > 1 else np.empty(0)
    table = {}
    total = 0.0
    for z in itertools.product(range(k), repeat=L):
        base = q[z[0]] * theta[z[0], 0, x_i[0]]
        for s_rest in itertools.product((0, 1), repeat=max(L - 1, 0)):
            p = base
            for l in range(1, L):
                if s_rest[l - 1] == 1:
                    p = p * e[l - 1] if z[l] == z[l - 1] else 0.0
                else:
                    p = p * (1.0 - e[l - 1]) * q[z[l]]
                p *= theta[z[l], l, x_i[l]]
            s = (0,) + s_rest
            table[z, s] = p
            total += p
    return table, total
