"""Gibbs sweep orchestration, trace emission and checkpointing.

Sweep order: (1) segment/table counts, (2) prune unoccupied atoms,
(3) concentration parameters alpha and alpha0, (4) global weights,
(5) individual weights, (6) slice variables, (7) retrospective stick
extension, (8) per-individual path proposals (FFBS + MH correction),
(9) allele frequencies, (10) split rate r, (11) base-measure means.
The concentration updates sit directly after the counts because their
conditionals marginalize the weights; resampling the weights right
afterwards keeps the partially collapsed scan valid.

All randomness is drawn from counter-based streams keyed by
(seed, stream tag, sweep, individual), so a run is reproducible
byte-for-byte regardless of worker count, and a resumed run continues
exactly where the checkpoint left off without serializing generator
state.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .hdp import (
    CountTables,
    HdpState,
    count_segments,
    prune_unoccupied,
    resample_global_weights,
    resample_individual_weights,
    sample_base_atoms,
    sample_slice,
    sample_table_counts,
    extend_sticks,
)
from .hmm import LatentPaths, backward_sample_batch, forward_filter_batch, transition_prob
from .params import (
    Hyperparams,
    ScaleAdapter,
    resample_theta_all,
    update_alpha,
    update_alpha0,
    update_mu,
    update_r,
)

CHECKPOINT_VERSION = 1

_COORD, _PATHS, _INIT, _RJUMP = 1, 2, 3, 4


def _stream(seed, tag, a=0, b=0):
    # unique 128-bit Philox key per (seed, stream tag, sweep, individual)
    key = (seed & 0xFFFFFFFFFFFFFFFF) | ((tag << 60 | a << 30 | b) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _dm_log_marginal(x, labels, k, alleles, c, mu):
    """Collapsed data log-marginal of a hard partition of individuals.

    Dirichlet-multinomial per (cluster, locus) with the base-measure
    prior; integrates the frequency profiles out, so duplicated
    clusters are penalized and genuinely distinct ones rewarded.
    """
    from scipy.special import gammaln
    from .hdp import base_measure_mean

    n, L = x.shape
    a_max = int(np.max(alleles))
    counts = np.zeros((k, L, a_max))
    cols = np.broadcast_to(np.arange(L), (n, L)).ravel()
    np.add.at(counts, (np.repeat(labels, L), cols, x.ravel()), 1.0)
    total = 0.0
    for l in range(L):
        a_l = int(alleles[l])
        prior = c * base_measure_mean(mu[l], a_l)
        cl = counts[:, l, :a_l]
        total += float(
            (gammaln(cl + prior).sum(axis=1)
             - gammaln(cl.sum(axis=1) + c)
             + gammaln(c) - gammaln(prior).sum()).sum()
        )
    return total


def _kmeans_rows(x, k, rng, n_iter=25, restarts=3):
    """Tiny deterministic Lloyd clustering of genotype rows."""
    n = x.shape[0]
    xf = x.astype(np.float64)
    best = None
    for _ in range(restarts):
        centers = xf[rng.choice(n, size=k, replace=False)].copy()
        labels = np.zeros(n, dtype=np.int64)
        for _ in range(n_iter):
            d2 = ((xf[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            labels = d2.argmin(axis=1)
            for j in range(k):
                members = xf[labels == j]
                if members.shape[0]:
                    centers[j] = members.mean(axis=0)
        inertia = ((xf - centers[labels]) ** 2).sum()
        if best is None or inertia < best[0]:
            best = (inertia, labels)
    # drop empty clusters, relabel compactly
    labels = best[1]
    uniq, compact = np.unique(labels, return_inverse=True)
    return compact


def _screen_initial_partition(x, alleles, c, mu, k_max, alpha0_mean, rng):
    """Hard partition of individuals maximizing the collapsed marginal
    plus a CRP(alpha0) partition prior, over k-means candidates with
    k = 1..k_max.

    The penalty offsets the selection bias of data-chosen splits, so
    homogeneous data screens to one cluster while genuinely structured
    data screens to several.  Admixture strata inflate the chosen k
    beyond the number of ancestral populations; that is fine, because
    the chain merges surplus clusters of structured data quickly.  The
    decision that matters here is one-versus-many.
    """
    from scipy.special import gammaln

    n = x.shape[0]
    best = None
    for k in range(1, min(k_max, n) + 1):
        labels = (np.zeros(n, dtype=np.int64) if k == 1
                  else _kmeans_rows(x, k, rng))
        k_eff = int(labels.max()) + 1
        score = _dm_log_marginal(x, labels, k_eff, alleles, c, mu)
        sizes = np.bincount(labels)
        score += (k_eff * np.log(alpha0_mean) + gammaln(sizes).sum()
                  - (gammaln(n + alpha0_mean) - gammaln(alpha0_mean)))
        if best is None or score > best[0] + 1e-9:
            best = (score, labels)
    return best[1]


@dataclass
class RunConfig:
    sweeps: int
    burn_in: int
    thin: int = 1
    seed: int = 0
    workers: int = 1
    k_init: int | None = None   # None: choose by marginal-likelihood screen
    k_init_max: int = 8
    checkpoint_every: int = 1000
    out_dir: str | None = None
    priors: Hyperparams = field(default_factory=Hyperparams)

    def check(self) -> None:
        if not (0 <= self.burn_in < self.sweeps):
            raise ValueError("need 0 <= burn_in < sweeps")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.k_init is not None and self.k_init < 1:
            raise ValueError("k_init must be >= 1")

    def retained_sweeps(self) -> list[int]:
        return [
            t for t in range(self.burn_in + 1, self.sweeps + 1)
            if (t - self.burn_in) % self.thin == 0
        ]


@dataclass
class SweepRecord:
    sweep: int
    k_star: int
    k_cover_95: int
    k_cover_99: int
    alpha: float
    alpha0: float
    r: float
    loglik: float
    accept_ffbs: float
    accept_r: float

    FIELDS = ("sweep", "k_star", "k_cover_95", "k_cover_99", "alpha",
              "alpha0", "r", "loglik", "accept_ffbs", "accept_r")

    def csv_row(self) -> str:
        vals = [self.sweep, self.k_star, self.k_cover_95, self.k_cover_99,
                self.alpha, self.alpha0, self.r, self.loglik,
                self.accept_ffbs, self.accept_r]
        out = []
        for v in vals:
            out.append(str(v) if isinstance(v, int) else repr(float(v)))
        return ",".join(out)


def cover_counts(assign_counts: np.ndarray) -> tuple[int, int, int]:
    """(k_star, k_cover_95, k_cover_99) from per-atom assignment counts."""
    nz = np.sort(assign_counts[assign_counts > 0])[::-1]
    k_star = nz.shape[0]
    total = nz.sum()
    cum = np.cumsum(nz)
    k95 = int(np.argmax(cum >= 0.95 * total)) + 1
    k99 = int(np.argmax(cum >= 0.99 * total)) + 1
    return k_star, k95, k99


class AdmixtureSampler:
    """Owns the mutable chain state; one instance per run."""

    def __init__(self, dataset: Dataset, config: RunConfig):
        config.check()
        if dataset.distances is None:
            raise ValueError("dataset must carry inter-locus distances")
        self.dataset = dataset
        self.config = config
        self.x = np.array(dataset.genotypes)          # mutable copy (joint tests re-simulate it)
        self.alleles = np.array(dataset.alleles_per_locus)
        self.distances = np.array(dataset.distances)
        self.hyper = config.priors.copy()
        self.state: HdpState | None = None
        self.paths: LatentPaths | None = None
        self.sweep_index = 0
        self.r_adapter = ScaleAdapter(scale=self.hyper.r_scale)
        self.mu_adapter = ScaleAdapter(scale=self.hyper.mu_scale)
        self.last_m_total = 0

    # ------------------------------------------------------------------
    # initialization

    def initialize(self) -> None:
        """Set hyperparameters to prior means and build a starting state.

        With an explicit k_init: that many base-measure atoms, uniform
        weights, per-segment uniform labels.  With k_init=None (the
        default) the cluster count and labels come from a
        marginal-likelihood screen over quick k-means partitions of the
        individuals; starting in the right basin matters because the
        chain crosses between pooled and split configurations very
        slowly.  s is drawn from the prior at an initial split rate
        equal to the geometric mean of 1 / d_l.
        """
        cfg = self.config
        rng = _stream(cfg.seed, _INIT)
        n, L = self.x.shape
        hyper = self.hyper
        a, b = hyper.alpha_prior
        a0, b0 = hyper.alpha0_prior
        hyper.alpha = a / b
        hyper.alpha0 = a0 / b0
        ma, mb = hyper.mu_prior
        hyper.mu = np.full(L, ma / (ma + mb))
        pos = self.distances[self.distances > 0]
        if pos.size:
            r0 = float(np.exp(-np.mean(np.log(pos))))
        else:
            r0 = float(np.exp(np.mean(hyper.log_r_bounds)))
        lo, hi = hyper.log_r_bounds
        hyper.r = float(np.exp(np.clip(np.log(r0), lo, hi)))
        hyper.check()

        ind_labels = None
        if cfg.k_init is None:
            a0, b0 = hyper.alpha0_prior
            ind_labels = _screen_initial_partition(
                self.x, self.alleles, hyper.c, hyper.mu, cfg.k_init_max,
                a0 / b0, rng,
            )
            k = int(ind_labels.max()) + 1
        else:
            k = cfg.k_init

        theta = sample_base_atoms(k, hyper.mu, hyper.c, self.alleles, rng)
        q0 = np.full(k, 1.0 / (k + 1))
        w0 = 1.0 / (k + 1)
        q = np.tile(q0, (n, 1))
        w = np.full(n, w0)
        link = transition_prob(hyper.r, self.distances)
        s = np.zeros((n, L), dtype=np.int64)
        if L > 1:
            s[:, 1:] = rng.random((n, L - 1)) < link
        z = np.empty((n, L), dtype=np.int64)
        if ind_labels is not None:
            # constant label per individual: any s satisfies the linkage invariant
            z[:] = ind_labels[:, None]
        else:
            fresh = rng.integers(0, k, size=(n, L))
            z[:, 0] = fresh[:, 0]
            for l in range(1, L):
                z[:, l] = np.where(s[:, l] == 1, z[:, l - 1], fresh[:, l])
        self.state = HdpState(
            theta=theta, q0=q0, w0=w0, q=q, w=w,
            atom_ids=np.arange(k, dtype=np.int64), next_atom_id=k, k_star=k,
        )
        self.paths = LatentPaths(z=z, s=s)
        self.paths.check()
        self.sweep_index = 0

    # ------------------------------------------------------------------
    # one full sweep

    def gibbs_sweep(self) -> SweepRecord:
        self.sweep_index += 1
        t = self.sweep_index
        cfg = self.config
        state, paths, hyper = self.state, self.paths, self.hyper
        rng = _stream(cfg.seed, _COORD, t)

        # (1) counts  (2) prune
        n_mat = count_segments(paths, state.n_atoms)
        m_mat = sample_table_counts(n_mat, hyper.alpha, state.q0, rng)
        counts = prune_unoccupied(state, paths, CountTables(n=n_mat, m=m_mat))

        # (3) concentrations, conditioned on (counts, K); weights follow
        m_total = int(counts.m.sum())
        self.last_m_total = m_total
        a, b = hyper.alpha_prior
        hyper.alpha = update_alpha(hyper.alpha, counts.n.sum(axis=1), m_total, a, b, rng)
        a0, b0 = hyper.alpha0_prior
        hyper.alpha0 = update_alpha0(hyper.alpha0, state.k_star, m_total, a0, b0, rng)

        # (4) global then (5) individual weights
        state.q0, state.w0 = resample_global_weights(counts.n0, hyper.alpha0, rng)
        state.q, state.w = resample_individual_weights(
            state.q0, state.w0, counts.n, hyper.alpha, rng
        )

        # (6) slice  (7) extension
        state.slice_c = sample_slice(state.q, paths.z, rng)
        draw_atom = lambda count: sample_base_atoms(
            count, hyper.mu, hyper.c, self.alleles, rng
        )
        extend_sticks(state, hyper.alpha, hyper.alpha0, draw_atom, rng)

        # (8) latent paths, then a collapsed (r, paths) jump: the plain
        # random-walk r update cannot cross between split regimes because
        # p(r | s) is sharp, so propose r' together with fresh paths drawn
        # at r' and accept on the marginalized likelihood ratio
        accept_frac = self._update_paths(t)
        self._update_r_joint(t, rng)

        # (9) allele frequencies for every instantiated atom
        state.theta = resample_theta_all(
            self.x, paths.z, self.alleles, state.n_atoms, hyper.c, hyper.mu, rng
        )

        # (10) split rate  (11) base-measure means
        adapting = t <= cfg.burn_in
        hyper.r, acc_r = update_r(
            hyper.r, paths.s, self.distances, hyper.log_r_bounds,
            self.r_adapter.scale, rng,
        )
        self.r_adapter.record(acc_r, adapting)
        mu_hits = 0
        for l in range(self.x.shape[1]):
            ma, mb = hyper.mu_prior
            hyper.mu[l], hit = update_mu(
                hyper.mu[l], state.theta[:, l, :], ma, mb, hyper.c,
                int(self.alleles[l]), self.mu_adapter.scale, rng,
            )
            mu_hits += hit
        self.mu_adapter.record(mu_hits >= self.x.shape[1] / 2, adapting)

        return self._make_record(t, accept_frac, float(acc_r))

    def _update_paths(self, t) -> float:
        cfg = self.config
        state, paths = self.state, self.paths
        n, L = self.x.shape
        q_active = np.where(state.q > state.slice_c[:, None], state.q, 0.0)
        uniforms = np.empty((n, 2 * L + 1))
        for i in range(n):
            uniforms[i] = _stream(cfg.seed, _PATHS, t, i).random(2 * L + 1)

        z_prop = np.empty((n, L), dtype=np.int64)
        s_prop = np.empty((n, L), dtype=np.int64)

        def run_chunk(idx):
            m0, m1, m_dot, _ = forward_filter_batch(
                self.x[idx], q_active[idx], state.theta,
                self.hyper.r, self.distances,
            )
            z_c, s_c = backward_sample_batch(m0, m1, m_dot, uniforms[idx, : 2 * L])
            z_prop[idx] = z_c
            s_prop[idx] = s_c

        chunks = [c for c in np.array_split(np.arange(n), cfg.workers) if c.size]
        if len(chunks) == 1:
            run_chunk(chunks[0])
        else:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                list(pool.map(run_chunk, chunks))

        q_cur = np.take_along_axis(state.q, paths.z, axis=1).min(axis=1)
        q_new = np.take_along_axis(state.q, z_prop, axis=1).min(axis=1)
        accept = uniforms[:, -1] * q_new < q_cur
        paths.z[accept] = z_prop[accept]
        paths.s[accept] = s_prop[accept]
        return float(accept.mean())

    def _update_r_joint(self, t, rng, scale: float = 1.5) -> bool:
        """Joint Metropolis move on (r, z, s) with paths proposed by FFBS.

        Proposal: log r' = log r + scale * N(0,1); (z', s') ~ FFBS at r'
        over the current active sets.  The FFBS law equals the
        slice-restricted path conditional except for the 1/q_min factor,
        so the acceptance ratio collapses to
        prod_i [Z_i(r') / Z_i(r)] * prod_i [q_min(z_i) / q_min(z'_i)]
        with Z_i the forward-filter marginal (log r prior is uniform and
        the proposal is symmetric on the log scale).
        """
        state, paths, hyper = self.state, self.paths, self.hyper
        lo, hi = hyper.log_r_bounds
        log_prop = np.log(hyper.r) + scale * rng.standard_normal()
        u_accept = rng.random()
        if not (lo <= log_prop <= hi):
            return False
        r_prop = float(np.exp(log_prop))
        n, L = self.x.shape
        q_active = np.where(state.q > state.slice_c[:, None], state.q, 0.0)
        _, _, _, logs_cur = forward_filter_batch(
            self.x, q_active, state.theta, hyper.r, self.distances
        )
        m0, m1, m_dot, logs_prop = forward_filter_batch(
            self.x, q_active, state.theta, r_prop, self.distances
        )
        uniforms = np.empty((n, 2 * L))
        for i in range(n):
            uniforms[i] = _stream(self.config.seed, _RJUMP, t, i).random(2 * L)
        z_prop, s_prop = backward_sample_batch(m0, m1, m_dot, uniforms)
        q_min_cur = np.take_along_axis(state.q, paths.z, axis=1).min(axis=1)
        q_min_prop = np.take_along_axis(state.q, z_prop, axis=1).min(axis=1)
        log_ratio = (
            logs_prop.sum() - logs_cur.sum()
            + np.log(q_min_cur).sum() - np.log(q_min_prop).sum()
        )
        if np.log(u_accept) < log_ratio:
            hyper.r = r_prop
            paths.z = z_prop
            paths.s = s_prop
            return True
        return False

    def _make_record(self, t, accept_frac, acc_r) -> SweepRecord:
        state, paths, hyper = self.state, self.paths, self.hyper
        n, L = self.x.shape
        assign = np.bincount(paths.z.ravel(), minlength=state.n_atoms)
        k_star, k95, k99 = cover_counts(assign)
        cols = np.broadcast_to(np.arange(L), (n, L))
        loglik = float(np.log(np.fmax(state.theta[paths.z, cols, self.x], 1e-300)).sum())
        return SweepRecord(
            sweep=t, k_star=k_star, k_cover_95=k95, k_cover_99=k99,
            alpha=hyper.alpha, alpha0=hyper.alpha0, r=hyper.r,
            loglik=loglik, accept_ffbs=accept_frac, accept_r=acc_r,
        )

    # ------------------------------------------------------------------
    # snapshots

    def assignment_ids(self) -> np.ndarray:
        return self.state.atom_ids[self.paths.z]

    def occupied_theta(self) -> tuple[np.ndarray, np.ndarray]:
        occupied = np.bincount(self.paths.z.ravel(), minlength=self.state.n_atoms) > 0
        return self.state.atom_ids[occupied], self.state.theta[occupied]

    # ------------------------------------------------------------------
    # checkpointing

    def save_checkpoint(self, path) -> None:
        np.savez_compressed(
            path,
            version=CHECKPOINT_VERSION,
            sweep=self.sweep_index,
            theta=self.state.theta,
            q0=self.state.q0,
            w0=self.state.w0,
            q=self.state.q,
            w=self.state.w,
            atom_ids=self.state.atom_ids,
            next_atom_id=self.state.next_atom_id,
            k_star=self.state.k_star,
            slice_c=self.state.slice_c if self.state.slice_c is not None else np.empty(0),
            z=self.paths.z,
            s=self.paths.s,
            alpha=self.hyper.alpha,
            alpha0=self.hyper.alpha0,
            r=self.hyper.r,
            mu=self.hyper.mu,
            r_scale=self.r_adapter.scale,
            r_acc=self.r_adapter.accepted,
            r_seen=self.r_adapter.seen,
            mu_scale=self.mu_adapter.scale,
            mu_acc=self.mu_adapter.accepted,
            mu_seen=self.mu_adapter.seen,
        )

    def load_checkpoint(self, path) -> int:
        with np.load(path) as chk:
            if int(chk["version"]) != CHECKPOINT_VERSION:
                raise ValueError(
                    f"checkpoint version {int(chk['version'])} not supported "
                    f"(expected {CHECKPOINT_VERSION})"
                )
            self.state = HdpState(
                theta=chk["theta"],
                q0=chk["q0"],
                w0=float(chk["w0"]),
                q=chk["q"],
                w=chk["w"],
                atom_ids=chk["atom_ids"],
                next_atom_id=int(chk["next_atom_id"]),
                k_star=int(chk["k_star"]),
                slice_c=chk["slice_c"] if chk["slice_c"].size else None,
            )
            self.paths = LatentPaths(z=chk["z"], s=chk["s"])
            self.hyper.alpha = float(chk["alpha"])
            self.hyper.alpha0 = float(chk["alpha0"])
            self.hyper.r = float(chk["r"])
            self.hyper.mu = np.array(chk["mu"])
            self.r_adapter = ScaleAdapter(
                scale=float(chk["r_scale"]),
                accepted=int(chk["r_acc"]), seen=int(chk["r_seen"]),
            )
            self.mu_adapter = ScaleAdapter(
                scale=float(chk["mu_scale"]),
                accepted=int(chk["mu_acc"]), seen=int(chk["mu_seen"]),
            )
            self.sweep_index = int(chk["sweep"])
        return self.sweep_index


# ----------------------------------------------------------------------
# trace files

SCALARS_FILE = "trace.csv"
ASSIGN_FILE = "assignments.csv"
THETA_FILE = "thetas.csv"
CHECKPOINT_FILE = "checkpoint.npz"
META_FILE = "meta.json"

SCALAR_HEADER = ",".join(SweepRecord.FIELDS)
ASSIGN_HEADER = "sweep,individual,locus,atom_id"
THETA_HEADER = "sweep,atom_id,locus,allele,freq"


class Trace:
    """Retained sweep output held in memory and flushed atomically."""

    def __init__(self):
        self.scalar_lines: list[str] = []
        self.assign_blocks: list[np.ndarray] = []
        self.theta_lines: list[str] = []

    def add(self, record: SweepRecord, ids: np.ndarray,
            theta_ids: np.ndarray, theta: np.ndarray, alleles) -> None:
        self.scalar_lines.append(record.csv_row())
        n, L = ids.shape
        block = np.empty((n * L, 4), dtype=np.int64)
        block[:, 0] = record.sweep
        block[:, 1] = np.repeat(np.arange(1, n + 1), L)
        block[:, 2] = np.tile(np.arange(1, L + 1), n)
        block[:, 3] = ids.ravel()
        self.assign_blocks.append(block)
        for j, atom in enumerate(theta_ids):
            for l in range(L):
                for a in range(int(alleles[l])):
                    self.theta_lines.append(
                        f"{record.sweep},{atom},{l + 1},{a},{float(theta[j, l, a])!r}"
                    )

    def write(self, out_dir) -> None:
        _atomic_write(os.path.join(out_dir, SCALARS_FILE),
                       "\n".join([SCALAR_HEADER] + self.scalar_lines) + "\n")
        lines = [ASSIGN_HEADER]
        if self.assign_blocks:
            stacked = np.concatenate(self.assign_blocks, axis=0)
            lines.extend(
                f"{r[0]},{r[1]},{r[2]},{r[3]}" for r in stacked.tolist()
            )
        _atomic_write(os.path.join(out_dir, ASSIGN_FILE), "\n".join(lines) + "\n")
        _atomic_write(os.path.join(out_dir, THETA_FILE),
                       "\n".join([THETA_HEADER] + self.theta_lines) + "\n")

    @classmethod
    def load(cls, out_dir, max_sweep=None) -> "Trace":
        trace = cls()
        if not os.path.exists(os.path.join(out_dir, SCALARS_FILE)):
            return trace
        with open(os.path.join(out_dir, SCALARS_FILE), encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                if max_sweep is None or int(line.split(",", 1)[0]) <= max_sweep:
                    trace.scalar_lines.append(line)
        rows = []
        with open(os.path.join(out_dir, ASSIGN_FILE), encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                vals = [int(v) for v in line.split(",")]
                if max_sweep is None or vals[0] <= max_sweep:
                    rows.append(vals)
        if rows:
            arr = np.asarray(rows, dtype=np.int64)
            for sweep in np.unique(arr[:, 0]):
                trace.assign_blocks.append(arr[arr[:, 0] == sweep])
        with open(os.path.join(out_dir, THETA_FILE), encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                sweep, atom, locus, allele, freq = line.split(",")
                if max_sweep is None or int(sweep) <= max_sweep:
                    trace.theta_lines.append(
                        f"{sweep},{atom},{locus},{allele},{float(freq)!r}"
                    )
        return trace


def _atomic_write(path, text) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _meta_fingerprint(dataset: Dataset, config: RunConfig) -> dict:
    p = config.priors
    return {
        "format_version": CHECKPOINT_VERSION,
        "n_individuals": dataset.n_individuals,
        "n_loci": dataset.n_loci,
        "alleles_per_locus": dataset.alleles_per_locus.tolist(),
        "genotype_checksum": int(dataset.genotypes.sum()),
        "seed": config.seed,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "k_init": config.k_init,
        "priors": {
            "alpha_prior": list(p.alpha_prior),
            "alpha0_prior": list(p.alpha0_prior),
            "log_r_bounds": list(p.log_r_bounds),
            "mu_prior": list(p.mu_prior),
            "c": p.c,
            "r_scale": p.r_scale,
            "mu_scale": p.mu_scale,
        },
    }


def run(dataset: Dataset, config: RunConfig, resume: bool = False,
        _stop_after: int | None = None) -> str:
    """Run (or resume) the chain, writing trace files to config.out_dir.

    Emits one SweepRecord per retained sweep plus assignment and
    allele-frequency snapshots; checkpoints every checkpoint_every
    sweeps.  Resuming replays from the last checkpoint and produces
    byte-identical output to an uninterrupted run.
    """
    config.check()
    if config.out_dir is None:
        raise ValueError("config.out_dir is required for run()")
    out_dir = config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    meta = _meta_fingerprint(dataset, config)
    meta_path = os.path.join(out_dir, META_FILE)
    chk_path = os.path.join(out_dir, CHECKPOINT_FILE)

    sampler = AdmixtureSampler(dataset, config)
    if resume:
        if not os.path.exists(chk_path):
            raise FileNotFoundError(f"no checkpoint to resume from in {out_dir}")
        with open(meta_path, encoding="utf-8") as fh:
            existing = json.load(fh)
        if existing != meta:
            raise ValueError("checkpoint/meta mismatch: run configuration differs")
        start = sampler.load_checkpoint(chk_path)
        trace = Trace.load(out_dir, max_sweep=start)
    else:
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)
        sampler.initialize()
        start = 0
        trace = Trace()

    last = config.sweeps if _stop_after is None else min(_stop_after, config.sweeps)
    for t in range(start + 1, last + 1):
        record = sampler.gibbs_sweep()
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0:
            ids, theta = sampler.occupied_theta()
            trace.add(record, sampler.assignment_ids(), ids, theta, sampler.alleles)
        if t % config.checkpoint_every == 0 and t < config.sweeps:
            sampler.save_checkpoint(chk_path)
            trace.write(out_dir)
    if last == config.sweeps:
        sampler.save_checkpoint(chk_path)
        trace.write(out_dir)
    return out_dir
