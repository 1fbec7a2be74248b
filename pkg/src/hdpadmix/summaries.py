"""Posterior summaries computed from trace files.

The chain records assignments by stable atom id, so pairwise
co-assignment frequencies and Binder-loss scores are label-switching
free by construction.  A point-estimate clustering is chosen among
candidate partitions (the visited ones, optionally plus hierarchical
cuts of the similarity matrix) by minimizing the posterior expected
Binder loss; cluster-level reports (admixture proportions, allele
frequencies) map atom ids onto the chosen clusters by majority
overlap.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .sampler import ASSIGN_FILE, SCALARS_FILE, THETA_FILE


# ----------------------------------------------------------------------
# trace access


@dataclass
class TraceData:
    scalars: pd.DataFrame
    assignments: pd.DataFrame   # sweep, individual, locus, atom_id
    thetas: pd.DataFrame        # sweep, atom_id, locus, allele, freq

    @property
    def sweeps(self) -> np.ndarray:
        return self.scalars["sweep"].to_numpy()

    def assignment_matrices(self):
        """Yield (sweep, ids matrix N x L) per retained sweep."""
        n = int(self.assignments["individual"].max())
        L = int(self.assignments["locus"].max())
        for sweep, grp in self.assignments.groupby("sweep", sort=True):
            ids = np.full((n, L), -1, dtype=np.int64)
            ids[grp["individual"] - 1, grp["locus"] - 1] = grp["atom_id"]
            yield int(sweep), ids


def load_trace(trace_dir) -> TraceData:
    scalars = pd.read_csv(os.path.join(trace_dir, SCALARS_FILE))
    assignments = pd.read_csv(os.path.join(trace_dir, ASSIGN_FILE))
    thetas = pd.read_csv(os.path.join(trace_dir, THETA_FILE))
    if scalars.empty:
        raise ValueError(f"trace in {trace_dir} has no retained sweeps")
    return TraceData(scalars, assignments, thetas)


# ----------------------------------------------------------------------
# posterior number of populations


def posterior_k(scalars: pd.DataFrame) -> dict:
    """Normalized histograms (and modes) of k_star and k_cover_95."""
    if len(scalars) == 0:
        raise ValueError("empty trace")
    out = {}
    for col in ("k_star", "k_cover_95"):
        counts = scalars[col].value_counts().sort_index()
        hist = {int(k): float(v / counts.sum()) for k, v in counts.items()}
        mode = int(counts.index[np.argmax(counts.to_numpy())])
        out[col] = {"histogram": hist, "mode": mode}
    return out


# ----------------------------------------------------------------------
# co-assignment similarity


@dataclass
class PosteriorSimilarity:
    """Pairwise co-assignment frequencies over items.

    Item u is either a flattened (individual, locus) cell or an
    individual; when aggregated to individuals the entry is the
    average over loci of per-locus co-assignment.
    """

    matrix: np.ndarray
    n_samples: int
    granularity: str

    def check(self) -> None:
        m = self.matrix
        if not np.allclose(m, m.T):
            raise AssertionError("similarity must be symmetric")
        if np.any(m < 0) or np.any(m > 1 + 1e-12):
            raise AssertionError("similarity entries must lie in [0, 1]")
        if not np.allclose(np.diag(m), 1.0):
            raise AssertionError("similarity diagonal must be 1")


def _item_labels(ids: np.ndarray, granularity: str) -> np.ndarray:
    if granularity == "item":
        return ids.ravel()
    if granularity == "individual":
        return ids
    raise ValueError("granularity must be 'item' or 'individual'")


def coclustering(snapshots, granularity: str = "item") -> PosteriorSimilarity:
    """Co-assignment frequency matrix from assignment snapshots.

    snapshots: iterable of N x L atom-id matrices (all the same shape).
    """
    mats = [np.asarray(m) for m in snapshots]
    if not mats:
        raise ValueError("need at least one snapshot")
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ValueError("snapshot granularity mismatch: shapes differ")
    if granularity == "item":
        size = shape[0] * shape[1]
        sim = np.zeros((size, size))
        for m in mats:
            labels = m.ravel()
            sim += labels[:, None] == labels[None, :]
    elif granularity == "individual":
        size = shape[0]
        sim = np.zeros((size, size))
        for m in mats:
            for l in range(shape[1]):
                col = m[:, l]
                sim += col[:, None] == col[None, :]
        sim /= shape[1]
    else:
        raise ValueError("granularity must be 'item' or 'individual'")
    sim /= len(mats)
    np.fill_diagonal(sim, 1.0)
    result = PosteriorSimilarity(matrix=sim, n_samples=len(mats), granularity=granularity)
    result.check()
    return result


# ----------------------------------------------------------------------
# Binder-loss point estimate


def canonical_partition(labels) -> np.ndarray:
    """Relabel clusters by first appearance: a canonical integer form."""
    labels = np.asarray(labels)
    seen = {}
    out = np.empty(labels.shape[0], dtype=np.int64)
    for idx, lab in enumerate(labels.tolist()):
        if lab not in seen:
            seen[lab] = len(seen)
        out[idx] = seen[lab]
    return out


def binder_expected_loss(labels, similarity: np.ndarray) -> float:
    """Sum over pairs u < v of |1(same cluster) - similarity_uv|."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    dev = np.abs(same.astype(float) - similarity)
    return float(np.triu(dev, k=1).sum())


def binder_partition(similarity: PosteriorSimilarity | np.ndarray, candidates):
    """Candidate partition minimizing the expected Binder loss.

    Ties break toward fewer clusters, then lexicographically on the
    canonical label vector.  Returns (labels, loss).
    """
    matrix = similarity.matrix if isinstance(similarity, PosteriorSimilarity) else np.asarray(similarity)
    best = None
    for cand in candidates:
        labels = canonical_partition(cand)
        loss = binder_expected_loss(labels, matrix)
        key = (loss, int(labels.max()) + 1, tuple(labels.tolist()))
        if best is None or key < best[0]:
            best = (key, labels, loss)
    if best is None:
        raise ValueError("empty candidate set")
    return best[1], best[2]


def _pair_count(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    return float((counts * (counts - 1.0)).sum() / 2.0)


def binder_loss_from_snapshots(labels, snapshots_flat) -> float:
    """Expected Binder loss without materializing the similarity matrix.

    Uses sum_{u<v} sim_uv = mean_t (pairs co-assigned at t) and a
    per-sweep contingency between the candidate partition and the
    sweep's assignment, which is exact and O(T * M).
    """
    labels = np.asarray(labels)
    m = labels.shape[0]
    t_count = len(snapshots_flat)
    within = _pair_count(np.bincount(labels))
    sim_sum = 0.0
    cross_sum = 0.0
    for flat in snapshots_flat:
        _, codes = np.unique(flat, return_inverse=True)
        sim_sum += _pair_count(np.bincount(codes))
        joint = labels.astype(np.int64) * (codes.max() + 1) + codes
        cross_sum += _pair_count(np.bincount(joint))
    sim_sum /= t_count
    cross_sum /= t_count
    # sum |1(same) - sim| = sum sim - 2 * sum_{same} sim + #same pairs
    return float(sim_sum - 2.0 * cross_sum + within)


def hierarchical_candidates(similarity: np.ndarray, max_k: int = 12):
    """Average-linkage cuts of 1 - similarity at k = 1..max_k."""
    from scipy.cluster.hierarchy import fcluster, linkage
    from scipy.spatial.distance import squareform

    dist = 1.0 - similarity
    np.fill_diagonal(dist, 0.0)
    dist = np.clip((dist + dist.T) / 2.0, 0.0, None)
    link = linkage(squareform(dist, checks=False), method="average")
    out = []
    for k in range(1, min(max_k, similarity.shape[0]) + 1):
        out.append(fcluster(link, t=k, criterion="maxclust") - 1)
    return out


# ----------------------------------------------------------------------
# cluster-level reports


def map_atoms_to_clusters(snapshots_flat, labels) -> dict[int, int]:
    """Majority-overlap mapping from atom id to summary cluster."""
    labels = np.asarray(labels)
    votes: dict[int, np.ndarray] = {}
    n_clusters = int(labels.max()) + 1
    for flat in snapshots_flat:
        for atom in np.unique(flat):
            mask = flat == atom
            votes.setdefault(int(atom), np.zeros(n_clusters))
            votes[int(atom)] += np.bincount(labels[mask], minlength=n_clusters)
    return {atom: int(np.argmax(v)) for atom, v in votes.items()}


def admixture_proportions(snapshots, atom_to_cluster, n_clusters) -> np.ndarray:
    """Fraction of (sweep, locus) assignments of individual i per cluster."""
    mats = [np.asarray(m) for m in snapshots]
    n = mats[0].shape[0]
    out = np.zeros((n, n_clusters))
    for m in mats:
        mapped = np.vectorize(atom_to_cluster.__getitem__, otypes=[np.int64])(m)
        for k in range(n_clusters):
            out[:, k] += (mapped == k).sum(axis=1)
    out /= out.sum(axis=1, keepdims=True)
    return out


def allele_freq_posterior(thetas: pd.DataFrame, atom_to_cluster, n_clusters,
                          assignments: pd.DataFrame):
    """Posterior mean allele frequencies per summary cluster.

    Within a sweep, atoms mapping to the same cluster are averaged
    weighted by their assignment counts in that sweep; sweeps where a
    cluster has no atoms are skipped, with occupancy reported.
    Returns (means DataFrame [cluster, locus, allele, freq], occupancy).
    """
    weights = (
        assignments.groupby(["sweep", "atom_id"]).size().rename("weight").reset_index()
    )
    df = thetas.merge(weights, on=["sweep", "atom_id"], how="left")
    df["weight"] = df["weight"].fillna(0.0)
    df["cluster"] = df["atom_id"].map(atom_to_cluster)
    df = df.dropna(subset=["cluster"])
    df["cluster"] = df["cluster"].astype(int)
    df["wfreq"] = df["freq"] * df["weight"]
    per_sweep = (
        df.groupby(["cluster", "locus", "allele", "sweep"])
        .agg(wfreq=("wfreq", "sum"), weight=("weight", "sum"))
        .reset_index()
    )
    per_sweep = per_sweep[per_sweep["weight"] > 0]
    per_sweep["freq"] = per_sweep["wfreq"] / per_sweep["weight"]
    means = (
        per_sweep.groupby(["cluster", "locus", "allele"])["freq"].mean().reset_index()
    )
    occupancy = (
        per_sweep.groupby("cluster")["sweep"].nunique().to_dict()
    )
    return means, {int(k): int(v) for k, v in occupancy.items()}


# ----------------------------------------------------------------------
# orchestration


def summarize_trace(trace_dir, granularity: str = "item",
                    dense_similarity_limit: int = 4000,
                    max_hier_k: int = 12) -> dict:
    """Produce the full summary document for a trace directory.

    For item counts beyond dense_similarity_limit the Binder search
    scores candidates with the exact contingency formula instead of a
    dense similarity matrix (same minimizer, no M^2 memory), and
    hierarchical candidates are skipped.
    """
    trace = load_trace(trace_dir)
    k_summary = posterior_k(trace.scalars)
    snapshots = [ids for _, ids in trace.assignment_matrices()]
    if granularity == "item":
        flats = [m.ravel() for m in snapshots]
        loss_flats = flats
    else:
        # individual level: visited partitions via majority atom per
        # individual; similarity still averages over (sweep, locus)
        flats = [
            np.array([np.bincount(row).argmax() for row in m]) for m in snapshots
        ]
        loss_flats = [m[:, l] for m in snapshots for l in range(snapshots[0].shape[1])]
    m_items = flats[0].shape[0]
    candidates = [f for f in flats]
    if m_items <= dense_similarity_limit:
        similarity = coclustering(snapshots, granularity=granularity)
        candidates += hierarchical_candidates(similarity.matrix, max_k=max_hier_k)
        labels, loss = binder_partition(similarity, candidates)
    else:
        best = None
        for cand in candidates:
            lab = canonical_partition(cand)
            loss = binder_loss_from_snapshots(lab, loss_flats)
            key = (loss, int(lab.max()) + 1, tuple(lab.tolist()))
            if best is None or key < best[0]:
                best = (key, lab, loss)
        labels, loss = best[1], best[2]
    n_clusters = int(labels.max()) + 1

    item_flats = [m.ravel() for m in snapshots]
    if granularity == "item":
        atom_map = map_atoms_to_clusters(item_flats, labels)
    else:
        ind_labels = labels
        n, L = snapshots[0].shape
        item_labels = np.repeat(ind_labels, L)
        atom_map = map_atoms_to_clusters(item_flats, item_labels)
    admix = admixture_proportions(snapshots, atom_map, n_clusters)
    freq_means, occupancy = allele_freq_posterior(
        trace.thetas, atom_map, n_clusters, trace.assignments
    )
    cluster_share = admix.mean(axis=0)
    return {
        "k": k_summary,
        "granularity": granularity,
        "binder_loss": loss,
        "n_clusters": n_clusters,
        "labels": labels,
        "atom_to_cluster": atom_map,
        "admixture": admix,
        "cluster_share": cluster_share,
        "allele_freq": freq_means,
        "occupancy": occupancy,
        "n_snapshots": len(snapshots),
    }


def write_summary(summary: dict, out_dir) -> None:
    """JSON document plus CSV exports of every table."""
    os.makedirs(out_dir, exist_ok=True)
    admix = summary["admixture"]
    doc = {
        "k_star": summary["k"]["k_star"],
        "k_cover_95": summary["k"]["k_cover_95"],
        "granularity": summary["granularity"],
        "binder_loss": summary["binder_loss"],
        "n_clusters": summary["n_clusters"],
        "cluster_share": [float(v) for v in summary["cluster_share"]],
        "atom_to_cluster": {str(k): v for k, v in summary["atom_to_cluster"].items()},
        "occupancy": summary["occupancy"],
        "n_snapshots": summary["n_snapshots"],
    }
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    pd.DataFrame(
        admix, columns=[f"cluster_{k}" for k in range(admix.shape[1])]
    ).assign(individual=np.arange(1, admix.shape[0] + 1)).to_csv(
        os.path.join(out_dir, "admixture.csv"), index=False
    )
    summary["allele_freq"].to_csv(os.path.join(out_dir, "allele_freq.csv"), index=False)
    pd.DataFrame({"item": np.arange(1, len(summary["labels"]) + 1),
                  "cluster": summary["labels"]}).to_csv(
        os.path.join(out_dir, "partition.csv"), index=False
    )
    hist = summary["k"]["k_cover_95"]["histogram"]
    pd.DataFrame({"k": list(hist.keys()), "probability": list(hist.values())}).to_csv(
        os.path.join(out_dir, "k_histogram.csv"), index=False
    )
