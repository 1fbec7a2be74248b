"""Generative simulator with known ground truth.

Draws data from the model's own sampling process: segment boundaries
fall between loci l and l+1 with probability 1 - exp(-r * d_l), each
segment picks an ancestral population from the admixture weights, and
alleles come from that population's frequency profile.  Individuals
use independent RNG substreams keyed by (seed, index), so generation
is deterministic and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset

_PRESET_THETA_SEED = 202406


@dataclass
class ScenarioConfig:
    n_individuals: int
    n_loci: int
    alleles_per_locus: np.ndarray
    distances: np.ndarray
    k_true: int
    admixture_weights: np.ndarray
    theta_true: np.ndarray           # (k_true, L, A_max)
    r_true: float
    seed: int = 0
    individual_alpha: float | None = None  # per-individual Dirichlet(alpha*Q) when set

    def __post_init__(self):
        self.alleles_per_locus = np.asarray(self.alleles_per_locus, dtype=np.int64)
        self.distances = np.asarray(self.distances, dtype=np.float64)
        self.admixture_weights = np.asarray(self.admixture_weights, dtype=np.float64)
        self.theta_true = np.asarray(self.theta_true, dtype=np.float64)

    def check(self) -> None:
        if self.k_true < 1:
            raise ValueError("k_true must be positive")
        if abs(self.admixture_weights.sum() - 1.0) > 1e-12:
            raise ValueError("admixture weights must sum to 1")
        if self.admixture_weights.shape != (self.k_true,):
            raise ValueError("admixture weights length must equal k_true")
        if not self.r_true >= 0:  # inf allowed: independent-loci limit
            raise ValueError("r_true must be non-negative")
        if self.distances.shape != (self.n_loci - 1,):
            raise ValueError("need L-1 distances")
        if np.any(self.distances < 0):
            raise ValueError("distances must be non-negative")
        sums = self.theta_true.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > 1e-12):
            raise ValueError("theta_true rows must sum to 1")


@dataclass
class GroundTruth:
    z_true: np.ndarray
    s_true: np.ndarray
    config: ScenarioConfig = field(repr=False)

    def check(self) -> None:
        if np.any(self.s_true[:, 0] != 0):
            raise AssertionError("s[:, 0] must be 0")
        linked = self.s_true[:, 1:] == 1
        if np.any(linked & (self.z_true[:, 1:] != self.z_true[:, :-1])):
            raise AssertionError("linked loci must share ancestry")

    def locus_fractions(self) -> np.ndarray:
        """Per-individual fraction of loci rooted in each population."""
        n, L = self.z_true.shape
        out = np.zeros((n, self.config.k_true))
        for k in range(self.config.k_true):
            out[:, k] = (self.z_true == k).mean(axis=1)
        return out


def simulate(config: ScenarioConfig, rng=None) -> tuple[Dataset, GroundTruth]:
    """Draw (Dataset, GroundTruth) from the generative model.

    Deterministic given config.seed; the optional rng only supplies a
    seed when config.seed is None.
    """
    config.check()
    seed = config.seed
    if seed is None:
        seed = int((rng or np.random.default_rng()).integers(2**63))
    n, L = config.n_individuals, config.n_loci
    link = np.exp(-config.r_true * config.distances) if np.isfinite(config.r_true) \
        else np.zeros(L - 1)
    z = np.empty((n, L), dtype=np.int64)
    s = np.zeros((n, L), dtype=np.int64)
    x = np.empty((n, L), dtype=np.int64)
    streams = np.random.SeedSequence(seed).spawn(n)
    for i in range(n):
        gen = np.random.default_rng(streams[i])
        weights = config.admixture_weights
        if config.individual_alpha is not None:
            weights = gen.dirichlet(config.individual_alpha * config.admixture_weights)
        z_i, s_i = _simulate_path(gen, weights, link, L)
        z[i] = z_i
        s[i] = s_i
        for l in range(L):
            a_l = int(config.alleles_per_locus[l])
            x[i, l] = _discrete(gen, config.theta_true[z_i[l], l, :a_l])
    dataset = Dataset(
        genotypes=x,
        alleles_per_locus=config.alleles_per_locus.copy(),
        distances=config.distances.copy(),
    )
    truth = GroundTruth(z_true=z, s_true=s, config=config)
    truth.check()
    return dataset, truth


def _simulate_path(gen, weights, link, L):
    z = np.empty(L, dtype=np.int64)
    s = np.zeros(L, dtype=np.int64)
    z[0] = _discrete(gen, weights)
    for l in range(1, L):
        s[l] = gen.random() < link[l - 1]
        z[l] = z[l - 1] if s[l] else _discrete(gen, weights)
    return z, s


def _discrete(gen, probs):
    cs = np.cumsum(probs)
    return int(np.searchsorted(cs, gen.random() * cs[-1], side="right").clip(0, len(probs) - 1))


def scenario_presets(seed: int = 0) -> list[ScenarioConfig]:
    """The three desk-scale benchmark scenarios.

    200 haploid sequences, 60 biallelic markers spread evenly over a
    100 kb segment (physical distances), ancestral-population counts
    1, 2, 3 with admixture weights (1), (0.6, 0.4), (0.5, 0.4, 0.1).
    theta_true is drawn once per preset, Beta(0.5, 0.5) independently
    per population and locus under a fixed internal seed: strongly
    differentiated populations, so recovery is feasible at this scale.
    The split rate gives ~16% segment breaks per marker interval.
    """
    n, L = 200, 60
    alleles = np.full(L, 2, dtype=np.int64)
    distances = np.full(L - 1, 100_000.0 / (L - 1))
    r_true = 2e-5   # ~3 ancestry segments per individual
    weight_sets = [np.array([1.0]), np.array([0.6, 0.4]), np.array([0.5, 0.4, 0.1])]
    presets = []
    for idx, weights in enumerate(weight_sets):
        k = weights.shape[0]
        theta_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=_PRESET_THETA_SEED, spawn_key=(idx,))
        )
        freq1 = theta_rng.beta(0.5, 0.5, size=(k, L))
        theta = np.stack([1.0 - freq1, freq1], axis=2)
        presets.append(
            ScenarioConfig(
                n_individuals=n,
                n_loci=L,
                alleles_per_locus=alleles.copy(),
                distances=distances.copy(),
                k_true=k,
                admixture_weights=weights,
                theta_true=theta,
                r_true=r_true,
                seed=seed,
            )
        )
    return presets


def save_ground_truth(truth: GroundTruth, path) -> None:
    """CSV with columns individual, locus, z_true, s_true (1-based ids)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("individual,locus,z_true,s_true\n")
        n, L = truth.z_true.shape
        for i in range(n):
            for l in range(L):
                fh.write(f"{i + 1},{l + 1},{truth.z_true[i, l]},{truth.s_true[i, l]}\n")
