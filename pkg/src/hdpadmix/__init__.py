"""Nonparametric population-admixture inference.

Hierarchical Dirichlet process prior over an unbounded set of ancestral
populations, a linkage HMM over chromosome segments, an exact
(truncation-free) slice-sampled MCMC, a generative simulator and
posterior summaries.
"""

from .data import (
    Dataset,
    DataFormatError,
    Finding,
    load_distances,
    load_genotypes,
    save_distances,
    save_genotypes,
    validate,
    with_distances,
)
from .hdp import (
    CountTables,
    HdpState,
    count_segments,
    extend_sticks,
    prune_unoccupied,
    resample_global_weights,
    resample_individual_weights,
    sample_base_atoms,
    sample_slice,
    sample_table_counts,
)
from .hmm import (
    ForwardMessages,
    LatentPaths,
    backward_sample,
    brute_force_joint,
    forward_filter,
    mh_accept,
    transition_prob,
)
from .params import (
    Hyperparams,
    update_alpha,
    update_alpha0,
    update_mu,
    update_r,
    update_theta,
)
from .sampler import AdmixtureSampler, RunConfig, SweepRecord, run
from .simulator import GroundTruth, ScenarioConfig, scenario_presets, simulate
from .summaries import (
    PosteriorSimilarity,
    admixture_proportions,
    allele_freq_posterior,
    binder_partition,
    coclustering,
    posterior_k,
    summarize_trace,
)

__version__ = "0.1.0"
