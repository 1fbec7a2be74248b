import numpy as np
import pytest

from hdpadmix.data import validate
from hdpadmix.simulator import ScenarioConfig, scenario_presets, simulate


def make_config(**overrides):
    base = dict(
        n_individuals=50,
        n_loci=8,
        alleles_per_locus=np.full(8, 2),
        distances=np.full(7, 0.5),
        k_true=2,
        admixture_weights=np.array([0.6, 0.4]),
        theta_true=np.stack(
            [
                np.column_stack([np.full(8, 0.9), np.full(8, 0.1)]),
                np.column_stack([np.full(8, 0.2), np.full(8, 0.8)]),
            ]
        ),
        r_true=1.0,
        seed=42,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


class TestSimulate:
    def test_zero_rate_gives_single_segment(self):
        ds, truth = simulate(make_config(r_true=0.0))
        assert np.all(truth.s_true[:, 1:] == 1)
        assert np.all(truth.z_true == truth.z_true[:, :1])

    def test_infinite_rate_gives_independent_loci(self):
        # split probability 1 everywhere: every locus its own segment
        ds, truth = simulate(make_config(r_true=np.inf))
        assert np.all(truth.s_true == 0)

    def test_single_locus_matches_binomial_law(self):
        config = make_config(
            n_individuals=10**4, n_loci=1, alleles_per_locus=np.array([2]),
            distances=np.empty(0),
            theta_true=np.array([[[1.0, 0.0]], [[0.0, 1.0]]]),
        )
        ds, truth = simulate(config)
        frac = (truth.z_true[:, 0] == 0).mean()
        se = np.sqrt(0.6 * 0.4 / 10**4)
        assert abs(frac - 0.6) <= 3 * se

    def test_deterministic_given_seed(self):
        a = simulate(make_config(seed=9))
        b = simulate(make_config(seed=9))
        assert np.array_equal(a[0].genotypes, b[0].genotypes)
        assert np.array_equal(a[1].z_true, b[1].z_true)

    def test_different_seeds_differ(self):
        a = simulate(make_config(seed=9))
        b = simulate(make_config(seed=10))
        assert not np.array_equal(a[0].genotypes, b[0].genotypes)

    def test_truth_invariants_and_dataset_validates(self):
        ds, truth = simulate(make_config(seed=3))
        truth.check()
        assert not any(f.severity == "error" for f in validate(ds))

    def test_split_frequency_law_of_large_numbers(self):
        config = make_config(n_individuals=4000, seed=5,
                             distances=np.array([0.2, 0.5, 1.0, 2.0, 0.1, 0.7, 0.3]))
        ds, truth = simulate(config)
        linked = truth.s_true[:, 1:].mean(axis=0)
        expected = np.exp(-config.r_true * config.distances)
        se = np.sqrt(expected * (1 - expected) / config.n_individuals)
        assert np.all(np.abs(linked - expected) <= 4 * np.fmax(se, 1e-12))

    def test_individual_alpha_varies_weights(self):
        config = make_config(individual_alpha=1.0, n_individuals=400, seed=8)
        ds, truth = simulate(config)
        # with strong per-individual variation some individuals are pure
        frac_pop0 = (truth.z_true == 0).mean(axis=1)
        assert frac_pop0.std() > 0.2

    def test_invalid_weights_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            simulate(make_config(admixture_weights=np.array([0.7, 0.4])))


class TestPresets:
    def test_three_presets_match_scenarios(self):
        presets = scenario_presets()
        assert [p.k_true for p in presets] == [1, 2, 3]
        assert presets[1].admixture_weights.tolist() == [0.6, 0.4]
        assert presets[2].admixture_weights.tolist() == [0.5, 0.4, 0.1]
        assert abs(presets[2].admixture_weights.sum() - 1.0) < 1e-12

    def test_preset_shapes(self):
        for p in scenario_presets():
            assert p.n_individuals == 200
            assert p.n_loci == 60
            assert np.all(p.alleles_per_locus == 2)
            p.check()

    def test_preset_theta_is_fixed_across_calls(self):
        a = scenario_presets(seed=1)[1].theta_true
        b = scenario_presets(seed=2)[1].theta_true
        assert np.array_equal(a, b)
