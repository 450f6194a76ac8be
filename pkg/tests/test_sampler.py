import io
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from catmix.core import CategoricalSchema, Dataset, ModelState, Priors
from catmix.sampler import (
    GibbsConfig,
    assignment_weights,
    collapse_state,
    init_state,
    iterate_states,
    prune_and_relabel,
    run_gibbs,
    sample_assignment,
    update_psi,
)


def _binary_pair_data():
    """Two rows, one binary variable, both observed as code 1."""
    return Dataset(CategoricalSchema([2]), [[1], [1]])


def _pair_state(psi_row):
    """Both rows in a single component with the given psi vector."""
    return ModelState(
        CategoricalSchema([2]),
        assignments=[0, 0],
        counts=[2],
        psi=np.asarray(psi_row, dtype=float).reshape(1, 1, 3),
    )


class TestInitState:
    def test_one_component_per_row(self):
        data = Dataset(CategoricalSchema([2, 3]), [[1, 0], [2, 3], [0, 1]])
        state = init_state(data, Priors.flat(data.schema), seed=0)
        assert state.k == 3
        assert state.assignments.tolist() == [0, 1, 2]
        assert state.counts.tolist() == [1, 1, 1]
        assert state.psi.shape == (3, 2, 4)
        state.validate()

    def test_single_row(self):
        data = Dataset(CategoricalSchema([2]), [[1]])
        state = init_state(data, Priors.flat(data.schema), seed=0)
        assert state.k == 1

    def test_deterministic(self):
        data = Dataset(CategoricalSchema([2, 2]), [[1, 2], [2, 1]])
        pr = Priors.flat(data.schema)
        a = init_state(data, pr, seed=42)
        b = init_state(data, pr, seed=42)
        assert np.array_equal(a.psi, b.psi)
        assert a.seed_token == 42

    def test_rejects_empty_dataset(self):
        data = Dataset(CategoricalSchema([2]), np.zeros((0, 1), dtype=int))
        with pytest.raises(ValueError, match="empty"):
            init_state(data, Priors.flat(data.schema))


class TestAssignmentWeights:
    def test_two_row_hand_value(self):
        # One remaining neighbour in a single component with
        # psi = (0.1, 0.6, 0.3), flat priors, alpha = 0.25:
        #   existing: 1 * 0.6            = 0.6
        #   new:      0.25 * (1/3)       = 1/12
        # normalized: (36/41, 5/41).
        data = _binary_pair_data()
        w = assignment_weights(1, _pair_state([0.1, 0.6, 0.3]), data,
                               Priors.flat(data.schema))
        np.testing.assert_allclose(w, [36 / 41, 5 / 41], rtol=1e-12)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_singleton_component_vanishes(self):
        data = Dataset(CategoricalSchema([2]), [[1], [2]])
        state = ModelState(
            data.schema, [0, 1], [1, 1],
            np.full((2, 1, 3), 1 / 3),
        )
        w = assignment_weights(1, state, data, Priors.flat(data.schema))
        assert w.shape == (2,)  # one surviving component + "new"

    def test_huge_alpha_prefers_a_new_component(self):
        data = _binary_pair_data()
        w = assignment_weights(1, _pair_state([0.1, 0.6, 0.3]), data,
                               Priors.flat(data.schema, alpha=1e9))
        assert w[-1] > 0.999

    def test_zero_likelihood_component_gets_zero_weight(self):
        data = _binary_pair_data()
        w = assignment_weights(1, _pair_state([0.5, 0.0, 0.5]), data,
                               Priors.flat(data.schema))
        assert w.tolist() == [0.0, 1.0]

    def test_row_out_of_range(self):
        data = _binary_pair_data()
        with pytest.raises(ValueError, match="row"):
            assignment_weights(5, _pair_state([0.1, 0.6, 0.3]), data,
                               Priors.flat(data.schema))


class TestSampleAssignment:
    def test_certain_stay_keeps_state(self):
        data = _binary_pair_data()
        state = _pair_state([0.1, 0.6, 0.3])
        pr = Priors.flat(data.schema)
        out = sample_assignment(1, np.array([1.0, 0.0]), state, data, pr, 0)
        assert out.assignments.tolist() == [0, 0]
        assert out.counts.tolist() == [2]
        assert np.array_equal(out.psi, state.psi)

    def test_certain_birth_opens_component(self):
        data = _binary_pair_data()
        state = _pair_state([0.1, 0.6, 0.3])
        pr = Priors.flat(data.schema)
        for seed in range(5):
            out = sample_assignment(1, np.array([0.0, 1.0]), state, data,
                                    pr, seed)
            assert out.k == 2
            assert out.assignments.tolist() == [0, 1]
            assert out.counts.tolist() == [1, 1]
            out.validate()
            # fresh psi comes from Dir(beta + indicator of x=1)
            assert not np.array_equal(out.psi[1], state.psi[0])

    def test_rejects_stale_weight_vector(self):
        data = Dataset(CategoricalSchema([2]), [[1], [2]])
        state = ModelState(data.schema, [0, 1], [1, 1],
                           np.full((2, 1, 3), 1 / 3))
        pr = Priors.flat(data.schema)
        # after detaching row 1 its singleton component is gone, so a
        # 3-long vector no longer matches
        with pytest.raises(ValueError, match="shape"):
            sample_assignment(1, np.array([0.2, 0.3, 0.5]), state, data,
                              pr, 0)


class TestPruneAndRelabel:
    def test_sorts_by_occupancy(self):
        schema = CategoricalSchema([2])
        psi = np.array([[[0.2, 0.4, 0.4]],
                        [[0.5, 0.25, 0.25]],
                        [[0.1, 0.8, 0.1]]])
        state = ModelState(schema, [0, 0, 2, 2, 2], [2, 0, 3], psi)
        out = prune_and_relabel(state)
        assert out.counts.tolist() == [3, 2]
        assert out.assignments.tolist() == [1, 1, 0, 0, 0]
        assert np.array_equal(out.psi, psi[[2, 0]])
        out.validate()

    def test_ties_keep_previous_order(self):
        schema = CategoricalSchema([2])
        psi = np.array([[[0.2, 0.4, 0.4]],
                        [[0.5, 0.25, 0.25]],
                        [[0.1, 0.8, 0.1]]])
        state = ModelState(schema, [0, 1, 2], [1, 1, 1], psi)
        out = prune_and_relabel(state)
        assert out.assignments.tolist() == [0, 1, 2]
        assert np.array_equal(out.psi, psi)

    def test_idempotent_when_sorted(self):
        schema = CategoricalSchema([2])
        psi = np.array([[[0.2, 0.4, 0.4]], [[0.5, 0.25, 0.25]]])
        state = ModelState(schema, [0, 0, 1], [2, 1], psi)
        out = prune_and_relabel(state)
        assert np.array_equal(out.assignments, state.assignments)
        assert np.array_equal(out.psi, state.psi)


class TestUpdatePsi:
    def test_matches_dirichlet_posterior_mean(self):
        # five members, all observed as code 1, flat priors: the
        # conditional is Dir(1, 6, 1) with mean (1/8, 6/8, 1/8)
        data = Dataset(CategoricalSchema([2]), [[1]] * 5)
        state = ModelState(data.schema, [0] * 5, [5],
                           np.full((1, 1, 3), 1 / 3))
        pr = Priors.flat(data.schema)
        rng = np.random.default_rng(123)
        acc = np.zeros(3)
        reps = 4000
        for _ in range(reps):
            acc += update_psi(state, data, pr, rng).psi[0, 0]
        np.testing.assert_allclose(acc / reps, [1 / 8, 6 / 8, 1 / 8],
                                   atol=0.02)

    def test_keeps_padding_zero(self):
        data = Dataset(CategoricalSchema([2, 3]), [[1, 3], [2, 1]])
        state = init_state(data, Priors.flat(data.schema), seed=1)
        out = update_psi(state, data, Priors.flat(data.schema), 2)
        assert (out.psi[:, 0, 3] == 0.0).all()
        out.validate()


class TestCollapseState:
    def test_divides_out_missing_mass(self):
        state = _pair_state([0.2, 0.4, 0.4])
        model = collapse_state(state)
        assert model.tilde_psi[0, 0].tolist() == [0.5, 0.5]
        assert model.theta.tolist() == [1.0]

    def test_zero_missing_mass_is_identity(self):
        state = _pair_state([0.0, 0.3, 0.7])
        model = collapse_state(state)
        assert model.tilde_psi[0, 0].tolist() == [0.3, 0.7]

    def test_theta_is_occupancy_fraction(self):
        schema = CategoricalSchema([2])
        n = 50
        assignments = [0] * 30 + [1] * 20
        state = ModelState(schema, assignments, [30, 20],
                           np.full((2, 1, 3), 1 / 3))
        model = collapse_state(state)
        assert model.theta.tolist() == [0.6, 0.4]

    def test_rejects_all_mass_on_missing(self):
        state = _pair_state([1.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="missing"):
            collapse_state(state)

    def test_rejects_mismatched_dataset(self):
        state = _pair_state([0.2, 0.4, 0.4])
        other = Dataset(CategoricalSchema([2]), [[1], [2], [1]])
        with pytest.raises(ValueError, match="rows"):
            collapse_state(state, other)

    def test_mixed_cardinality_padding(self):
        data = Dataset(CategoricalSchema([2, 3]), [[1, 3], [2, 1], [0, 2]])
        state = init_state(data, Priors.flat(data.schema), seed=3)
        model = collapse_state(state, data)
        assert (model.tilde_psi[:, 0, 2] == 0.0).all()
        np.testing.assert_allclose(
            model.tilde_psi[:, 1].sum(axis=1), 1.0, atol=1e-12)


def _toy_data(seed=0, n=8):
    rng = np.random.default_rng(seed)
    schema = CategoricalSchema([2, 3, 2])
    cells = np.stack([
        rng.integers(0, 3, size=n),
        rng.integers(0, 4, size=n),
        rng.integers(1, 3, size=n),
    ], axis=1)
    return Dataset(schema, cells)


def test_public_steps_compose_into_one_sweep():
    """Chaining the single-step operations reproduces iterate_states."""
    data = _toy_data(1)
    pr = Priors.flat(data.schema)

    rng = np.random.default_rng(11)
    state = init_state(data, pr, rng)
    for i in range(data.n_rows):
        w = assignment_weights(i, state, data, pr)
        state = sample_assignment(i, w, state, data, pr, rng)
    state = prune_and_relabel(state)
    state = update_psi(state, data, pr, rng)

    swept = next(iterate_states(data, pr, sweeps=1, seed=11))
    assert np.array_equal(state.assignments, swept.assignments)
    assert np.array_equal(state.counts, swept.counts)
    assert np.array_equal(state.psi, swept.psi)


def test_iterate_states_yields_valid_sorted_states():
    data = _toy_data(2, n=10)
    for state in iterate_states(data, sweeps=5, seed=7):
        state.validate()
        counts = state.counts
        assert counts.sum() == data.n_rows
        assert (counts >= 1).all()
        assert (np.diff(counts) <= 0).all()


def test_iterate_states_progress_lines():
    data = _toy_data(3, n=5)
    buf = io.StringIO()
    list(iterate_states(data, sweeps=5, seed=0, progress=buf,
                        progress_every=2))
    lines = buf.getvalue().splitlines()
    assert len(lines) == 3  # sweeps 2, 4 and the final 5
    assert all(re.fullmatch(r"sweep \d+/5 k=\d+", s) for s in lines)
    assert lines[-1].startswith("sweep 5/5")


def test_iterate_states_rejects_bad_arguments():
    data = _toy_data(0)
    with pytest.raises(ValueError, match="sweeps"):
        list(iterate_states(data, sweeps=0))


class TestGibbsConfig:
    def test_defaults(self):
        cfg = GibbsConfig()
        assert (cfg.burnin, cfg.samples, cfg.thin) == (200, 100, 2)
        assert cfg.total_sweeps == 400

    def test_retention_rule(self):
        cfg = GibbsConfig(burnin=3, samples=2, thin=2)
        assert cfg.total_sweeps == 7
        kept = [t for t in range(1, 8) if cfg.retained(t)]
        assert kept == [5, 7]

    def test_validation(self):
        with pytest.raises(ValueError):
            GibbsConfig(burnin=-1)
        with pytest.raises(ValueError):
            GibbsConfig(samples=0)
        with pytest.raises(ValueError):
            GibbsConfig(thin=0)
        with pytest.raises(ValueError):
            GibbsConfig(alpha_override=0.0)

    def test_overrides(self):
        schema = CategoricalSchema([2, 3])
        cfg = GibbsConfig(alpha_override=0.7, beta_override=2.0)
        pr = cfg.resolve_priors(schema, None)
        assert pr.alpha == 0.7
        assert [b.tolist() for b in pr.beta] == [[2, 2, 2], [2, 2, 2, 2]]
        plain = GibbsConfig().resolve_priors(schema, None)
        assert plain.alpha == 0.25


class TestRunGibbs:
    def test_single_draw(self):
        data = _toy_data(4)
        out = run_gibbs(data, config=GibbsConfig(burnin=0, samples=1,
                                                 thin=1, seed=0))
        assert len(out.draws) == 1
        assert out.k_values.shape == (1,)
        assert out.k_values[0] == out.final_state.k
        assert out.elapsed_seconds > 0

    def test_histogram_accounts_for_every_draw(self):
        data = _toy_data(5)
        cfg = GibbsConfig(burnin=10, samples=25, thin=2, seed=3)
        out = run_gibbs(data, config=cfg)
        assert sum(out.k_histogram.values()) == 25
        assert out.modal_k in out.k_histogram
        assert len(out.draws) == 25

    def test_deterministic_given_seed(self):
        data = _toy_data(6)
        cfg = GibbsConfig(burnin=5, samples=5, thin=1)
        a = run_gibbs(data, config=cfg, seed=99)
        b = run_gibbs(data, config=cfg, seed=99)
        assert np.array_equal(a.k_values, b.k_values)
        for da, db in zip(a.draws, b.draws):
            assert np.array_equal(da.theta, db.theta)
            assert np.array_equal(da.tilde_psi, db.tilde_psi)

    def test_seed_argument_beats_config_seed(self):
        data = _toy_data(7)
        cfg = GibbsConfig(burnin=5, samples=5, thin=1, seed=1)
        via_config = run_gibbs(data, config=GibbsConfig(burnin=5, samples=5,
                                                        thin=1, seed=2))
        via_arg = run_gibbs(data, config=cfg, seed=2)
        assert np.array_equal(via_arg.k_values, via_config.k_values)
        for da, db in zip(via_arg.draws, via_config.draws):
            assert np.array_equal(da.tilde_psi, db.tilde_psi)

    def test_constant_dataset_concentrates_on_one_component(self):
        data = Dataset(CategoricalSchema([2, 2]), [[1, 2]] * 20)
        out = run_gibbs(data, config=GibbsConfig(burnin=50, samples=50,
                                                 thin=1, seed=5))
        assert out.modal_k == 1


@settings(max_examples=15, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2 ** 31 - 1),
    n=st.integers(min_value=1, max_value=10),
)
def test_sweeps_preserve_state_invariants(seed, n):
    rng = np.random.default_rng(seed)
    schema = CategoricalSchema([2, 3])
    cells = np.stack([rng.integers(0, 3, n), rng.integers(0, 4, n)], axis=1)
    data = Dataset(schema, cells)
    last = None
    for state in iterate_states(data, sweeps=3, seed=seed):
        state.validate()
        assert state.counts.sum() == n
        assert (np.diff(state.counts) <= 0).all()
        last = state
    collapse_state(last, data)  # always rescalable under positive priors
