"""
Tests for the experiment commands and the command line
"""

# Standard Library Imports
import logging
import os
import sys

# Third party
import mock
import numpy as np
import pandas as pd
import pytest

# Local
from offpolicymc import experiment
from offpolicymc.envs import GridWorldSpec, make_gridworld, random_policy
from offpolicymc.errors import StageError, TrainingDivergedError
from offpolicymc.experiment_config import ExperimentConfig
from offpolicymc.mdp_core import TabularMDP, TimedPolicy
from offpolicymc.structured_io import load_document


# Global constants
DIR = os.path.dirname(os.path.realpath(__file__))
LOG = logging.getLogger(__name__)


# pylint: disable=invalid-name
# pylint: disable=missing-docstring


def tiny_config(directory, **overrides):
    settings = {
        'gridworld': {'n': 2},
        'num_policies': 2,
        'runs_per_policy': 3,
        'online_steps': 10,
        'offline_tuples': 400,
        'offline_behavior_policies': 2,
        'train': {'steps': 200, 'batch_size': 16},
        'adaptive_episodes': 20,
        'variance_ratio_sizes': [2, 3],
        'output_directory': str(directory),
    }
    settings.update(overrides)
    return ExperimentConfig(overrides=settings)


def test_derived_seeds_are_stable():

    assert experiment.derive_seeds(5) == experiment.derive_seeds(5)
    assert experiment.derive_seeds(5) != experiment.derive_seeds(6)
    assert len(set(experiment.derive_seeds(5).values())) == len(experiment.SEED_STREAMS)


def test_variance_ratio_of_the_target_itself():

    mdp = make_gridworld(GridWorldSpec(n=3, seed=1))
    pi = random_policy(mdp, 2)
    assert experiment.variance_ratio(mdp, pi, pi) == pytest.approx(1.0)


def test_error_curve_on_a_degenerate_environment(tmp_path):

    mdp = TabularMDP(reward=[[0.5]], transition=[[[1.0]]], initial=[1.0], horizon=2)
    pi = TimedPolicy.uniform(mdp.shape)
    config = tiny_config(tmp_path, online_steps=6)
    frame = experiment.cmd_error_curve(config, mdp, [pi], [pi])
    assert sorted(frame['method'].unique()) == sorted(experiment.METHODS)
    assert frame['step'].unique().tolist() == [2, 4, 6]
    assert np.allclose(frame['mean_norm_err'], 0.0)


def test_error_curve_starts_at_one(tmp_path):

    config = tiny_config(tmp_path)
    mdp = make_gridworld(GridWorldSpec(n=2, seed=3))
    policies = [random_policy(mdp, 4), random_policy(mdp, 5)]
    frame = experiment.cmd_error_curve(config, mdp, policies, [TimedPolicy.uniform(mdp.shape)] * 2)
    first = frame[(frame['method'] == experiment.ON_POLICY) & (frame['step'] == mdp.horizon)]
    assert first['mean_norm_err'].iloc[0] == pytest.approx(1.0)
    assert os.path.exists(os.path.join(str(tmp_path), 'error_curve.csv'))


def test_pipeline_is_reproducible(tmp_path):

    outputs = []
    for name in ('first', 'second'):
        config = tiny_config(tmp_path / name)
        manifest = experiment.cmd_pipeline(config, seed=11)
        outputs.append((tmp_path / name, manifest))

    (first, manifest), (second, _) = outputs
    for name in ('error_curve.csv', 'variance_ratio.csv', 'offline.csv', 'adaptive_log.csv', 'adaptive_regret.csv'):
        with open(str(first / name), 'rb') as left, open(str(second / name), 'rb') as right:
            assert left.read() == right.read()

    stored = load_document(str(first / 'manifest.yaml'))
    assert stored['seed'] == 11
    assert stored['config_hash'] == manifest['config_hash']
    assert ExperimentConfig.from_mapping(stored['config']).config_hash == stored['config_hash']
    for name in ('env.yaml', 'targets.yaml', 'mu_hat.yaml', os.path.join('models', 'policy_000', 'q_hat.yaml')):
        assert name in stored['files']


def test_pipeline_stage_errors_name_the_stage(tmp_path):

    config = tiny_config(tmp_path)
    with mock.patch.object(experiment, 'generate_offline', side_effect=RuntimeError('disk full')):
        with pytest.raises(StageError) as error:
            experiment.cmd_pipeline(config, seed=1)
    assert error.value.stage == 'gen-offline'


def test_variance_ratio_command(tmp_path):

    frame = experiment.cmd_variance_ratio(tiny_config(tmp_path))
    assert frame['n'].tolist() == [2, 3]
    assert np.all(frame['ratio'] > 0)
    written = pd.read_csv(os.path.join(str(tmp_path), 'variance_ratio.csv'))
    assert written['n'].tolist() == [2, 3]


def test_adaptive_command(tmp_path):

    result = experiment.cmd_adaptive(tiny_config(tmp_path, corrupt_mu_hat=True))
    assert len(result.log) == 20
    regret = pd.read_csv(os.path.join(str(tmp_path), 'adaptive_regret.csv'))
    assert regret['regret'].is_monotonic_increasing


def test_pipeline_requires_a_seed():

    with mock.patch.object(sys, 'argv', ['offpolicy-mc', 'pipeline']):
        with pytest.raises(SystemExit) as error:
            experiment.parse_args()
    assert error.value.code == 2


def test_arguments_become_overrides():

    args = experiment.parse_args(['error-curve', '--n', '3', '--num-policies', '4', '--feature-kind', 'linear-time'])
    overrides = experiment._overrides(args)  # pylint: disable=protected-access
    assert overrides == {'gridworld': {'n': 3}, 'num_policies': 4, 'feature_kind': 'linear-time'}


def test_main_exits_nonzero_on_bad_configuration():

    with mock.patch.object(sys, 'argv', ['offpolicy-mc', 'gen-env', '--n', '5', '--online-steps', '2']):
        with pytest.raises(SystemExit) as error:
            experiment.main()
    assert error.value.code == 1


def test_main_generates_an_environment(tmp_path):

    argv = ['offpolicy-mc', '--logging-level', 'warn', 'gen-env', '--n', '3', '-o', str(tmp_path)]
    with mock.patch.object(sys, 'argv', argv):
        experiment.main()
    assert os.path.exists(os.path.join(str(tmp_path), 'env.yaml'))


def test_error_curve_does_not_depend_on_worker_count(tmp_path):

    mdp = make_gridworld(GridWorldSpec(n=2, seed=3))
    policies = [random_policy(mdp, 4), random_policy(mdp, 5)]
    mu_hats = [TimedPolicy.uniform(mdp.shape)] * 2
    written = []
    for n_jobs in (1, 2):
        config = tiny_config(tmp_path / str(n_jobs), n_jobs=n_jobs)
        experiment.cmd_error_curve(config, mdp, policies, mu_hats)
        with open(str(tmp_path / str(n_jobs) / 'error_curve.csv'), 'rb') as handle:
            written.append(handle.read())
    assert written[0] == written[1]


def test_divergence_names_the_target_policy(tmp_path):

    config = tiny_config(tmp_path)
    with mock.patch.object(experiment, 'tune', side_effect=TrainingDivergedError('q')):
        with pytest.raises(TrainingDivergedError) as error:
            experiment.cmd_train(config)
    assert error.value.stage == 'q'
    assert error.value.cell['policy'] == 0
    assert [entry['steps'] for entry in error.value.cell['configs']] == [200]
    assert 'target policy 0' in str(error.value)


def test_worker_count_flag_becomes_an_override():

    args = experiment.parse_args(['error-curve', '--n-jobs', '-1'])
    assert experiment._overrides(args) == {'n_jobs': -1}  # pylint: disable=protected-access
