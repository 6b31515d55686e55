#!/usr/bin/env python
"""
Grid-world experiments: offline learning of the behavior policy, error curves, variance ratios
and adaptive runs, each writing CSV results under an output directory.
"""


# Standard Library Imports
import argparse
from contextlib import contextmanager
from dataclasses import replace
import logging
import os
import sys

# Third party
from joblib import Parallel, delayed, parallel_backend
import numpy as np
import pandas as pd

# Local
from offpolicymc import __version__
from offpolicymc.adaptive_exec import MU_HAT, PI, arm_pull_fraction, run_adaptive, write_episode_log
from offpolicymc.behavior_learn import (
    generate_offline, learn_mu_hat, load_dataset, save_dataset, save_model, tune,
)
from offpolicymc.envs import GridWorldSpec, corrupt_policy, features_for, make_gridworld, random_policy
from offpolicymc.errors import OffPolicyError, StageError, TrainingDivergedError
from offpolicymc.estimators import pdis_returns
from offpolicymc.exact_dp import compute_q_v, expected_return, pdis_variance, total_variance
from offpolicymc.experiment_config import ExperimentConfig
from offpolicymc.mdp_core import (
    load_mdp, load_policies, make_rng, sample_trajectories, save_mdp, save_policies,
)
from offpolicymc.structured_io import dump_document


LOG = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = '%.12g'
ZERO_RETURN = 1e-12
MANIFEST = 'manifest.yaml'

ON_POLICY = 'on-policy'
OFF_POLICY = 'off-policy-mu-hat'
ADAPTIVE = 'adaptive'
METHODS = (ON_POLICY, OFF_POLICY, ADAPTIVE)

SEED_STREAMS = ('env', 'policies', 'offline', 'train', 'runs', 'ratio', 'adaptive')


###################################################################################################
#
# Methods
#
###################################################################################################


def derive_seeds(seed):
    """
    One integer seed per stream, spawned from the root seed
    """

    children = np.random.SeedSequence(int(seed)).spawn(len(SEED_STREAMS))
    return {name: int(child.generate_state(1, dtype=np.uint64)[0]) for name, child in zip(SEED_STREAMS, children)}


def _child_seeds(seed, count):
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in np.random.SeedSequence(seed).spawn(count)]


def variance_ratio(mdp, pi, mu_hat):
    """
    V(G^PDIS under mu_hat) / V(G^PDIS under pi), both exact with S_0 ~ p0
    """

    q, v = compute_q_v(mdp, pi)
    on_policy = total_variance(mdp, v, pdis_variance(mdp, pi, pi, q=q, v=v))
    off_policy = total_variance(mdp, v, pdis_variance(mdp, pi, mu_hat, q=q, v=v))
    if on_policy <= 0:
        LOG.warning('The target policy has zero return variance; reporting a ratio of 1')
        return 1.0
    return off_policy / on_policy


def arm_variances(mdp, pi, mu_hat):
    """
    Exact single-episode variance of each adaptive arm
    """

    q, v = compute_q_v(mdp, pi)
    return {
        MU_HAT: total_variance(mdp, v, pdis_variance(mdp, pi, mu_hat, q=q, v=v)),
        PI: total_variance(mdp, v, pdis_variance(mdp, pi, pi, q=q, v=v)),
    }


def running_errors(returns, target):
    """
    |running mean - target| after each episode
    """

    running = np.cumsum(returns) / np.arange(1, len(returns) + 1)
    return np.abs(running - target)


def _write_csv(frame, path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    LOG.info('Wrote %s', path)


def _environment(config, seeds):
    return make_gridworld(GridWorldSpec(n=config.n, slip=config.slip, seed=seeds['env']))


def _target_policies(config, mdp, seeds):
    return [random_policy(mdp, seed) for seed in _child_seeds(seeds['policies'], config.num_policies)]


def _learn(config, mdp, pi, dataset, seed, index=0):
    """
    Tune over the configured grid (if any) and learn mu_hat for one target policy

    A divergence is re-raised naming the target policy ``index`` and the candidate configs.
    """

    features = features_for(mdp, config.feature_kind)
    configs = [replace(train_config, seed=seed) for train_config in config.train_configs]
    try:
        chosen = tune(dataset, pi, features, configs, n_jobs=config.n_jobs)
        return learn_mu_hat(dataset, pi, features, chosen)
    except TrainingDivergedError as ex:
        cell = {'policy': index, 'configs': [train_config.as_dict() for train_config in configs]}
        message = 'Training diverged for target policy %i in stage %s with configs %s' % (index, ex.stage, cell['configs'])
        raise TrainingDivergedError(ex.stage, message=message, cell=cell) from ex


###################################################################################################
#
# Commands
#
###################################################################################################


def cmd_gen_env(config, seeds=None):
    """
    Generate the grid world and write env.yaml
    """

    seeds = seeds or derive_seeds(config.seed)
    mdp = _environment(config, seeds)
    save_mdp(mdp, os.path.join(config.output_directory, 'env.yaml'))
    return mdp


def cmd_gen_offline(config, mdp=None, seeds=None):
    """
    Generate the behavior-agnostic offline dataset and write offline.csv
    """

    seeds = seeds or derive_seeds(config.seed)
    mdp = mdp or _environment(config, seeds)
    behavior_seeds = _child_seeds(seeds['offline'], config.offline_behavior_policies + 1)
    behaviors = [random_policy(mdp, seed) for seed in behavior_seeds[:-1]]
    dataset = generate_offline(mdp, behaviors, config.offline_tuples, make_rng(behavior_seeds[-1]))
    path = os.path.join(config.output_directory, 'offline.csv')
    os.makedirs(config.output_directory, exist_ok=True)
    save_dataset(dataset, path)
    return dataset


def cmd_train(config, mdp=None, policies=None, dataset=None, seeds=None):
    """
    Learn mu_hat for every target policy; write policies, models and learned behaviors
    """

    seeds = seeds or derive_seeds(config.seed)
    mdp = mdp or _environment(config, seeds)
    policies = policies or _target_policies(config, mdp, seeds)
    if dataset is None:
        dataset = cmd_gen_offline(config, mdp=mdp, seeds=seeds)
    learned = []
    for index, (pi, seed) in enumerate(zip(policies, _child_seeds(seeds['train'], len(policies)))):
        LOG.info('Learning mu_hat for target policy %i of %i', index + 1, len(policies))
        behavior = _learn(config, mdp, pi, dataset, seed, index=index)
        models = os.path.join(config.output_directory, 'models', 'policy_%03i' % index)
        save_model(behavior.r_model, os.path.join(models, 'r.yaml'))
        save_model(behavior.q_model, os.path.join(models, 'q.yaml'))
        save_model(behavior.hat_q_model, os.path.join(models, 'q_hat.yaml'))
        learned.append(behavior)
    save_policies(policies, os.path.join(config.output_directory, 'targets.yaml'))
    save_policies([behavior.mu_hat for behavior in learned], os.path.join(config.output_directory, 'mu_hat.yaml'))
    return learned


def _cell_errors(mdp, pi, mu_hat, target, seed, online_steps, c):
    """
    Raw running errors per method for one (policy, run) cell
    """

    rng = make_rng(seed)
    episodes = online_steps // mdp.horizon
    on_policy = pdis_returns(sample_trajectories(mdp, pi, episodes, rng), pi, pi)
    off_policy = pdis_returns(sample_trajectories(mdp, mu_hat, episodes, rng), pi, mu_hat)
    adaptive = run_adaptive(mdp, pi, mu_hat, episodes, c=c, rng=rng)
    adaptive_returns = np.array([record.G for record in adaptive.log])
    return {
        ON_POLICY: running_errors(on_policy, target),
        OFF_POLICY: running_errors(off_policy, target),
        ADAPTIVE: running_errors(adaptive_returns, target),
    }


def cmd_error_curve(config, mdp, policies, mu_hats, seeds=None):
    """
    Normalized estimation error per environment step, averaged over policies and runs

    Errors are relative to |J(pi)| and then divided by the mean on-policy error after the first
    episode for that policy, so the on-policy curve starts at 1.
    """

    seeds = seeds or derive_seeds(config.seed)
    curves = {method: [] for method in METHODS}
    policy_seeds = _child_seeds(seeds['runs'], len(policies))
    targets = [expected_return(mdp, compute_q_v(mdp, pi)[1]) for pi in policies]
    tasks = [delayed(_cell_errors)(mdp, pi, mu_hat, target, seed, config.online_steps, config.ucb_c)
             for pi, mu_hat, target, policy_seed in zip(policies, mu_hats, targets, policy_seeds)
             for seed in _child_seeds(policy_seed, config.runs_per_policy)]
    LOG.info('Running %i cells with n_jobs = %i', len(tasks), config.n_jobs)
    with parallel_backend('loky', inner_max_num_threads=1):
        results = Parallel(n_jobs=config.n_jobs, prefer='processes')(tasks)
    for index, target in enumerate(targets):
        cells = results[index * config.runs_per_policy:(index + 1) * config.runs_per_policy]
        scale = abs(target)
        if scale < ZERO_RETURN:
            LOG.warning('Policy %i has J = 0; using absolute errors', index)
            scale = 1.0
        first = np.mean([cell[ON_POLICY][0] for cell in cells]) / scale
        if first <= 0:
            LOG.warning('Policy %i has zero on-policy error after one episode; errors are not normalized', index)
            first = 1.0
        for cell in cells:
            for method in METHODS:
                curves[method].append(cell[method] / scale / first)
        LOG.debug('Error curves done for policy %i (J = %.6g)', index, target)

    rows = []
    for method in METHODS:
        errors = np.vstack(curves[method])
        mean = errors.mean(axis=0)
        std_err = errors.std(axis=0, ddof=1) / np.sqrt(errors.shape[0]) if errors.shape[0] > 1 else np.zeros_like(mean)
        for episode in range(errors.shape[1]):
            rows.append({'step': (episode + 1) * mdp.horizon, 'method': method,
                         'mean_norm_err': mean[episode], 'std_err': std_err[episode]})
    frame = pd.DataFrame(rows, columns=['step', 'method', 'mean_norm_err', 'std_err'])
    _write_csv(frame, os.path.join(config.output_directory, 'error_curve.csv'))
    return frame


def cmd_variance_ratio(config, seeds=None):
    """
    Exact variance ratio of learned mu_hat against pi for every configured grid size
    """

    seeds = seeds or derive_seeds(config.seed)
    rows = []
    for n, size_seed in zip(config.variance_ratio_sizes, _child_seeds(seeds['ratio'], len(config.variance_ratio_sizes))):
        size_seeds = derive_seeds(size_seed)
        size_config = ExperimentConfig(overrides=dict(config.as_dict(), gridworld={'n': n, 'slip': config.slip},
                                                      num_policies=config.variance_ratio_policies,
                                                      online_steps=max(config.online_steps, n)))
        mdp = _environment(size_config, size_seeds)
        policies = _target_policies(size_config, mdp, size_seeds)
        dataset = _offline_in_memory(size_config, mdp, size_seeds)
        ratios = []
        train_seeds = _child_seeds(size_seeds['train'], len(policies))
        for index, (pi, seed) in enumerate(zip(policies, train_seeds)):
            ratios.append(variance_ratio(mdp, pi, _learn(size_config, mdp, pi, dataset, seed, index=index).mu_hat))
        rows.append({'n': n, 'ratio': float(np.mean(ratios))})
        LOG.info('n = %i: variance ratio %.4f', n, rows[-1]['ratio'])
    frame = pd.DataFrame(rows, columns=['n', 'ratio'])
    _write_csv(frame, os.path.join(config.output_directory, 'variance_ratio.csv'))
    return frame


def _offline_in_memory(config, mdp, seeds):
    behavior_seeds = _child_seeds(seeds['offline'], config.offline_behavior_policies + 1)
    behaviors = [random_policy(mdp, seed) for seed in behavior_seeds[:-1]]
    return generate_offline(mdp, behaviors, config.offline_tuples, make_rng(behavior_seeds[-1]))


def cmd_adaptive(config, mdp=None, pi=None, mu_hat=None, seeds=None):
    """
    One adaptive run with its per-episode log and regret curve against exact variances
    """

    seeds = seeds or derive_seeds(config.seed)
    mdp = mdp or _environment(config, seeds)
    pi = pi or _target_policies(config, mdp, seeds)[0]
    if mu_hat is None:
        if config.corrupt_mu_hat:
            mu_hat = corrupt_policy(mdp)
        else:
            dataset = _offline_in_memory(config, mdp, seeds)
            mu_hat = _learn(config, mdp, pi, dataset, _child_seeds(seeds['train'], 1)[0]).mu_hat
    variances = arm_variances(mdp, pi, mu_hat)
    result = run_adaptive(mdp, pi, mu_hat, config.adaptive_episodes, c=config.ucb_c,
                          rng=make_rng(seeds['adaptive']), variances=variances)
    write_episode_log(result.log, os.path.join(config.output_directory, 'adaptive_log.csv'))
    episodes = np.arange(1, len(result.regret) + 1)
    regret = pd.DataFrame({'episode': episodes, 'regret': result.regret, 'regret_per_episode': result.regret / episodes})
    _write_csv(regret, os.path.join(config.output_directory, 'adaptive_regret.csv'))
    LOG.info('Adaptive estimate %.6g; pi pulled in %.1f%% of episodes; arm variances %s',
             result.J, 100 * arm_pull_fraction(result.log, PI), variances)
    return result


###################################################################################################
#
# System layer
#
###################################################################################################


@contextmanager
def stage(name):
    """
    Tag any failure inside the block with the stage name
    """

    LOG.info('Stage %s', name)
    try:
        yield
    except StageError:
        raise
    except Exception as ex:  # pylint: disable=broad-except
        raise StageError(name, ex) from ex


def cmd_pipeline(config, seed):
    """
    Run every stage into config.output_directory and write a manifest
    """

    assert isinstance(config, ExperimentConfig), 'config must be of type %s' % ExperimentConfig

    config = ExperimentConfig(config.config_file_path, overrides=dict(config.as_dict(), seed=seed))
    seeds = derive_seeds(config.seed)
    directory = config.output_directory
    with stage('gen-env'):
        mdp = cmd_gen_env(config, seeds)
    with stage('gen-offline'):
        dataset = cmd_gen_offline(config, mdp=mdp, seeds=seeds)
    with stage('train'):
        policies = _target_policies(config, mdp, seeds)
        learned = cmd_train(config, mdp=mdp, policies=policies, dataset=dataset, seeds=seeds)
        mu_hats = [behavior.mu_hat for behavior in learned]
    with stage('error-curve'):
        cmd_error_curve(config, mdp, policies, mu_hats, seeds)
    with stage('variance-ratio'):
        ratios = [variance_ratio(mdp, pi, mu_hat) for pi, mu_hat in zip(policies, mu_hats)]
        frame = pd.DataFrame([{'n': config.n, 'ratio': float(np.mean(ratios))}], columns=['n', 'ratio'])
        _write_csv(frame, os.path.join(directory, 'variance_ratio.csv'))
    with stage('adaptive'):
        cmd_adaptive(config, mdp=mdp, pi=policies[0], mu_hat=corrupt_policy(mdp) if config.corrupt_mu_hat else mu_hats[0],
                     seeds=seeds)

    manifest = {
        'version': __version__,
        'seed': config.seed,
        'derived_seeds': seeds,
        'config_hash': config.config_hash,
        'config': config.as_dict(),
        'files': sorted(os.path.relpath(os.path.join(root, name), directory)
                        for root, _, names in os.walk(directory) for name in names if name != MANIFEST),
    }
    dump_document(manifest, os.path.join(directory, MANIFEST))
    LOG.info('Pipeline complete: %s', directory)
    return manifest


###################################################################################################
#
# Script handling
#
###################################################################################################


def main():
    """
    CLI entry point
    """

    args = parse_args()
    set_logger(args.logging_level)

    try:
        config = ExperimentConfig(args.configuration_file, overrides=_overrides(args))
        LOG.info('Starting %s with configuration \n%s', args.command, config)
        run(args, config)
    except OffPolicyError as ex:
        LOG.exception('Command %s failed | %s', args.command, ex)
        sys.exit(1)


def run(args, config):
    """
    Dispatch a parsed command
    """

    mdp = load_mdp(args.env) if getattr(args, 'env', None) else None
    policies = load_policies(args.policies) if getattr(args, 'policies', None) else None
    if args.command == 'gen-env':
        with stage(args.command):
            cmd_gen_env(config)
    elif args.command == 'gen-offline':
        with stage(args.command):
            cmd_gen_offline(config, mdp=mdp)
    elif args.command == 'train':
        dataset = load_dataset(args.dataset) if args.dataset else None
        with stage(args.command):
            cmd_train(config, mdp=mdp, policies=policies, dataset=dataset)
    elif args.command == 'error-curve':
        with stage(args.command):
            seeds = derive_seeds(config.seed)
            mdp = mdp or _environment(config, seeds)
            policies = policies or _target_policies(config, mdp, seeds)
            if args.mu_hat:
                mu_hats = load_policies(args.mu_hat)
            else:
                mu_hats = [behavior.mu_hat for behavior in cmd_train(config, mdp=mdp, policies=policies, seeds=seeds)]
            cmd_error_curve(config, mdp, policies, mu_hats, seeds)
    elif args.command == 'variance-ratio':
        with stage(args.command):
            cmd_variance_ratio(config)
    elif args.command == 'adaptive':
        with stage(args.command):
            cmd_adaptive(config, mdp=mdp, pi=policies[0] if policies else None)
    elif args.command == 'pipeline':
        cmd_pipeline(config, args.seed)


def _overrides(args):
    overrides = {
        'seed': args.seed,
        'num_policies': args.num_policies,
        'runs_per_policy': args.runs_per_policy,
        'online_steps': args.online_steps,
        'offline_tuples': args.offline_tuples,
        'feature_kind': args.feature_kind,
        'ucb_c': args.ucb_c,
        'adaptive_episodes': args.adaptive_episodes,
        'n_jobs': args.n_jobs,
        'output_directory': args.output_directory,
    }
    if args.corrupt_mu_hat:
        overrides['corrupt_mu_hat'] = True
    if args.n is not None:
        overrides['gridworld'] = {'n': args.n}
    if args.sizes:
        overrides['variance_ratio_sizes'] = args.sizes
    return {key: value for key, value in overrides.items() if value is not None}


def parse_args(argv=None):
    """
    Parse commandline arguments.
    """

    # Description
    parser = argparse.ArgumentParser(description='Variance-reduced off-policy Monte Carlo evaluation experiments.')

    # Logging levels, local and third party
    parser.add_argument('--logging-level', choices=['warn', 'info', 'debug'], default='info')

    subparsers = parser.add_subparsers(dest='command', required=True)
    commands = {}
    for name, text in (('gen-env', 'Generate a grid world'),
                       ('gen-offline', 'Generate an offline dataset'),
                       ('train', 'Learn mu_hat for every target policy'),
                       ('error-curve', 'Normalized error per step for each method'),
                       ('variance-ratio', 'Exact variance ratio per grid size'),
                       ('adaptive', 'One adaptive run with its regret curve'),
                       ('pipeline', 'Every stage plus a manifest')):
        sub = subparsers.add_parser(name, help=text)
        sub.add_argument('-c', '--configuration-file', help='Path to a config file')
        sub.add_argument('--seed', type=int, required=name == 'pipeline')
        sub.add_argument('--n', type=int, help='Grid size and horizon')
        sub.add_argument('--num-policies', type=int)
        sub.add_argument('--runs-per-policy', type=int)
        sub.add_argument('--online-steps', type=int)
        sub.add_argument('--offline-tuples', type=int)
        sub.add_argument('--feature-kind', choices=['tabular', 'linear-time'])
        sub.add_argument('--ucb-c', type=float)
        sub.add_argument('--adaptive-episodes', type=int)
        sub.add_argument('--corrupt-mu-hat', action='store_true')
        sub.add_argument('--sizes', type=int, nargs='+', help='Grid sizes for variance-ratio')
        sub.add_argument('--n-jobs', type=int, help='Worker processes for cells and tuning; -1 uses every core')
        sub.add_argument('-o', '--output-directory')
        commands[name] = sub

    for name in ('gen-offline', 'train', 'error-curve', 'adaptive'):
        commands[name].add_argument('--env', help='Existing env.yaml')
    for name in ('train', 'error-curve', 'adaptive'):
        commands[name].add_argument('--policies', help='Existing target policies file')
    commands['train'].add_argument('--dataset', help='Existing offline.csv')
    commands['error-curve'].add_argument('--mu-hat', help='Existing learned behavior policies file')

    return parser.parse_args(argv)


def set_logger(logging_level):
    """
    Set the logging level and format
    """

    log_format = '%(asctime)s %(levelname)-8s%(module)16s - %(message)s'
    log_date_format = '%Y-%m-%d %H:%M:%S'

    # Set logging level
    logging_level = logging.getLevelName(logging_level.upper())
    logging.basicConfig(format=log_format, level=logging_level, datefmt=log_date_format)


if __name__ == '__main__':
    main()
