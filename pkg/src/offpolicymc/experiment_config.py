"""
The configuration object for experiments
"""

# Standard Library Imports
import copy
import hashlib
import io
import json

# Third party
import ruamel.yaml

# Local
from offpolicymc.behavior_learn import TrainConfig
from offpolicymc.errors import ConfigError

FEATURE_KINDS = ('tabular', 'linear-time')

DEFAULTS = {
    'gridworld': {'n': 5, 'slip': 0.9},
    'seed': 0,
    'num_policies': 30,
    'runs_per_policy': 30,
    'online_steps': 500,
    'offline_tuples': 100000,
    'offline_behavior_policies': 5,
    'feature_kind': 'tabular',
    'train': {},
    'train_grid': None,
    'ucb_c': 2.0 ** -10,
    'adaptive_episodes': 1000,
    'corrupt_mu_hat': False,
    'variance_ratio_sizes': [10, 20, 30],
    'variance_ratio_policies': 1,
    'n_jobs': 1,
    'output_directory': 'runs',
}


class ExperimentConfig:
    """
    The configuration for one experiment, read from a yaml file and/or a mapping of overrides
    """

    def __init__(self, config_file_path=None, overrides=None):
        """
        Initialize the configuration; overrides win over file values, which win over defaults
        """

        self._config_file_path = config_file_path
        yaml_config = self._get_yaml_config(config_file_path) if config_file_path else {}
        self._yaml_config = self._merge(copy.deepcopy(DEFAULTS), yaml_config or {})
        self._yaml_config = self._merge(self._yaml_config, overrides or {})
        self._validate()
        self._str = self._get_displayable_config(self._yaml_config)

    def __str__(self):
        return self._str

    @classmethod
    def from_mapping(cls, mapping):
        return cls(overrides=mapping)

    @staticmethod
    def _get_yaml_config(config_file_path):
        """
        Load the config
        """

        yaml = ruamel.yaml.YAML(typ='safe', pure=True)
        try:
            with open(config_file_path) as configstream:
                yaml_config = yaml.load(configstream)
        except (OSError, ruamel.yaml.YAMLError) as ex:
            raise ConfigError('Could not read configuration file %s: %s' % (config_file_path, ex)) from ex
        if yaml_config is not None and not isinstance(yaml_config, dict):
            raise ConfigError('Configuration file %s must hold a mapping' % config_file_path)
        return yaml_config

    @staticmethod
    def _merge(base, overrides):
        unknown = set(overrides) - set(DEFAULTS)
        if unknown:
            raise ConfigError('Unknown configuration keys: %s' % ', '.join(sorted(unknown)))
        for key, value in overrides.items():
            if value is None and key != 'train_grid':
                continue
            if isinstance(base.get(key), dict) and isinstance(value, dict) and key != 'train':
                base[key] = dict(base[key], **value)
            else:
                base[key] = copy.deepcopy(value)
        return base

    @staticmethod
    def _get_displayable_config(yaml_config):
        yaml = ruamel.yaml.YAML()
        with io.StringIO() as buffer:
            yaml.dump(json.loads(json.dumps(yaml_config)), buffer)
            return buffer.getvalue()

    def _validate(self):
        for key in ('num_policies', 'runs_per_policy', 'online_steps', 'offline_tuples',
                    'offline_behavior_policies', 'adaptive_episodes', 'variance_ratio_policies'):
            value = self._yaml_config[key]
            if not isinstance(value, int) or value < 1:
                raise ConfigError('%s must be a positive integer, got %r' % (key, value))
        if self.n < 2:
            raise ConfigError('gridworld.n must be at least 2')
        if not 0.0 <= self.slip <= 1.0:
            raise ConfigError('gridworld.slip must lie in [0, 1]')
        if self.online_steps < self.horizon:
            raise ConfigError('online_steps (%i) must cover at least one episode of %i steps'
                              % (self.online_steps, self.horizon))
        if self.feature_kind not in FEATURE_KINDS:
            raise ConfigError('feature_kind must be one of %s, got %r' % (FEATURE_KINDS, self.feature_kind))
        if self.ucb_c < 0:
            raise ConfigError('ucb_c must be non-negative')
        if any(int(size) < 2 for size in self.variance_ratio_sizes):
            raise ConfigError('variance_ratio_sizes must all be at least 2')
        if not isinstance(self._yaml_config['n_jobs'], int) or self._yaml_config['n_jobs'] == 0:
            raise ConfigError('n_jobs must be a non-zero integer (-1 uses every core), got %r' % self._yaml_config['n_jobs'])
        # Builds and validates every TrainConfig
        _ = self.train_configs

    def as_dict(self):
        """
        Canonical plain-data form
        """
        return json.loads(json.dumps(self._yaml_config, sort_keys=True))

    @property
    def config_hash(self):
        """
        SHA-256 over the canonical JSON form
        """
        canonical = json.dumps(self.as_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    # pylint: disable=missing-docstring
    @property
    def config_file_path(self):
        return self._config_file_path

    @property
    def n(self):  # pylint: disable=invalid-name
        return int(self._yaml_config['gridworld']['n'])

    @property
    def slip(self):
        return float(self._yaml_config['gridworld'].get('slip', 0.9))

    @property
    def horizon(self):
        return self.n

    @property
    def seed(self):
        return int(self._yaml_config['seed'])

    @property
    def num_policies(self):
        return self._yaml_config['num_policies']

    @property
    def runs_per_policy(self):
        return self._yaml_config['runs_per_policy']

    @property
    def online_steps(self):
        return self._yaml_config['online_steps']

    @property
    def offline_tuples(self):
        return self._yaml_config['offline_tuples']

    @property
    def offline_behavior_policies(self):
        return self._yaml_config['offline_behavior_policies']

    @property
    def feature_kind(self):
        return self._yaml_config['feature_kind']

    @property
    def train_configs(self):
        """
        The TrainConfig grid; a single entry when no grid is configured
        """
        grid = self._yaml_config['train_grid']
        if grid is None:
            return [TrainConfig.from_mapping(self._yaml_config['train'])]
        if not isinstance(grid, list) or not grid:
            raise ConfigError('train_grid must be a non-empty list of mappings')
        return [TrainConfig.from_mapping(dict(self._yaml_config['train'], **entry)) for entry in grid]

    @property
    def ucb_c(self):
        return float(self._yaml_config['ucb_c'])

    @property
    def adaptive_episodes(self):
        return self._yaml_config['adaptive_episodes']

    @property
    def corrupt_mu_hat(self):
        return bool(self._yaml_config['corrupt_mu_hat'])

    @property
    def variance_ratio_sizes(self):
        return [int(size) for size in self._yaml_config['variance_ratio_sizes']]

    @property
    def variance_ratio_policies(self):
        return self._yaml_config['variance_ratio_policies']

    @property
    def n_jobs(self):
        return self._yaml_config['n_jobs']

    @property
    def output_directory(self):
        return self._yaml_config['output_directory']
