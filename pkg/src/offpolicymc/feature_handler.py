"""
Resolve a feature kind to its implementation module under offpolicymc.features
"""

# Standard Library Imports
from importlib import import_module
import logging

# Local
from offpolicymc.errors import ConfigError

# Global constants
LOG = logging.getLogger(__name__)


class FeatureHandler:
    """
    Load the feature module for a kind and build feature maps from it
    """

    def __init__(self, kind):
        """
        Initialize from a kind name such as 'tabular' or 'linear-time'
        """

        if not kind:
            raise ConfigError('A feature kind is required')

        self._kind = kind
        module_name = kind.replace('-', '_')

        # Inject the implementation
        try:
            self._implementation_module = import_module('offpolicymc.features.%s' % module_name)
        except ImportError as ex:
            LOG.exception('Failed to import feature module offpolicymc.features.%s', module_name)
            raise ConfigError('Unknown feature kind %r' % kind) from ex
        LOG.debug('Feature module = %s', self._implementation_module)

    @property
    def kind(self):
        return self._kind

    def build(self, shape):
        """
        Build the feature map for an MDP of shape (T, |S|, |A|)
        """
        horizon, num_states, num_actions = shape
        return self._implementation_module.build(horizon, num_states, num_actions)
