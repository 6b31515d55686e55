"""
Read and write the structured text documents (MDPs, policies, value tables, models, manifests)

Documents are plain mappings of scalars and nested lists, dumped as YAML so they stay
JSON-shaped and human readable.
"""

# Standard Library Imports
import logging
import os

# Third party
import numpy as np
import ruamel.yaml

LOG = logging.getLogger(__name__)


def _plain(value):
    """
    Convert numpy containers and scalars into builtin python values
    """

    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def _yaml():
    yaml = ruamel.yaml.YAML(typ='safe', pure=True)
    yaml.default_flow_style = None
    yaml.width = 4096
    return yaml


def dump_document(document, path):
    """
    Write a document to path, creating parent directories as needed
    """

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w') as stream:
        _yaml().dump(_plain(document), stream)
    LOG.debug('Wrote document %s', path)


def load_document(path):
    """
    Load a document written by dump_document (or any JSON/YAML mapping)
    """

    with open(path) as stream:
        document = _yaml().load(stream)
    LOG.debug('Loaded document %s', path)
    return document
