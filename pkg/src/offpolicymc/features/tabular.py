"""
One-hot features: every (t, s, a) triple owns one weight
"""

# Third party
import numpy as np

KIND = 'tabular'


class TabularFeatures:
    """
    Index (t * |S| + s) * |A| + a with value 1
    """

    kind = KIND

    def __init__(self, horizon, num_states, num_actions):
        self.horizon = horizon
        self.num_states = num_states
        self.num_actions = num_actions

    @property
    def dims(self):
        return self.horizon * self.num_states * self.num_actions

    def encode(self, t, s, a):
        """
        Sparse encoding of a batch: indices and values, both shaped [n, 1]
        """
        t, s, a = (np.asarray(item, dtype=np.int64) for item in (t, s, a))
        indices = ((t * self.num_states + s) * self.num_actions + a)[..., None]
        return indices, np.ones(indices.shape)

    def to_document(self):
        return {'kind': self.kind, 'dims': self.dims,
                'shape': [self.horizon, self.num_states, self.num_actions]}


def build(horizon, num_states, num_actions):
    return TabularFeatures(horizon, num_states, num_actions)
