"""
Position one-hot plus normalized time, with one weight block per action

For each action the block holds |S| + 1 weights: the one-hot of s and a last coordinate
carrying t / T. The whole map therefore has (|S| + 1) |A| weights, independent of T.
"""

# Third party
import numpy as np

KIND = 'linear-time'


class LinearTimeFeatures:
    """
    Two active coordinates per (t, s, a): the state's and the time's, inside a's block
    """

    kind = KIND

    def __init__(self, horizon, num_states, num_actions):
        self.horizon = horizon
        self.num_states = num_states
        self.num_actions = num_actions

    @property
    def block(self):
        """
        Feature length per (s, t)
        """
        return self.num_states + 1

    @property
    def dims(self):
        return self.block * self.num_actions

    def encode(self, t, s, a):
        t, s, a = (np.asarray(item, dtype=np.int64) for item in (t, s, a))
        offset = a * self.block
        indices = np.stack([offset + s, offset + self.num_states], axis=-1)
        values = np.stack([np.ones(t.shape), t / self.horizon], axis=-1)
        return indices, values

    def to_document(self):
        return {'kind': self.kind, 'dims': self.dims,
                'shape': [self.horizon, self.num_states, self.num_actions]}


def build(horizon, num_states, num_actions):
    return LinearTimeFeatures(horizon, num_states, num_actions)
