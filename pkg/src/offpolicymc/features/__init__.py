"""
Feature maps for the linear models, one module per kind.

Each module exposes ``KIND`` and ``build(horizon, num_states, num_actions)`` returning an object
with ``kind``, ``dims`` and ``encode(t, s, a) -> (indices, values)``.
"""
