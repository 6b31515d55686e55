"""
Learn the variance-reducing behavior policy mu_hat from behavior-agnostic offline tuples

The pipeline follows four stages over a dataset of (t, s, a, r, s') tuples:

    1. augment every tuple with a' ~ pi_{t+1}(.|s') (none at t = T-1)
    2. regress r_w(s, a) on the observed rewards
    3. fitted Q for q_w with targets r + q_w(t+1, s', a')
    4. fitted Q for q_hat_w with targets r_hat + q_hat_w(t+1, s', a'),
       r_hat = 2 r_w q_w - r_w^2

and then sets mu_hat_t(a|s) proportional to pi_t(a|s) sqrt(max(q_hat_w, floor)).

All updates are minibatch semi-gradient steps on linear models with sparse features; the
value at t = T is taken to be zero so the last-step targets are r and r_hat alone.
"""

# Standard Library Imports
from dataclasses import asdict, dataclass, field, replace
import logging
from typing import Any, List, Optional

# Third party
from joblib import Parallel, delayed
import numpy as np
import pandas as pd

# Local
from offpolicymc.errors import ConfigError, DimensionError, TrainingDivergedError
from offpolicymc.mdp_core import TimedPolicy, draw_rows, make_rng, sample_trajectories
from offpolicymc.structured_io import dump_document, load_document

LOG = logging.getLogger(__name__)

NO_ACTION = -1
DIVERGENCE_CHECK_EVERY = 1000
DATASET_FLOAT_FORMAT = '%.17g'

STAGE_R = 'r'
STAGE_Q = 'q'
STAGE_HAT_Q = 'q_hat'


###################################################################################################
#
# Data
#
###################################################################################################


@dataclass(frozen=True)
class OfflineTuple:
    """
    One logged transition; a_next is None until augmented (and stays None at t = T-1)
    """

    t: int
    s: int
    a: int
    r: float
    s_next: int
    a_next: Optional[int] = None


@dataclass(eq=False)
class OfflineDataset:
    """
    Columnar store of offline tuples; ``a_next`` holds NO_ACTION where absent
    """

    t: np.ndarray
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    a_next: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.t)

    @property
    def augmented(self):
        return self.a_next is not None

    def subset(self, indices):
        a_next = None if self.a_next is None else self.a_next[indices]
        return OfflineDataset(self.t[indices], self.s[indices], self.a[indices], self.r[indices],
                              self.s_next[indices], a_next)

    def tuples(self):
        """
        Iterate row views
        """
        for index in range(len(self)):
            a_next = None
            if self.a_next is not None and self.a_next[index] != NO_ACTION:
                a_next = int(self.a_next[index])
            yield OfflineTuple(int(self.t[index]), int(self.s[index]), int(self.a[index]), float(self.r[index]),
                               int(self.s_next[index]), a_next)

    @classmethod
    def from_tuples(cls, tuples: List[OfflineTuple]):
        columns = list(zip(*[(item.t, item.s, item.a, item.r, item.s_next,
                              NO_ACTION if item.a_next is None else item.a_next) for item in tuples]))
        t, s, a, r, s_next, a_next = (np.asarray(column) for column in columns)
        augmented = any(item.a_next is not None for item in tuples)
        return cls(t.astype(np.int64), s.astype(np.int64), a.astype(np.int64), r.astype(np.float64),
                   s_next.astype(np.int64), a_next.astype(np.int64) if augmented else None)

    def to_frame(self):
        frame = pd.DataFrame({'t': self.t, 's': self.s, 'a': self.a, 'r': self.r, 's_next': self.s_next})
        if self.a_next is not None:
            frame['a_next'] = pd.array(np.where(self.a_next == NO_ACTION, None, self.a_next).tolist(), dtype='Int64')
        return frame

    @classmethod
    def from_frame(cls, frame):
        a_next = None
        if 'a_next' in frame.columns:
            a_next = frame['a_next'].astype('Int64').fillna(NO_ACTION).to_numpy(dtype=np.int64)
        return cls(frame['t'].to_numpy(dtype=np.int64), frame['s'].to_numpy(dtype=np.int64),
                   frame['a'].to_numpy(dtype=np.int64), frame['r'].to_numpy(dtype=np.float64),
                   frame['s_next'].to_numpy(dtype=np.int64), a_next)


def save_dataset(dataset, path):
    dataset.to_frame().to_csv(path, index=False, float_format=DATASET_FLOAT_FORMAT)


def load_dataset(path):
    return OfflineDataset.from_frame(pd.read_csv(path))


def check_dataset(dataset, shape):
    """
    Raise DimensionError if any index falls outside (T, |S|, |A|)
    """

    horizon, num_states, num_actions = shape
    if len(dataset) and (dataset.t.min() < 0 or dataset.t.max() >= horizon):
        raise DimensionError('Tuple time steps must lie in [0, %i)' % horizon)
    for name, column, bound in (('s', dataset.s, num_states), ('s_next', dataset.s_next, num_states),
                                ('a', dataset.a, num_actions)):
        if len(dataset) and (column.min() < 0 or column.max() >= bound):
            raise DimensionError('Column %s must lie in [0, %i)' % (name, bound))


###################################################################################################
#
# Models and configuration
#
###################################################################################################


@dataclass
class TrainConfig:
    """
    Hyperparameters of the learning pipeline
    """

    lr_r: float = 0.5
    lr_q: float = 0.5
    lr_hat_q: float = 0.5
    batch_size: int = 64
    steps: int = 200000
    train_fraction: float = 0.7
    seed: int = 0
    floor: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError('train_fraction must lie in (0, 1), got %s' % self.train_fraction)
        if self.floor < 0:
            raise ConfigError('floor must be non-negative')
        if self.batch_size < 1 or self.steps < 0:
            raise ConfigError('batch_size must be positive and steps non-negative')
        if min(self.lr_r, self.lr_q, self.lr_hat_q) < 0:
            raise ConfigError('learning rates must be non-negative')

    def as_dict(self):
        return asdict(self)

    @classmethod
    def from_mapping(cls, mapping):
        known = {key: value for key, value in dict(mapping or {}).items() if key in cls.__dataclass_fields__}
        unknown = set(dict(mapping or {})) - set(known)
        if unknown:
            raise ConfigError('Unknown training options: %s' % ', '.join(sorted(unknown)))
        return cls(**known)


@dataclass(eq=False)
class LinearModel:
    """
    Weights over a feature map; ``test_loss`` is filled in after training
    """

    weights: np.ndarray
    features: Any
    test_loss: Optional[float] = None

    @classmethod
    def zeros(cls, features):
        return cls(np.zeros(features.dims), features)

    def predict(self, t, s, a):
        indices, values = self.features.encode(t, s, a)
        return np.sum(self.weights[indices] * values, axis=-1)

    def predict_next(self, t, s_next, a_next):
        """
        Value at (t + 1, s', a'), zero past the horizon
        """
        t = np.asarray(t)
        terminal = (t + 1 >= self.features.horizon) | (np.asarray(a_next) == NO_ACTION)
        safe_t = np.where(terminal, 0, t + 1)
        safe_a = np.where(terminal, 0, a_next)
        return np.where(terminal, 0.0, self.predict(safe_t, s_next, safe_a))

    def table(self, shape):
        """
        Predictions for every (t, s, a), shaped [T, S, A]
        """
        horizon, num_states, num_actions = shape
        t, s, a = np.meshgrid(np.arange(horizon), np.arange(num_states), np.arange(num_actions), indexing='ij')
        return self.predict(t, s, a)

    def to_document(self):
        return {'features': self.features.to_document(), 'weights': self.weights, 'test_loss': self.test_loss}


def save_model(model, path):
    dump_document(model.to_document(), path)


def load_model(path, feature_handler_cls=None):
    """
    Load a model file; features are rebuilt from their recorded kind and shape
    """

    # Local import keeps the features registry out of the module import graph
    from offpolicymc.feature_handler import FeatureHandler  # pylint: disable=import-outside-toplevel

    document = load_document(path)
    handler = (feature_handler_cls or FeatureHandler)(document['features']['kind'])
    features = handler.build(document['features']['shape'])
    weights = np.array(document['weights'], dtype=np.float64)
    if weights.shape != (features.dims,):
        raise DimensionError('Model has %i weights, features need %i' % (weights.size, features.dims))
    return LinearModel(weights, features, document.get('test_loss'))


@dataclass
class LearnedBehavior:
    """
    Everything the learning pipeline produces
    """

    mu_hat: TimedPolicy
    r_model: LinearModel
    q_model: LinearModel
    hat_q_model: LinearModel
    config: TrainConfig
    losses: dict = field(default_factory=dict)


###################################################################################################
#
# Dataset generation
#
###################################################################################################


def generate_offline(mdp, behavior_policies, m, rng):
    """
    m tuples logged by a mixture of behavior policies, with the policy identity dropped

    Episodes are rolled out with a uniformly chosen policy each, cut into tuples, shuffled and
    truncated to m, so tuples do not form trajectories.
    """

    if m < 1:
        raise ValueError('At least one tuple is required, got m=%s' % m)
    if not behavior_policies:
        raise ValueError('At least one behavior policy is required')
    episodes = -(-m // mdp.horizon)
    choices = rng.integers(0, len(behavior_policies), size=episodes)
    columns = {name: [] for name in ('t', 's', 'a', 'r', 's_next')}
    for index, policy in enumerate(behavior_policies):
        count = int(np.sum(choices == index))
        if not count:
            continue
        batch = sample_trajectories(mdp, policy, count, rng)
        columns['t'].append(np.broadcast_to(np.arange(mdp.horizon), batch.states.shape).ravel())
        columns['s'].append(batch.states.ravel())
        columns['a'].append(batch.actions.ravel())
        columns['r'].append(batch.rewards.ravel())
        columns['s_next'].append(batch.next_states.ravel())
    merged = {name: np.concatenate(parts) for name, parts in columns.items()}
    keep = rng.permutation(len(merged['t']))[:m]
    dataset = OfflineDataset(merged['t'][keep].astype(np.int64), merged['s'][keep].astype(np.int64),
                             merged['a'][keep].astype(np.int64), merged['r'][keep].astype(np.float64),
                             merged['s_next'][keep].astype(np.int64))
    LOG.info('Generated %i offline tuples from %i behavior policies', len(dataset), len(behavior_policies))
    return dataset


def augment(dataset, pi, rng):
    """
    Attach a' ~ pi_{t+1}(.|s') to every tuple with t < T-1
    """

    horizon = pi.shape[0]
    check_dataset(dataset, pi.shape)
    a_next = np.full(len(dataset), NO_ACTION, dtype=np.int64)
    live = np.flatnonzero(dataset.t < horizon - 1)
    if live.size:
        rows = pi.probs[dataset.t[live] + 1, dataset.s_next[live]]
        a_next[live] = draw_rows(rows, rng.random(live.size))
    return replace(dataset, a_next=a_next)


def split_dataset(dataset, train_fraction, rng):
    """
    Random train/test split; both parts keep at least one tuple when possible
    """

    order = rng.permutation(len(dataset))
    cut = int(round(train_fraction * len(dataset)))
    cut = min(max(cut, 1), max(len(dataset) - 1, 1))
    return dataset.subset(order[:cut]), dataset.subset(order[cut:])


###################################################################################################
#
# Training
#
###################################################################################################


def _stage_rngs(seed):
    augment_seq, split_seq, r_seq, q_seq, hat_q_seq = np.random.SeedSequence(seed).spawn(5)
    return {
        'augment': make_rng(augment_seq),
        'split': make_rng(split_seq),
        STAGE_R: make_rng(r_seq),
        STAGE_Q: make_rng(q_seq),
        STAGE_HAT_Q: make_rng(hat_q_seq),
    }


def _sgd(stage, model, encoded, target_fn, lr, config, rng):
    """
    Minibatch semi-gradient descent: w <- w + lr * mean(err * x) over a batch drawn with replacement
    """

    indices, values = encoded
    size = indices.shape[0]
    if size == 0:
        raise ValueError('Stage %s has no training tuples' % stage)
    weights = model.weights
    for step in range(config.steps):
        batch = rng.integers(0, size, size=config.batch_size)
        batch_indices, batch_values = indices[batch], values[batch]
        prediction = np.sum(weights[batch_indices] * batch_values, axis=-1)
        error = target_fn(batch) - prediction
        np.add.at(weights, batch_indices, (lr / config.batch_size) * error[:, None] * batch_values)
        if (step + 1) % DIVERGENCE_CHECK_EVERY == 0:
            if not np.all(np.isfinite(weights)):
                raise TrainingDivergedError(stage)
            LOG.debug('Stage %s step %i: batch mse %.6g', stage, step + 1, float(np.mean(error ** 2)))
    if not np.all(np.isfinite(weights)):
        raise TrainingDivergedError(stage)
    return model


def _require_augmented(dataset, stage):
    if not dataset.augmented:
        raise ValueError('Stage %s needs an augmented dataset' % stage)


def _reward_inputs(dataset):
    """
    r_w(s, a) ignores time: it is encoded at t = 0
    """

    return np.zeros_like(dataset.t), dataset.s, dataset.a


def _td_targets(model, dataset, rewards):
    return rewards + model.predict_next(dataset.t, dataset.s_next, dataset.a_next)


def reward_loss(r_model, dataset):
    """
    Mean squared error of r_w against observed rewards
    """

    return float(np.mean((dataset.r - r_model.predict(*_reward_inputs(dataset))) ** 2))


def td_loss(model, dataset, rewards):
    """
    Mean squared TD error of model with the given per-tuple rewards
    """

    errors = _td_targets(model, dataset, rewards) - model.predict(dataset.t, dataset.s, dataset.a)
    return float(np.mean(errors ** 2))


def derived_rewards(r_model, q_model, dataset):
    """
    r_hat = 2 r_w(s, a) q_w(t, s, a) - r_w(s, a)^2 per tuple
    """

    reward = r_model.predict(*_reward_inputs(dataset))
    value = q_model.predict(dataset.t, dataset.s, dataset.a)
    return 2.0 * reward * value - reward ** 2


def fit_r(dataset, features, config, test=None, rng=None):
    """
    Regress r_w(s, a) on observed rewards
    """

    rng = rng or _stage_rngs(config.seed)[STAGE_R]
    model = LinearModel.zeros(features)
    encoded = features.encode(*_reward_inputs(dataset))
    rewards = dataset.r
    _sgd(STAGE_R, model, encoded, lambda batch: rewards[batch], config.lr_r, config, rng)
    model.test_loss = reward_loss(model, test if test is not None and len(test) else dataset)
    LOG.info('Reward model test mse %.6g', model.test_loss)
    return model


def fit_q(dataset, pi, features, config, test=None, rng=None):
    """
    Fitted Q for q_w: targets r + q_w(t+1, s', a'), zero past the horizon
    """

    _require_augmented(dataset, STAGE_Q)
    check_dataset(dataset, pi.shape)
    rng = rng or _stage_rngs(config.seed)[STAGE_Q]
    model = LinearModel.zeros(features)
    encoded = features.encode(dataset.t, dataset.s, dataset.a)
    rewards = dataset.r

    def targets(batch):
        return rewards[batch] + model.predict_next(dataset.t[batch], dataset.s_next[batch], dataset.a_next[batch])

    _sgd(STAGE_Q, model, encoded, targets, config.lr_q, config, rng)
    evaluation = test if test is not None and len(test) else dataset
    model.test_loss = td_loss(model, evaluation, evaluation.r)
    LOG.info('Q model test td mse %.6g', model.test_loss)
    return model


def fit_hat_q(dataset, pi, w_r, w_q, features, config, test=None, rng=None):
    """
    Fitted Q for q_hat_w: targets r_hat + q_hat_w(t+1, s', a')
    """

    _require_augmented(dataset, STAGE_HAT_Q)
    check_dataset(dataset, pi.shape)
    rng = rng or _stage_rngs(config.seed)[STAGE_HAT_Q]
    model = LinearModel.zeros(features)
    encoded = features.encode(dataset.t, dataset.s, dataset.a)
    rewards = derived_rewards(w_r, w_q, dataset)

    def targets(batch):
        return rewards[batch] + model.predict_next(dataset.t[batch], dataset.s_next[batch], dataset.a_next[batch])

    _sgd(STAGE_HAT_Q, model, encoded, targets, config.lr_hat_q, config, rng)
    evaluation = test if test is not None and len(test) else dataset
    model.test_loss = td_loss(model, evaluation, derived_rewards(w_r, w_q, evaluation))
    LOG.info('Q-hat model test td mse %.6g', model.test_loss)
    return model


def build_mu_hat(pi, q_hat_model, mdp_shape, floor=1e-8):
    """
    mu_hat_t(a|s) proportional to pi_t(a|s) sqrt(max(q_hat_w(t, s, a), floor)); pi where that vanishes
    """

    if tuple(pi.shape) != tuple(mdp_shape):
        raise DimensionError('Policy shape %s does not match %s' % (pi.shape, tuple(mdp_shape)))
    learned = q_hat_model.table(mdp_shape)
    scores = pi.probs * np.sqrt(np.maximum(learned, floor))
    normalizer = scores.sum(axis=-1, keepdims=True)
    degenerate = normalizer <= 0
    if np.any(degenerate):
        LOG.warning('%i (t, s) rows fell back to the target policy', int(np.sum(degenerate)))
    probs = np.where(degenerate, pi.probs, scores / np.where(degenerate, 1.0, normalizer))
    return TimedPolicy(probs)


def learn_mu_hat(dataset, pi, features, config, split=None):
    """
    Run every stage and return the learned behavior policy with its models

    ``split`` may supply a precomputed (train, test) pair of augmented datasets.
    """

    rngs = _stage_rngs(config.seed)
    if split is None:
        if not dataset.augmented:
            dataset = augment(dataset, pi, rngs['augment'])
        train, test = split_dataset(dataset, config.train_fraction, rngs['split'])
    else:
        train, test = split
    LOG.info('Training on %i tuples, testing on %i', len(train), len(test))
    r_model = fit_r(train, features, config, test=test, rng=rngs[STAGE_R])
    q_model = fit_q(train, pi, features, config, test=test, rng=rngs[STAGE_Q])
    hat_q_model = fit_hat_q(train, pi, r_model, q_model, features, config, test=test, rng=rngs[STAGE_HAT_Q])
    mu_hat = build_mu_hat(pi, hat_q_model, pi.shape, config.floor)
    losses = {STAGE_R: r_model.test_loss, STAGE_Q: q_model.test_loss, STAGE_HAT_Q: hat_q_model.test_loss}
    return LearnedBehavior(mu_hat, r_model, q_model, hat_q_model, config, losses)


def selection_loss(learned, test):
    """
    Test-split TD error of the q_hat stage with r_hat built from the observed rewards

    Using observed rewards keeps the score comparable across candidates whose own r_w differ.
    """

    value = learned.q_model.predict(test.t, test.s, test.a)
    rewards = 2.0 * test.r * value - test.r ** 2
    return td_loss(learned.hat_q_model, test, rewards)


def _score_candidate(pi, features, config, train, test):
    """
    Selection loss of one candidate, or None with the stage name when its training diverges
    """

    try:
        learned = learn_mu_hat(None, pi, features, config, split=(train, test))
    except TrainingDivergedError as ex:
        return None, ex.stage
    return selection_loss(learned, test), None


def tune(dataset, pi, features, configs, n_jobs=1):
    """
    Pick the config whose learned q_hat has the lowest selection loss on a shared test split

    The split (and the augmentation) come from the first config's seed and train fraction.
    Candidates are trained in ``n_jobs`` worker processes; the choice does not depend on it.
    """

    configs = list(configs)
    if not configs:
        raise ConfigError('tune needs at least one config')
    if len(configs) == 1:
        return configs[0]
    rngs = _stage_rngs(configs[0].seed)
    if not dataset.augmented:
        dataset = augment(dataset, pi, rngs['augment'])
    train, test = split_dataset(dataset, configs[0].train_fraction, rngs['split'])
    scores = Parallel(n_jobs=n_jobs, prefer='processes')(
        delayed(_score_candidate)(pi, features, config, train, test) for config in configs)
    best, best_loss = None, np.inf
    for config, (loss, diverged_stage) in zip(configs, scores):
        if loss is None:
            LOG.warning('Config %s diverged in stage %s; skipping it', config.as_dict(), diverged_stage)
            continue
        LOG.info('Config %s: selection loss %.6g', config.as_dict(), loss)
        if loss < best_loss:
            best, best_loss = config, loss
    if best is None:
        raise TrainingDivergedError('tune')
    LOG.info('Selected config %s', best.as_dict())
    return best
