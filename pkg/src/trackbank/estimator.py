"""Scikit-learn style front door for training a memory policy on one video."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bank import DEFAULT_CAPACITY
from .env import TrackingEnv, rollout
from .errors import ConfigurationError
from .metrics import trace_quality
from .nets import greedy_action_index
from .baselines import LearnedPolicy
from .ppo import TrainConfig, train
from .trackers import SimParams, SyntheticTracker
from .videos import VideoSpec


class MemoryPolicyPPO(BaseEstimator):
    """Learns which memory to overwrite (or whether to keep the bank as is)
    for a fixed-length video, using clipped-surrogate policy optimization.

    fit() trains against a tracker over one video; predict() maps binary
    observations to greedy action indices (0 = discard, i = replace slot i).

    Parameters mirror TrainConfig; see ppo.TrainConfig for semantics.
    """

    def __init__(
        self,
        capacity: int = DEFAULT_CAPACITY,
        iterations: int = 150,
        samples_per_iteration: int = 16384,
        epochs_per_iteration: int = 2,
        minibatch_size: int = 256,
        clip_epsilon: float = 0.2,
        learning_rate: float = 3e-4,
        gae_lambda: float = 0.95,
        gamma: float = 1.0,
        entropy_coef: float = 0.01,
        value_coef: float = 0.5,
        hidden: int = 1024,
        seed: int = 0,
        rollout_width: int | None = None,
        sim_params: SimParams | None = None,
    ) -> None:
        self.capacity = capacity
        self.iterations = iterations
        self.samples_per_iteration = samples_per_iteration
        self.epochs_per_iteration = epochs_per_iteration
        self.minibatch_size = minibatch_size
        self.clip_epsilon = clip_epsilon
        self.learning_rate = learning_rate
        self.gae_lambda = gae_lambda
        self.gamma = gamma
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.hidden = hidden
        self.seed = seed
        self.rollout_width = rollout_width
        self.sim_params = sim_params

    def _train_config(self) -> TrainConfig:
        cfg = TrainConfig(
            iterations=self.iterations,
            samples_per_iteration=self.samples_per_iteration,
            epochs_per_iteration=self.epochs_per_iteration,
            minibatch_size=self.minibatch_size,
            clip_epsilon=self.clip_epsilon,
            learning_rate=self.learning_rate,
            gae_lambda=self.gae_lambda,
            gamma=self.gamma,
            entropy_coef=self.entropy_coef,
            value_coef=self.value_coef,
            hidden=self.hidden,
            seed=self.seed,
            rollout_width=self.rollout_width,
        )
        cfg.validate()
        return cfg

    def fit(self, video: VideoSpec, tracker=None) -> "MemoryPolicyPPO":
        """Train a policy for the given video.

        tracker defaults to a synthetic appearance tracker over the video.
        """
        if not isinstance(video, VideoSpec):
            raise ConfigurationError("fit expects a VideoSpec")
        config = self._train_config()
        if tracker is None:
            tracker = SyntheticTracker(video, self.sim_params)
        env_factory = lambda: TrackingEnv(  # noqa: E731
            video, tracker, capacity=self.capacity, gamma=self.gamma
        )
        result = train(env_factory, config)
        self.params_ = result.state.params
        self.history_ = result.history
        self.config_ = config
        self.video_id_ = video.video_id
        self.tracker_ = tracker
        self.n_features_in_ = video.length
        return self

    def _validate_observations(self, observations) -> np.ndarray:
        obs = np.asarray(observations, dtype=np.float64)
        if obs.ndim == 1:
            obs = obs[None, :]
        if obs.ndim != 2 or obs.shape[1] != self.n_features_in_:
            raise ConfigurationError(
                f"observations have shape {np.shape(observations)}, expected "
                f"(n, {self.n_features_in_})"
            )
        return obs

    def predict_proba(self, observations) -> np.ndarray:
        check_is_fitted(self)
        from .nets import policy_forward_batch

        obs = self._validate_observations(observations)
        probs, _, _ = policy_forward_batch(self.params_, obs)
        return probs

    def predict(self, observations) -> np.ndarray:
        """Greedy action indices, lowest index winning ties."""
        probs = self.predict_proba(observations)
        return np.asarray([greedy_action_index(p) for p in probs], dtype=np.int64)

    def score(self, video: VideoSpec | None = None, tracker=None) -> float:
        """Quality of the greedy policy on a video (default: the fitted one)."""
        check_is_fitted(self)
        if video is None:
            video = _fitted_video(self)
            tracker = self.tracker_
        elif tracker is None:
            tracker = SyntheticTracker(video, self.sim_params)
        env = TrackingEnv(video, tracker, capacity=self.capacity, gamma=self.gamma)
        trace = rollout(env, LearnedPolicy(self.params_).select)
        return trace_quality(trace)


def _fitted_video(est: MemoryPolicyPPO) -> VideoSpec:
    video = getattr(est.tracker_, "video", None)
    if video is None:
        raise ConfigurationError(
            "score() without a video needs the fitted tracker to expose one; "
            "pass the video explicitly"
        )
    return video
