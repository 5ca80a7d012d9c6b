"""Clipped-surrogate policy optimization over the memory environment.

Rollouts are collected with the current stochastic policy, advantages come
from generalized advantage estimation, and updates take several epochs of
shuffled minibatches through a clipped importance-ratio objective with a
value regression term and an entropy bonus. All gradients are computed in
closed form; see ppo_loss.
"""

from __future__ import annotations

import io
import json
import time
import zipfile
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.lib import format as npformat

from .bank import action_from_index
from .env import TrackingEnv, discounted_return
from .errors import ConfigurationError, NumericalError
from .metrics import frame_results_from_infos, quality
from .nets import (
    AdamState,
    MlpParams,
    PolicyParams,
    adam_step,
    init_policy_params,
    log_softmax,
    mlp_backward,
    mlp_forward,
    policy_forward_batch,
)

CHECKPOINT_FORMAT_VERSION = 1

EnvFactory = Callable[[], TrackingEnv]


@dataclass
class TrainConfig:
    iterations: int = 150
    samples_per_iteration: int = 16384
    epochs_per_iteration: int = 2
    minibatch_size: int = 256
    clip_epsilon: float = 0.2
    learning_rate: float = 3e-4
    gae_lambda: float = 0.95
    gamma: float = 1.0
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    hidden: int = 1024
    seed: int = 0
    rollout_width: int | None = None

    def validate(self) -> None:
        for name in ("iterations", "samples_per_iteration", "epochs_per_iteration",
                     "minibatch_size", "hidden"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ConfigurationError(f"clip_epsilon must lie in (0, 1), got {self.clip_epsilon}")
        if self.learning_rate <= 0.0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigurationError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.entropy_coef < 0.0 or self.value_coef < 0.0:
            raise ConfigurationError("entropy_coef and value_coef must be non-negative")
        if self.rollout_width is not None and self.rollout_width < 1:
            raise ConfigurationError(f"rollout_width must be positive, got {self.rollout_width}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(
                f"unknown config fields: {', '.join(unknown)}; "
                f"known fields: {', '.join(sorted(known))}"
            )
        cfg = cls(**data)
        cfg.validate()
        return cfg


@dataclass
class RolloutBatch:
    """Flattened decision-step data for one training iteration.

    Warm-up steps never appear here; their rewards still count toward the
    episode returns reported in EpisodeStats. Advantages are normalized
    across the batch whenever it holds more than one sample.
    """

    observations: np.ndarray  # [M, input_width]
    actions: np.ndarray  # [M]
    old_log_probs: np.ndarray  # [M]
    advantages: np.ndarray  # [M]
    returns: np.ndarray  # [M]
    episode_bounds: list[tuple[int, int]]

    @property
    def value_targets(self) -> np.ndarray:
        return self.returns

    def __len__(self) -> int:
        return int(self.observations.shape[0])


@dataclass(frozen=True)
class EpisodeStats:
    video_id: str
    episode_return: float
    quality: float


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    episodes: int
    samples: int
    mean_return: float
    mean_quality: float
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float

    def to_dict(self) -> dict:
        return asdict(self)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    """Draw an action index from a probability vector; returns (index, log prob)."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise ConfigurationError(f"probs must be a vector, got shape {p.shape}")
    if np.any(p < 0.0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ConfigurationError(
            f"probs must be a probability vector (sum {float(p.sum())!r})"
        )
    u = rng.random()
    idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
    idx = min(idx, p.size - 1)
    return idx, float(np.log(p[idx]))


def compute_gae(
    rewards: Sequence[float],
    values: Sequence[float],
    last_value: float,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets for one episode.

    last_value bootstraps the state after the final step; terminal episodes
    pass 0.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape or r.ndim != 1:
        raise ConfigurationError(
            f"rewards and values must be equal-length vectors, "
            f"got {r.shape} and {v.shape}"
        )
    advantages = np.empty_like(r)
    gae = 0.0
    next_value = float(last_value)
    for t in range(r.size - 1, -1, -1):
        delta = r[t] + gamma * next_value - v[t]
        gae = delta + gamma * lam * gae
        advantages[t] = gae
        next_value = v[t]
    return advantages, advantages + v


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Shift to zero mean and unit variance; batches of one pass through."""
    a = np.asarray(advantages, dtype=np.float64)
    if a.size <= 1:
        return a.copy()
    std = a.std()
    if std == 0.0:
        return a - a.mean()
    return (a - a.mean()) / std


def _require_finite(name: str, value) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"{name} became non-finite; aborting the update")


def ppo_loss(
    params: PolicyParams,
    observations: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    value_targets: np.ndarray,
    config: TrainConfig,
) -> tuple[float, PolicyParams, dict]:
    """Loss, exact parameter gradients, and diagnostics for one minibatch.

    loss = -mean(min(ratio*A, clip(ratio)*A))
           + value_coef * mean((v - target)^2)
           - entropy_coef * mean(H)
    """
    obs = np.asarray(observations, dtype=np.float64)
    acts = np.asarray(actions, dtype=np.int64)
    b = obs.shape[0]
    if b == 0:
        raise ConfigurationError("cannot compute a loss over an empty batch")
    eps = config.clip_epsilon

    logits, p_cache = mlp_forward(params.policy, obs)
    logp = log_softmax(logits)
    probs = np.exp(logp)
    rows = np.arange(b)
    logp_a = logp[rows, acts]
    ratio = np.exp(logp_a - old_log_probs)
    _require_finite("policy ratio", ratio)

    s1 = ratio * advantages
    s2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantages
    take_unclipped = s1 <= s2
    policy_term = -float(np.where(take_unclipped, s1, s2).mean())

    ent = -(probs * logp).sum(axis=1)
    entropy_mean = float(ent.mean())

    v_out, v_cache = mlp_forward(params.value, obs)
    v = v_out[:, 0]
    v_err = v - value_targets
    value_mse = float(np.mean(v_err**2))

    loss = policy_term + config.value_coef * value_mse - config.entropy_coef * entropy_mean
    _require_finite("loss", loss)

    # Backward. Whenever the clipped branch is selected strictly, the ratio
    # sits outside the clip band, so its gradient through that branch is 0.
    d_logp_a = np.where(take_unclipped, advantages, 0.0) * ratio * (-1.0 / b)
    d_logits = -probs * d_logp_a[:, None]
    d_logits[rows, acts] += d_logp_a
    # entropy bonus: dH/dz_j = -p_j (log p_j + H)
    d_logits += (config.entropy_coef / b) * probs * (logp + ent[:, None])
    policy_grads = mlp_backward(params.policy, p_cache, d_logits)

    d_v = (2.0 * config.value_coef / b) * v_err
    value_grads = mlp_backward(params.value, v_cache, d_v[:, None])

    stats = {
        "loss": float(loss),
        "policy_loss": policy_term,
        "value_loss": value_mse,
        "entropy": entropy_mean,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "approx_kl": float(np.mean(old_log_probs - logp_a)),
    }
    return float(loss), PolicyParams(policy=policy_grads, value=value_grads), stats


def ppo_update(
    params: PolicyParams,
    batch: RolloutBatch,
    config: TrainConfig,
    adam: AdamState,
    rng: np.random.Generator,
) -> dict:
    """Several epochs of shuffled minibatch updates; params advance in place."""
    m = len(batch)
    if m == 0:
        raise ConfigurationError("cannot update from an empty batch")
    for name, arr in (
        ("observations", batch.observations),
        ("advantages", batch.advantages),
        ("returns", batch.returns),
        ("old_log_probs", batch.old_log_probs),
    ):
        _require_finite(f"batch {name}", arr)
    sums = {}
    seen = 0
    for _ in range(config.epochs_per_iteration):
        perm = rng.permutation(m)
        for start in range(0, m, config.minibatch_size):
            idx = perm[start : start + config.minibatch_size]
            _, grads, stats = ppo_loss(
                params,
                batch.observations[idx],
                batch.actions[idx],
                batch.old_log_probs[idx],
                batch.advantages[idx],
                batch.returns[idx],
                config,
            )
            adam_step(params, grads, adam, config.learning_rate)
            for key, val in stats.items():
                sums[key] = sums.get(key, 0.0) + val * idx.size
            seen += idx.size
    return {key: val / seen for key, val in sums.items()}


def collect_rollouts(
    params: PolicyParams,
    env_factory: EnvFactory,
    config: TrainConfig,
    rng: np.random.Generator,
) -> tuple[RolloutBatch, list[EpisodeStats]]:
    """Gather enough whole episodes to fill one training batch.

    Episodes run in lockstep groups of rollout_width so batched forward
    passes amortize across environments; the flattened decision steps are
    truncated to exactly samples_per_iteration.
    """
    probe = env_factory()
    t_len = probe.video.length
    capacity = probe.capacity
    agent_steps = t_len - capacity
    if agent_steps < 1:
        raise ConfigurationError(
            f"video length {t_len} must exceed bank capacity {capacity} "
            "for the policy to take any decision"
        )
    episodes_needed = -(-config.samples_per_iteration // agent_steps)
    width = config.rollout_width or episodes_needed

    obs_rows: list[np.ndarray] = []
    act_rows: list[int] = []
    logp_rows: list[float] = []
    adv_parts: list[np.ndarray] = []
    ret_parts: list[np.ndarray] = []
    bounds: list[tuple[int, int]] = []
    episode_stats: list[EpisodeStats] = []
    offset = 0

    remaining = episodes_needed
    while remaining > 0:
        k = min(width, remaining)
        envs = [env_factory() for _ in range(k)]
        cur_obs = [env.reset() for env in envs]
        e_obs: list[list[np.ndarray]] = [[] for _ in range(k)]
        e_act: list[list[int]] = [[] for _ in range(k)]
        e_logp: list[list[float]] = [[] for _ in range(k)]
        e_val: list[list[float]] = [[] for _ in range(k)]
        e_rew: list[list[float]] = [[] for _ in range(k)]
        e_all_rew: list[list[float]] = [[] for _ in range(k)]
        e_info: list[list] = [[] for _ in range(k)]
        for t in range(1, t_len):
            if t < capacity:
                for j, env in enumerate(envs):
                    out = env.step(None)
                    e_all_rew[j].append(out.reward)
                    e_info[j].append(out.info)
                    cur_obs[j] = out.observation
            else:
                stacked = np.stack(cur_obs)
                probs, _, values = policy_forward_batch(params, stacked)
                for j, env in enumerate(envs):
                    a_idx, a_logp = sample_action(probs[j], rng)
                    out = env.step(action_from_index(a_idx, capacity))
                    e_obs[j].append(cur_obs[j])
                    e_act[j].append(a_idx)
                    e_logp[j].append(a_logp)
                    e_val[j].append(float(values[j]))
                    e_rew[j].append(out.reward)
                    e_all_rew[j].append(out.reward)
                    e_info[j].append(out.info)
                    cur_obs[j] = out.observation
        for j in range(k):
            adv, ret = compute_gae(e_rew[j], e_val[j], 0.0, config.gamma, config.gae_lambda)
            obs_rows.extend(e_obs[j])
            act_rows.extend(e_act[j])
            logp_rows.extend(e_logp[j])
            adv_parts.append(adv)
            ret_parts.append(ret)
            bounds.append((offset, offset + agent_steps))
            offset += agent_steps
            episode_stats.append(
                EpisodeStats(
                    video_id=envs[j].video.video_id,
                    episode_return=discounted_return(e_all_rew[j], config.gamma),
                    quality=quality(frame_results_from_infos(e_info[j])),
                )
            )
        remaining -= k

    m = config.samples_per_iteration
    observations = np.stack(obs_rows)[:m]
    batch = RolloutBatch(
        observations=observations,
        actions=np.asarray(act_rows[:m], dtype=np.int64),
        old_log_probs=np.asarray(logp_rows[:m], dtype=np.float64),
        advantages=normalize_advantages(np.concatenate(adv_parts)[:m]),
        returns=np.concatenate(ret_parts)[:m],
        episode_bounds=[(s, min(e, m)) for s, e in bounds if s < m],
    )
    return batch, episode_stats


@dataclass
class TrainerState:
    params: PolicyParams
    adam: AdamState
    iteration: int
    rng: np.random.Generator


@dataclass
class TrainResult:
    state: TrainerState
    history: list[IterationStats]
    stopped_early: bool


def init_trainer_state(env_factory: EnvFactory, config: TrainConfig) -> TrainerState:
    probe = env_factory()
    rng = np.random.default_rng(config.seed)
    params = init_policy_params(probe.video.length, config.hidden, probe.capacity, rng)
    return TrainerState(
        params=params,
        adam=AdamState.for_params(params),
        iteration=0,
        rng=rng,
    )


def train(
    env_factory: EnvFactory,
    config: TrainConfig,
    state: TrainerState | None = None,
    max_seconds: float | None = None,
    on_iteration: Callable[[IterationStats], None] | None = None,
) -> TrainResult:
    """Run PPO iterations until config.iterations, resuming from state.

    With max_seconds set, training stops cleanly at an iteration boundary
    once the wall-clock budget is spent; the returned state can be
    checkpointed and resumed later.
    """
    config.validate()
    if state is None:
        state = init_trainer_state(env_factory, config)
    history: list[IterationStats] = []
    started = time.monotonic()
    stopped_early = False
    while state.iteration < config.iterations:
        if max_seconds is not None and time.monotonic() - started >= max_seconds:
            stopped_early = True
            break
        batch, episodes = collect_rollouts(state.params, env_factory, config, state.rng)
        stats = ppo_update(state.params, batch, config, state.adam, state.rng)
        state.iteration += 1
        it_stats = IterationStats(
            iteration=state.iteration,
            episodes=len(episodes),
            samples=len(batch),
            mean_return=float(np.mean([e.episode_return for e in episodes])),
            mean_quality=float(np.mean([e.quality for e in episodes])),
            loss=stats["loss"],
            policy_loss=stats["policy_loss"],
            value_loss=stats["value_loss"],
            entropy=stats["entropy"],
            clip_fraction=stats["clip_fraction"],
            approx_kl=stats["approx_kl"],
        )
        history.append(it_stats)
        if on_iteration is not None:
            on_iteration(it_stats)
    return TrainResult(state=state, history=history, stopped_early=stopped_early)


def _write_npz_deterministic(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    # np.savez stamps the current time into the zip; write entries with a
    # fixed date so identical runs produce identical bytes.
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            npformat.write_array(buf, np.ascontiguousarray(arrays[name]))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_STORED
            zf.writestr(info, buf.getvalue())


def save_checkpoint(
    path: str | Path,
    state: TrainerState,
    config: TrainConfig,
    video_id: str,
) -> None:
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "video_id": video_id,
        "config": config.to_dict(),
        "iteration": state.iteration,
        "adam_step": state.adam.step,
        "rng_state": state.rng.bit_generator.state,
    }
    arrays: dict[str, np.ndarray] = {
        "meta": np.frombuffer(
            json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
        )
    }
    for name, arr in state.params.tensors():
        arrays[f"params/{name}"] = arr
    for name in state.adam.m:
        arrays[f"adam_m/{name}"] = state.adam.m[name]
        arrays[f"adam_v/{name}"] = state.adam.v[name]
    _write_npz_deterministic(path, arrays)


def _mlp_from(arrays: dict, prefix: str) -> MlpParams:
    return MlpParams(
        w1=np.array(arrays[f"{prefix}.w1"], dtype=np.float64),
        b1=np.array(arrays[f"{prefix}.b1"], dtype=np.float64),
        w2=np.array(arrays[f"{prefix}.w2"], dtype=np.float64),
        b2=np.array(arrays[f"{prefix}.b2"], dtype=np.float64),
    )


def load_checkpoint(path: str | Path) -> tuple[TrainerState, TrainConfig, str]:
    try:
        with np.load(path) as data:
            arrays = {name: data[name] for name in data.files}
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"not a checkpoint file: {path} ({exc})") from exc
    if "meta" not in arrays:
        raise ConfigurationError(f"checkpoint {path} is missing its metadata entry")
    meta = json.loads(bytes(arrays["meta"]).decode("utf-8"))
    if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ConfigurationError(
            f"checkpoint format {meta.get('format_version')} is not supported "
            f"(expected {CHECKPOINT_FORMAT_VERSION})"
        )
    config = TrainConfig.from_dict(meta["config"])
    params = PolicyParams(
        policy=_mlp_from(arrays, "params/policy"),
        value=_mlp_from(arrays, "params/value"),
    )
    adam = AdamState(
        m={name: np.array(arrays[f"adam_m/{name}"], dtype=np.float64) for name, _ in params.tensors()},
        v={name: np.array(arrays[f"adam_v/{name}"], dtype=np.float64) for name, _ in params.tensors()},
        step=int(meta["adam_step"]),
    )
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    state = TrainerState(params=params, adam=adam, iteration=int(meta["iteration"]), rng=rng)
    return state, config, str(meta["video_id"])


def save_history(path: str | Path, history: Sequence[IterationStats]) -> None:
    lines = [json.dumps(h.to_dict(), sort_keys=True) for h in history]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def append_history(path: str | Path, history: Sequence[IterationStats]) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        for h in history:
            fh.write(json.dumps(h.to_dict(), sort_keys=True) + "\n")


def load_history(path: str | Path) -> list[IterationStats]:
    out = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(IterationStats(**json.loads(line)))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigurationError(f"{path}:{i}: malformed history line: {exc}") from exc
    return out
