"""Group-relative policy optimisation for the tabular toy policy.

Advantages are rewards standardised within each sampled group; the update
maximises a PPO-style clipped surrogate minus a reverse-KL penalty against a
frozen reference policy. Gradients are assembled analytically from the
policy's log-probability gradients.
"""

import csv
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._random import rng_stream
from .exceptions import DimensionMismatch, InputError, InvalidConfig
from .policy import ToyPolicy
from .rewards import RewardConfig, RewardScorer
from .structured import PromptTemplate, render_prompt

RATIO_EXP_CLAMP = 30.0
LOG_COLUMNS = ("step", "mean_reward", "mean_intention_reward", "objective", "kl")


@dataclass(frozen=True)
class GrpoConfig:
    group_size: int = 5
    clip_epsilon: float = 0.2
    kl_coeff: float = 0.08
    std_floor: float = 1e-8
    temperature: float = 0.9
    steps: int = 500
    learning_rate: float = 0.05
    batch_size: int = 24
    update_epochs: int = 1
    ref_refresh: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.group_size < 2:
            raise InvalidConfig("group_size must be >= 2")
        if not self.clip_epsilon > 0:
            raise InvalidConfig("clip_epsilon must be positive")
        if self.kl_coeff < 0:
            raise InvalidConfig("kl_coeff must be non-negative")
        if not self.std_floor > 0:
            raise InvalidConfig("std_floor must be positive")
        if not self.temperature > 0:
            raise InvalidConfig("temperature must be positive")
        if self.steps < 0:
            raise InvalidConfig("steps must be non-negative")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning_rate must be positive")
        if self.batch_size < 1 or self.update_epochs < 1 or self.ref_refresh < 0:
            raise InvalidConfig("batch_size and update_epochs must be >= 1, ref_refresh >= 0")

    @classmethod
    def from_dict(cls, obj):
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidConfig(f"unknown GRPO config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        if not path.is_file():
            raise InputError(f"GRPO config not found: {path}")
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")))


@dataclass
class RolloutGroup:
    """G sampled outputs for one context, with rewards and log-probabilities.

    ``logp_new`` is refreshed from the current policy by
    :func:`grpo_objective`; ``logp_old`` is frozen at sampling time.
    """

    prompt: str
    observed: tuple
    outputs: list
    emissions: list
    rewards: np.ndarray
    advantages: np.ndarray
    logp_old: np.ndarray
    logp_ref: np.ndarray
    logp_new: np.ndarray = None
    parses: list = field(default_factory=list)
    intention_rewards: np.ndarray = None

    def __post_init__(self):
        for name in ("rewards", "advantages", "logp_old", "logp_ref", "logp_new"):
            value = getattr(self, name)
            if value is None and name == "logp_new":
                value = self.logp_old
            setattr(self, name, np.asarray(value, dtype=float))
        self.validate()

    @property
    def size(self):
        return len(self.emissions)

    def validate(self):
        g = len(self.emissions)
        lengths = {
            "outputs": len(self.outputs), "rewards": len(self.rewards),
            "advantages": len(self.advantages), "logp_old": len(self.logp_old),
            "logp_ref": len(self.logp_ref), "logp_new": len(self.logp_new),
        }
        if g < 2:
            raise InputError("a rollout group needs at least 2 outputs")
        bad = {k: v for k, v in lengths.items() if v != g}
        if bad:
            raise DimensionMismatch(f"group of {g} emissions has inconsistent fields {bad}")


def compute_advantages(rewards, std_floor=1e-8):
    """Standardise rewards within a group (unbiased std); degenerate groups
    whose std falls below ``std_floor`` get all-zero advantages."""
    r = np.asarray(rewards, dtype=float)
    if r.size < 2:
        raise InputError("advantages need a group of at least 2 rewards")
    std = r.std(ddof=1)
    if not std >= std_floor:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def likelihood_ratio(logp_new, logp_old):
    diff = np.clip(np.asarray(logp_new, dtype=float) - logp_old, -RATIO_EXP_CLAMP, RATIO_EXP_CLAMP)
    out = np.exp(diff)
    return float(out) if out.ndim == 0 else out


def clipped_surrogate(ratios, advantages, epsilon):
    ratios = np.asarray(ratios, dtype=float)
    advantages = np.asarray(advantages, dtype=float)
    if ratios.shape != advantages.shape:
        raise DimensionMismatch("ratios and advantages differ in length")
    clipped = np.clip(ratios, 1.0 - epsilon, 1.0 + epsilon)
    return float(np.mean(np.minimum(ratios * advantages, clipped * advantages)))


def kl_estimate(logp_ref, logp_new):
    """Mean of ``r - log r - 1`` with ``r = pi_ref / pi_new``; never negative."""
    logp_ref = np.asarray(logp_ref, dtype=float)
    logp_new = np.asarray(logp_new, dtype=float)
    if logp_ref.shape != logp_new.shape:
        raise DimensionMismatch("log-prob vectors differ in length")
    d = logp_ref - logp_new
    # expm1 keeps precision near d = 0; the clamp removes residual rounding
    return float(np.mean(np.maximum(np.expm1(d) - d, 0.0)))


def grpo_objective(group, cfg, policy):
    """Objective and analytic gradient for one rollout group.

    ``group.logp_new`` is recomputed from ``policy`` first. Samples whose
    clipped branch is strictly smaller contribute no surrogate gradient.

    Returns
    -------
    objective : float
    gradient : ndarray, same shape as ``policy.logits``
    kl : float
    """
    group.validate()
    temperature = cfg.temperature
    logp_new = np.array(
        [policy.sequence_logprob(group.observed, e, temperature) for e in group.emissions]
    )
    group.logp_new = logp_new
    diff = logp_new - group.logp_old
    ratios = likelihood_ratio(logp_new, group.logp_old)
    adv = group.advantages
    eps = cfg.clip_epsilon
    surrogate = clipped_surrogate(ratios, adv, eps)
    kl = kl_estimate(group.logp_ref, logp_new)
    objective = surrogate - cfg.kl_coeff * kl

    unclipped = ratios * adv <= np.clip(ratios, 1.0 - eps, 1.0 + eps) * adv
    unclipped &= np.abs(diff) < RATIO_EXP_CLAMP
    coef = np.where(unclipped, ratios * adv, 0.0)
    coef -= cfg.kl_coeff * (-np.expm1(group.logp_ref - logp_new))
    g = len(group.emissions)
    grad = np.zeros(policy.logits.shape)
    for c, e in zip(coef, group.emissions):
        if c != 0.0:
            policy.accumulate_gradient(grad, group.observed, e, c / g, temperature)
    return objective, grad, kl


def batch_objective(groups, cfg, policy):
    """Mean objective, gradient and KL over several groups."""
    total_obj, total_kl = 0.0, 0.0
    grad = np.zeros(policy.logits.shape)
    for group in groups:
        obj, g, kl = grpo_objective(group, cfg, policy)
        total_obj += obj
        total_kl += kl
        grad += g
    n = len(groups)
    return total_obj / n, grad / n, total_kl / n


def sample_group(policy, reference, record, scorer, cfg, rng, template=None):
    """Draw ``cfg.group_size`` outputs for one record and score them."""
    z = len(record.future)
    outputs, emissions, rewards, s_int = [], [], [], []
    for _ in range(cfg.group_size):
        raw, em = policy.sample(record.observed, z, rng, cfg.temperature)
        breakdown = scorer.score(raw, record)
        outputs.append(raw)
        emissions.append(em)
        rewards.append(breakdown.r_total)
        s_int.append(breakdown.s_int)
    logp_old = [policy.sequence_logprob(record.observed, e, cfg.temperature) for e in emissions]
    logp_ref = [reference.sequence_logprob(record.observed, e, cfg.temperature) for e in emissions]
    return RolloutGroup(
        prompt=render_prompt(record.observed, z, policy.vocab, template),
        observed=record.observed,
        outputs=outputs,
        emissions=emissions,
        rewards=rewards,
        advantages=compute_advantages(rewards, cfg.std_floor),
        logp_old=logp_old,
        logp_ref=logp_ref,
        intention_rewards=np.asarray(s_int),
    )


def train(policy, dataset, scorer, cfg, template=None, callback=None):
    """Run GRPO on ``dataset`` and return ``(policy, log)``.

    Each step samples ``cfg.batch_size`` records, draws a group for each from
    the current policy, and applies ``cfg.update_epochs`` ascent steps on the
    batch objective. The reference policy is the step-0 snapshot, refreshed
    every ``cfg.ref_refresh`` steps when that is non-zero. ``log`` holds one
    dict per step with the keys of :data:`LOG_COLUMNS`.
    """
    dataset = list(dataset)
    if not dataset:
        raise InputError("training dataset is empty")
    sample_rng = rng_stream(cfg.seed, "sampling")
    batch_rng = rng_stream(cfg.seed, "batch")
    reference = policy.copy()
    log = []
    for step in range(cfg.steps):
        picks = batch_rng.integers(len(dataset), size=cfg.batch_size)
        groups = [
            sample_group(policy, reference, dataset[i], scorer, cfg, sample_rng, template)
            for i in picks
        ]
        objective = kl = None
        for _ in range(cfg.update_epochs):
            obj, grad, k = batch_objective(groups, cfg, policy)
            if objective is None:
                objective, kl = obj, k
            policy = policy.apply_update(grad, cfg.learning_rate)
        row = {
            "step": step + 1,
            "mean_reward": float(np.mean([g.rewards for g in groups])),
            "mean_intention_reward": float(np.mean([g.intention_rewards for g in groups])),
            "objective": float(objective),
            "kl": float(kl),
        }
        log.append(row)
        if callback is not None:
            callback(step + 1, policy, row)
        if cfg.ref_refresh and (step + 1) % cfg.ref_refresh == 0:
            reference = policy.copy()
    return policy, log


def write_log_csv(log, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in log:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float) else row[k]
                             for k in LOG_COLUMNS})


class GRPOTrainer(BaseEstimator):
    """Estimator wrapper that fits a :class:`ToyPolicy` with GRPO.

    Parameters mirror :class:`GrpoConfig`, plus the policy shape
    (``context_order``, ``n_buckets``, ``init_scale``) and reward settings.
    ``random_state`` seeds every sub-stream.

    Attributes
    ----------
    policy_ : ToyPolicy
    reference_ : ToyPolicy
        The untrained step-0 policy.
    log_ : list of dict
    """

    def __init__(self, group_size=5, clip_epsilon=0.2, kl_coeff=0.08, std_floor=1e-8,
                 temperature=0.9, steps=500, learning_rate=0.05, batch_size=24,
                 update_epochs=1, ref_refresh=0, context_order=1, n_buckets=16,
                 init_scale=0.0, reward_config=None, embedder=None, template=None,
                 random_state=0):
        self.group_size = group_size
        self.clip_epsilon = clip_epsilon
        self.kl_coeff = kl_coeff
        self.std_floor = std_floor
        self.temperature = temperature
        self.steps = steps
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.update_epochs = update_epochs
        self.ref_refresh = ref_refresh
        self.context_order = context_order
        self.n_buckets = n_buckets
        self.init_scale = init_scale
        self.reward_config = reward_config
        self.embedder = embedder
        self.template = template
        self.random_state = random_state

    def grpo_config(self):
        return GrpoConfig(
            group_size=self.group_size, clip_epsilon=self.clip_epsilon,
            kl_coeff=self.kl_coeff, std_floor=self.std_floor,
            temperature=self.temperature, steps=self.steps,
            learning_rate=self.learning_rate, batch_size=self.batch_size,
            update_epochs=self.update_epochs, ref_refresh=self.ref_refresh,
            seed=self.random_state,
        )

    def init_policy(self, vocab):
        policy = ToyPolicy(vocab, self.context_order, self.n_buckets, self.temperature)
        if self.init_scale:
            rng = rng_stream(self.random_state, "init")
            policy = policy.copy(rng.normal(0.0, self.init_scale, policy.logits.shape))
        return policy

    def fit(self, records, vocab, policy=None):
        cfg = self.grpo_config()
        scorer = RewardScorer(vocab, self.reward_config or RewardConfig(), self.embedder)
        template = self.template
        if isinstance(template, str):
            template = PromptTemplate(template)
        start = policy if policy is not None else self.init_policy(vocab)
        self.reference_ = start.copy()
        self.policy_, self.log_ = train(start, records, scorer, cfg, template)
        self.vocabulary_ = vocab
        return self

    def predict(self, observed, Z):
        """Greedy action sequences for a list of observed sequences."""
        check_is_fitted(self, "policy_")
        out = []
        for context in observed:
            _, emissions = self.policy_.greedy(context, Z)
            stop = self.policy_.stop
            out.append(tuple(self.vocabulary_.pair_from_id(e) for e in emissions if e != stop))
        return out

    def score(self, records):
        """Mean total reward of greedy outputs on ``records``."""
        check_is_fitted(self, "policy_")
        scorer = RewardScorer(self.vocabulary_, self.reward_config or RewardConfig(), self.embedder)
        vals = [
            scorer.score(self.policy_.greedy(r.observed, len(r.future))[0], r).r_total
            for r in records
        ]
        return float(np.mean(vals)) if vals else 0.0

