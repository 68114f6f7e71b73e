"""Policy-gradient training with curriculum stages and checkpointing.

Each batch samples k trajectories per input, rewards them against the
gold meanings, subtracts the batch-mean baseline, and backpropagates one
summed surrogate loss. The three parameter groups (lexical interpreter,
composer, algebraic interpreter) keep their own learning rates on top of
shared AdaDelta state. Training is reproducible from (seed, config,
data): the metrics stream carries no timestamps, and checkpoints freeze
parameters, optimizer accumulators, RNG state, and the mid-epoch cursor.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import diffgraph as dg
from .dataset import Sample, curriculum_filter, strip_gold
from .diffgraph import GROUPS, ParamStore, Tensor, backward
from .evaluation import greedy_accuracy
from .model import ModelConfig, ParserModel, Vocab
from .reward import RewardBreakdown, total_reward
from .semalg import EvaluationFailure, evaluate

logger = logging.getLogger(__name__)

TRAINER_FORMAT = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    # model
    hidden_dim: int = 64
    nonterminals: int = 3
    abstraction: bool = True
    semantic_locality: bool = True
    # reward
    alpha: float = 0.5
    # policy-gradient optimization
    lr_lexical: float = 1.0
    lr_composer: float = 0.5
    lr_algebraic: float = 0.1
    rho: float = 0.9
    epsilon: float = 1e-6
    grad_clip: float = 5.0
    batch_size: int = 8
    samples_per_input: int = 4
    entropy_coef: float = 0.0
    baseline: str = "batch-mean"  # or "ema"
    ema_decay: float = 0.9
    # schedule
    curriculum_cutoff: int = 0  # 0 disables curriculum
    max_epochs_stage1: int = 30
    max_epochs_stage2: int = 30
    patience: int = 5
    eval_every: int = 1
    seed: int = 0

    def validate(self) -> list[str]:
        errors = []
        if not 0.0 <= self.alpha <= 1.0:
            errors.append(f"alpha must lie in [0, 1], got {self.alpha}")
        for name in ("lr_lexical", "lr_composer", "lr_algebraic"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive")
        if not 0.0 <= self.rho < 1.0:
            errors.append(f"rho must lie in [0, 1), got {self.rho}")
        if self.epsilon <= 0:
            errors.append("epsilon must be positive")
        if self.batch_size < 1:
            errors.append("batch_size must be >= 1")
        if self.samples_per_input < 1:
            errors.append("samples_per_input must be >= 1")
        if self.curriculum_cutoff < 0:
            errors.append("curriculum_cutoff must be >= 0 (0 disables)")
        if self.baseline not in ("batch-mean", "ema"):
            errors.append(f"unknown baseline {self.baseline!r}")
        if self.hidden_dim < 2:
            errors.append("hidden_dim must be >= 2")
        if self.nonterminals < 1:
            errors.append("nonterminals must be >= 1")
        if self.max_epochs_stage1 < 1 or self.max_epochs_stage2 < 1:
            errors.append("stage epoch limits must be >= 1")
        if self.patience < 1:
            errors.append("patience must be >= 1")
        if self.eval_every < 1:
            errors.append("eval_every must be >= 1")
        return errors

    def model_config(self) -> ModelConfig:
        return ModelConfig(hidden_dim=self.hidden_dim,
                           nonterminals=self.nonterminals,
                           abstraction=self.abstraction,
                           semantic_locality=self.semantic_locality)

    def group_lrs(self) -> dict[str, float]:
        return {"lexical": self.lr_lexical, "composer": self.lr_composer,
                "algebraic": self.lr_algebraic}

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        cfg = cls()
        errors = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    errors.append(f"line {lineno}: expected key = value")
                    continue
                key, _, value = (p.strip() for p in line.partition("="))
                err = cfg.set_key(key, value)
                if err:
                    errors.append(f"line {lineno}: {err}")
        if errors:
            raise TrainingError("; ".join(errors))
        return cfg

    def set_key(self, key: str, value: str) -> str | None:
        if not hasattr(self, key):
            return f"unknown key {key!r}"
        current = getattr(self, key)
        try:
            if isinstance(current, bool):
                if value.lower() not in ("true", "false", "1", "0"):
                    return f"bad boolean for {key!r}: {value!r}"
                setattr(self, key, value.lower() in ("true", "1"))
            elif isinstance(current, int):
                setattr(self, key, int(value))
            elif isinstance(current, float):
                setattr(self, key, float(value))
            else:
                setattr(self, key, value)
        except ValueError:
            return f"bad value for {key!r}: {value!r}"
        return None


@dataclass
class Trajectory:
    sample: Sample
    tree: object
    assignment: dict
    log_probs_composer: list[Tensor]
    log_probs_lexical: list[Tensor]
    log_probs_algebraic: list[Tensor]
    entropies: list[Tensor]
    reward: RewardBreakdown
    meaning: object

    def log_prob_terms(self) -> list[Tensor]:
        return (self.log_probs_composer + self.log_probs_lexical
                + self.log_probs_algebraic)


def adadelta_delta(grad: np.ndarray, eg: np.ndarray, ex: np.ndarray,
                   rho: float, eps: float) -> np.ndarray:
    """One AdaDelta step: updates eg/ex in place, returns the raw delta
    (caller scales by the group learning rate)."""
    eg *= rho
    eg += (1.0 - rho) * grad * grad
    delta = np.sqrt((ex + eps) / (eg + eps)) * grad
    ex *= rho
    ex += (1.0 - rho) * delta * delta
    return delta


class AdaDelta:
    """Per-parameter accumulators with per-group learning rates."""

    def __init__(self, store: ParamStore, lrs: dict[str, float],
                 rho: float = 0.9, eps: float = 1e-6) -> None:
        self.store = store
        self.lrs = dict(lrs)
        self.rho = rho
        self.eps = eps
        self.sq_grad: dict[str, np.ndarray] = {}
        self.sq_delta: dict[str, np.ndarray] = {}
        for g, name, t in store.named():
            key = f"{g}/{name}"
            self.sq_grad[key] = np.zeros_like(t.data)
            self.sq_delta[key] = np.zeros_like(t.data)

    def apply(self) -> None:
        for g, name, t in self.store.named():
            if t._grad is None:
                continue  # zero gradient: zero update
            key = f"{g}/{name}"
            delta = adadelta_delta(t._grad, self.sq_grad[key],
                                   self.sq_delta[key], self.rho, self.eps)
            t.data -= self.lrs[g] * delta

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for key, arr in self.sq_grad.items():
            out[f"opt/eg/{key}"] = arr
        for key, arr in self.sq_delta.items():
            out[f"opt/ex/{key}"] = arr
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for key in self.sq_grad:
            self.sq_grad[key][...] = arrays[f"opt/eg/{key}"]
            self.sq_delta[key][...] = arrays[f"opt/ex/{key}"]


def group_grad_norms(store: ParamStore) -> dict[str, float]:
    norms = {}
    for g in GROUPS:
        total = 0.0
        for _, t in store.group_tensors(g):
            if t._grad is not None:
                total += float((t._grad * t._grad).sum())
        norms[g] = float(np.sqrt(total))
    return norms


def clip_global_norm(store: ParamStore, max_norm: float) -> float:
    total = float(np.sqrt(sum(n * n
                              for n in group_grad_norms(store).values())))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for _, _, t in store.named():
            if t._grad is not None:
                t._grad *= factor
    return total


# ---------------------------------------------------------------------------
# Rollouts and the policy-gradient step
# ---------------------------------------------------------------------------

def sample_feasible(model: ParserModel, sample: Sample) -> bool:
    """At least one span of the utterance hits the phrase table."""
    tokens = sample.tokens
    max_n = model.table.max_ngram
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            if model.table.lookup(tokens[i:i + n]):
                return True
    return False


def rollout(model: ParserModel, samples: list[Sample], k: int,
            rng: np.random.Generator, alpha: float,
            want_entropy: bool = False) -> tuple[list[Trajectory], int]:
    """k sampled trajectories per input; infeasible inputs are skipped."""
    trajectories: list[Trajectory] = []
    skipped = 0
    for sample in samples:
        if not sample_feasible(model, sample):
            logger.warning("skipping infeasible input (no phrase-table "
                           "hit): %s", sample.utterance)
            skipped += 1
            continue
        for _ in range(k):
            comp, interp = model.parse(sample.tokens, "sampled", rng,
                                       want_entropy=want_entropy)
            meaning = evaluate(model.domain, comp.tree, interp.assignment,
                               sample.tokens)
            rb = total_reward(meaning, sample.meaning, alpha=alpha)
            trajectories.append(Trajectory(
                sample=sample,
                tree=comp.tree,
                assignment=interp.assignment,
                log_probs_composer=comp.log_probs,
                log_probs_lexical=interp.log_probs_lexical,
                log_probs_algebraic=interp.log_probs_algebraic,
                entropies=comp.entropies + interp.entropies,
                reward=rb,
                meaning=meaning,
            ))
    return trajectories, skipped


def _tensor_sum(terms: list[Tensor]) -> Tensor:
    acc = terms[0]
    for t in terms[1:]:
        acc = dg.add(acc, t)
    return acc


def reinforce_step(model: ParserModel, optimizer: AdaDelta,
                   trajectories: list[Trajectory], config: TrainConfig,
                   baseline_override: float | None = None,
                   apply_update: bool = True) -> dict:
    """One policy-gradient update over a batch of trajectories.

    With ``apply_update=False`` the gradients are left in place for
    inspection and no parameter changes.
    """
    if not trajectories:
        raise TrainingError("reinforce_step needs at least one trajectory")
    rewards = np.array([t.reward.total for t in trajectories])
    baseline = float(rewards.mean()) if baseline_override is None \
        else baseline_override
    advantages = rewards - baseline

    loss_terms: list[Tensor] = []
    for traj, adv in zip(trajectories, advantages):
        if adv == 0.0:
            continue  # exactly zero contribution
        terms = traj.log_prob_terms()
        if not terms:
            continue  # fully forced trajectory: nothing to reinforce
        loss_terms.append(dg.scale(_tensor_sum(terms), -float(adv)))
    if config.entropy_coef > 0.0:
        ent_terms = [t for traj in trajectories for t in traj.entropies]
        if ent_terms:
            loss_terms.append(dg.scale(_tensor_sum(ent_terms),
                                       -config.entropy_coef))

    metrics = {
        "n_trajectories": len(trajectories),
        "mean_reward": float(rewards.mean()),
        "baseline": baseline,
        "advantages_sum": float(advantages.sum()),
        "loss": 0.0,
        "grad_norm": 0.0,
        "grad_norms": {g: 0.0 for g in GROUPS},
    }
    if not loss_terms:
        return metrics  # all-equal rewards: exactly zero update

    loss = _tensor_sum(loss_terms)
    backward(loss)
    norms = group_grad_norms(model.store)
    if not all(np.isfinite(v) for v in norms.values()):
        raise TrainingError(
            f"non-finite gradients: norms={norms}, rewards="
            f"{rewards.tolist()}")
    metrics.update(loss=float(loss.data), grad_norms=norms)
    if apply_update:
        total = clip_global_norm(model.store, config.grad_clip)
        optimizer.apply()
        model.store.zero_grad()
        metrics["grad_norm"] = total
    else:
        metrics["grad_norm"] = float(
            np.sqrt(sum(n * n for n in norms.values())))
    return metrics


# ---------------------------------------------------------------------------
# The training loop
# ---------------------------------------------------------------------------

@dataclass
class StageState:
    name: str
    epoch: int = 0
    batch: int = 0
    perm: list[int] | None = None
    best_metric: float = -1.0
    since_best: int = 0
    done: bool = False
    # partial-epoch reward accumulators (survive mid-epoch resume)
    reward_sum: float = 0.0
    reward_n: int = 0


@dataclass
class TrainState:
    stage_idx: int = 0
    stages: list[StageState] = field(default_factory=list)
    best_dev_acc: float = -1.0
    ema_baseline: float | None = None
    finished: bool = False


@dataclass
class TrainReport:
    epochs: list[dict]
    best_dev_acc: float
    test_acc: float | None
    n_parameters: int
    skipped_inputs: int

    def as_dict(self) -> dict:
        return asdict(self)


class Trainer:
    """Stage-driven REINFORCE loop with deterministic resume."""

    def __init__(self, config: TrainConfig, train: list[Sample],
                 dev: list[Sample], test: list[Sample] | None = None,
                 model: ParserModel | None = None,
                 metrics_path=None) -> None:
        errors = config.validate()
        if errors:
            raise TrainingError("; ".join(errors))
        self.config = config
        self.train_samples = strip_gold(train)
        self.dev_samples = dev
        self.test_samples = test
        self.metrics_path = metrics_path
        self.rng = np.random.default_rng(config.seed)
        if model is None:
            from .dataset import infer_domain
            from .phrasetable import build as build_table
            vocab = Vocab.from_samples(self.train_samples)
            domain = infer_domain(self.train_samples)
            table = build_table(
                [(s.tokens, s.meaning) for s in self.train_samples], domain)
            model = ParserModel(config.model_config(), vocab, domain, table,
                                init_seed=config.seed)
        self.model = model
        self.optimizer = AdaDelta(model.store, config.group_lrs(),
                                  rho=config.rho, eps=config.epsilon)
        self.state = TrainState(stages=self._make_stages())
        self.epoch_records: list[dict] = []
        self.skipped_total = 0

    def _make_stages(self) -> list[StageState]:
        cutoff = self.config.curriculum_cutoff
        stages = []
        if cutoff:
            subset = curriculum_filter(self.train_samples, cutoff)
            if subset and len(subset) < len(self.train_samples):
                stages.append(StageState(name="curriculum"))
        stages.append(StageState(name="full"))
        return stages

    def _stage_data(self, stage: StageState) -> list[Sample]:
        if stage.name == "curriculum":
            return curriculum_filter(self.train_samples,
                                     self.config.curriculum_cutoff)
        return self.train_samples

    def _emit(self, record: dict) -> None:
        self.epoch_records.append(record)
        if self.metrics_path is not None:
            import json
            with open(self.metrics_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _baseline_override(self, batch_mean: float) -> float | None:
        if self.config.baseline != "ema":
            return None
        prev = self.state.ema_baseline
        value = batch_mean if prev is None else \
            self.config.ema_decay * prev + (1 - self.config.ema_decay) * batch_mean
        self.state.ema_baseline = value
        return value

    # -- checkpointing ---------------------------------------------------

    def save_checkpoint(self, path, note: str = "") -> None:
        state = {
            "trainer_format": TRAINER_FORMAT,
            "train_config": asdict(self.config),
            "state": {
                "stage_idx": self.state.stage_idx,
                "stages": [asdict(s) for s in self.state.stages],
                "best_dev_acc": self.state.best_dev_acc,
                "ema_baseline": self.state.ema_baseline,
                "finished": self.state.finished,
                "skipped_total": self.skipped_total,
                "epoch_records": self.epoch_records,
            },
            "rng_state": self.rng.bit_generator.state,
            "note": note,
        }
        self.model.save(path, extra_header=state,
                        extra_arrays=self.optimizer.to_arrays())

    @classmethod
    def resume(cls, path, train: list[Sample], dev: list[Sample],
               test: list[Sample] | None = None,
               metrics_path=None) -> "Trainer":
        model, header, rest = ParserModel.load(path)
        if header.get("trainer_format") != TRAINER_FORMAT:
            raise dg.CheckpointError(
                f"trainer state format {header.get('trainer_format')} "
                f"not supported (this build reads {TRAINER_FORMAT})")
        config = TrainConfig(**header["train_config"])
        trainer = cls(config, train, dev, test, model=model,
                      metrics_path=metrics_path)
        trainer.optimizer.load_arrays(rest)
        st = header["state"]
        trainer.state.stage_idx = st["stage_idx"]
        trainer.state.stages = [StageState(**s) for s in st["stages"]]
        trainer.state.best_dev_acc = st["best_dev_acc"]
        trainer.state.ema_baseline = st["ema_baseline"]
        trainer.state.finished = st["finished"]
        trainer.skipped_total = st["skipped_total"]
        trainer.epoch_records = list(st["epoch_records"])
        trainer.rng.bit_generator.state = header["rng_state"]
        return trainer

    # -- main loop ---------------------------------------------------------

    def run(self, checkpoint_dir=None, save_every_batches: int = 0,
            stop_after_batches: int | None = None) -> TrainReport | None:
        """Run to completion, or process at most ``stop_after_batches``
        batches and return None (state saved for resume)."""
        cfg = self.config
        self._budget = stop_after_batches
        while self.state.stage_idx < len(self.state.stages):
            stage = self.state.stages[self.state.stage_idx]
            data = self._stage_data(stage)
            max_epochs = cfg.max_epochs_stage1 if stage.name == "curriculum" \
                else cfg.max_epochs_stage2
            while not stage.done:
                if stage.epoch >= max_epochs:
                    break
                interrupted = self._run_epoch(stage, data, checkpoint_dir,
                                              save_every_batches)
                if interrupted:
                    if checkpoint_dir is not None:
                        self.save_checkpoint(checkpoint_dir / "latest.npz",
                                             note="interrupted")
                    return None
            self.state.stage_idx += 1
        self.state.finished = True

        test_acc = None
        if checkpoint_dir is not None:
            best_path = checkpoint_dir / "best.npz"
            if best_path.exists() and self.state.best_dev_acc >= 0:
                model, _, _ = ParserModel.load(best_path)
                self.model = model
            self.save_checkpoint(checkpoint_dir / "final.npz", note="final")
        if self.test_samples:
            test_acc = greedy_accuracy(self.model, self.test_samples)
        return TrainReport(
            epochs=self.epoch_records,
            best_dev_acc=max(self.state.best_dev_acc, 0.0),
            test_acc=test_acc,
            n_parameters=self.model.store.n_parameters(),
            skipped_inputs=self.skipped_total,
        )

    def _run_epoch(self, stage: StageState, data: list[Sample],
                   checkpoint_dir, save_every_batches: int) -> bool:
        """One epoch (or its remainder after resume); True if the batch
        budget ran out mid-epoch."""
        cfg = self.config
        n = len(data)
        if n == 0:
            raise TrainingError(f"stage {stage.name!r} has no samples")
        if stage.perm is None:
            stage.perm = [int(i) for i in self.rng.permutation(n)]
            stage.batch = 0
            stage.reward_sum = 0.0
            stage.reward_n = 0
        n_batches = (n + cfg.batch_size - 1) // cfg.batch_size
        for b in range(stage.batch, n_batches):
            if self._budget is not None and self._budget <= 0:
                return True
            batch = [data[i] for i in
                     stage.perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            trajs, skipped = rollout(self.model, batch,
                                     cfg.samples_per_input, self.rng,
                                     cfg.alpha,
                                     want_entropy=cfg.entropy_coef > 0)
            self.skipped_total += skipped
            if trajs:
                batch_mean = float(np.mean([t.reward.total for t in trajs]))
                metrics = reinforce_step(
                    self.model, self.optimizer, trajs, cfg,
                    baseline_override=self._baseline_override(batch_mean))
                stage.reward_sum += (metrics["mean_reward"]
                                     * metrics["n_trajectories"])
                stage.reward_n += metrics["n_trajectories"]
            stage.batch = b + 1
            if self._budget is not None:
                self._budget -= 1
            if (checkpoint_dir is not None and save_every_batches
                    and stage.batch % save_every_batches == 0):
                self.save_checkpoint(checkpoint_dir / "latest.npz",
                                     note="mid-epoch")
        # epoch finished
        stage.perm = None
        stage.batch = 0
        stage.epoch += 1
        record = {
            "stage": stage.name,
            "epoch": stage.epoch,
            "mean_reward": (stage.reward_sum / stage.reward_n)
            if stage.reward_n else 0.0,
            "dev_acc": None,
            "skipped": self.skipped_total,
        }
        if stage.epoch % cfg.eval_every == 0 and self.dev_samples:
            acc = greedy_accuracy(self.model, self.dev_samples)
            record["dev_acc"] = acc
            if acc > stage.best_metric:
                stage.best_metric = acc
                stage.since_best = 0
            else:
                stage.since_best += 1
            if acc > self.state.best_dev_acc:
                self.state.best_dev_acc = acc
                if checkpoint_dir is not None:
                    self.save_checkpoint(checkpoint_dir / "best.npz",
                                         note="best-dev")
            if stage.since_best >= cfg.patience:
                stage.done = True
            if acc == 1.0:
                stage.done = True
        self._emit(record)
        if checkpoint_dir is not None:
            self.save_checkpoint(checkpoint_dir / "latest.npz", note="epoch")


def train(config: TrainConfig, train_samples: list[Sample],
          dev_samples: list[Sample], test_samples: list[Sample] | None = None,
          checkpoint_dir=None, metrics_path=None,
          save_every_batches: int = 0) -> TrainReport:
    trainer = Trainer(config, train_samples, dev_samples, test_samples,
                      metrics_path=metrics_path)
    if checkpoint_dir is not None:
        from pathlib import Path
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    return trainer.run(checkpoint_dir=checkpoint_dir,
                       save_every_batches=save_every_batches)
