# data_models.py
"""
Core domain model for PACE: tasks, demonstration pairs, prompts, candidate
records, splits and run configuration.
"""

import json
import math
import random
from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from llm_gateway import BackendConfig
from pace_errors import DataError

KNOWN_METRICS = ("exact_match", "contains", "token_f1", "set_match", "bleu")
KNOWN_LABELS = ("best", "medium", "worst", "unlabeled")

# Enums
class PromptOrigin(str, Enum):
    HUMAN = "human"
    EMPTY = "empty"
    GENERATED = "generated"
    EDITED = "edited"

class RunMode(str, Enum):
    """full PACE, or one of the two ablations"""
    FULL = "full"
    NO_CRITIC = "no_critic"
    NO_ACTOR_CRITIC = "no_actor_critic"

def clamp_score(value: Optional[float]) -> Optional[float]:
    if value is None:
        return None
    return min(1.0, max(0.0, float(value)))

# Task models
class DemoPair(BaseModel):
    """An input X with its acceptable reference outputs Y"""
    model_config = ConfigDict(frozen=True)

    input: str = Field(description="Task input; may be empty")
    outputs: Tuple[str, ...] = Field(description="Acceptable reference outputs")

class HumanPrompt(BaseModel):
    """A human-written instruction with its quality label"""
    model_config = ConfigDict(frozen=True)

    text: str
    label: str = Field(default="unlabeled", description="best, medium, worst or unlabeled")

class TaskSpec(BaseModel):
    """A benchmark task with demonstration data

    Fields are deliberately lenient so that validate_task can report every
    violation instead of failing on the first one.
    """
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    name: str = Field(description="Task identifier")
    metric: str = Field(description="Metric identifier")
    examples: Tuple[DemoPair, ...] = Field(default=(), description="Ordered demonstration pairs")
    human_prompts: Tuple[HumanPrompt, ...] = Field(
        default=(), alias="prompts", description="Labeled human-written prompts"
    )

    def prompt_by_label(self, label: str) -> Optional[HumanPrompt]:
        for prompt in self.human_prompts:
            if prompt.label == label:
                return prompt
        return None

# Prompt models
class Prompt(BaseModel):
    """A task instruction p"""
    model_config = ConfigDict(frozen=True)

    text: str = Field(default="")
    origin: PromptOrigin = Field(default=PromptOrigin.HUMAN)

    @model_validator(mode="after")
    def _empty_only_when_origin_empty(self) -> "Prompt":
        if not self.text and self.origin != PromptOrigin.EMPTY:
            raise ValueError("prompt text may be empty only when origin is empty")
        return self

    @classmethod
    def empty(cls) -> "Prompt":
        return cls(text="", origin=PromptOrigin.EMPTY)

class CandidateRecord(BaseModel):
    """A prompt with its score and lineage"""
    model_config = ConfigDict(frozen=True)

    prompt: Prompt
    score: Optional[float] = Field(default=None, description="Score in [0,1]; None when unscored")
    iteration: int = Field(default=0, ge=0, description="Iteration that produced the prompt")
    parent_critique_ids: Tuple[str, ...] = Field(default=())

    @field_validator("score")
    @classmethod
    def _clamp(cls, value: Optional[float]) -> Optional[float]:
        return clamp_score(value)

    @property
    def scored(self) -> bool:
        return self.score is not None

class SplitSpec(BaseModel):
    """Train / val / test partition of a task's examples"""
    model_config = ConfigDict(frozen=True)

    train: Tuple[DemoPair, ...] = Field(default=())
    val: Tuple[DemoPair, ...] = Field(default=())
    test: Tuple[DemoPair, ...] = Field(default=())
    seed: int = Field(default=0)

    def get(self, name: str) -> Tuple[DemoPair, ...]:
        if name not in ("train", "val", "test"):
            raise DataError(f"unknown split: {name}")
        return getattr(self, name)

# Run configuration
class Config:
    """Default run settings (temperature 0, top_p 1, 512 tokens, n=4, 2 candidates, 1 iteration)"""
    N_AGENTS = 4
    CANDIDATES_PER_ITER = 2
    MAX_ITERS = 1
    # Iteration studies rarely gain past 3 iterations
    RECOMMENDED_MAX_ITERS = 3
    EVAL_SUBSET_SIZE = 50
    PARALLELISM = 4
    SPLIT_RATIOS = (0.4, 0.3, 0.3)
    PERTURB_RATE = 0.15

class RunConfig(BaseModel):
    """Optimizer hyperparameters"""
    n_agents: int = Field(default=Config.N_AGENTS, ge=1, description="Actors/critics per iteration")
    candidates_per_iter: int = Field(default=Config.CANDIDATES_PER_ITER, ge=1)
    max_iters: int = Field(default=Config.MAX_ITERS, ge=1)
    eval_subset_size: int = Field(
        default=Config.EVAL_SUBSET_SIZE, ge=1, description="Cap on val pairs used per candidate"
    )
    seed: int = Field(default=0)
    mode: RunMode = Field(default=RunMode.FULL)
    update_temperature: Optional[float] = Field(
        default=None, ge=0.0, description="Temperature override for update calls only"
    )
    parallelism: int = Field(default=Config.PARALLELISM, ge=1, description="Max concurrent backend calls")
    early_stop: bool = Field(default=True, description="Stop after an iteration without improvement")
    split_ratios: Tuple[float, float, float] = Field(default=Config.SPLIT_RATIOS)
    backend: BackendConfig = Field(default_factory=BackendConfig)

# Task operations
class TaskProcessor:
    """Loading, validation and splitting of tasks"""

    @staticmethod
    def validate_task(task: TaskSpec) -> List[str]:
        """Every violated TaskSpec invariant as '<field>: <rule>'"""
        violations = []
        if not task.name.strip():
            violations.append("name: nonempty violated")
        if task.metric not in KNOWN_METRICS:
            violations.append("metric: unknown identifier")
        if len(task.examples) < 1:
            violations.append("examples: length ≥ 1 violated")
        for i, pair in enumerate(task.examples):
            if len(pair.outputs) < 1:
                violations.append(f"examples[{i}].outputs: nonempty violated")
        for i, prompt in enumerate(task.human_prompts):
            if not prompt.text.strip():
                violations.append(f"prompts[{i}].text: nonempty violated")
            if prompt.label not in KNOWN_LABELS:
                violations.append(f"prompts[{i}].label: unknown label")
        return violations

    @staticmethod
    def load_task(path: str) -> TaskSpec:
        """Parse and validate a JSON task file"""
        try:
            with open(path, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
            task = TaskSpec.model_validate(raw)
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise DataError(f"cannot read task file {path}: {e}") from e

        violations = TaskProcessor.validate_task(task)
        if violations:
            raise DataError(f"invalid task {path}: {'; '.join(violations)}")
        return task

    @staticmethod
    def make_split(
        task: TaskSpec, ratios: Tuple[float, float, float] = (0.4, 0.3, 0.3), seed: int = 0
    ) -> SplitSpec:
        """Seeded partition; val/test sizes are floored, train takes the remainder"""
        if len(ratios) != 3 or any(r < 0 for r in ratios):
            raise DataError("split ratios must be three nonnegative numbers")
        if abs(sum(ratios) - 1.0) > 1e-9:
            raise DataError(f"split ratios must sum to 1, got {sum(ratios)}")

        total = len(task.examples)
        if total < sum(1 for r in ratios if r > 0):
            raise DataError("insufficient examples")

        # Tolerance keeps e.g. 0.29 * 100 from flooring to 28
        n_val = math.floor(ratios[1] * total + 1e-9)
        n_test = math.floor(ratios[2] * total + 1e-9)
        n_train = total - n_val - n_test

        order = list(range(total))
        random.Random(seed).shuffle(order)
        pairs = [task.examples[i] for i in order]

        return SplitSpec(
            train=tuple(pairs[:n_train]),
            val=tuple(pairs[n_train:n_train + n_val]),
            test=tuple(pairs[n_train + n_val:]),
            seed=seed,
        )

validate_task = TaskProcessor.validate_task
load_task = TaskProcessor.load_task
make_split = TaskProcessor.make_split
