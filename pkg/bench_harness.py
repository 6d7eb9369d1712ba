# bench_harness.py
"""
Benchmark harness: initial-prompt settings, final test-split evaluation and
end-to-end runs that write run artifacts.
"""

import logging
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field

from data_models import Prompt, PromptOrigin, RunConfig, SplitSpec, TaskSpec, load_task, make_split
from llm_gateway import LLMGateway
from pace_errors import DataError, UsageError
from pace_langgraph import PaceOptimizer
from pace_templates import TemplateSet
from perturbation import PerturbSpec, butter_fingers
from run_artifacts import ArtifactFooter, ArtifactHeader, RunArtifact, RunArtifactWriter
from scoring import Metric, ScoreReport, score_prompt

logger = logging.getLogger(__name__)

# Enums
class PromptSetting(str, Enum):
    BEST = "best"
    MEDIUM = "medium"
    WORST = "worst"
    BUTTER_FINGERS = "butter_fingers"
    EMPTY = "empty"

class Strategy(str, Enum):
    PACE = "pace"
    RESAMPLE = "resample"

LITERAL_SETTING = "literal"

class EvalContext(BaseModel):
    """Everything needed to score prompts on a split"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    split: SplitSpec
    metric: Metric
    gateway: LLMGateway
    templates: TemplateSet = Field(default_factory=TemplateSet)
    parallelism: int = Field(default=4, ge=1)

    def score(self, prompt: Prompt, split_name: str = "val") -> ScoreReport:
        pairs = self.split.get(split_name)
        if not pairs:
            raise DataError(f"split empty: {split_name}")
        return score_prompt(prompt, pairs, self.metric, self.gateway, self.templates, self.parallelism)

# Initial prompts
class PromptSelector:
    """Initial-prompt settings over a task's human-written prompts"""

    @staticmethod
    def rank_human_prompts(task: TaskSpec, context: EvalContext) -> List[Prompt]:
        """Human prompts sorted by val score, worst first; ties keep file order"""
        prompts = [Prompt(text=hp.text, origin=PromptOrigin.HUMAN) for hp in task.human_prompts]
        scores = [context.score(prompt, "val").mean for prompt in prompts]
        order = sorted(range(len(prompts)), key=lambda i: scores[i])
        return [prompts[i] for i in order]

    @staticmethod
    def pick_human(task: TaskSpec, label: str, context: Optional[EvalContext]) -> Prompt:
        if not task.human_prompts:
            raise DataError("no human prompts in task")

        labeled = task.prompt_by_label(label)
        if labeled is not None:
            return Prompt(text=labeled.text, origin=PromptOrigin.HUMAN)
        if len(task.human_prompts) == 1:
            return Prompt(text=task.human_prompts[0].text, origin=PromptOrigin.HUMAN)
        if context is None:
            raise DataError(f"no '{label}' label and no evaluation context to rank prompts")

        ranked = PromptSelector.rank_human_prompts(task, context)
        if label == PromptSetting.WORST.value:
            return ranked[0]
        if label == PromptSetting.BEST.value:
            return ranked[-1]
        # Lower median for even counts
        return ranked[(len(ranked) - 1) // 2]

    @staticmethod
    def select_initial_prompt(
        task: TaskSpec,
        setting: str,
        context: Optional[EvalContext] = None,
        perturb: Optional[PerturbSpec] = None,
    ) -> Prompt:
        """best/medium/worst/butter_fingers/empty; any other value is the prompt text itself"""
        if setting == PromptSetting.EMPTY.value:
            return Prompt.empty()
        if setting in (PromptSetting.BEST.value, PromptSetting.MEDIUM.value, PromptSetting.WORST.value):
            return PromptSelector.pick_human(task, setting, context)
        if setting == PromptSetting.BUTTER_FINGERS.value:
            medium = PromptSelector.pick_human(task, PromptSetting.MEDIUM.value, context)
            return Prompt(text=butter_fingers(medium.text, perturb or PerturbSpec()), origin=PromptOrigin.HUMAN)
        if not setting:
            raise DataError("literal prompt must be nonempty; use the empty setting instead")
        return Prompt(text=setting, origin=PromptOrigin.HUMAN)

select_initial_prompt = PromptSelector.select_initial_prompt

def setting_name(setting: str) -> str:
    """Setting label for reports; literal prompts collapse to 'literal'"""
    known = {s.value for s in PromptSetting}
    return setting if setting in known else LITERAL_SETTING

# Evaluation
def evaluate_final(prompt: Prompt, context: EvalContext) -> ScoreReport:
    """Score on the full test split; the only place test pairs reach the backend"""
    return context.score(prompt, "test")

# Runs
def run_optimization(
    task: TaskSpec,
    setting: str,
    config: RunConfig,
    out_dir: str,
    templates: Optional[TemplateSet] = None,
    strategy: str = Strategy.PACE.value,
    gateway: Optional[LLMGateway] = None,
    perturb: Optional[PerturbSpec] = None,
) -> RunArtifact:
    """Optimize one task from one initial-prompt setting and write its run artifact"""
    templates = templates or TemplateSet()
    gateway = gateway or LLMGateway(config.backend)
    split = make_split(task, config.split_ratios, config.seed)
    context = EvalContext(
        split=split,
        metric=Metric.of(task.metric),
        gateway=gateway,
        templates=templates,
        parallelism=config.parallelism,
    )
    p0 = select_initial_prompt(task, setting, context, perturb or PerturbSpec(seed=config.seed))

    writer = RunArtifactWriter(out_dir)
    writer.write_header(
        ArtifactHeader(
            task_name=task.name,
            setting=setting_name(setting),
            strategy=Strategy(strategy).value,
            seed=config.seed,
            config=config.model_dump(mode="json", exclude={"backend"}),
            template_hashes=templates.hashes(),
            backend=config.backend.model_dump(mode="json"),
        )
    )

    optimizer = PaceOptimizer(task, split, config, gateway, templates)
    if strategy == Strategy.RESAMPLE.value:
        best, record = optimizer.resample_baseline(p0)
        writer.append_record(record)
    else:
        best, _ = optimizer.pace_optimize(p0, on_record=writer.append_record)

    initial_test = evaluate_final(p0, context).mean
    final_test = evaluate_final(best.prompt, context).mean
    writer.write_footer(
        ArtifactFooter(
            initial_prompt=p0.text,
            initial_val_score=optimizer.score(p0),
            initial_test_score=initial_test,
            final_prompt=best.prompt.text,
            val_score=best.score,
            test_score=final_test,
        )
    )
    logger.info(f"✅ {task.name}/{setting_name(setting)}: test {initial_test:.2f} -> {final_test:.2f}")
    return RunArtifact.load(out_dir)

def run_benchmark(
    task_paths: Sequence[str],
    settings: Sequence[str],
    config: RunConfig,
    out_dir: str,
    templates: Optional[TemplateSet] = None,
    repeats: int = 1,
    strategy: str = Strategy.PACE.value,
) -> List[RunArtifact]:
    """Every task x setting x repeat; repeat r runs with seed + r"""
    if repeats < 1:
        raise UsageError(f"repeats must be at least 1, got {repeats}")

    gateway = LLMGateway(config.backend)
    artifacts = []
    for path in task_paths:
        task = load_task(path)
        for setting in settings:
            for r in range(repeats):
                run_config = config.model_copy(update={"seed": config.seed + r})
                run_dir = Path(out_dir) / f"{task.name}-{setting_name(setting)}-r{r}"
                logger.info(f"🔍 Benchmark run {run_dir.name}")
                artifacts.append(
                    run_optimization(
                        task, setting, run_config, str(run_dir), templates, strategy, gateway
                    )
                )
    return artifacts
