# pace_langgraph.py
"""
PACE actor-critic prompt editing as a LangGraph workflow.

Each iteration samples n training pairs, runs n actors and n critics
concurrently, asks the update template for candidate prompts, scores them on
a seeded validation subset and keeps the best prompt seen so far.
"""

import logging
import random
import threading
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

from langgraph.graph import END, StateGraph
from langgraph.types import Command

from data_models import (
    CandidateRecord,
    DemoPair,
    Prompt,
    PromptOrigin,
    RunConfig,
    RunMode,
    SplitSpec,
    TaskSpec,
)
from llm_gateway import ChatResponse, LLMGateway, RequestTag, fan_out
from optimizer_data_models import (
    ActorAction,
    Critique,
    CritiqueBatch,
    IterationRecord,
    PaceState,
    UpdateCall,
)
from pace_errors import BackendError, CriticLeakError, DataError, EmptyPromptError
from pace_templates import (
    PromptTemplates,
    TemplateSet,
    extract_prompt,
    render_actor,
    render_critic,
    render_update,
)
from scoring import Metric, score_prompt

logger = logging.getLogger(__name__)

# Graph steps per iteration, plus headroom for the entry step
STEPS_PER_ITERATION = 6

class PaceOptimizer:
    """Actor-critic prompt optimizer for one task and split"""

    def __init__(
        self,
        task: TaskSpec,
        split: SplitSpec,
        config: Optional[RunConfig] = None,
        gateway: Optional[LLMGateway] = None,
        templates: Optional[TemplateSet] = None,
    ):
        self.task = task
        self.split = split
        self.config = config or RunConfig()
        self.gateway = gateway or LLMGateway(self.config.backend)
        self.templates = templates or TemplateSet()
        self.metric = Metric.of(task.metric)

        self._test_pairs = set(split.test)
        self._train_val_pairs = set(split.train) | set(split.val)
        self._scores: Dict[str, float] = {}
        self._scores_lock = threading.Lock()
        self._eval_pairs: Optional[Tuple[DemoPair, ...]] = None

        self.graph = self._build_graph()

    def _build_graph(self) -> StateGraph:
        """Build the iteration workflow; select_incumbent loops back or ends"""
        workflow = StateGraph(PaceState)

        # Add nodes
        workflow.add_node("sample_pairs", self.sample_pairs)
        workflow.add_node("run_actors", self.run_actors)
        workflow.add_node("run_critics", self.run_critics)
        workflow.add_node("update_candidates", self.update_candidates)
        workflow.add_node("score_candidates", self.score_candidates)
        workflow.add_node("select_incumbent", self.select_incumbent)

        # Set entry point
        workflow.set_entry_point("sample_pairs")

        return workflow.compile()

    # Roles
    def act(self, prompt: Prompt, pair: DemoPair, agent_index: int = 1) -> ActorAction:
        """Execute the prompt on one input with default decoding"""
        content = render_actor(prompt, pair.input, self.templates)
        response = self._complete(RequestTag.ACTOR, content, "agent", agent_index)
        return ActorAction(
            pair=pair,
            rendered_request=content,
            action=response.content,
            agent_index=agent_index,
            fingerprint=response.fingerprint,
        )

    def criticize(self, prompt: Prompt, action: ActorAction, iteration: int = 0) -> Critique:
        """Compare the action against ground truth and ask for advice"""
        if action.pair in self._test_pairs and action.pair not in self._train_val_pairs:
            raise CriticLeakError()

        content = render_critic(
            prompt, action.pair.input, action.action, action.pair.outputs, self.templates
        )
        response = self._complete(RequestTag.CRITIC, content, "agent", action.agent_index)
        if not response.content.strip():
            raise BackendError("empty critique", index=action.agent_index).tagged(
                "agent", action.agent_index
            )
        return Critique(
            id=f"t{iteration}-a{action.agent_index}",
            agent_index=action.agent_index,
            text=response.content,
            source_action=action,
            rendered_request=content,
            fingerprint=response.fingerprint,
        )

    def update_prompt(self, prompt: Prompt, batch: CritiqueBatch, k: int) -> List[Prompt]:
        """k candidate prompts from the critique batch, deduplicated"""
        advice = [(critique.id, critique.text) for critique in batch.critiques]
        calls = self._update_calls(prompt, advice, k, batch.iteration, "Advice")
        return [candidate for candidate, _ in self._collect(prompt, calls)]

    def paraphrase(self, prompt: Prompt, k: int) -> List[UpdateCall]:
        """Paraphrase chain: call j rewrites the text produced by call j-1"""
        calls: List[UpdateCall] = []
        current = prompt
        for j in range(1, k + 1):
            content = PromptTemplates.render_update_block(current, "", self.templates)
            response = self._complete(
                RequestTag.UPDATE, content, "candidate", j, self.config.update_temperature
            )
            extracted = self._extract(response)
            calls.append(
                UpdateCall(
                    candidate_index=j,
                    rendered_request=content,
                    fingerprint=response.fingerprint,
                    extracted_text=extracted,
                )
            )
            if extracted is not None:
                current = Prompt(text=extracted, origin=PromptOrigin.EDITED)
        return calls

    # Scoring
    def eval_pairs(self) -> Tuple[DemoPair, ...]:
        """One seeded val subset per run, capped at eval_subset_size"""
        if self._eval_pairs is None:
            val = self.split.val
            if not val:
                raise DataError("split empty: val")
            cap = self.config.eval_subset_size
            if len(val) > cap:
                rng = random.Random(f"{self.config.seed}:eval")
                chosen = sorted(rng.sample(range(len(val)), cap))
                val = tuple(val[i] for i in chosen)
            self._eval_pairs = tuple(val)
        return self._eval_pairs

    def score(self, prompt: Prompt) -> float:
        """Mean metric on the eval subset; memoized by prompt text"""
        with self._scores_lock:
            if prompt.text in self._scores:
                return self._scores[prompt.text]

        report = score_prompt(
            prompt, self.eval_pairs(), self.metric, self.gateway, self.templates,
            parallelism=self.config.parallelism,
        )
        with self._scores_lock:
            self._scores[prompt.text] = report.mean
        return report.mean

    # Graph nodes
    def sample_pairs(self, state: PaceState) -> Command[Literal["run_actors", "update_candidates"]]:
        """Draw n training pairs, re-seeded per iteration"""
        t = state["iteration"]
        incumbent = state["incumbent"]
        mode = self.config.mode

        logger.info(f"🚀 Iteration {t} ({mode.value}), incumbent score {incumbent.score:.3f}")

        reset = {
            "sampled_pairs": [],
            "actions": [],
            "critiques": None,
            "update_calls": [],
            "candidates": [],
            "warnings": [],
        }
        if mode == RunMode.NO_ACTOR_CRITIC:
            return Command(update=reset, goto="update_candidates")

        pairs, warnings = self._sample(t)
        return Command(
            update={**reset, "sampled_pairs": pairs, "warnings": warnings},
            goto="run_actors",
        )

    def run_actors(self, state: PaceState) -> Command[Literal["run_critics", "update_candidates"]]:
        prompt = state["incumbent"].prompt
        pairs = state["sampled_pairs"]

        logger.info(f"🎭 Running {len(pairs)} actors")
        actions = fan_out(
            lambda item: self.act(prompt, item[1], item[0]),
            list(enumerate(pairs, 1)),
            self.config.parallelism,
        )

        goto = "run_critics" if self.config.mode == RunMode.FULL else "update_candidates"
        return Command(update={"actions": actions}, goto=goto)

    def run_critics(self, state: PaceState) -> Command[Literal["update_candidates"]]:
        prompt = state["incumbent"].prompt
        t = state["iteration"]
        actions = state["actions"]

        logger.info(f"🧐 Running {len(actions)} critics")
        critiques = fan_out(
            lambda action: self.criticize(prompt, action, t),
            actions,
            self.config.parallelism,
        )
        batch = CritiqueBatch(critiques=tuple(critiques), iteration=t)
        return Command(update={"critiques": batch}, goto="update_candidates")

    def update_candidates(self, state: PaceState) -> Command[Literal["score_candidates"]]:
        prompt = state["incumbent"].prompt
        t = state["iteration"]
        k = self.config.candidates_per_iter
        mode = self.config.mode

        logger.info(f"✏️ Generating {k} candidates")
        if mode == RunMode.FULL:
            advice = [(c.id, c.text) for c in state["critiques"].critiques]
            calls = self._update_calls(prompt, advice, k, t, "Advice")
        elif mode == RunMode.NO_CRITIC:
            advice = [
                (f"t{t}-a{action.agent_index}", self._transcript(action))
                for action in state["actions"]
            ]
            calls = self._update_calls(prompt, advice, k, t, "Prediction")
        else:
            calls = self.paraphrase(prompt, k)

        collected = self._collect(prompt, calls)
        candidates = [
            CandidateRecord(prompt=candidate, iteration=t + 1, parent_critique_ids=ids)
            for candidate, ids in collected
        ]
        warnings = list(state["warnings"])
        if len(candidates) < len(calls):
            warnings.append(f"{len(calls) - len(candidates)} candidate(s) dropped as empty or duplicate")

        return Command(
            update={"update_calls": calls, "candidates": candidates, "warnings": warnings},
            goto="score_candidates",
        )

    def score_candidates(self, state: PaceState) -> Command[Literal["select_incumbent"]]:
        candidates = state["candidates"]
        logger.info(f"📊 Scoring {len(candidates)} candidates on {len(self.eval_pairs())} val pairs")

        scored = fan_out(
            lambda candidate: candidate.model_copy(update={"score": self.score(candidate.prompt)}),
            candidates,
            self.config.parallelism,
        )
        return Command(update={"candidates": scored}, goto="select_incumbent")

    def select_incumbent(self, state: PaceState) -> Command[Literal["sample_pairs", "__end__"]]:
        """Keep the best prompt seen so far; ties favor the incumbent"""
        t = state["iteration"]
        before = state["incumbent"]
        after = self._select(before, state["candidates"])

        record = IterationRecord(
            index=t,
            mode=self.config.mode,
            sampled_pairs=tuple(state["sampled_pairs"]),
            actions=tuple(state["actions"]),
            critiques=state["critiques"],
            update_calls=tuple(state["update_calls"]),
            candidates=tuple(state["candidates"]),
            incumbent_before=before,
            incumbent_after=after,
            warnings=tuple(state["warnings"]),
        )
        records = state["records"] + [record]

        logger.info(f"✅ Iteration {t} done: {before.score:.3f} -> {after.score:.3f}")

        finished = t + 1 >= state["stop_at"]
        converged = self.config.early_stop and not record.improved
        if finished or converged:
            if converged and not finished:
                logger.info(f"   No improvement in iteration {t}, stopping early")
            return Command(update={"records": records, "incumbent": after}, goto=END)

        return Command(
            update={"records": records, "incumbent": after, "iteration": t + 1},
            goto="sample_pairs",
        )

    # Drivers
    def pace_step(self, incumbent: CandidateRecord, iteration: int = 0) -> IterationRecord:
        """Run exactly one iteration from a scored incumbent"""
        if not incumbent.scored:
            raise ValueError("incumbent must be scored")
        _, records = self._run(incumbent, iteration, iteration + 1, None)
        return records[0]

    def pace_optimize(
        self,
        p0: Prompt,
        on_record: Optional[Callable[[IterationRecord], None]] = None,
    ) -> Tuple[CandidateRecord, List[IterationRecord]]:
        """Score p0, then iterate until max_iters or an iteration without improvement"""
        logger.info(
            f"🚀 Optimizing '{self.task.name}' ({self.config.mode.value}, "
            f"max_iters={self.config.max_iters}, n={self.config.n_agents}, "
            f"k={self.config.candidates_per_iter})"
        )
        initial = CandidateRecord(prompt=p0, score=self.score(p0), iteration=0)
        return self._run(initial, 0, self.config.max_iters, on_record)

    def resample_baseline(
        self, p0: Prompt, k: Optional[int] = None
    ) -> Tuple[CandidateRecord, IterationRecord]:
        """Paraphrase-only search with k candidates and the same selection rule"""
        k = k or self.config.n_agents * self.config.candidates_per_iter
        if k < 1:
            raise ValueError("k must be at least 1")

        logger.info(f"🚀 Resampling {k} paraphrases for '{self.task.name}'")
        initial = CandidateRecord(prompt=p0, score=self.score(p0), iteration=0)
        calls = self.paraphrase(p0, k)
        candidates = [
            CandidateRecord(
                prompt=candidate, score=self.score(candidate), iteration=1, parent_critique_ids=ids
            )
            for candidate, ids in self._collect(p0, calls)
        ]
        best = self._select(initial, candidates)
        record = IterationRecord(
            index=0,
            mode=RunMode.NO_ACTOR_CRITIC,
            update_calls=tuple(calls),
            candidates=tuple(candidates),
            incumbent_before=initial,
            incumbent_after=best,
        )
        logger.info(f"✅ Resampling done: {initial.score:.3f} -> {best.score:.3f}")
        return best, record

    def _run(
        self,
        incumbent: CandidateRecord,
        start: int,
        stop_at: int,
        on_record: Optional[Callable[[IterationRecord], None]],
    ) -> Tuple[CandidateRecord, List[IterationRecord]]:
        state: PaceState = {
            "iteration": start,
            "stop_at": stop_at,
            "incumbent": incumbent,
            "sampled_pairs": [],
            "actions": [],
            "critiques": None,
            "update_calls": [],
            "candidates": [],
            "warnings": [],
            "records": [],
        }
        limit = STEPS_PER_ITERATION * (stop_at - start) + 10
        records: List[IterationRecord] = []

        try:
            for values in self.graph.stream(
                state, config={"recursion_limit": limit}, stream_mode="values"
            ):
                for record in values.get("records", [])[len(records):]:
                    records.append(record)
                    if on_record is not None:
                        on_record(record)
        except Exception as e:
            logger.error(f"❌ Run aborted after {len(records)} iteration(s): {e}")
            e.partial_records = list(records)
            raise

        best = records[-1].incumbent_after if records else incumbent
        return best, records

    # Helpers
    def _complete(
        self,
        tag: RequestTag,
        content: str,
        label: str,
        index: int,
        temperature: Optional[float] = None,
    ) -> ChatResponse:
        request = self.gateway.build_request(tag, content, temperature)
        try:
            return self.gateway.complete(request)
        except BackendError as e:
            raise e.tagged(label, index) from e

    def _sample(self, t: int) -> Tuple[List[DemoPair], List[str]]:
        train = self.split.train
        n = self.config.n_agents
        if not train:
            raise DataError("split empty: train")

        rng = random.Random(f"{self.config.seed}:{t}:sample")
        if len(train) >= n:
            return [train[i] for i in rng.sample(range(len(train)), n)], []

        warning = f"train split has {len(train)} pairs < n_agents={n}; sampling with replacement"
        logger.warning(f"⚠️ {warning}")
        return [train[i] for i in rng.choices(range(len(train)), k=n)], [warning]

    def _advice_orders(self, n: int, k: int, t: int) -> List[List[int]]:
        """Order 1 is the input order; later orders are seeded rotations, then seeded shuffles"""
        orders = [list(range(n))]
        offsets = list(range(1, n))
        random.Random(f"{self.config.seed}:{t}:rotate").shuffle(offsets)
        shuffler = random.Random(f"{self.config.seed}:{t}:shuffle")

        for j in range(2, k + 1):
            if j - 2 < len(offsets):
                offset = offsets[j - 2]
                orders.append(list(range(offset, n)) + list(range(offset)))
                continue
            order = list(range(n))
            for _ in range(32):
                shuffler.shuffle(order)
                if order not in orders:
                    break
            orders.append(list(order))
        return orders

    def _update_calls(
        self,
        prompt: Prompt,
        advice: Sequence[Tuple[str, str]],
        k: int,
        t: int,
        label: str,
    ) -> List[UpdateCall]:
        if not advice:
            raise ValueError("no critiques to aggregate")
        if k < 1:
            raise ValueError("k must be at least 1")

        def call(item: Tuple[int, List[int]]) -> UpdateCall:
            j, order = item
            texts = [advice[i][1] for i in order]
            content = render_update(prompt, texts, self.templates, label)
            response = self._complete(
                RequestTag.UPDATE, content, "candidate", j, self.config.update_temperature
            )
            return UpdateCall(
                candidate_index=j,
                rendered_request=content,
                fingerprint=response.fingerprint,
                advice_ids=tuple(advice[i][0] for i in order),
                extracted_text=self._extract(response),
            )

        orders = self._advice_orders(len(advice), k, t)
        return fan_out(call, list(enumerate(orders, 1)), self.config.parallelism)

    @staticmethod
    def _extract(response: ChatResponse) -> Optional[str]:
        try:
            return extract_prompt(response.content).text
        except EmptyPromptError:
            return None

    @staticmethod
    def _collect(prompt: Prompt, calls: Sequence[UpdateCall]) -> List[Tuple[Prompt, Tuple[str, ...]]]:
        """Extracted candidates minus the incumbent and repeats"""
        if calls and all(call.extracted_text is None for call in calls):
            raise EmptyPromptError("update produced no prompt")

        origin = PromptOrigin.GENERATED if prompt.origin == PromptOrigin.EMPTY else PromptOrigin.EDITED
        seen = {prompt.text}
        collected = []
        for call in calls:
            if call.extracted_text is None or call.extracted_text in seen:
                continue
            seen.add(call.extracted_text)
            collected.append((Prompt(text=call.extracted_text, origin=origin), call.advice_ids))
        return collected

    @staticmethod
    def _select(incumbent: CandidateRecord, candidates: Sequence[CandidateRecord]) -> CandidateRecord:
        best = incumbent
        for candidate in candidates:
            if (candidate.score or 0.0) > (best.score or 0.0):
                best = candidate
        return best

    @staticmethod
    def _transcript(action: ActorAction) -> str:
        return (
            f"Input: {action.pair.input}, Prediction: {action.action}, "
            f"Ground Truth: {' | '.join(action.pair.outputs)}"
        )
