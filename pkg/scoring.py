# scoring.py
"""
Practical evaluation metrics s(p, X, Y) and the expected score s(p) of a
prompt over an evaluation set.
"""

import logging
import math
import re
from collections import Counter
from enum import Enum
from typing import Callable, Dict, List, Sequence, Set, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from data_models import DemoPair, Prompt, clamp_score
from llm_gateway import LLMGateway, RequestTag, fan_out
from pace_errors import BackendError
from pace_templates import TemplateSet, render_actor

logger = logging.getLogger(__name__)

class MetricId(str, Enum):
    EXACT_MATCH = "exact_match"
    CONTAINS = "contains"
    TOKEN_F1 = "token_f1"
    SET_MATCH = "set_match"
    BLEU = "bleu"

class Metric(BaseModel):
    """A metric over (prediction, references) in [0,1]

    Texts are normalized before comparison: lowercased, whitespace runs
    collapsed to single spaces, trimmed, and trailing '.,;:!?' removed.
    Multiple references score as the max over references.
    """
    model_config = ConfigDict(frozen=True)

    id: MetricId

    @classmethod
    def of(cls, metric_id: str) -> "Metric":
        return cls(id=MetricId(metric_id))

class ScoreReport(BaseModel):
    """Per-pair scores of one prompt and their mean"""
    model_config = ConfigDict(frozen=True)

    mean: float = Field(ge=0.0, le=1.0)
    per_pair: Tuple[Tuple[int, float], ...] = Field(default=())
    n_pairs: int = Field(ge=0)
    metric_id: MetricId

    @model_validator(mode="after")
    def _consistent(self) -> "ScoreReport":
        if self.n_pairs != len(self.per_pair):
            raise ValueError("n_pairs must equal the number of per-pair scores")
        return self

    @classmethod
    def from_scores(cls, scores: Sequence[float], metric_id: MetricId) -> "ScoreReport":
        per_pair = tuple((i, float(s)) for i, s in enumerate(scores))
        mean = math.fsum(scores) / len(scores) if scores else 0.0
        return cls(mean=clamp_score(mean), per_pair=per_pair, n_pairs=len(per_pair), metric_id=metric_id)

# Normalization
_TRAILING = re.compile(r"[\s.,;:!?]+$")

def normalize(text: str) -> str:
    text = " ".join(text.lower().split())
    return _TRAILING.sub("", text)

# Single-reference metrics
def exact_match(prediction: str, reference: str) -> float:
    return 1.0 if normalize(prediction) == normalize(reference) else 0.0

def contains(prediction: str, reference: str) -> float:
    return 1.0 if normalize(reference) in normalize(prediction) else 0.0

def token_f1(prediction: str, reference: str) -> float:
    predicted = normalize(prediction).split()
    expected = normalize(reference).split()
    if not predicted or not expected:
        return 1.0 if predicted == expected else 0.0

    overlap = sum((Counter(predicted) & Counter(expected)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(predicted)
    recall = overlap / len(expected)
    return 2 * precision * recall / (precision + recall)

def _items(text: str) -> Set[str]:
    return {normalize(item) for item in text.split(",")} - {""}

def set_match(prediction: str, reference: str) -> float:
    """Jaccard overlap of comma-separated items"""
    predicted = _items(prediction)
    expected = _items(reference)
    if not predicted and not expected:
        return 1.0
    return len(predicted & expected) / len(predicted | expected)

def _ngrams(tokens: List[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))

def bleu(prediction: str, reference: str) -> float:
    """Sentence BLEU-4: raw unigram precision, add-one smoothing for n >= 2"""
    candidate = normalize(prediction).split()
    expected = normalize(reference).split()
    if not candidate:
        return 1.0 if not expected else 0.0
    if not expected:
        return 0.0

    log_precision = 0.0
    for n in range(1, 5):
        produced = _ngrams(candidate, n)
        matched = sum((produced & _ngrams(expected, n)).values())
        if n == 1:
            if not matched:
                return 0.0
            log_precision += math.log(matched / len(candidate))
        else:
            log_precision += math.log((matched + 1) / (sum(produced.values()) + 1))

    if len(candidate) > len(expected):
        brevity = 1.0
    else:
        brevity = math.exp(1 - len(expected) / len(candidate))
    return min(1.0, brevity * math.exp(log_precision / 4))

METRIC_FUNCTIONS: Dict[MetricId, Callable[[str, str], float]] = {
    MetricId.EXACT_MATCH: exact_match,
    MetricId.CONTAINS: contains,
    MetricId.TOKEN_F1: token_f1,
    MetricId.SET_MATCH: set_match,
    MetricId.BLEU: bleu,
}

def score_pair(prediction: str, references: Sequence[str], metric: Metric) -> float:
    """Best score over the acceptable references"""
    if not references:
        raise ValueError("references must be nonempty")
    func = METRIC_FUNCTIONS[metric.id]
    return max(func(prediction, reference) for reference in references)

def score_prompt(
    prompt: Prompt,
    eval_pairs: Sequence[DemoPair],
    metric: Metric,
    gateway: LLMGateway,
    templates: TemplateSet,
    parallelism: int = 4,
) -> ScoreReport:
    """Execute the prompt on every pair and score the completions"""
    if not eval_pairs:
        raise ValueError("eval_pairs must be nonempty")

    def score_one(item: Tuple[int, DemoPair]) -> float:
        index, pair = item
        request = gateway.build_request(RequestTag.EVAL, render_actor(prompt, pair.input, templates))
        try:
            response = gateway.complete(request)
        except BackendError as e:
            raise e.tagged("pair", index) from e
        return score_pair(response.content, pair.outputs, metric)

    scores = fan_out(score_one, list(enumerate(eval_pairs)), parallelism)
    report = ScoreReport.from_scores(scores, metric.id)
    logger.debug(f"📊 {report.metric_id.value}={report.mean:.3f} over {report.n_pairs} pairs")
    return report
