#!/usr/bin/env python3
"""
Test cases for metrics and prompt scoring, including brute-force oracles
"""

import math
import random
import pytest
import sys
import os

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from data_models import DemoPair, Prompt
from llm_gateway import BackendConfig, BackendKind, LLMGateway
from pace_errors import CacheMissError
from pace_templates import TemplateSet
from scoring import Metric, MetricId, normalize, score_pair, score_prompt

PIECES = ["a", "b", "c", "Cat", "cat.", "dog", "DOG!", "x,", " ", "  ", ",", ".", "?", "\t", "a b", "frog"]


# Brute-force references
def ref_normalize(text):
    lowered = "".join(ch.lower() for ch in text)
    words = []
    current = ""
    for ch in lowered:
        if ch.isspace():
            if current:
                words.append(current)
            current = ""
        else:
            current += ch
    if current:
        words.append(current)
    joined = " ".join(words)
    while joined and (joined[-1] in ".,;:!?" or joined[-1].isspace()):
        joined = joined[:-1]
    return joined


def ref_exact(pred, ref):
    return 1.0 if ref_normalize(pred) == ref_normalize(ref) else 0.0


def ref_contains(pred, ref):
    p, r = ref_normalize(pred), ref_normalize(ref)
    for start in range(len(p) - len(r) + 1):
        if p[start:start + len(r)] == r:
            return 1.0
    return 0.0


def ref_token_f1(pred, ref):
    p = ref_normalize(pred).split(" ") if ref_normalize(pred) else []
    r = ref_normalize(ref).split(" ") if ref_normalize(ref) else []
    if not p or not r:
        return 1.0 if p == r else 0.0
    remaining = list(r)
    same = 0
    for token in p:
        if token in remaining:
            remaining.remove(token)
            same += 1
    if same == 0:
        return 0.0
    precision = same / len(p)
    recall = same / len(r)
    return 2 * precision * recall / (precision + recall)


def ref_set_match(pred, ref):
    def items(text):
        out = []
        for part in text.split(","):
            item = ref_normalize(part)
            if item and item not in out:
                out.append(item)
        return out

    p, r = items(pred), items(ref)
    if not p and not r:
        return 1.0
    inter = [x for x in p if x in r]
    union = list(p) + [x for x in r if x not in p]
    return len(inter) / len(union)


def ref_bleu(pred, ref):
    c = ref_normalize(pred).split(" ") if ref_normalize(pred) else []
    r = ref_normalize(ref).split(" ") if ref_normalize(ref) else []
    if not c:
        return 1.0 if not r else 0.0
    if not r:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        cand = [tuple(c[i:i + n]) for i in range(len(c) - n + 1)]
        pool = [tuple(r[i:i + n]) for i in range(len(r) - n + 1)]
        matched = 0
        for gram in cand:
            if gram in pool:
                pool.remove(gram)
                matched += 1
        if n == 1:
            if matched == 0:
                return 0.0
            log_sum += math.log(matched / len(cand))
        else:
            log_sum += math.log((matched + 1) / (len(cand) + 1))
    brevity = 1.0 if len(c) > len(r) else math.exp(1 - len(r) / len(c))
    return min(1.0, brevity * math.exp(log_sum / 4))


REFERENCES = {
    MetricId.EXACT_MATCH: ref_exact,
    MetricId.CONTAINS: ref_contains,
    MetricId.TOKEN_F1: ref_token_f1,
    MetricId.SET_MATCH: ref_set_match,
    MetricId.BLEU: ref_bleu,
}


def _random_text(rng):
    return "".join(rng.choice(PIECES) + rng.choice(["", " "]) for _ in range(rng.randint(0, 6)))


class TestScorePair:
    """Test cases for score_pair"""

    def test_hand_examples(self):
        """Hand-computable cases"""
        assert score_pair("Cat.", ["cat"], Metric.of("exact_match")) == 1.0
        assert score_pair("a b c", ["b c d"], Metric.of("token_f1")) == pytest.approx(2 / 3, abs=1e-12)
        assert score_pair("frog, cat, lion", ["cat, lion, whale, frog"], Metric.of("set_match")) == 0.75
        assert score_pair("the cat sat on the mat", ["the cat sat on the mat"], Metric.of("bleu")) == 1.0
        assert score_pair("the answer is koala", ["Koala"], Metric.of("contains")) == 1.0

    def test_bleu_wrong_answers_score_zero(self):
        """No shared word scores 0; a partial match outranks a wrong short answer"""
        metric = Metric.of("bleu")
        assert score_pair("cat", ["dog"], metric) == 0.0
        assert score_pair("red car", ["blue bike"], metric) == 0.0
        partial = score_pair("the cat is here", ["the dog sat there"], metric)
        assert partial == pytest.approx((1 / 96) ** 0.25, abs=1e-12)
        assert score_pair("cat", ["cat"], metric) == 1.0

    def test_degenerate_inputs(self):
        """Empty predictions score 0 against nonempty references, 1 against empty ones"""
        for metric in ["token_f1", "bleu", "set_match", "exact_match"]:
            assert score_pair("", ["cat"], Metric.of(metric)) == 0.0, metric
        assert score_pair("", [""], Metric.of("exact_match")) == 1.0

    def test_max_over_references(self):
        """Adding a reference never lowers the score"""
        metric = Metric.of("token_f1")
        assert score_pair("a b", ["c"], metric) == 0.0
        assert score_pair("a b", ["c", "a b"], metric) == 1.0

    def test_references_required(self):
        with pytest.raises(ValueError):
            score_pair("x", [], Metric.of("exact_match"))

    @pytest.mark.parametrize("metric_id", list(MetricId))
    def test_oracle_equivalence(self, metric_id):
        """200 random short strings per metric agree with the brute-force reference"""
        rng = random.Random(f"oracle-{metric_id.value}")
        metric = Metric(id=metric_id)
        for _ in range(200):
            pred = _random_text(rng)
            refs = [_random_text(rng) for _ in range(rng.randint(1, 3))]
            expected = max(REFERENCES[metric_id](pred, ref) for ref in refs)
            got = score_pair(pred, refs, metric)
            assert got == pytest.approx(expected, abs=1e-12), f"{metric_id.value}: {pred!r} vs {refs!r}"
            assert 0.0 <= got <= 1.0

    def test_properties(self):
        """Idempotent normalization, self-match, f1 symmetry, binary metrics"""
        rng = random.Random(11)
        for _ in range(200):
            x, y = _random_text(rng), _random_text(rng)
            assert normalize(normalize(x)) == normalize(x)
            assert score_pair(x, [x], Metric.of("exact_match")) == 1.0
            assert score_pair(x, [y], Metric.of("token_f1")) == pytest.approx(
                score_pair(y, [x], Metric.of("token_f1")), abs=1e-12
            )
            assert score_pair(x, [y], Metric.of("contains")) in (0.0, 1.0)
            if normalize(x):
                assert score_pair(x, [x], Metric.of("bleu")) == 1.0


class TestScorePrompt:
    """Test cases for score_prompt over a mock backend"""

    PAIRS = [DemoPair(input=f"w{i}", outputs=(f"w{i}",)) for i in range(10)]

    def _score(self, mock_backend, rules, parallelism=4):
        gateway = LLMGateway(mock_backend(rules))
        return score_prompt(
            Prompt(text="Repeat"), self.PAIRS, Metric.of("exact_match"), gateway, TemplateSet(), parallelism
        )

    def test_perfect_oracle(self, mock_backend):
        """Echoing the reference scores 1"""
        report = self._score(mock_backend, [{"tag": "actor", "pattern": r"Input: ([^\n]*),", "response": "$1"}])
        assert report.mean == 1.0
        assert report.n_pairs == 10

    def test_null_oracle(self, mock_backend):
        """Empty answers score 0"""
        report = self._score(mock_backend, [{"default": ""}])
        assert report.mean == 0.0

    def test_three_of_ten(self, mock_backend):
        """Correct on exactly three pairs gives 0.3, in input order"""
        rules = [
            {"tag": "actor", "pattern": r"Input: (w[0-2]),", "response": "$1"},
            {"default": "wrong"},
        ]
        report = self._score(mock_backend, rules, parallelism=8)
        assert report.mean == pytest.approx(0.3, abs=1e-12)
        assert [index for index, _ in report.per_pair] == list(range(10))
        assert [score for _, score in report.per_pair] == [1.0] * 3 + [0.0] * 7
        assert report.mean == pytest.approx(sum(s for _, s in report.per_pair) / report.n_pairs, abs=1e-12)

    def test_errors_are_tagged_with_pair_index(self, tmp_path):
        """A failing call names the pair it was scoring"""
        gateway = LLMGateway(BackendConfig(kind=BackendKind.REPLAY, cache_dir=str(tmp_path)))
        with pytest.raises(CacheMissError) as excinfo:
            score_prompt(Prompt(text="p"), self.PAIRS[:1], Metric.of("exact_match"), gateway, TemplateSet())
        assert excinfo.value.index == 0
        assert "(pair 0)" in str(excinfo.value)

    def test_eval_pairs_required(self, mock_backend):
        with pytest.raises(ValueError):
            score_prompt(Prompt(text="p"), [], Metric.of("exact_match"),
                         LLMGateway(mock_backend([{"default": ""}])), TemplateSet())


if __name__ == "__main__":
    pytest.main([__file__])
