# pace_templates.py
"""
Actor, critic and update templates with single-pass placeholder substitution
"""

import hashlib
import json
import re
from typing import Dict, Iterable, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator

from data_models import Prompt, PromptOrigin
from pace_errors import ConfigError, EmptyPromptError

TASK_INSTRUCTION = "[TASK_INSTRUCTION]"
INPUT = "[INPUT]"
PREDICTION = "[PREDICTION]"
GROUNDTRUTH = "[GROUNDTRUTH]"
CRITICAL_ADVICES = "[Critical_Advices]"

ALL_PLACEHOLDERS = (TASK_INSTRUCTION, INPUT, PREDICTION, GROUNDTRUTH, CRITICAL_ADVICES)

DEFAULT_ACTOR_TEMPLATE = "Instruction: [TASK_INSTRUCTION],\nInput: [INPUT],\nOutput:"

DEFAULT_CRITIC_TEMPLATE = (
    "I gave you an instruction:[TASK_INSTRUCTION]. Based on this instruction they produced "
    "the following input-prediction pairs and the corresponding ground truth:\n"
    "Input: [INPUT],\n"
    "Prediction: [PREDICTION],\n"
    "Ground Truth: [GROUNDTRUTH],\n"
    "According to Input, Prediction, and Ground Truth, give the critical advice on how to "
    "improve the instruction:"
)

DEFAULT_UPDATE_TEMPLATE = (
    "I gave you an instruction:[TASK_INSTRUCTION]. Based on the instruction they produced "
    "the following critical advices: [Critical_Advices]. Taking these critical advices into "
    "consideration, the improved instruction was:"
)

REFERENCE_JOINER = " | "

_REQUIRED = {
    "actor_template": (TASK_INSTRUCTION, INPUT),
    "critic_template": (TASK_INSTRUCTION, INPUT, PREDICTION, GROUNDTRUTH),
    "update_template": (TASK_INSTRUCTION, CRITICAL_ADVICES),
}

_LABEL = re.compile(r"^improved instruction\s*:\s*", re.IGNORECASE)
_QUOTE_PAIRS = (('"', '"'), ("“", "”"))

class TemplateSet(BaseModel):
    """The three role templates"""
    model_config = ConfigDict(frozen=True)

    actor_template: str = Field(default=DEFAULT_ACTOR_TEMPLATE)
    critic_template: str = Field(default=DEFAULT_CRITIC_TEMPLATE)
    update_template: str = Field(default=DEFAULT_UPDATE_TEMPLATE)

    @model_validator(mode="after")
    def _exact_placeholders(self) -> "TemplateSet":
        for field, required in _REQUIRED.items():
            template = getattr(self, field)
            missing = [p for p in required if p not in template]
            foreign = [p for p in ALL_PLACEHOLDERS if p not in required and p in template]
            if missing or foreign:
                raise ValueError(f"{field}: missing {missing}, unexpected {foreign}")
        return self

    @classmethod
    def from_file(cls, path: str) -> "TemplateSet":
        """Override file with optional keys actor, critic, update"""
        try:
            with open(path, "r", encoding="utf-8") as handle:
                overrides = json.load(handle)
            values = {
                f"{role}_template": overrides[role]
                for role in ("actor", "critic", "update")
                if role in overrides
            }
            return cls(**values)
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid template file {path}: {e}") from e

    def hashes(self) -> Dict[str, str]:
        return {
            role: hashlib.sha256(getattr(self, f"{role}_template").encode("utf-8")).hexdigest()
            for role in ("actor", "critic", "update")
        }

def substitute(template: str, values: Dict[str, str]) -> str:
    """Replace placeholders in one pass; substituted text is never re-expanded"""
    pattern = re.compile("|".join(re.escape(key) for key in values))
    return pattern.sub(lambda match: values[match.group(0)], template)

# Rendering
class PromptTemplates:
    """Renderers for the actor, critic and update roles"""

    @staticmethod
    def render_actor(prompt: Prompt, input_text: str, templates: TemplateSet) -> str:
        return substitute(
            templates.actor_template,
            {TASK_INSTRUCTION: prompt.text, INPUT: input_text},
        )

    @staticmethod
    def render_critic(
        prompt: Prompt,
        input_text: str,
        prediction: str,
        ground_truth: Sequence[str],
        templates: TemplateSet,
    ) -> str:
        if isinstance(ground_truth, str):
            ground_truth = [ground_truth]
        return substitute(
            templates.critic_template,
            {
                TASK_INSTRUCTION: prompt.text,
                INPUT: input_text,
                PREDICTION: prediction,
                GROUNDTRUTH: REFERENCE_JOINER.join(ground_truth),
            },
        )

    @staticmethod
    def aggregate(critiques: Iterable[str], label: str = "Advice") -> str:
        """'Advice 1: ...' lines in the given order"""
        return "\n".join(f"{label} {i}: {text}" for i, text in enumerate(critiques, 1))

    @staticmethod
    def render_update(
        prompt: Prompt,
        critiques: Sequence[str],
        templates: TemplateSet,
        label: str = "Advice",
    ) -> str:
        if not critiques:
            raise ValueError("no critiques to aggregate")
        return PromptTemplates.render_update_block(
            prompt, PromptTemplates.aggregate(critiques, label), templates
        )

    @staticmethod
    def render_update_block(prompt: Prompt, block: str, templates: TemplateSet) -> str:
        """Update template with a raw advice block (empty for paraphrasing)"""
        return substitute(
            templates.update_template,
            {TASK_INSTRUCTION: prompt.text, CRITICAL_ADVICES: block},
        )

    @staticmethod
    def extract_prompt(update_response: str) -> Prompt:
        """Pull the edited instruction out of an update completion"""
        text, labels = _LABEL.subn("", update_response.strip(), count=1)
        text = text.strip()
        for opening, closing in _QUOTE_PAIRS:
            if len(text) >= 2 and text.startswith(opening) and text.endswith(closing):
                text = text[1:-1].strip()
                break
        # at most one label, outside or just inside the quotes
        if not labels:
            text = _LABEL.sub("", text, count=1).strip()

        if not text:
            raise EmptyPromptError("empty updated prompt")
        return Prompt(text=text, origin=PromptOrigin.EDITED)

render_actor = PromptTemplates.render_actor
render_critic = PromptTemplates.render_critic
render_update = PromptTemplates.render_update
extract_prompt = PromptTemplates.extract_prompt
