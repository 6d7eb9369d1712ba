# perturbation.py
"""
Butter Fingers: keyboard-typo perturbation of human-written prompts.

Each ASCII letter is independently replaced, with probability `rate`, by a
letter physically adjacent to it on a QWERTY keyboard. Case is preserved and
every other character is left alone, so the length never changes.
"""

import random
from typing import Dict

from pydantic import BaseModel, ConfigDict, Field

from data_models import Config

# Letter neighbors on a QWERTY layout (rows qwertyuiop / asdfghjkl / zxcvbnm)
QWERTY_NEIGHBORS: Dict[str, str] = {
    "q": "was",
    "w": "qesad",
    "e": "wsdfr",
    "r": "edfgt",
    "t": "rfghy",
    "y": "tghju",
    "u": "yhjki",
    "i": "ujklo",
    "o": "iklp",
    "p": "ol",
    "a": "qwsz",
    "s": "weadzx",
    "d": "erfcxs",
    "f": "rtgvcd",
    "g": "tyhbvf",
    "h": "yujnbg",
    "j": "uikmnh",
    "k": "iolmj",
    "l": "opk",
    "z": "asx",
    "x": "sdcz",
    "c": "dfvx",
    "v": "fgbc",
    "b": "ghnv",
    "n": "hjmb",
    "m": "jkn",
}

class PerturbSpec(BaseModel):
    """Misspelling rate, seed and keyboard layout"""
    model_config = ConfigDict(frozen=True)

    rate: float = Field(default=Config.PERTURB_RATE, ge=0.0, le=1.0, description="Per-letter substitution probability")
    seed: int = Field(default=0)
    layout: Dict[str, str] = Field(default_factory=lambda: dict(QWERTY_NEIGHBORS))

def butter_fingers(text: str, spec: PerturbSpec = PerturbSpec()) -> str:
    """Deterministic per seed; one random draw per mappable letter"""
    rng = random.Random(spec.seed)
    out = []
    for char in text:
        neighbors = spec.layout.get(char.lower())
        if not neighbors or rng.random() >= spec.rate:
            out.append(char)
            continue
        replacement = rng.choice(neighbors)
        out.append(replacement.upper() if char.isupper() else replacement)
    return "".join(out)
