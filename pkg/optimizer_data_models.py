# optimizer_data_models.py
"""
Data models for the PACE actor-critic loop: actor actions, critiques,
update calls, per-iteration records and the LangGraph state.
"""

from typing import List, Optional, Tuple, TypedDict

from pydantic import BaseModel, ConfigDict, Field, model_validator

from data_models import CandidateRecord, DemoPair, RunMode

# Actor / critic models
class ActorAction(BaseModel):
    """Completion a of the actor template on one sampled pair"""
    model_config = ConfigDict(frozen=True)

    pair: DemoPair
    rendered_request: str = Field(description="Rendered actor template")
    action: str = Field(description="Actor completion")
    agent_index: int = Field(ge=1, description="Agent slot in [1, n]")
    fingerprint: str = Field(default="", description="Cache fingerprint of the actor request")

class Critique(BaseModel):
    """Critic advice c on one actor action"""
    model_config = ConfigDict(frozen=True)

    id: str = Field(description="t<iteration>-a<agent>")
    agent_index: int = Field(ge=1)
    text: str = Field(min_length=1)
    source_action: ActorAction
    rendered_request: str = Field(default="")
    fingerprint: str = Field(default="")

class CritiqueBatch(BaseModel):
    """The n critiques of one iteration in agent order"""
    model_config = ConfigDict(frozen=True)

    critiques: Tuple[Critique, ...] = Field(default=())
    iteration: int = Field(default=0, ge=0)

    def texts(self) -> List[str]:
        return [critique.text for critique in self.critiques]

class UpdateCall(BaseModel):
    """One update-template call and what it produced"""
    model_config = ConfigDict(frozen=True)

    candidate_index: int = Field(ge=1)
    rendered_request: str
    fingerprint: str = Field(default="")
    advice_ids: Tuple[str, ...] = Field(default=(), description="Advice ids in the order they were aggregated")
    extracted_text: Optional[str] = Field(default=None, description="None when extraction came back empty")

# Iteration log
class IterationRecord(BaseModel):
    """Everything one iteration sampled, asked and decided"""
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0, description="Iteration t")
    mode: RunMode = Field(default=RunMode.FULL)
    sampled_pairs: Tuple[DemoPair, ...] = Field(default=())
    actions: Tuple[ActorAction, ...] = Field(default=())
    critiques: Optional[CritiqueBatch] = Field(default=None, description="Absent in the ablations")
    update_calls: Tuple[UpdateCall, ...] = Field(default=())
    candidates: Tuple[CandidateRecord, ...] = Field(default=())
    incumbent_before: CandidateRecord
    incumbent_after: CandidateRecord
    warnings: Tuple[str, ...] = Field(default=())

    @model_validator(mode="after")
    def _monotone(self) -> "IterationRecord":
        before = self.incumbent_before.score or 0.0
        after = self.incumbent_after.score or 0.0
        if after < before:
            raise ValueError("incumbent score decreased within an iteration")
        return self

    @property
    def improved(self) -> bool:
        return (self.incumbent_after.score or 0.0) > (self.incumbent_before.score or 0.0)

    def ranked_candidates(self) -> List[CandidateRecord]:
        """Candidates by score, best first; equal scores keep generation order"""
        return sorted(self.candidates, key=lambda c: -(c.score or 0.0))

# Graph state
class PaceState(TypedDict):
    """State schema for the PACE optimization graph"""
    # Loop control
    iteration: int
    stop_at: int

    # Current iteration
    incumbent: CandidateRecord
    sampled_pairs: List[DemoPair]
    actions: List[ActorAction]
    critiques: Optional[CritiqueBatch]
    update_calls: List[UpdateCall]
    candidates: List[CandidateRecord]
    warnings: List[str]

    # Run log
    records: List[IterationRecord]
