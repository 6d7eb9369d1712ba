# run_artifacts.py
"""
Run artifacts: header.json, an append-only records.jsonl with one iteration
record per line, and footer.json. Also the Table-style report over many runs.
"""

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from data_models import DemoPair, SplitSpec
from optimizer_data_models import IterationRecord
from pace_errors import DataError, PaceError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
HEADER_FILE = "header.json"
RECORDS_FILE = "records.jsonl"
FOOTER_FILE = "footer.json"

REPORT_COLUMNS = ["task", "setting", "initial", "final", "delta"]
REPORT_FORMATS = ("markdown", "csv", "json")

# Artifact models
class ArtifactHeader(BaseModel):
    """What was run; written before any record"""
    model_config = ConfigDict(frozen=True)

    schema_version: int = Field(default=SCHEMA_VERSION)
    task_name: str
    setting: str = Field(description="best, medium, worst, butter_fingers, empty or literal")
    strategy: str = Field(default="pace", description="pace or resample")
    seed: int = Field(default=0)
    config: Dict[str, Any] = Field(default_factory=dict, description="RunConfig snapshot without backend")
    template_hashes: Dict[str, str] = Field(default_factory=dict)
    backend: Dict[str, Any] = Field(default_factory=dict, description="Backend snapshot; excluded from content_hash")

class ArtifactFooter(BaseModel):
    """Initial and final prompt with their val/test scores"""
    model_config = ConfigDict(frozen=True)

    initial_prompt: str
    initial_val_score: float
    initial_test_score: float
    final_prompt: str
    val_score: float
    test_score: float

class RunArtifact(BaseModel):
    """One run directory loaded into memory"""
    model_config = ConfigDict(frozen=True)

    header: ArtifactHeader
    records: Tuple[IterationRecord, ...] = Field(default=())
    footer: Optional[ArtifactFooter] = Field(default=None, description="Absent for aborted runs")

    @classmethod
    def load(cls, run_dir: str) -> "RunArtifact":
        root = Path(run_dir)
        try:
            header = ArtifactHeader.model_validate_json((root / HEADER_FILE).read_text(encoding="utf-8"))
            records = []
            records_path = root / RECORDS_FILE
            if records_path.exists():
                for line in records_path.read_text(encoding="utf-8").splitlines():
                    if line.strip():
                        records.append(IterationRecord.model_validate_json(line))
            footer = None
            if (root / FOOTER_FILE).exists():
                footer = ArtifactFooter.model_validate_json((root / FOOTER_FILE).read_text(encoding="utf-8"))
        except (OSError, ValidationError) as e:
            raise DataError(f"cannot read run artifact {run_dir}: {e}") from e
        return cls(header=header, records=tuple(records), footer=footer)

    def content_hash(self) -> str:
        """sha256 over header (minus backend), records and footer"""
        payload = {
            "header": self.header.model_dump(mode="json", exclude={"backend"}),
            "records": [record.model_dump(mode="json") for record in self.records],
            "footer": self.footer.model_dump(mode="json") if self.footer else None,
        }
        text = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def request_fingerprints(self) -> List[str]:
        """Fingerprints of every actor, critic and update request, in record order"""
        fingerprints: List[str] = []
        for record in self.records:
            fingerprints.extend(action.fingerprint for action in record.actions)
            if record.critiques is not None:
                fingerprints.extend(critique.fingerprint for critique in record.critiques.critiques)
            fingerprints.extend(call.fingerprint for call in record.update_calls)
        return [fp for fp in fingerprints if fp]

# Writer
class RunArtifactWriter:
    """Single writer for one run directory"""

    def __init__(self, run_dir: str):
        self.run_dir = Path(run_dir)
        self._header_written = False

    def write_header(self, header: ArtifactHeader) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        # A rerun into the same directory starts a fresh record stream
        for name in (RECORDS_FILE, FOOTER_FILE):
            (self.run_dir / name).unlink(missing_ok=True)
        self._write_json(HEADER_FILE, header.model_dump(mode="json"))
        (self.run_dir / RECORDS_FILE).touch()
        self._header_written = True

    def append_record(self, record: IterationRecord) -> None:
        if not self._header_written:
            raise PaceError("run artifact header must be written before records")
        line = json.dumps(record.model_dump(mode="json"), sort_keys=True, ensure_ascii=False)
        with open(self.run_dir / RECORDS_FILE, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")

    def write_footer(self, footer: ArtifactFooter) -> None:
        if not self._header_written:
            raise PaceError("run artifact header must be written before the footer")
        self._write_json(FOOTER_FILE, footer.model_dump(mode="json"))

    def _write_json(self, name: str, payload: Dict[str, Any]) -> None:
        with open(self.run_dir / name, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, sort_keys=True, ensure_ascii=False, indent=2)
            handle.write("\n")

# Audits
def find_missing_fingerprints(artifact: RunArtifact, cache_dir: str) -> List[str]:
    """Referenced fingerprints with no cache entry"""
    root = Path(cache_dir)
    return [fp for fp in dict.fromkeys(artifact.request_fingerprints()) if not (root / f"{fp}.json").exists()]

def _test_only_pairs(split: SplitSpec) -> Set[DemoPair]:
    return set(split.test) - set(split.train) - set(split.val)

def find_test_leaks(artifact: RunArtifact, split: SplitSpec) -> List[str]:
    """Actor, critic and update requests that embed a test-only pair"""
    test_pairs = _test_only_pairs(split)
    markers = {f"Input: {pair.input}," for pair in test_pairs if pair.input}
    leaks: List[str] = []

    def scan(where: str, text: str, pair: Optional[DemoPair] = None) -> None:
        if (pair is not None and pair in test_pairs) or any(marker in text for marker in markers):
            leaks.append(where)

    for record in artifact.records:
        t = record.index
        for action in record.actions:
            scan(f"iteration {t} actor {action.agent_index}", action.rendered_request, action.pair)
        if record.critiques is not None:
            for critique in record.critiques.critiques:
                scan(f"iteration {t} critic {critique.agent_index}",
                     critique.rendered_request, critique.source_action.pair)
        for call in record.update_calls:
            scan(f"iteration {t} update {call.candidate_index}", call.rendered_request)
    return leaks

# Report
def report_frame(artifacts: Sequence[RunArtifact]) -> pd.DataFrame:
    """One row per (task, setting), repeats averaged, plus an Average row"""
    versions = sorted({artifact.header.schema_version for artifact in artifacts})
    if len(versions) > 1:
        raise DataError(f"mixed schema versions: {versions}")

    rows = []
    for artifact in artifacts:
        if artifact.footer is None:
            logger.warning(f"⚠️ Skipping incomplete run for {artifact.header.task_name}")
            continue
        rows.append({
            "task": artifact.header.task_name,
            "setting": artifact.header.setting,
            "initial": artifact.footer.initial_test_score,
            "final": artifact.footer.test_score,
        })
    if not rows:
        return pd.DataFrame(columns=REPORT_COLUMNS)

    frame = (
        pd.DataFrame(rows)
        .groupby(["task", "setting"], sort=False, as_index=False)[["initial", "final"]]
        .mean()
    )
    frame["delta"] = frame["final"] - frame["initial"]
    average = {
        "task": "Average",
        "setting": "",
        "initial": frame["initial"].mean(),
        "final": frame["final"].mean(),
        "delta": frame["final"].mean() - frame["initial"].mean(),
    }
    return pd.concat([frame, pd.DataFrame([average])], ignore_index=True)[REPORT_COLUMNS]

def emit_report(artifacts: Sequence[RunArtifact], fmt: str = "markdown") -> str:
    """Render the report as markdown, csv (all fields quoted) or json"""
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"unknown report format: {fmt}")
    frame = report_frame(artifacts)
    numeric = ["initial", "final", "delta"]

    if fmt == "json":
        rows = [
            [row["task"], row["setting"], *(round(float(row[c]), 2) for c in numeric)]
            for _, row in frame.iterrows()
        ]
        return json.dumps({"columns": REPORT_COLUMNS, "rows": rows}, indent=2)

    text = frame.copy()
    for column in numeric:
        text[column] = text[column].map(lambda value: f"{value:.2f}")
    if fmt == "csv":
        return text.to_csv(index=False, quoting=csv.QUOTE_ALL, lineterminator="\n")
    return text.to_markdown(index=False, disable_numparse=True)
