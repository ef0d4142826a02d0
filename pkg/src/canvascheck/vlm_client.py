"""Two-stage completion pipeline against a chat-completions endpoint.

Stage one sends the assembled prompt bundle and receives a free-text
visual analysis. Stage two opens a fresh thread containing only the
extraction instruction plus the verbatim analysis text, and requests a
strict-schema JSON response with the two verdict fields.

Every stage event is appended to a newline-delimited JSON archive, keyed
by (strategy, screenshot, repetition), so completed work is never redone
and pass@k can be computed from archived data without re-querying.

Two providers ship: an HTTP client for OpenAI-style endpoints and a
fixture-driven mock for offline, reproducible runs.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from hashlib import sha256
from pathlib import Path
from typing import Callable, Protocol

import requests

from .dataset import Dataset
from .prompting import (
    ChatMessage,
    ImagePart,
    PromptBundle,
    PromptStrategy,
    TextPart,
    build_messages,
    extraction_instruction_text,
    is_applicable,
)

logger = logging.getLogger(__name__)

ANSWER_SCHEMA_NAME = "answer_extraction_response"

#: Strict response-format object sent with every extraction request.
EXTRACTION_RESPONSE_FORMAT = {
    "type": "json_schema",
    "json_schema": {
        "name": ANSWER_SCHEMA_NAME,
        "strict": True,
        "schema": {
            "type": "object",
            "properties": {
                "bool_did_detect_visual_bug": {"type": "boolean"},
                "string_description_of_visual_bug": {"type": "string"},
            },
            "required": [
                "bool_did_detect_visual_bug",
                "string_description_of_visual_bug",
            ],
            "additionalProperties": False,
        },
    },
}


class ProviderError(Exception):
    """Transport failure, provider error payload, or empty completion."""


class ExtractionError(ProviderError):
    """The extraction response did not match the strict answer schema."""


class ArchiveError(Exception):
    """The run archive is missing, inconsistent, or refuses the operation."""


@dataclass(frozen=True)
class RunConfig:
    model_id: str = "gpt-4o"
    temperature: float = 1.0
    repetitions: int = 4
    k_values: tuple[int, ...] = (1, 2, 4)
    endpoint: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    max_retries: int = 3
    timeout: float = 120.0
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be positive")
        for k in self.k_values:
            if not 1 <= k <= self.repetitions:
                raise ValueError(
                    f"k={k} out of range for {self.repetitions} repetitions"
                )

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "k_values" in data:
            data = dict(data, k_values=tuple(data["k_values"]))
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "temperature": self.temperature,
            "repetitions": self.repetitions,
            "k_values": list(self.k_values),
            "endpoint": self.endpoint,
            "api_key_env": self.api_key_env,
            "max_retries": self.max_retries,
            "timeout": self.timeout,
            "parallelism": self.parallelism,
        }


@dataclass(frozen=True)
class RequestTag:
    """Identifies one unit of work; lets the mock provider look up fixtures."""

    strategy: str
    screenshot_id: str
    repetition: int

    @property
    def key(self) -> str:
        return f"{self.strategy}|{self.screenshot_id}|{self.repetition}"


@dataclass(frozen=True)
class Completion:
    text: str
    model_id: str
    usage: dict | None = None


class Provider(Protocol):
    def complete(
        self,
        messages: list[dict],
        *,
        response_format: dict | None = None,
        tag: RequestTag | None = None,
    ) -> Completion: ...


@dataclass(frozen=True)
class AnalysisResult:
    bundle_id: str
    repetition_index: int
    raw_text: str
    model_id: str
    created_at: str
    usage: dict | None = None


@dataclass(frozen=True)
class ExtractedAnswer:
    bool_did_detect_visual_bug: bool
    string_description_of_visual_bug: str


def encode_image(path: Path, media_type: str = "image/png") -> str:
    data = base64.b64encode(path.read_bytes()).decode("ascii")
    return f"data:{media_type};base64,{data}"


def to_wire(messages: tuple[ChatMessage, ...] | list[ChatMessage]) -> list[dict]:
    """Convert chat messages to OpenAI-style content-part dicts."""
    wire = []
    for message in messages:
        content = []
        for part in message.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            elif isinstance(part, ImagePart):
                content.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": encode_image(part.path, part.media_type)},
                    }
                )
        wire.append({"role": message.role, "content": content})
    return wire


class HttpProvider:
    """Chat-completions client for OpenAI-compatible endpoints."""

    def __init__(self, cfg: RunConfig, session: requests.Session | None = None):
        self.cfg = cfg
        self.session = session or requests.Session()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.cfg.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(
        self,
        messages: list[dict],
        *,
        response_format: dict | None = None,
        tag: RequestTag | None = None,
    ) -> Completion:
        body: dict = {
            "model": self.cfg.model_id,
            "temperature": self.cfg.temperature,
            "messages": messages,
        }
        if response_format is not None:
            body["response_format"] = response_format

        url = self.cfg.endpoint.rstrip("/") + "/chat/completions"
        last_error: Exception | None = None
        for attempt in range(self.cfg.max_retries):
            try:
                response = self.session.post(
                    url,
                    json=body,
                    headers=self._headers(),
                    timeout=self.cfg.timeout,
                )
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("transport failure (attempt %d): %s", attempt + 1, exc)
            else:
                if response.status_code in (429,) or response.status_code >= 500:
                    last_error = ProviderError(
                        f"provider returned {response.status_code}: {response.text[:200]}"
                    )
                    logger.warning(
                        "retryable provider error (attempt %d): %s",
                        attempt + 1,
                        response.status_code,
                    )
                elif response.status_code != 200:
                    raise ProviderError(
                        f"provider error {response.status_code}: {response.text[:500]}"
                    )
                else:
                    return self._parse(response.json())
            if attempt + 1 < self.cfg.max_retries:
                time.sleep(min(2**attempt, 30))
        raise ProviderError(
            f"request failed after {self.cfg.max_retries} attempts: {last_error}"
        )

    @staticmethod
    def _parse(payload: dict) -> Completion:
        try:
            choice = payload["choices"][0]
            text = choice["message"]["content"]
            model_id = payload.get("model", "")
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc
        return Completion(text=text or "", model_id=model_id, usage=payload.get("usage"))


class MockProvider:
    """Deterministic provider replaying scripted responses from a JSON file.

    The script maps ``"<strategy>|<screenshot_id>|<repetition>"`` keys to
    ``{"analysis": ..., "answer": {...}}`` entries; a ``"default"`` entry
    covers unscripted keys. Analysis requests return the analysis text;
    extraction requests (recognized by the response_format argument)
    return the answer object serialized as JSON.
    """

    MODEL_ID = "mock"

    def __init__(self, script: dict):
        self.script = script

    @classmethod
    def from_file(cls, path: str | Path) -> "MockProvider":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def _entry(self, tag: RequestTag | None) -> dict:
        responses = self.script.get("responses", {})
        if tag is not None and tag.key in responses:
            return responses[tag.key]
        if "default" in self.script:
            return self.script["default"]
        raise ProviderError(
            f"mock script has no entry for {tag.key if tag else '<untagged>'}"
            " and no default"
        )

    def complete(
        self,
        messages: list[dict],
        *,
        response_format: dict | None = None,
        tag: RequestTag | None = None,
    ) -> Completion:
        entry = self._entry(tag)
        if response_format is not None:
            return Completion(
                text=json.dumps(entry["answer"]), model_id=self.MODEL_ID
            )
        return Completion(text=entry["analysis"], model_id=self.MODEL_ID)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def complete_analysis(
    bundle: PromptBundle,
    cfg: RunConfig,
    provider: Provider,
    repetition: int,
    clock: Callable[[], str] = _utc_now,
) -> AnalysisResult:
    """Run stage one: free-text visual analysis of the bundle."""
    tag = RequestTag(bundle.strategy.cli_name, bundle.screenshot.screenshot_id, repetition)
    bundle_id = bundle.digest()
    try:
        completion = provider.complete(to_wire(bundle.messages), tag=tag)
    except ProviderError as exc:
        raise ProviderError(f"{tag.key} (bundle {bundle_id[:12]}): {exc}") from exc
    if not completion.text:
        raise ProviderError(f"{tag.key} (bundle {bundle_id[:12]}): empty completion")
    return AnalysisResult(
        bundle_id=bundle_id,
        repetition_index=repetition,
        raw_text=completion.text,
        model_id=completion.model_id,
        created_at=clock(),
        usage=completion.usage,
    )


def extract_answer(
    analysis: AnalysisResult,
    cfg: RunConfig,
    provider: Provider,
    tag: RequestTag | None = None,
) -> tuple[ExtractedAnswer, bool]:
    """Run stage two: structured answer extraction in a fresh thread.

    Returns the parsed answer plus a flag marking whether a nonempty
    description was normalized away because no bug was detected.
    """
    if not analysis.raw_text:
        raise ProviderError("cannot extract from an empty analysis")
    instruction = extraction_instruction_text() + "\n\n" + analysis.raw_text
    messages = [{"role": "user", "content": [{"type": "text", "text": instruction}]}]
    completion = provider.complete(
        messages, response_format=EXTRACTION_RESPONSE_FORMAT, tag=tag
    )
    return parse_extraction(completion.text)


def parse_extraction(text: str) -> tuple[ExtractedAnswer, bool]:
    """Parse and schema-check the extraction stage's JSON payload."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ExtractionError(f"extraction response is not JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ExtractionError("extraction response must be a JSON object")
    expected = {"bool_did_detect_visual_bug", "string_description_of_visual_bug"}
    if set(payload) != expected:
        raise ExtractionError(
            f"extraction response fields {sorted(payload)} != {sorted(expected)}"
        )
    detected = payload["bool_did_detect_visual_bug"]
    description = payload["string_description_of_visual_bug"]
    if not isinstance(detected, bool):
        raise ExtractionError("bool_did_detect_visual_bug must be a boolean")
    if not isinstance(description, str):
        raise ExtractionError("string_description_of_visual_bug must be a string")

    normalized = False
    if not detected and description:
        logger.info("normalizing nonempty description on a negative verdict")
        description = ""
        normalized = True
    return ExtractedAnswer(detected, description), normalized


class RunArchive:
    """Append-only NDJSON archive of stage events for one experiment run.

    One record per event: ``analysis``, ``answer``, or ``skip``. Appends
    are serialized through a lock so parallel units cannot interleave
    partial lines.
    """

    ARCHIVE_NAME = "archive.ndjson"
    META_NAME = "run.json"

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.path = self.directory / self.ARCHIVE_NAME
        self._lock = threading.Lock()

    @property
    def exists(self) -> bool:
        return self.path.is_file() and self.path.stat().st_size > 0

    def initialize(self, run_id: str, strategy: PromptStrategy, cfg: RunConfig) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        meta_path = self.directory / self.META_NAME
        meta = {
            "run_id": run_id,
            "strategy": strategy.cli_name,
            "config": cfg.to_dict(),
        }
        if meta_path.is_file():
            existing = json.loads(meta_path.read_text(encoding="utf-8"))
            if existing.get("run_id") != run_id or existing.get("strategy") != strategy.cli_name:
                raise ArchiveError(
                    f"run directory {self.directory} belongs to run "
                    f"{existing.get('run_id')!r} ({existing.get('strategy')!r})"
                )
        else:
            meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
        self.path.touch()

    def metadata(self) -> dict:
        meta_path = self.directory / self.META_NAME
        if not meta_path.is_file():
            raise ArchiveError(f"missing {self.META_NAME} in {self.directory}")
        return json.loads(meta_path.read_text(encoding="utf-8"))

    def append(self, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, separators=(",", ":"))
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def records(self) -> list[dict]:
        if not self.path.is_file():
            raise ArchiveError(f"missing archive: {self.path}")
        out = []
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ArchiveError(f"{self.path}:{lineno}: bad record: {exc}") from exc
        return out

    def analyses(self) -> dict[tuple[str, str, int], dict]:
        return {
            (r["strategy"], r["screenshot_id"], r["repetition"]): r
            for r in self.records()
            if r["event"] == "analysis"
        }

    def answers(self) -> dict[tuple[str, str, int], dict]:
        return {
            (r["strategy"], r["screenshot_id"], r["repetition"]): r
            for r in self.records()
            if r["event"] == "answer"
        }

    def skips(self) -> list[dict]:
        return [r for r in self.records() if r["event"] == "skip"]


def run_id_for(strategy: PromptStrategy, manifest_path: str | Path) -> str:
    """Deterministic run id: strategy name plus a manifest content digest."""
    digest = sha256(Path(manifest_path).read_bytes()).hexdigest()[:8]
    return f"{strategy.cli_name}-{digest}"


@dataclass
class RunSummary:
    run_id: str
    answers_written: int
    skipped: int
    resumed: int


def run_experiment(
    dataset: Dataset,
    strategy: PromptStrategy,
    cfg: RunConfig,
    provider: Provider,
    out_dir: str | Path,
    run_id: str,
    clock: Callable[[], str] = _utc_now,
) -> RunSummary:
    """Execute the two-stage pipeline over every applicable screenshot.

    For each (screenshot, repetition) unit the analysis and extraction
    stages run strictly in order and both events are archived. Units
    already present in the archive are skipped, which makes re-running a
    completed experiment a no-op. Inapplicable app/strategy pairs are
    recorded once per screenshot as skip events.
    """
    archive = RunArchive(out_dir)
    archive.initialize(run_id, strategy, cfg)
    done_answers = archive.answers()
    done_analyses = archive.analyses()
    already_skipped = {
        (r["strategy"], r["screenshot_id"]) for r in archive.skips()
    }

    units: list[tuple] = []  # (screenshot, repetition)
    skipped = 0
    bundles = {}
    for shot in dataset.screenshots:
        app = dataset.apps[shot.app_id]
        applicable, reason = is_applicable(strategy, app)
        if not applicable:
            if (strategy.cli_name, shot.screenshot_id) not in already_skipped:
                archive.append(
                    {
                        "event": "skip",
                        "strategy": strategy.cli_name,
                        "app_id": shot.app_id,
                        "screenshot_id": shot.screenshot_id,
                        "reason": reason,
                    }
                )
            skipped += 1
            continue
        bugfree = (
            dataset.bugfree_screenshot(shot.app_id)
            if strategy.uses_reference_screenshot
            else None
        )
        bundles[shot.screenshot_id] = build_messages(strategy, app, shot, bugfree)
        for rep in range(cfg.repetitions):
            units.append((shot, rep))

    resumed = 0
    written = 0
    lock = threading.Lock()

    def run_unit(shot, rep: int) -> None:
        nonlocal resumed, written
        key = (strategy.cli_name, shot.screenshot_id, rep)
        tag = RequestTag(strategy.cli_name, shot.screenshot_id, rep)
        if key in done_answers:
            with lock:
                resumed += 1
            return
        bundle = bundles[shot.screenshot_id]
        if key in done_analyses:
            # crash between stages on a previous run: reuse the archived text
            prior = done_analyses[key]
            analysis = AnalysisResult(
                bundle_id=prior["bundle_id"],
                repetition_index=rep,
                raw_text=prior["raw_text"],
                model_id=prior["model_id"],
                created_at=prior["created_at"],
                usage=prior.get("usage"),
            )
        else:
            analysis = complete_analysis(bundle, cfg, provider, rep, clock=clock)
            archive.append(
                {
                    "event": "analysis",
                    "strategy": strategy.cli_name,
                    "app_id": shot.app_id,
                    "screenshot_id": shot.screenshot_id,
                    "repetition": rep,
                    "bundle_id": analysis.bundle_id,
                    "raw_text": analysis.raw_text,
                    "model_id": analysis.model_id,
                    "created_at": analysis.created_at,
                    "usage": analysis.usage,
                    "image_path": str(shot.image_path),
                }
            )
        try:
            answer, normalized = extract_answer(analysis, cfg, provider, tag=tag)
        except ExtractionError as exc:
            raise ExtractionError(f"{tag.key}: {exc}") from exc
        archive.append(
            {
                "event": "answer",
                "strategy": strategy.cli_name,
                "app_id": shot.app_id,
                "screenshot_id": shot.screenshot_id,
                "repetition": rep,
                "analysis_digest": sha256(analysis.raw_text.encode("utf-8")).hexdigest(),
                "detected": answer.bool_did_detect_visual_bug,
                "description": answer.string_description_of_visual_bug,
                "normalized": normalized,
                "model_id": analysis.model_id,
                "created_at": clock(),
                "image_path": str(shot.image_path),
            }
        )
        with lock:
            written += 1

    # repetition-major order: all screenshots at rep 0, then rep 1, ...
    manifest_order = {s.screenshot_id: i for i, s in enumerate(dataset.screenshots)}
    ordered = sorted(
        units, key=lambda u: (u[1], manifest_order[u[0].screenshot_id])
    )
    if cfg.parallelism <= 1:
        for shot, rep in ordered:
            run_unit(shot, rep)
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            futures = [pool.submit(run_unit, shot, rep) for shot, rep in ordered]
            for future in futures:
                future.result()

    return RunSummary(
        run_id=run_id, answers_written=written, skipped=skipped, resumed=resumed
    )
