"""Request/response layer for every model call the pipeline makes.

Two interchangeable backends sit behind ``infer``: an HTTP JSON backend for
live models and a scripted backend that replays canned payloads keyed by a
stable request fingerprint, which keeps the full pipeline deterministic and
testable offline.  Stage payload schemas are versioned as "iface-1"; nothing
that fails validation is ever handed to downstream stages.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Optional

import requests

from .errors import (
    BackendUnavailableError,
    ScenarioMissError,
    SchemaViolationError,
)
from .graph import FRAME_RE

log = logging.getLogger(__name__)

IFACE_VERSION = "iface-1"

STAGE_BEHAVIOR = "behavior_description"
STAGE_PROPOSAL = "activity_proposal"
STAGE_SOLVER = "remote_solver"
STAGE_QUERY = "query_answer"
STAGES = (STAGE_BEHAVIOR, STAGE_PROPOSAL, STAGE_SOLVER, STAGE_QUERY)

_IMAGE_STAGES = (STAGE_BEHAVIOR, STAGE_PROPOSAL)
_CONTEXT_STAGES = (STAGE_SOLVER, STAGE_QUERY)

MAX_QUERY_CANDIDATES = 2

ENV_URL = "S3DSG_INFERENCE_URL"
ENV_TOKEN = "S3DSG_INFERENCE_TOKEN"

DEFAULT_TIMEOUT_S = 120.0
DEFAULT_ATTEMPTS = 3
DEFAULT_BACKOFF_S = 1.0
DEFAULT_CONCURRENCY = 4


@dataclass(frozen=True)
class InferenceRequest:
    stage: str
    prompt_text: str
    image_ref: Optional[str] = None
    context_json: Optional[str] = None

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"unknown stage {self.stage!r}; expected one of {STAGES}")
        if not self.prompt_text.strip():
            raise ValueError("prompt_text must be non-empty")
        if self.stage in _IMAGE_STAGES and not self.image_ref:
            raise ValueError(f"stage {self.stage} requires image_ref")
        if self.stage in _CONTEXT_STAGES and not self.context_json:
            raise ValueError(f"stage {self.stage} requires context_json")


@dataclass(frozen=True)
class InferenceResponse:
    payload_json: str
    latency_ms: float
    backend_id: str


def fingerprint(request: InferenceRequest) -> str:
    """Stable request hash; prompt whitespace is normalized so cosmetic
    prompt edits do not invalidate recorded scenarios."""
    normalized_prompt = " ".join(request.prompt_text.split())
    material = json.dumps(
        [request.stage, normalized_prompt, request.image_ref or "", request.context_json or ""],
        ensure_ascii=True,
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


# -- stage payload schemas -------------------------------------------------------


def _check_str(obj, key, where, violations):
    value = obj.get(key)
    if not isinstance(value, str) or not value.strip():
        violations.append(f"{where}: {key} must be a non-empty string")
        return None
    return value


def _check_int(obj, key, where, violations):
    value = obj.get(key)
    if isinstance(value, bool) or not isinstance(value, int):
        violations.append(f"{where}: {key} must be an integer")
        return None
    return value


def _check_frame(obj, where, violations):
    frame = obj.get("frame")
    if not isinstance(frame, str) or not FRAME_RE.match(frame):
        violations.append(f"{where}: frame must be an UPPER_SNAKE identifier")
        return None
    return frame


def _validate_behavior(payload, violations):
    humans = payload.get("humans")
    if not isinstance(humans, list):
        violations.append("top level: humans must be a list")
        return
    for i, item in enumerate(humans):
        where = f"humans[{i}]"
        if not isinstance(item, dict):
            violations.append(f"{where}: must be an object")
            continue
        _check_int(item, "marker", where, violations)
        for key in ("posture", "gaze", "physical_state"):
            _check_str(item, key, where, violations)
        attributes = item.get("attributes")
        if not isinstance(attributes, list) or not all(isinstance(a, str) for a in attributes):
            violations.append(f"{where}: attributes must be a list of strings")


def _proposal_item(item, where, violations, require_target):
    if not isinstance(item, dict):
        violations.append(f"{where}: must be an object")
        return None
    marker = _check_int(item, "human_marker", where, violations)
    label = _check_str(item, "raw_label", where, violations)
    frame = _check_frame(item, where, violations)
    if require_target:
        _check_str(item, "target", where, violations)
    elif "target" in item and item["target"] is not None and not isinstance(item["target"], str):
        violations.append(f"{where}: target must be a string when present")
    return (marker, label, frame)


def _validate_proposal(payload, violations):
    keys = []
    for list_name, require_target in (("local", True), ("remote", False)):
        items = payload.get(list_name)
        if not isinstance(items, list):
            violations.append(f"top level: {list_name} must be a list")
            continue
        for i, item in enumerate(items):
            key = _proposal_item(item, f"{list_name}[{i}]", violations, require_target)
            if key is not None and None not in key:
                keys.append((list_name, key))
    local_keys = {k for name, k in keys if name == "local"}
    remote_keys = {k for name, k in keys if name == "remote"}
    for shared in sorted(local_keys & remote_keys, key=repr):
        violations.append(f"local and remote overlap on {shared!r}; the sets must be disjoint")


def _validate_solver(payload, violations):
    items = payload.get("relationships")
    if not isinstance(items, list):
        violations.append("top level: relationships must be a list")
        return
    for i, item in enumerate(items):
        where = f"relationships[{i}]"
        if not isinstance(item, dict):
            violations.append(f"{where}: must be an object")
            continue
        _check_int(item, "human_id", where, violations)
        _check_int(item, "entity_id", where, violations)
        _check_str(item, "raw_label", where, violations)
        _check_frame(item, where, violations)
        confidence = item.get("confidence")
        if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
            violations.append(f"{where}: confidence must be a number")
        elif not (0.0 <= float(confidence) <= 1.0):
            violations.append(f"{where}: confidence {confidence} outside [0, 1]")


def _validate_query(payload, violations):
    candidates = payload.get("candidates")
    if not isinstance(candidates, list):
        violations.append("top level: candidates must be a list")
        return
    if len(candidates) > MAX_QUERY_CANDIDATES:
        violations.append(
            f"candidates has {len(candidates)} entries; at most {MAX_QUERY_CANDIDATES} allowed"
        )
    for i, cand in enumerate(candidates):
        if isinstance(cand, bool) or not isinstance(cand, int):
            violations.append(f"candidates[{i}]: must be an integer node id")


_VALIDATORS = {
    STAGE_BEHAVIOR: _validate_behavior,
    STAGE_PROPOSAL: _validate_proposal,
    STAGE_SOLVER: _validate_solver,
    STAGE_QUERY: _validate_query,
}


def validate_stage_payload(stage: str, payload_json: str) -> list[str]:
    """Check a raw payload against its stage schema; [] means valid."""
    if stage not in STAGES:
        return [f"unknown stage {stage!r}"]
    try:
        payload = json.loads(payload_json)
    except json.JSONDecodeError as exc:
        return [f"payload is not valid JSON: {exc}"]
    if not isinstance(payload, dict):
        return ["top level: payload must be a JSON object"]
    violations: list[str] = []
    _VALIDATORS[stage](payload, violations)
    return violations


# -- backends --------------------------------------------------------------------


class ScriptedScenario:
    """Canned payloads keyed by (stage, request fingerprint)."""

    def __init__(self, entries: dict[tuple[str, str], str]):
        for (stage, _), payload_json in entries.items():
            violations = validate_stage_payload(stage, payload_json)
            if violations:
                raise SchemaViolationError(stage, violations, payload_json)
        self.entries = dict(entries)

    @classmethod
    def from_records(cls, records) -> "ScriptedScenario":
        """Build from authoring records: {stage, fingerprint_inputs, payload}."""
        entries = {}
        for i, record in enumerate(records):
            try:
                stage = record["stage"]
                inputs = record["fingerprint_inputs"]
                payload = record["payload"]
            except (TypeError, KeyError) as exc:
                raise ValueError(f"scenario record {i} missing field: {exc}") from exc
            request = InferenceRequest(
                stage=stage,
                prompt_text=inputs["prompt_text"],
                image_ref=inputs.get("image_ref"),
                context_json=inputs.get("context_json"),
            )
            payload_json = payload if isinstance(payload, str) else json.dumps(
                payload, sort_keys=True, separators=(",", ":")
            )
            entries[(stage, fingerprint(request))] = payload_json
        return cls(entries)

    @classmethod
    def from_file(cls, path) -> "ScriptedScenario":
        with open(path, "r", encoding="utf-8") as fh:
            records = json.load(fh)
        if not isinstance(records, list):
            raise ValueError(f"{path}: scenario file must hold a JSON array")
        return cls.from_records(records)


class ScriptedBackend:
    """Pure lookup backend; identical requests always replay identical bytes."""

    backend_id = "scripted"

    def __init__(self, scenario: ScriptedScenario):
        self.scenario = scenario

    def complete(self, request: InferenceRequest) -> str:
        key = (request.stage, fingerprint(request))
        try:
            return self.scenario.entries[key]
        except KeyError:
            raise ScenarioMissError(
                f"no scenario entry for stage={request.stage} fingerprint={key[1][:12]}…"
            ) from None


class HttpBackend:
    """JSON-over-HTTP backend with bounded concurrency and retries.

    POSTs {stage, prompt_text, image_ref, context_json} and expects the stage
    payload JSON as the response body.  Transient failures (connection
    errors, timeouts, HTTP 5xx/429) are retried with exponential backoff.
    """

    def __init__(
        self,
        url: Optional[str] = None,
        token: Optional[str] = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        attempts: int = DEFAULT_ATTEMPTS,
        backoff_s: float = DEFAULT_BACKOFF_S,
        concurrency: int = DEFAULT_CONCURRENCY,
        sleep=time.sleep,
    ):
        self.url = url or os.environ.get(ENV_URL)
        if not self.url:
            raise BackendUnavailableError(
                f"no endpoint configured; pass url= or set {ENV_URL}"
            )
        self.token = token if token is not None else os.environ.get(ENV_TOKEN)
        self.timeout_s = timeout_s
        self.attempts = max(1, attempts)
        self.backoff_s = backoff_s
        self._slots = threading.Semaphore(max(1, concurrency))
        self._sleep = sleep
        self.backend_id = f"http:{self.url}"

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def complete(self, request: InferenceRequest) -> str:
        body = {
            "iface": IFACE_VERSION,
            "stage": request.stage,
            "prompt_text": request.prompt_text,
            "image_ref": request.image_ref,
            "context_json": request.context_json,
        }
        last_error: Optional[str] = None
        with self._slots:
            for attempt in range(self.attempts):
                if attempt:
                    self._sleep(self.backoff_s * (2 ** (attempt - 1)))
                try:
                    resp = requests.post(
                        self.url, json=body, headers=self._headers(), timeout=self.timeout_s
                    )
                except requests.RequestException as exc:
                    last_error = str(exc)
                    log.warning("inference POST failed (attempt %d): %s", attempt + 1, exc)
                    continue
                if resp.status_code == 200:
                    return resp.text
                last_error = f"HTTP {resp.status_code}"
                if resp.status_code in (429,) or resp.status_code >= 500:
                    log.warning("inference HTTP %d (attempt %d)", resp.status_code, attempt + 1)
                    continue
                break  # 4xx other than 429: retrying will not help
        raise BackendUnavailableError(
            f"{self.backend_id} failed after {self.attempts} attempt(s): {last_error}"
        )


def infer(request: InferenceRequest, backend) -> InferenceResponse:
    """Run one model call and gate the payload behind schema validation."""
    started = time.perf_counter()
    payload_json = backend.complete(request)
    latency_ms = (time.perf_counter() - started) * 1000.0
    violations = validate_stage_payload(request.stage, payload_json)
    if violations:
        log.error(
            "rejecting %s payload from %s: %s; raw=%r",
            request.stage,
            getattr(backend, "backend_id", "?"),
            "; ".join(violations),
            payload_json,
        )
        raise SchemaViolationError(request.stage, violations, payload_json)
    return InferenceResponse(
        payload_json=payload_json,
        latency_ms=latency_ms,
        backend_id=getattr(backend, "backend_id", "unknown"),
    )
