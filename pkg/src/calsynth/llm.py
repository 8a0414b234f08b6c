"""Prompt construction and two-stage (generate, then relabel) synthetic text generation.

The HTTP backend speaks the chat-completions JSON format: it POSTs
``{model, temperature, messages}`` and reads ``choices[0].message.content``.
The mock backend answers the same prompts offline, so the whole pipeline runs
without a model server: generated texts are ``"<exemplar> [variant i]"`` and
relabeling always returns the exemplar's class.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Sequence

import httpx

from .errors import (BadStatus, InvalidParam, MalformedResponse, ParseFailure, RateLimited,
                     Transport, UnparsableLabel)
from .metrics import LabelSpace, PredictionRecord
from .targeting import GenerationSpec

log = logging.getLogger(__name__)

API_KEY_ENV = "CALIB_API_KEY"
DEFAULT_K = 3

RELABEL_INSTRUCTION = (
    "Which class does the following utterance belong to? "
    "Answer with exactly one class name."
)


@dataclass(frozen=True)
class TaskSpec:
    class_a: str
    class_b: str
    definition_a: str
    definition_b: str
    shots_a: tuple[str, ...]
    shots_b: tuple[str, ...]

    def __post_init__(self):
        if self.class_a == self.class_b:
            raise InvalidParam("class names must be distinct")
        for name, shots in (("shots_a", self.shots_a), ("shots_b", self.shots_b)):
            if len(shots) != 3:
                raise InvalidParam(f"{name} must hold exactly 3 examples, got {len(shots)}")

    @property
    def classes(self) -> tuple[str, str]:
        return (self.class_a, self.class_b)

    @property
    def labels(self) -> LabelSpace:
        """Scores are read as the probability of ``class_a``."""
        return LabelSpace(negative=self.class_b, positive=self.class_a)

    def swapped(self) -> "TaskSpec":
        return TaskSpec(self.class_b, self.class_a, self.definition_b, self.definition_a,
                        self.shots_b, self.shots_a)

    @classmethod
    def from_dict(cls, obj: dict) -> "TaskSpec":
        try:
            return cls(
                class_a=obj["class_a"], class_b=obj["class_b"],
                definition_a=obj["definition_a"], definition_b=obj["definition_b"],
                shots_a=tuple(obj["shots_a"]), shots_b=tuple(obj["shots_b"]),
            )
        except KeyError as exc:
            raise InvalidParam(f"task spec is missing {exc.args[0]!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "TaskSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class GenRequest:
    exemplar_text: str
    exemplar_primary_pct: int
    target_primary_pct: int
    primary_class: str
    secondary_class: str
    k: int = DEFAULT_K

    def __post_init__(self):
        for name in ("exemplar_primary_pct", "target_primary_pct"):
            pct = getattr(self, name)
            if not 1 <= pct <= 99:
                raise InvalidParam(f"{name} must lie in [1, 99], got {pct}")
        if self.k < 1:
            raise InvalidParam(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class SyntheticText:
    text: str
    spec_id: str
    source_bin: int
    source_id: str
    exemplar_class: str
    claimed_primary_pct: int | None = None
    relabeled_class: str | None = None
    flagged: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticText":
        fields = {k: obj[k] for k in cls.__dataclass_fields__ if k in obj}
        try:
            return cls(**fields)
        except TypeError as exc:
            raise InvalidParam(f"malformed synthetic text record: {exc}") from None


class BackendKind(str, Enum):
    HTTP = "http"
    MOCK = "mock"


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind = BackendKind.MOCK
    endpoint: str = ""
    model: str = ""
    temperature: float = 0.1
    timeout: float = 60.0
    max_parallel: int = 4
    max_attempts: int = 3
    backoff: float = 1.0  # seconds before the first retry; doubles each retry

    def __post_init__(self):
        object.__setattr__(self, "kind", BackendKind(self.kind))
        if not (self.temperature >= 0):
            raise InvalidParam(f"temperature must be >= 0, got {self.temperature}")
        if self.max_parallel < 1 or self.max_attempts < 1:
            raise InvalidParam("max_parallel and max_attempts must be >= 1")
        if self.kind is BackendKind.HTTP and not self.endpoint:
            raise InvalidParam("the http backend needs an endpoint URL")


# --- prompts ----------------------------------------------------------------

def build_system_prompt(task: TaskSpec) -> str:
    lines = ["Consider the task of classifying between the following classes "
             "(along with some examples):"]
    sections = ((task.class_a, task.definition_a, task.shots_a),
                (task.class_b, task.definition_b, task.shots_b))
    for i, (name, definition, shots) in enumerate(sections, 1):
        if i > 1:
            lines.append("")
        lines.append(f"{i}. {name}, {definition}")
        lines.append("Some examples of utterances include:")
        lines.extend(f"- {shot}" for shot in shots)
    return "\n".join(lines) + "\n"


def build_generation_prompt(req: GenRequest) -> str:
    a, b = req.primary_class, req.secondary_class
    p, q = req.exemplar_primary_pct, req.target_primary_pct
    return (
        f"An example {req.exemplar_text} which belongs {p}% to {a} and {100 - p}% to {b} "
        f"(based on a classifier's categorization). Now I ask you act as that classifier "
        f"and based on this example, generate a diverse set of {req.k} short utterances "
        f"where each utterance belongs {q}% to {a} and {100 - q}% to {b}."
    )


def build_relabel_prompt(text: str) -> str:
    return f"{RELABEL_INSTRUCTION}\n\nUtterance: {text}"


def generation_messages(task: TaskSpec, req: GenRequest) -> list[dict]:
    return [{"role": "system", "content": build_system_prompt(task)},
            {"role": "user", "content": build_generation_prompt(req)}]


def relabel_messages(task: TaskSpec, text: str) -> list[dict]:
    return [{"role": "system", "content": build_system_prompt(task)},
            {"role": "user", "content": build_relabel_prompt(text)}]


# --- transport --------------------------------------------------------------

def build_request_body(backend: BackendConfig, messages: Sequence[dict]) -> dict:
    return {
        "model": backend.model,
        "temperature": backend.temperature,
        "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
    }


def _headers() -> dict:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(API_KEY_ENV)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return headers


def chat_complete(backend: BackendConfig, messages: Sequence[dict],
                  client: httpx.Client | None = None) -> str:
    """POST one chat request and return the first choice's message content.

    429, 5xx and transport failures are retried up to ``max_attempts`` times
    with exponential backoff; other statuses fail immediately.
    """
    if backend.kind is not BackendKind.HTTP:
        raise InvalidParam("chat_complete needs an http backend")
    payload = json.dumps(build_request_body(backend, messages)).encode("utf-8")
    own_client = client is None
    client = client or httpx.Client(timeout=backend.timeout)
    try:
        last: Exception | None = None
        for attempt in range(backend.max_attempts):
            if attempt:
                time.sleep(backend.backoff * 2 ** (attempt - 1))
            try:
                resp = client.post(backend.endpoint, content=payload, headers=_headers(),
                                   timeout=backend.timeout)
            except httpx.TransportError as exc:
                last = Transport(f"{type(exc).__name__}: {exc}")
                log.warning("attempt %d/%d failed: %s", attempt + 1, backend.max_attempts, last)
                continue
            if resp.status_code == 429:
                last = RateLimited(429, resp.text)
            elif resp.status_code >= 500:
                last = BadStatus(resp.status_code, resp.text)
            elif resp.status_code >= 400 or resp.status_code < 200:
                raise BadStatus(resp.status_code, resp.text)
            else:
                return _content(resp)
            log.warning("attempt %d/%d failed: %s", attempt + 1, backend.max_attempts, last)
        raise last
    finally:
        if own_client:
            client.close()


def _content(resp: httpx.Response) -> str:
    try:
        content = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError):
        raise MalformedResponse(f"unexpected reply shape: {resp.text[:200]!r}") from None
    if not isinstance(content, str):
        raise MalformedResponse("message content is not a string")
    return content


# --- reply parsing ----------------------------------------------------------

_BULLET = re.compile(r"^\s*(?:\d+\s*[.):]|[-*•])\s+(?P<body>.*\S)\s*$")
_ANNOTATION = re.compile(
    r"\s*\(\s*(?P<p1>\d{1,3})\s*%\s*(?:to\s+)?(?P<c1>[^(),%]+?)\s*(?:,|\band\b)\s*"
    r"(?P<p2>\d{1,3})\s*%\s*(?:to\s+)?(?P<c2>[^(),%]+?)\s*\)\s*$",
    re.IGNORECASE,
)
# anything parenthesised with a percentage at the end of an utterance
_LOOSE_ANNOTATION = re.compile(r"\s*\([^()]*\d\s*%[^()]*\)\s*$")
_QUOTES = "\"'“”‘’"


def _norm(name: str) -> str:
    return re.sub(r"[\s_]+", "_", name.strip().lower())


def strip_annotation(text: str) -> str:
    """Drop a trailing ``(65% a, 35% b)``-style probability annotation."""
    return _LOOSE_ANNOTATION.sub("", text).strip()


def parse_utterances(raw: str, primary: str, secondary: str) -> list[tuple[str, int | None]]:
    """Split a generation reply into ``(utterance, claimed primary percent)`` pairs."""
    lines = [ln for ln in raw.splitlines() if ln.strip()]
    bulleted = [m.group("body") for m in map(_BULLET.match, lines) if m]
    bodies = bulleted or [ln.strip() for ln in lines if not ln.rstrip().endswith(":")]

    out = []
    for body in bodies:
        claimed = None
        m = _ANNOTATION.search(body)
        if m:
            for pct, name in ((m["p1"], m["c1"]), (m["p2"], m["c2"])):
                if _norm(name) == _norm(primary):
                    claimed = int(pct)
                elif _norm(name) == _norm(secondary) and claimed is None:
                    claimed = 100 - int(pct)
        text = strip_annotation(body).strip(_QUOTES).strip()
        if text:
            out.append((text, claimed))
    if not out:
        raise ParseFailure("no utterances found in the reply", raw)
    return out


def parse_label(raw: str, task: TaskSpec) -> str:
    cleaned = raw.strip().strip(_QUOTES + ".!").strip()
    for name in task.classes:
        if _norm(cleaned) == _norm(name):
            return name
    found = [name for name in task.classes
             if re.search(rf"(?<![\w]){re.escape(name)}(?![\w])", raw, re.IGNORECASE)]
    if len(found) == 1:
        return found[0]
    raise UnparsableLabel(f"expected exactly one of {task.classes}", raw)


# --- pipeline ---------------------------------------------------------------

def _mock_generation_reply(req: GenRequest, first_variant: int) -> str:
    q = req.target_primary_pct
    return "\n".join(
        f"{j + 1}. {req.exemplar_text} [variant {first_variant + j}] "
        f"({q}% {req.primary_class}, {100 - q}% {req.secondary_class})"
        for j in range(req.k)
    )


def _run_all(backend: BackendConfig, jobs: Sequence, fn: Callable):
    """Apply ``fn`` to every job with up to max_parallel in flight; input order kept."""
    if backend.max_parallel == 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=backend.max_parallel) as pool:
        return list(pool.map(fn, jobs))


def generate(spec: GenerationSpec, task: TaskSpec, backend: BackendConfig,
             k: int = DEFAULT_K, client: httpx.Client | None = None,
             max_rounds: int = 10) -> list[SyntheticText]:
    """Stage one: ask for k texts per exemplar until ``sample_count`` are collected.

    Exemplars are used one per call, cycling in order. If the backend keeps
    under-delivering, at most ``max_rounds`` rounds are attempted and the
    shortfall is returned as is.
    """
    if {spec.dominant_class, spec.secondary_class} != set(task.classes):
        raise InvalidParam(
            f"spec classes ({spec.dominant_class}, {spec.secondary_class}) "
            f"do not match task classes {task.classes}"
        )
    if not spec.exemplars:
        raise InvalidParam(f"{spec.spec_id} has no exemplars")
    for ex in spec.exemplars:
        if not ex.text:
            raise InvalidParam(f"exemplar {ex.id} has no text")

    def request_for(ex: PredictionRecord) -> GenRequest:
        return GenRequest(ex.text, spec.exemplar_primary_pct, spec.target_primary_pct,
                          spec.dominant_class, spec.secondary_class, k)

    own_client = backend.kind is BackendKind.HTTP and client is None
    if own_client:
        client = httpx.Client(timeout=backend.timeout)

    def call(job: tuple[int, PredictionRecord]):
        call_no, ex = job
        req = request_for(ex)
        if backend.kind is BackendKind.MOCK:
            raw = _mock_generation_reply(req, call_no * k + 1)
        else:
            raw = chat_complete(backend, generation_messages(task, req), client)
        return ex, parse_utterances(raw, req.primary_class, req.secondary_class)

    texts: list[SyntheticText] = []
    calls_made = 0
    try:
        for _ in range(max_rounds):
            remaining = spec.sample_count - len(texts)
            if remaining <= 0:
                break
            n_calls = math.ceil(remaining / k)
            jobs = [(calls_made + i, spec.exemplars[(calls_made + i) % len(spec.exemplars)])
                    for i in range(n_calls)]
            calls_made += n_calls
            for ex, parsed in _run_all(backend, jobs, call):
                texts.extend(
                    SyntheticText(text=t, spec_id=spec.spec_id, source_bin=spec.bin_index,
                                  source_id=ex.id, exemplar_class=ex.true_label,
                                  claimed_primary_pct=pct)
                    for t, pct in parsed
                )
    finally:
        if own_client:
            client.close()
    return texts[: spec.sample_count]


def relabel(texts: Sequence[SyntheticText], task: TaskSpec, backend: BackendConfig,
            strict: bool = False, client: httpx.Client | None = None) -> list[SyntheticText]:
    """Stage two: ask for the class of each text.

    Texts whose answer differs from their exemplar's class are flagged; under
    ``strict`` they are dropped instead of kept.
    """
    own_client = backend.kind is BackendKind.HTTP and client is None
    if own_client:
        client = httpx.Client(timeout=backend.timeout)

    def call(item: SyntheticText) -> SyntheticText:
        if backend.kind is BackendKind.MOCK:
            raw = item.exemplar_class
        else:
            raw = chat_complete(backend, relabel_messages(task, item.text), client)
        label = parse_label(raw, task)
        return replace(item, relabeled_class=label, flagged=label != item.exemplar_class)

    try:
        labeled = _run_all(backend, list(texts), call)
    finally:
        if own_client:
            client.close()
    if strict:
        return [t for t in labeled if not t.flagged]
    return labeled


def two_stage(specs: Iterable[GenerationSpec], task: TaskSpec, backend: BackendConfig,
              k: int = DEFAULT_K, strict: bool = False) -> list[SyntheticText]:
    out: list[SyntheticText] = []
    client = httpx.Client(timeout=backend.timeout) if backend.kind is BackendKind.HTTP else None
    try:
        for spec in specs:
            out.extend(relabel(generate(spec, task, backend, k, client), task, backend,
                               strict, client))
    finally:
        if client is not None:
            client.close()
    return out


def dump_synthetic(texts: Iterable[SyntheticText]) -> str:
    return "".join(json.dumps(t.to_dict()) + "\n" for t in texts)


def load_synthetic(path: str | Path) -> list[SyntheticText]:
    with open(path, encoding="utf-8") as fh:
        return [SyntheticText.from_dict(json.loads(line)) for line in fh if line.strip()]
