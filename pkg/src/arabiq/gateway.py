"""Prompt rendering and chat-completion calls against configured providers.

Real profiles speak OpenAI-compatible chat completions over HTTP (bearer token
from the environment variable the profile names). Mock profiles answer from a
fixture table keyed by content hashes, which makes whole pipeline runs
reproducible offline. Retries use exponential backoff with full jitter, and a
per-profile semaphore bounds in-flight requests.
"""

from __future__ import annotations

import base64
import json
import random
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Protocol

from .core import (
    Description,
    ImageRecord,
    Modality,
    PromptCondition,
    PromptTemplate,
    ProviderProfile,
    TemplateTask,
    new_ulid,
    now_utc,
    sha256_hex,
    template_placeholders,
)

BARE_DESCRIBE_PROMPT = "Describe the image."

BACKOFF_BASE_S = 0.5
BACKOFF_FACTOR = 2.0

DEFAULT_DESCRIBE_TEMPERATURE = 0.2
DEFAULT_QUIZ_TEMPERATURE = 0.7
DEFAULT_MAX_TOKENS = 1024


class GatewayError(Exception):
    """Base class for provider-call failures."""


class MissingVar(GatewayError):
    def __init__(self, name: str):
        super().__init__(f"no binding for template placeholder {{{name}}}")
        self.name = name


class ProviderTimeout(GatewayError):
    pass


class ProviderHttp(GatewayError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"provider returned HTTP {status}: {detail[:200]}")
        self.status = status


class EmptyResponse(GatewayError):
    pass


class ImageFetchFailed(GatewayError):
    pass


class MockFixtureMissing(GatewayError):
    def __init__(self, keys: list[str]):
        super().__init__(f"no mock fixture for key(s) {keys}")
        self.keys = keys


class ApiKeyMissing(GatewayError):
    pass


def render_prompt(template: PromptTemplate, variables: dict[str, str]) -> str:
    """Substitute every {name} placeholder; extra variables are ignored.

    Single pass, so placeholder-looking text inside a substituted value is
    never expanded again.
    """
    for name in sorted(template_placeholders(template.body)):
        if name not in variables:
            raise MissingVar(name)
    return re.sub(
        r"\{([A-Za-z_][A-Za-z0-9_]*)\}", lambda m: variables[m.group(1)], template.body
    )


def _load_template_text(name: str) -> str:
    return resources.files("arabiq.templates").joinpath(name).read_text(encoding="utf-8")


def default_describe_template() -> PromptTemplate:
    return PromptTemplate("describe-default", TemplateTask.DESCRIBE_IMAGE, _load_template_text("describe.txt"))


def default_quiz_template() -> PromptTemplate:
    return PromptTemplate("quiz-default", TemplateTask.GENERATE_QUIZ, _load_template_text("quiz.txt"))


# --- wire types -------------------------------------------------------------


@dataclass(frozen=True)
class ImageAttachment:
    """Either inline bytes with a media type, or an https URL."""

    data: bytes | None = None
    media_type: str = "image/jpeg"
    url: str | None = None

    def __post_init__(self) -> None:
        if (self.data is None) == (self.url is None):
            raise ValueError("attachment needs exactly one of data or url")

    def as_image_url(self) -> str:
        if self.url is not None:
            return self.url
        encoded = base64.b64encode(self.data or b"").decode("ascii")
        return f"data:{self.media_type};base64,{encoded}"


@dataclass(frozen=True)
class ChatMessage:
    role: str  # "system" | "user"
    text: str
    image: ImageAttachment | None = None


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    messages: tuple[ChatMessage, ...]
    temperature: float = DEFAULT_DESCRIBE_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0,2], got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if sum(1 for m in self.messages if m.image is not None) > 1:
            raise ValueError("at most one image attachment per request")

    def to_wire(self) -> dict[str, Any]:
        messages: list[dict[str, Any]] = []
        for m in self.messages:
            if m.image is None:
                messages.append({"role": m.role, "content": m.text})
            else:
                messages.append(
                    {
                        "role": m.role,
                        "content": [
                            {"type": "text", "text": m.text},
                            {"type": "image_url", "image_url": {"url": m.image.as_image_url()}},
                        ],
                    }
                )
        return {
            "model": self.model_name,
            "messages": messages,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass(frozen=True)
class ChatResponse:
    text: str
    provider_latency_ms: int
    raw_finish_reason: str = "stop"


# --- transport ---------------------------------------------------------------


@dataclass(frozen=True)
class TransportReply:
    status: int
    payload: dict[str, Any] | None
    text: str = ""


class Transport(Protocol):
    def post_json(
        self, url: str, headers: dict[str, str], body: dict[str, Any], timeout_s: float
    ) -> TransportReply: ...


class HttpxTransport:
    """Thin blocking HTTP client; raises ProviderTimeout on deadline."""

    def post_json(
        self, url: str, headers: dict[str, str], body: dict[str, Any], timeout_s: float
    ) -> TransportReply:
        import httpx

        try:
            resp = httpx.post(url, headers=headers, json=body, timeout=timeout_s)
        except httpx.TimeoutException as exc:
            raise ProviderTimeout(f"request to {url} timed out after {timeout_s}s") from exc
        except httpx.HTTPError as exc:
            raise ProviderHttp(599, f"transport failure: {exc}") from exc
        try:
            payload = resp.json()
        except ValueError:
            payload = None
        return TransportReply(status=resp.status_code, payload=payload, text=resp.text)


# --- mock fixtures ------------------------------------------------------------


def load_fixtures(path: str | Path) -> dict[str, str]:
    """Read a JSONL fixture file of {"key": ..., "response_text": ...} rows."""
    fixtures: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        row = json.loads(line)
        key = row["key"]
        if key in fixtures:
            raise ValueError(f"duplicate fixture key {key!r} at line {line_no}")
        fixtures[key] = row["response_text"]
    return fixtures


def describe_fixture_key(prompt: str, image_sha256: str, model_name: str) -> str:
    return sha256_hex(f"{prompt}|{image_sha256}|{model_name}".encode("utf-8"))


def quiz_fixture_key(prompt: str, description_text: str, model_name: str) -> str:
    desc_sha = sha256_hex(description_text.encode("utf-8"))
    return sha256_hex(f"{prompt}|{desc_sha}|{model_name}".encode("utf-8"))


def quiz_fixture_alias(description_text: str, n_questions: int) -> str:
    """Hand-author shorthand: sha256 of the description text, colon, question count."""
    return f"{sha256_hex(description_text.encode('utf-8'))}:{n_questions}"


# --- gateway ------------------------------------------------------------------


@dataclass
class LlmGateway:
    """Executes captioning and quiz-generation calls for any configured profile."""

    transport: Transport = field(default_factory=HttpxTransport)
    fixtures: dict[str, str] = field(default_factory=dict)
    sleep: Callable[[float], None] = time.sleep
    rng: random.Random = field(default_factory=random.Random)
    env: Callable[[str], str | None] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        import os

        if self.env is None:
            self.env = os.environ.get
        self._semaphores: dict[str, threading.BoundedSemaphore] = {}
        self._sem_lock = threading.Lock()

    def _semaphore(self, profile: ProviderProfile) -> threading.BoundedSemaphore:
        with self._sem_lock:
            sem = self._semaphores.get(profile.profile_id)
            if sem is None:
                sem = threading.BoundedSemaphore(profile.max_parallel)
                self._semaphores[profile.profile_id] = sem
            return sem

    def execute_with_retry(self, req: ChatRequest, profile: ProviderProfile) -> ChatResponse:
        """POST the request, retrying timeouts, 429 and 5xx with full-jitter backoff."""
        url = profile.endpoint_url.rstrip("/") + "/chat/completions"
        api_key = self.env(profile.api_key_env) if profile.api_key_env else None
        if not api_key:
            raise ApiKeyMissing(f"environment variable {profile.api_key_env!r} is not set")
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        timeout_s = profile.timeout_ms / 1000.0
        body = req.to_wire()

        with self._semaphore(profile):
            last_error: GatewayError | None = None
            for attempt in range(profile.max_retries + 1):
                started = time.monotonic()
                try:
                    reply = self.transport.post_json(url, headers, body, timeout_s)
                except ProviderTimeout as exc:
                    last_error = exc
                else:
                    if reply.status == 429 or reply.status >= 500:
                        last_error = ProviderHttp(reply.status, reply.text)
                    elif reply.status >= 400:
                        raise ProviderHttp(reply.status, reply.text)
                    else:
                        latency_ms = int((time.monotonic() - started) * 1000)
                        return self._parse_reply(reply, latency_ms)
                if attempt < profile.max_retries:
                    self.sleep(self.rng.uniform(0.0, BACKOFF_BASE_S * BACKOFF_FACTOR**attempt))
            assert last_error is not None
            raise last_error

    @staticmethod
    def _parse_reply(reply: TransportReply, latency_ms: int) -> ChatResponse:
        payload = reply.payload or {}
        try:
            choice = payload["choices"][0]
            text = choice["message"]["content"] or ""
            finish = choice.get("finish_reason") or "stop"
        except (KeyError, IndexError, TypeError):
            raise ProviderHttp(200, f"malformed completion payload: {reply.text[:200]}")
        return ChatResponse(text=text, provider_latency_ms=latency_ms, raw_finish_reason=finish)

    def _mock_lookup(self, keys: list[str]) -> str:
        for key in keys:
            if key in self.fixtures:
                return self.fixtures[key]
        raise MockFixtureMissing(keys)

    @staticmethod
    def _image_attachment(img: ImageRecord) -> ImageAttachment:
        if img.locator.startswith(("http://", "https://")):
            return ImageAttachment(url=img.locator)
        path = Path(img.locator)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise ImageFetchFailed(f"cannot read image at {img.locator!r}: {exc}") from exc
        suffix = path.suffix.lower().lstrip(".") or "jpeg"
        media = {"jpg": "jpeg"}.get(suffix, suffix)
        return ImageAttachment(data=data, media_type=f"image/{media}")

    def describe_image(
        self,
        img: ImageRecord,
        profile: ProviderProfile,
        condition: PromptCondition,
        template: PromptTemplate,
    ) -> Description:
        """Run the captioning model and wrap its reply as a Description.

        Prompted sends the template text verbatim; bare sends only the fixed
        control instruction.
        """
        if profile.modality not in (Modality.VISION, Modality.MOCK):
            raise ValueError(f"profile {profile.profile_id!r} cannot describe images")
        prompt = (
            render_prompt(template, {}) if condition is PromptCondition.PROMPTED else BARE_DESCRIBE_PROMPT
        )

        if profile.modality is Modality.MOCK:
            text = self._mock_lookup([describe_fixture_key(prompt, img.sha256, profile.model_name)])
        else:
            req = ChatRequest(
                model_name=profile.model_name,
                messages=(ChatMessage("user", prompt, image=self._image_attachment(img)),),
                temperature=DEFAULT_DESCRIBE_TEMPERATURE,
            )
            text = self.execute_with_retry(req, profile).text

        text = text.strip()
        if not text:
            raise EmptyResponse(f"empty description from {profile.profile_id!r}")
        if condition is PromptCondition.PROMPTED:
            # The prompt demands one paragraph; fold any stray blank lines.
            text = "\n".join(line for line in (l.strip() for l in text.splitlines()) if line)
        return Description(
            id=new_ulid(),
            image_id=img.id,
            model_id=profile.model_name,
            condition=condition,
            text=text,
            created_at=now_utc(),
        )

    def generate_quiz_text(
        self,
        description: Description,
        profile: ProviderProfile,
        n_questions: int,
        template: PromptTemplate,
    ) -> str:
        """Run the quiz model and return its raw text untouched."""
        if profile.modality not in (Modality.TEXT, Modality.MOCK):
            raise ValueError(f"profile {profile.profile_id!r} cannot generate quizzes")
        if n_questions < 1:
            raise ValueError(f"n_questions must be >= 1, got {n_questions}")
        prompt = render_prompt(
            template, {"description": description.text, "n_questions": str(n_questions)}
        )

        if profile.modality is Modality.MOCK:
            return self._mock_lookup(
                [
                    quiz_fixture_key(prompt, description.text, profile.model_name),
                    quiz_fixture_alias(description.text, n_questions),
                ]
            )

        req = ChatRequest(
            model_name=profile.model_name,
            messages=(ChatMessage("user", prompt),),
            temperature=DEFAULT_QUIZ_TEMPERATURE,
        )
        text = self.execute_with_retry(req, profile).text
        if not text.strip():
            raise EmptyResponse(f"empty quiz text from {profile.profile_id!r}")
        return text
