"""HTTP surface for the learner flow plus token-gated admin endpoints.

Learner responses never carry the generated description or any
correct-answer field; those only appear in feedback after an attempt, or
behind the admin token.
"""

from __future__ import annotations

import os
import random
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Header, HTTPException, Request, Response
from pydantic import BaseModel, Field

from .core import ComplexityCategory, PromptCondition, ProviderProfile, new_ulid
from .gateway import GatewayError, LlmGateway, MockFixtureMissing
from .lint import LintConfig
from .pipeline import (
    AllQuizzesRejected,
    InvalidLabel,
    QuizNotDelivered,
    QuizPipeline,
    Session,
    UnknownQuiz,
    UnknownSession,
)
from .store import DuplicateSha, NotFound, Store

MAX_UPLOAD_BYTES = 10 * 1024 * 1024
DEFAULT_ALLOWLIST = ("unsplash.com",)

ADMIN_TOKEN_ENV = "ARABIQ_ADMIN_TOKEN"
PORT_ENV = "ARABIQ_PORT"


class SessionRequest(BaseModel):
    native_language: str = "en"


class ImageUrlRequest(BaseModel):
    url: str
    complexity: str | None = None


class QuizSetRequest(BaseModel):
    vision_profile: str
    quiz_profile: str
    condition: str = "prompted"
    n: int = Field(default=2, ge=1, le=10)
    surprise_me: bool = False


class AnswerRequest(BaseModel):
    session_id: str
    label: str


def _host_allowed(url: str, allowlist: tuple[str, ...]) -> bool:
    from urllib.parse import urlparse

    host = (urlparse(url).hostname or "").lower()
    return any(host == domain or host.endswith("." + domain) for domain in allowlist)


def create_app(
    store: Store,
    gateway: LlmGateway,
    profiles: dict[str, ProviderProfile],
    *,
    lint_cfg: LintConfig | None = None,
    allowlist: tuple[str, ...] = DEFAULT_ALLOWLIST,
    admin_token: str | None = None,
    reports_dir: str | Path | None = None,
    rng: random.Random | None = None,
) -> FastAPI:
    app = FastAPI(title="arabiq", openapi_url="/api/openapi.json")
    pipeline = QuizPipeline(store, gateway, lint_cfg=lint_cfg)
    rng = rng or random.Random()

    def current_admin_token() -> str | None:
        return admin_token if admin_token is not None else os.environ.get(ADMIN_TOKEN_ENV)

    def require_admin(token: str | None) -> None:
        expected = current_admin_token()
        if not expected or token != expected:
            raise HTTPException(status_code=401, detail="admin token required")

    def resolve_profile(profile_id: str) -> ProviderProfile:
        try:
            return profiles[profile_id]
        except KeyError:
            raise HTTPException(status_code=400, detail=f"unknown provider profile {profile_id!r}")

    @app.post("/api/sessions", status_code=201)
    def create_session(body: SessionRequest | None = None) -> dict[str, str]:
        session = Session(id=new_ulid(), native_language=(body.native_language if body else "en"))
        store.put(session)
        return {"session_id": session.id, "native_language": session.native_language}

    @app.post("/api/images", status_code=201)
    async def add_image(request: Request) -> dict[str, Any]:
        content_type = request.headers.get("content-type", "")
        complexity = ComplexityCategory.MODERATE
        try:
            if content_type.startswith("application/json"):
                try:
                    body = ImageUrlRequest.model_validate(await request.json())
                except ValueError as exc:
                    raise HTTPException(status_code=400, detail=f"malformed body: {exc}")
                if body.complexity:
                    complexity = ComplexityCategory(body.complexity)
                if not body.url.startswith(("http://", "https://")):
                    raise HTTPException(status_code=400, detail="url must be http(s)")
                if not _host_allowed(body.url, allowlist):
                    raise HTTPException(
                        status_code=400,
                        detail=f"url host not in allowlist {list(allowlist)}",
                    )
                record = store.put_image_url(body.url, complexity=complexity)
            elif content_type.startswith("multipart/form-data"):
                form = await request.form()
                upload = form.get("file")
                if upload is None:
                    raise HTTPException(status_code=400, detail="multipart field 'file' required")
                data = await upload.read()
                if len(data) > MAX_UPLOAD_BYTES:
                    raise HTTPException(status_code=413, detail="image exceeds 10 MiB limit")
                raw_complexity = form.get("complexity")
                if raw_complexity:
                    complexity = ComplexityCategory(str(raw_complexity))
                record = store.put_image_bytes(data, complexity=complexity)
            else:
                raise HTTPException(status_code=400, detail="send JSON {url} or multipart file")
        except DuplicateSha as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return record.to_dict()

    @app.get("/api/images")
    def list_images(complexity: str | None = None) -> list[dict[str, Any]]:
        category = ComplexityCategory(complexity) if complexity else None
        return [record.to_dict() for record in store.list("image", complexity=category)]

    @app.get("/api/images/random")
    def random_image() -> dict[str, Any]:
        images = store.list("image")
        if not images:
            raise HTTPException(status_code=404, detail="no images stored")
        return rng.choice(sorted(images, key=lambda r: r.id)).to_dict()

    @app.get("/api/images/{image_id}/file")
    def image_file(image_id: str) -> Response:
        try:
            record = store.get("image", image_id)
        except NotFound:
            raise HTTPException(status_code=404, detail="unknown image")
        path = Path(record.locator)
        if not path.is_file():
            raise HTTPException(status_code=404, detail="image bytes not stored locally")
        return Response(content=path.read_bytes(), media_type="application/octet-stream")

    @app.post("/api/images/{image_id}/quizset")
    def make_quiz_set(image_id: str, body: QuizSetRequest) -> dict[str, Any]:
        try:
            condition = PromptCondition(body.condition)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"condition must be prompted|bare")
        vision = resolve_profile(body.vision_profile)
        quiz = resolve_profile(body.quiz_profile)
        try:
            quiz_set = pipeline.run_vision_quiz(
                image_id, vision, quiz, condition=condition, n_questions=body.n
            )
        except NotFound:
            raise HTTPException(status_code=404, detail="unknown image")
        except AllQuizzesRejected as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except MockFixtureMissing as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        except GatewayError as exc:
            raise HTTPException(status_code=502, detail=str(exc))
        view = pipeline.learner_view(quiz_set)
        if body.surprise_me and view["quizzes"]:
            view["suggested_quiz_id"] = rng.choice(view["quizzes"])["quiz_id"]
        return view

    @app.post("/api/quizzes/{quiz_id}/answer")
    def answer_quiz(quiz_id: str, body: AnswerRequest) -> dict[str, Any]:
        try:
            feedback = pipeline.submit_answer(body.session_id, quiz_id, body.label)
        except (UnknownQuiz, UnknownSession) as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except InvalidLabel as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except QuizNotDelivered as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        return feedback.to_dict()

    @app.get("/api/sessions/{session_id}/progress")
    def session_progress(session_id: str) -> dict[str, int]:
        try:
            return pipeline.progress(session_id)
        except UnknownSession as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    # -- admin surfaces -----------------------------------------------------

    @app.get("/api/quizzes/{quiz_id}/full")
    def quiz_full(quiz_id: str, x_admin_token: str | None = Header(default=None)) -> dict[str, Any]:
        require_admin(x_admin_token)
        try:
            quiz = store.get("quiz", quiz_id)
        except NotFound:
            raise HTTPException(status_code=404, detail="unknown quiz")
        reports = store.list("lint_report", quiz_id=quiz_id)
        return {
            "quiz": quiz.to_dict(),
            "lint_reports": [r.to_dict() for r in reports],
        }

    @app.get("/api/reports")
    def list_reports(x_admin_token: str | None = Header(default=None)) -> list[str]:
        require_admin(x_admin_token)
        if reports_dir is None or not Path(reports_dir).is_dir():
            return []
        return sorted(p.name for p in Path(reports_dir).iterdir() if p.is_file())

    @app.get("/api/reports/{name}")
    def get_report(name: str, x_admin_token: str | None = Header(default=None)) -> Response:
        require_admin(x_admin_token)
        if reports_dir is None:
            raise HTTPException(status_code=404, detail="no reports directory configured")
        path = Path(reports_dir) / name
        if not path.is_file() or path.parent != Path(reports_dir):
            raise HTTPException(status_code=404, detail="no such report")
        return Response(content=path.read_text(encoding="utf-8"), media_type="text/plain")

    return app
