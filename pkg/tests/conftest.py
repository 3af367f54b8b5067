"""Shared fixtures: reference quizzes, a mock-backed gateway, and store builders."""

from __future__ import annotations

import pytest

from arabiq.core import (
    ComplexityCategory,
    Modality,
    ProviderProfile,
    Quiz,
    QuizOption,
    SkillTag,
    new_ulid,
)
from arabiq.gateway import (
    BARE_DESCRIBE_PROMPT,
    LlmGateway,
    default_describe_template,
    default_quiz_template,
    describe_fixture_key,
    quiz_fixture_key,
    render_prompt,
)
from arabiq.store import Store

REFERENCE_QUIZ_TEXT = (
    "- Question 1: What is the boy doing? a) يَكْتُبُ b) يَجْلِسُ c) يَأْكُلُ d) يَشْرَبُ Correct answer: a) يَكْتُبُ\n"
    "- Question 2 : What color is the book? a) أَحْمَرٌ b) أَزْرَقُ c) أَخْضَرُ d) أَصْفَرُ Correct answer: b) أَزْرَقُ"
)

BALLOON_DESCRIPTION = (
    "The image features a white chair with a large pink balloon tied to it, "
    "set against a light blue background. The balloon is secured to the chair "
    "by a thin white string."
)


def make_quiz(
    options: list[tuple[str, str]] | None = None,
    *,
    declared: str = "a",
    stem: str = "What is the boy doing?",
    ordinal: int = 1,
    skill: SkillTag = SkillTag.UNTAGGED,
    quiz_id: str | None = None,
    image_id: str = "01IMAGEIMAGEIMAGEIMAGEIMAG",
    description_id: str = "01DESCDESCDESCDESCDESCDESC",
    model_id: str = "test-model",
) -> Quiz:
    options = options or [
        ("a", "يَكْتُبُ"),
        ("b", "يَجْلِسُ"),
        ("c", "يَأْكُلُ"),
        ("d", "يَشْرَبُ"),
    ]
    return Quiz(
        id=quiz_id or new_ulid(),
        image_id=image_id,
        description_id=description_id,
        model_id=model_id,
        ordinal=ordinal,
        stem=stem,
        options=tuple(QuizOption(l, t) for l, t in options),
        declared_correct=declared,
        skill=skill,
    )


@pytest.fixture
def reference_quiz() -> Quiz:
    """The first reference quiz: fully diacritized options, correct answer a."""
    return make_quiz()


@pytest.fixture
def store(tmp_path) -> Store:
    return Store(tmp_path / "store")


@pytest.fixture
def mock_profiles() -> dict[str, ProviderProfile]:
    return {
        "mock-vision": ProviderProfile(
            profile_id="mock-vision",
            endpoint_url="",
            model_name="mock-vision-model",
            modality=Modality.MOCK,
        ),
        "mock-quiz": ProviderProfile(
            profile_id="mock-quiz",
            endpoint_url="",
            model_name="mock-quiz-model",
            modality=Modality.MOCK,
        ),
    }


def build_fixtures(
    images,
    vision_profiles,
    quiz_profiles,
    *,
    description_for,
    quiz_text_for,
    n_questions: int = 2,
    conditions=None,
) -> dict[str, str]:
    """Author a fixture table the way the documented key scheme prescribes."""
    from arabiq.core import PromptCondition

    conditions = conditions or [PromptCondition.PROMPTED, PromptCondition.BARE]
    describe_tpl = default_describe_template()
    quiz_tpl = default_quiz_template()
    fixtures: dict[str, str] = {}
    for img in images:
        for vp in vision_profiles:
            for cond in conditions:
                prompt = (
                    render_prompt(describe_tpl, {})
                    if cond is PromptCondition.PROMPTED
                    else BARE_DESCRIBE_PROMPT
                )
                key = describe_fixture_key(prompt, img.sha256, vp.model_name)
                fixtures[key] = description_for(img, vp, cond)
        for qp in quiz_profiles:
            for vp in vision_profiles:
                for cond in conditions:
                    desc_text = description_for(img, vp, cond)
                    prompt = render_prompt(
                        quiz_tpl,
                        {"description": desc_text, "n_questions": str(n_questions)},
                    )
                    key = quiz_fixture_key(prompt, desc_text, qp.model_name)
                    fixtures.setdefault(key, quiz_text_for(img, qp))
    return fixtures


@pytest.fixture
def mock_gateway_factory(mock_profiles):
    """Build a gateway whose mock fixtures answer the reference flow for a store."""

    def _build(store: Store, *, quiz_text: str = REFERENCE_QUIZ_TEXT, n_questions: int = 2) -> LlmGateway:
        images = store.list("image")
        fixtures = build_fixtures(
            images,
            [mock_profiles["mock-vision"]],
            [mock_profiles["mock-quiz"]],
            description_for=lambda img, vp, cond: BALLOON_DESCRIPTION,
            quiz_text_for=lambda img, qp: quiz_text,
            n_questions=n_questions,
        )
        return LlmGateway(fixtures=fixtures)

    return _build


@pytest.fixture
def seeded_image(store):
    return store.put_image_bytes(b"balloon-chair-image", complexity=ComplexityCategory.SIMPLE)


# --- benchmark-scale grid -------------------------------------------------------

GRID_QUIZ_TEXT = (
    "- Question 1: What is the boy doing? a) يَكْتُبُ b) يَجْلِسُ c) يَأْكُلُ d) يَشْرَبُ Correct answer: a) يَكْتُبُ\n"
    "- Question 2: What color is the book? a) أَحْمَرٌ b) أَزْرَقُ c) أَخْضَرُ d) أَصْفَرُ Correct answer: b) أَزْرَقُ\n"
    "- Question 3: What object is on the desk? a) كِتَابٌ b) قَلَمٌ c) بَيْتٌ d) شَمْسٌ Correct answer: c) بَيْتٌ\n"
)


def grid_profiles() -> dict[str, ProviderProfile]:
    """Mock stand-ins named after the deployed model roster."""
    mk = lambda pid, name: ProviderProfile(
        profile_id=pid, endpoint_url="", model_name=name, modality=Modality.MOCK
    )
    return {
        "llama90v": mk("llama90v", "llama90-v"),
        "gemma3": mk("gemma3", "gemma3"),
        "llama70": mk("llama70", "llama70"),
        "fanar": mk("fanar", "fanar"),
    }


def grid_description_text(img, vp, cond) -> str:
    return (
        f"A {img.complexity.value} scene {img.sha256[:10]} captioned by {vp.model_name} "
        f"({cond.value}): a white chair with a large pink balloon tied by a thin string."
    )


def write_benchmark_images(root, *, n_simple: int, n_moderate: int, n_complex: int):
    """Create distinct image files plus a manifest CSV; returns the manifest path."""
    from pathlib import Path

    root = Path(root)
    images_dir = root / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rows = ["locator,complexity"]
    spec = [("simple", n_simple), ("moderate", n_moderate), ("complex", n_complex)]
    idx = 0
    for category, count in spec:
        for _ in range(count):
            path = images_dir / f"img{idx:03d}.png"
            path.write_bytes(f"bench-image-{idx:03d}".encode())
            rows.append(f"{path},{category}")
            idx += 1
    manifest_path = root / "manifest.csv"
    manifest_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return manifest_path


def build_benchmark_store(
    root,
    *,
    n_simple: int = 87,
    n_moderate: int = 56,
    n_complex: int = 68,
) -> tuple[Store, "Path"]:
    """Create image files + manifest CSV and ingest them into a fresh store."""
    from pathlib import Path

    from arabiq.store import BenchmarkManifest, import_manifest

    root = Path(root)
    manifest_path = write_benchmark_images(
        root, n_simple=n_simple, n_moderate=n_moderate, n_complex=n_complex
    )
    store = Store(root / "store")
    report = import_manifest(store, BenchmarkManifest.load(manifest_path))
    assert not report.failures
    return store, manifest_path


def build_grid_fixtures(store: Store, n_questions: int = 3) -> dict[str, str]:
    profiles = grid_profiles()
    return build_fixtures(
        store.list("image"),
        [profiles["llama90v"], profiles["gemma3"]],
        [profiles["llama70"], profiles["fanar"]],
        description_for=grid_description_text,
        quiz_text_for=lambda img, qp: GRID_QUIZ_TEXT,
        n_questions=n_questions,
    )


def write_provider_config(path, profiles: dict[str, ProviderProfile]) -> None:
    import json

    doc = {pid: profile.to_dict() for pid, profile in profiles.items()}
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def write_fixture_file(path, fixtures: dict[str, str]) -> None:
    import json

    lines = [
        json.dumps({"key": key, "response_text": text}, ensure_ascii=False)
        for key, text in fixtures.items()
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
