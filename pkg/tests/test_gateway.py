"""Prompt rendering, retry/backoff, mock determinism, and parallelism bounds."""

import threading
import time
from pathlib import Path

import pytest

from arabiq.core import (
    ComplexityCategory,
    Description,
    ImageRecord,
    ImageSource,
    Modality,
    PromptCondition,
    PromptTemplate,
    ProviderProfile,
    TemplateTask,
    new_ulid,
    now_utc,
    sha256_hex,
)
from arabiq.gateway import (
    BARE_DESCRIBE_PROMPT,
    ApiKeyMissing,
    ChatMessage,
    ChatRequest,
    EmptyResponse,
    ImageAttachment,
    LlmGateway,
    MissingVar,
    MockFixtureMissing,
    ProviderHttp,
    ProviderTimeout,
    TransportReply,
    default_describe_template,
    default_quiz_template,
    describe_fixture_key,
    load_fixtures,
    quiz_fixture_alias,
    render_prompt,
)

QUIZ_TEMPLATE = default_quiz_template()
DESCRIBE_TEMPLATE = default_describe_template()


def image_record(locator="mem", data=b"img") -> ImageRecord:
    return ImageRecord(
        id=new_ulid(),
        source=ImageSource.UPLOAD,
        locator=locator,
        sha256=sha256_hex(data),
        complexity=ComplexityCategory.SIMPLE,
        created_at=now_utc(),
    )


def description_for(text="a boy writes at a desk") -> Description:
    return Description(
        id=new_ulid(),
        image_id=new_ulid(),
        model_id="mock-vision-model",
        condition=PromptCondition.PROMPTED,
        text=text,
        created_at=now_utc(),
    )


def vision_profile(**kw) -> ProviderProfile:
    base = dict(
        profile_id="v", endpoint_url="https://api.example.com/v1", model_name="vision-model",
        modality=Modality.VISION, api_key_env="TEST_API_KEY", timeout_ms=2000,
    )
    base.update(kw)
    return ProviderProfile(**base)


def mock_profile(model_name="mock-model", modality=Modality.MOCK) -> ProviderProfile:
    return ProviderProfile(profile_id="m", endpoint_url="", model_name=model_name, modality=modality)


# --- prompt rendering ---------------------------------------------------------


def test_render_substitutes_all_placeholders():
    rendered = render_prompt(QUIZ_TEMPLATE, {"description": "a boy writes", "n_questions": "2"})
    assert "a boy writes" in rendered
    assert "{" not in rendered and "}" not in rendered


def test_render_describe_is_verbatim_template():
    assert render_prompt(DESCRIBE_TEMPLATE, {}) == DESCRIBE_TEMPLATE.body
    assert DESCRIBE_TEMPLATE.body.startswith("Describe the image accurately and concisely.")


def test_render_missing_var():
    with pytest.raises(MissingVar) as err:
        render_prompt(QUIZ_TEMPLATE, {"description": "x"})
    assert err.value.name == "n_questions"


def test_render_value_containing_placeholder_stays_literal():
    out = render_prompt(
        QUIZ_TEMPLATE, {"description": "sneaky {n_questions} text", "n_questions": "2"}
    )
    assert "sneaky {n_questions} text" in out


def test_render_ignores_extra_vars():
    out = render_prompt(
        QUIZ_TEMPLATE, {"description": "x", "n_questions": "1", "unused": "EXTRA-MARKER"}
    )
    assert "EXTRA-MARKER" not in out


def test_shipped_config_templates_match_package_data():
    config_dir = Path(__file__).parent.parent / "config" / "prompts"
    assert (config_dir / "describe.txt").read_text(encoding="utf-8") == DESCRIBE_TEMPLATE.body
    assert (config_dir / "quiz.txt").read_text(encoding="utf-8") == QUIZ_TEMPLATE.body


# --- chat request shape ---------------------------------------------------------


def test_chat_request_rejects_two_images():
    img = ImageAttachment(data=b"x", media_type="image/png")
    with pytest.raises(ValueError):
        ChatRequest("m", (ChatMessage("user", "a", img), ChatMessage("user", "b", img)))


def test_chat_request_temperature_bounds():
    with pytest.raises(ValueError):
        ChatRequest("m", (ChatMessage("user", "x"),), temperature=2.5)


def test_wire_format_embeds_data_url():
    req = ChatRequest(
        "m", (ChatMessage("user", "look", ImageAttachment(data=b"abc", media_type="image/png")),)
    )
    wire = req.to_wire()
    image_part = wire["messages"][0]["content"][1]
    assert image_part["image_url"]["url"].startswith("data:image/png;base64,")


# --- retry behavior ----------------------------------------------------------------


class ScriptedTransport:
    """Replays a fixed list of (status|'timeout') outcomes and counts calls."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = 0

    def post_json(self, url, headers, body, timeout_s):
        outcome = self.outcomes[min(self.calls, len(self.outcomes) - 1)]
        self.calls += 1
        if outcome == "timeout":
            raise ProviderTimeout("scripted timeout")
        if outcome >= 400:
            return TransportReply(status=outcome, payload=None, text=f"err {outcome}")
        return TransportReply(
            status=200,
            payload={"choices": [{"message": {"content": "ok"}, "finish_reason": "stop"}]},
        )


def gateway_with(transport, **kw) -> LlmGateway:
    return LlmGateway(
        transport=transport,
        sleep=lambda s: None,
        env=lambda name: "secret" if name == "TEST_API_KEY" else None,
        **kw,
    )


def simple_request() -> ChatRequest:
    return ChatRequest("m", (ChatMessage("user", "hi"),))


def test_success_first_attempt_single_call():
    transport = ScriptedTransport([200])
    resp = gateway_with(transport).execute_with_retry(simple_request(), vision_profile())
    assert resp.text == "ok"
    assert transport.calls == 1


def test_retry_on_429_then_success():
    transport = ScriptedTransport([429, 429, 200])
    resp = gateway_with(transport).execute_with_retry(
        simple_request(), vision_profile(max_retries=2)
    )
    assert resp.text == "ok"
    assert transport.calls == 3


def test_400_fails_immediately():
    transport = ScriptedTransport([400])
    with pytest.raises(ProviderHttp) as err:
        gateway_with(transport).execute_with_retry(simple_request(), vision_profile(max_retries=5))
    assert err.value.status == 400
    assert transport.calls == 1


def test_retries_exhausted_surface_final_error():
    transport = ScriptedTransport([503, 503, 503])
    with pytest.raises(ProviderHttp) as err:
        gateway_with(transport).execute_with_retry(simple_request(), vision_profile(max_retries=2))
    assert err.value.status == 503
    assert transport.calls == 3


def test_timeout_retried_then_raised():
    transport = ScriptedTransport(["timeout", "timeout"])
    with pytest.raises(ProviderTimeout):
        gateway_with(transport).execute_with_retry(simple_request(), vision_profile(max_retries=1))
    assert transport.calls == 2


def test_backoff_full_jitter_bounds():
    sleeps: list[float] = []
    transport = ScriptedTransport([503, 503, 503, 200])
    gateway = LlmGateway(
        transport=transport,
        sleep=sleeps.append,
        env=lambda name: "secret",
    )
    gateway.execute_with_retry(simple_request(), vision_profile(max_retries=3))
    assert len(sleeps) == 3
    for attempt, slept in enumerate(sleeps):
        assert 0.0 <= slept <= 0.5 * 2**attempt


def test_missing_api_key():
    with pytest.raises(ApiKeyMissing):
        LlmGateway(transport=ScriptedTransport([200]), env=lambda name: None).execute_with_retry(
            simple_request(), vision_profile()
        )


def test_max_parallel_bound_observed():
    in_flight = 0
    peak = 0
    lock = threading.Lock()

    class SlowTransport:
        def post_json(self, url, headers, body, timeout_s):
            nonlocal in_flight, peak
            with lock:
                in_flight += 1
                peak = max(peak, in_flight)
            time.sleep(0.02)
            with lock:
                in_flight -= 1
            return TransportReply(
                200, {"choices": [{"message": {"content": "ok"}, "finish_reason": "stop"}]}
            )

    gateway = gateway_with(SlowTransport())
    profile = vision_profile(max_parallel=2)
    threads = [
        threading.Thread(target=gateway.execute_with_retry, args=(simple_request(), profile))
        for _ in range(8)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak <= 2


# --- describe / generate with the mock provider -----------------------------------


def test_describe_mock_prompted(tmp_path):
    img = image_record()
    prompt = render_prompt(DESCRIBE_TEMPLATE, {})
    key = describe_fixture_key(prompt, img.sha256, "mock-model")
    gateway = LlmGateway(fixtures={key: "  A chair with a pink balloon tied by a string.  "})
    desc = gateway.describe_image(img, mock_profile(), PromptCondition.PROMPTED, DESCRIBE_TEMPLATE)
    assert desc.text == "A chair with a pink balloon tied by a string."
    assert desc.condition is PromptCondition.PROMPTED
    assert desc.image_id == img.id


def test_describe_mock_bare_uses_control_prompt():
    img = image_record()
    key = describe_fixture_key(BARE_DESCRIBE_PROMPT, img.sha256, "mock-model")
    gateway = LlmGateway(fixtures={key: "a chair"})
    desc = gateway.describe_image(img, mock_profile(), PromptCondition.BARE, DESCRIBE_TEMPLATE)
    assert desc.text == "a chair"


def test_describe_mock_missing_fixture():
    gateway = LlmGateway(fixtures={})
    with pytest.raises(MockFixtureMissing):
        gateway.describe_image(image_record(), mock_profile(), PromptCondition.PROMPTED, DESCRIBE_TEMPLATE)


def test_describe_mock_deterministic():
    img = image_record()
    key = describe_fixture_key(render_prompt(DESCRIBE_TEMPLATE, {}), img.sha256, "mock-model")
    gateway = LlmGateway(fixtures={key: "stable text"})
    first = gateway.describe_image(img, mock_profile(), PromptCondition.PROMPTED, DESCRIBE_TEMPLATE)
    second = gateway.describe_image(img, mock_profile(), PromptCondition.PROMPTED, DESCRIBE_TEMPLATE)
    assert first.text == second.text


def test_describe_rejects_text_profile():
    with pytest.raises(ValueError):
        LlmGateway().describe_image(
            image_record(), mock_profile(modality=Modality.TEXT), PromptCondition.PROMPTED, DESCRIBE_TEMPLATE
        )


def test_describe_prompted_folds_blank_lines():
    img = image_record()
    key = describe_fixture_key(render_prompt(DESCRIBE_TEMPLATE, {}), img.sha256, "mock-model")
    gateway = LlmGateway(fixtures={key: "first part\n\n\nsecond part"})
    desc = gateway.describe_image(img, mock_profile(), PromptCondition.PROMPTED, DESCRIBE_TEMPLATE)
    assert "\n\n" not in desc.text


def test_describe_image_fetch_failed():
    img = image_record(locator="/nonexistent/path.png")
    profile = vision_profile()
    gateway = gateway_with(ScriptedTransport([200]))
    with pytest.raises(Exception) as err:
        gateway.describe_image(img, profile, PromptCondition.PROMPTED, DESCRIBE_TEMPLATE)
    assert "cannot read image" in str(err.value)


def test_generate_quiz_mock_alias_key():
    desc = description_for()
    alias = quiz_fixture_alias(desc.text, 2)
    gateway = LlmGateway(fixtures={alias: "Question 1: ... Correct answer: a) x"})
    raw = gateway.generate_quiz_text(desc, mock_profile(), 2, QUIZ_TEMPLATE)
    assert raw == "Question 1: ... Correct answer: a) x"


def test_generate_quiz_rejects_zero_questions():
    gateway = LlmGateway(fixtures={"any": "x"})
    with pytest.raises(ValueError):
        gateway.generate_quiz_text(description_for(), mock_profile(), 0, QUIZ_TEMPLATE)


def test_generate_quiz_raw_text_untouched():
    desc = description_for()
    raw_fixture = "  messy \n\n output  "
    gateway = LlmGateway(fixtures={quiz_fixture_alias(desc.text, 1): raw_fixture})
    assert gateway.generate_quiz_text(desc, mock_profile(), 1, QUIZ_TEMPLATE) == raw_fixture


def test_empty_description_response_is_error():
    img = image_record()
    key = describe_fixture_key(render_prompt(DESCRIBE_TEMPLATE, {}), img.sha256, "mock-model")
    gateway = LlmGateway(fixtures={key: "   "})
    with pytest.raises(EmptyResponse):
        gateway.describe_image(img, mock_profile(), PromptCondition.PROMPTED, DESCRIBE_TEMPLATE)


def test_fixture_file_roundtrip(tmp_path):
    path = tmp_path / "fixtures.jsonl"
    path.write_text(
        '{"key": "k1", "response_text": "hello"}\n{"key": "k2", "response_text": "نص"}\n',
        encoding="utf-8",
    )
    fixtures = load_fixtures(path)
    assert fixtures == {"k1": "hello", "k2": "نص"}


def test_fixture_duplicate_key_rejected(tmp_path):
    path = tmp_path / "fixtures.jsonl"
    path.write_text('{"key": "k", "response_text": "a"}\n{"key": "k", "response_text": "b"}\n')
    with pytest.raises(ValueError):
        load_fixtures(path)
