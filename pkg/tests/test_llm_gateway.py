import json

import httpx
import pytest

from learningFlow.errors import ConfigurationError, ExtractionError, GatewayUnavailableError
from learningFlow.llm_gateway import (
    API_KEY_ENV, DEFAULT_RESPONSES, AgentRole, HttpChatProvider, LLMGateway, MockProvider,
    ProviderConfig, build_context_descriptor, build_provider, build_reflection_summary,
    extract_program_block,
)
from learningFlow.memory_store import CurriculumDecision, WindowStats
from learningFlow.prompt_templates import PromptBundle
from learningFlow.reward_dsl import VARIABLE_SCHEMA

BUNDLE = PromptBundle("system text", "user text", "schema text")


def _completion(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def _http_gateway(handler, sleeps, transcripts, **overrides):
    config = ProviderConfig(provider="http", endpoint="https://llm.test/v1", model="test-model", **overrides)
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return LLMGateway(HttpChatProvider(config, client), config, transcript_sink=transcripts.append,
                      sleep=sleeps.append)


# ---------------------------------------------------------------- http provider

def test_http_request_shape(monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "secret-key")
    seen = []

    def handler(request):
        seen.append(request)
        return _completion("fine")

    transcripts = []
    gateway = _http_gateway(handler, [], transcripts)
    assert gateway.complete(AgentRole.REWARD_GENERATION, BUNDLE, episode=0) == "fine"

    request = seen[0]
    assert str(request.url) == "https://llm.test/v1/chat/completions"
    assert request.headers["Authorization"] == "Bearer secret-key"
    payload = json.loads(request.content)
    assert payload["model"] == "test-model"
    assert payload["temperature"] == 0.2
    assert payload["messages"] == [{"role": "system", "content": "system text"},
                                   {"role": "user", "content": "user text"}]
    assert transcripts[0]["outcome"] == "ok"
    assert transcripts[0]["response"] == "fine"


def test_analysis_roles_use_zero_temperature():
    payloads = []

    def handler(request):
        payloads.append(json.loads(request.content))
        return _completion("analysis")

    _http_gateway(handler, [], []).complete(AgentRole.CURRICULUM_ANALYSIS, BUNDLE, episode=0)
    assert payloads[0]["temperature"] == 0.0


def test_retries_with_exponential_backoff():
    calls = []

    def handler(request):
        calls.append(request)
        if len(calls) < 3:
            return httpx.Response(503, json={"error": "busy"})
        return _completion("third time")

    sleeps, transcripts = [], []
    gateway = _http_gateway(handler, sleeps, transcripts, backoff_base=1.0)
    assert gateway.complete(AgentRole.REWARD_ANALYSIS, BUNDLE, episode=4) == "third time"
    assert sleeps == [1.0, 2.0]
    assert [t["attempt"] for t in transcripts] == [1, 2, 3]
    assert transcripts[0]["outcome"].startswith("transport_error")
    assert all(t["episode"] == 4 for t in transcripts)


def test_exhausted_retries_raise():
    def handler(request):
        raise httpx.ConnectError("refused", request=request)

    sleeps, transcripts = [], []
    gateway = _http_gateway(handler, sleeps, transcripts, max_retries=3)
    with pytest.raises(GatewayUnavailableError):
        gateway.complete(AgentRole.REWARD_GENERATION, BUNDLE, episode=0)
    assert len(transcripts) == 3
    assert len(sleeps) == 2
    assert gateway.calls == 3


def test_malformed_payload_counts_as_transport_error():
    responses = iter([httpx.Response(200, json={"unexpected": True}), _completion("ok now")])
    transcripts = []
    gateway = _http_gateway(lambda request: next(responses), [], transcripts)
    assert gateway.complete(AgentRole.REWARD_GENERATION, BUNDLE, episode=0) == "ok now"
    assert transcripts[0]["outcome"].startswith("transport_error")


def test_extraction_errors_propagate_and_are_recorded():
    transcripts = []
    gateway = _http_gateway(lambda request: _completion("no code here"), [], transcripts)
    with pytest.raises(ExtractionError) as info:
        gateway.complete(AgentRole.REWARD_GENERATION, BUNDLE, episode=0, extract=extract_program_block)
    assert info.value.kind == "missing_block"
    assert transcripts[-1]["outcome"] == "extraction_error: missing_block"
    assert len(transcripts) == 1


# ---------------------------------------------------------------- mock provider

def test_mock_provider_plays_scripts_in_order(write_scripts):
    mock_dir = write_scripts({"reward_generation": ["first", "second"]})
    provider = MockProvider(mock_dir)
    replies = [provider.complete(AgentRole.REWARD_GENERATION, BUNDLE, 0.2, 60) for _ in range(4)]
    assert replies == ["first", "second", "second", "second"]
    assert provider.state()["reward_generation"] == 4


def test_mock_provider_defaults_and_requirements(write_scripts):
    provider = MockProvider(write_scripts({"reward_generation": ["x"]}))
    assert provider.complete(AgentRole.REWARD_ANALYSIS, BUNDLE, 0.0, 60) == DEFAULT_RESPONSES[AgentRole.REWARD_ANALYSIS]
    provider.require([AgentRole.REWARD_GENERATION, AgentRole.REWARD_ANALYSIS])
    with pytest.raises(ConfigurationError):
        provider.require([AgentRole.CURRICULUM_GENERATION])
    with pytest.raises(ConfigurationError):
        provider.complete(AgentRole.CURRICULUM_GENERATION, BUNDLE, 0.2, 60)


def test_mock_provider_state_round_trip(write_scripts):
    mock_dir = write_scripts({"reward_generation": ["a", "b", "c"]})
    provider = MockProvider(mock_dir)
    provider.complete(AgentRole.REWARD_GENERATION, BUNDLE, 0.2, 60)
    restored = MockProvider(mock_dir)
    restored.load_state(provider.state())
    assert restored.complete(AgentRole.REWARD_GENERATION, BUNDLE, 0.2, 60) == "b"


def test_mock_scripted_failures_go_through_retries(write_scripts):
    mock_dir = write_scripts({"reward_generation": ["!error", "!timeout", "recovered"]})
    config = ProviderConfig(provider="mock", mock_dir=mock_dir, max_retries=3)
    transcripts = []
    gateway = LLMGateway(build_provider(config), config, transcript_sink=transcripts.append, sleep=lambda s: None)
    assert gateway.complete(AgentRole.REWARD_GENERATION, BUNDLE, episode=0) == "recovered"
    assert [t["outcome"].split(":")[0] for t in transcripts] == ["transport_error", "transport_error", "ok"]


def test_mock_provider_missing_directory(tmp_path):
    with pytest.raises(ConfigurationError):
        MockProvider(str(tmp_path / "absent"))


# ---------------------------------------------------------------- config

def test_provider_config_validation():
    with pytest.raises(ConfigurationError):
        ProviderConfig(provider="mock")
    with pytest.raises(ConfigurationError):
        ProviderConfig(provider="carrier-pigeon", mock_dir="x")
    with pytest.raises(ConfigurationError):
        ProviderConfig(provider="http", max_retries=0)
    assert ProviderConfig(provider="http", temperature=0.7).temperature_for(AgentRole.CURRICULUM_ANALYSIS) == 0.7


# ---------------------------------------------------------------- extraction

def test_extract_program_block():
    text = "Here you go:\n```reward\nprogress = v_ego\ntotal = progress\n```\nThanks."
    assert extract_program_block(text) == "progress = v_ego\ntotal = progress\n"
    with pytest.raises(ExtractionError) as info:
        extract_program_block("```python\ntotal = 1\n```")
    assert info.value.kind == "missing_block"
    with pytest.raises(ExtractionError) as info:
        extract_program_block("```reward\ntotal = 1\n```\n```reward\ntotal = 2\n```")
    assert info.value.kind == "multiple_blocks"


# ---------------------------------------------------------------- descriptors

def test_context_descriptor(overtaking, merging):
    text = build_context_descriptor(merging)
    assert text == build_context_descriptor(merging)
    assert "x = 60 m to x = 160 m" in text
    assert "density=3 (high): 8 surrounding vehicles" in text
    for name in VARIABLE_SCHEMA:
        assert f"  {name} [" in text
    assert "density=3 (high): 3 surrounding vehicles" in build_context_descriptor(overtaking)


def test_reflection_summary():
    stats = WindowStats(episodes=50, first_episode=50, last_episode=99, success_rate=0.5,
                        collision_rate=0.25, timeout_rate=0.25, mean_total_reward=-3.0,
                        component_means={"crash": -25.0}, curriculum_counts={"low/stationary": 50})
    history = [CurriculumDecision(50, 1, 0, "llm", 1, 0)]
    text = build_reflection_summary(stats, history, "crash = -100 * collision\ntotal = crash", [])
    assert "episodes 50-99 (50 episodes)" in text
    assert "collision rate: 25.0%" in text
    assert "- crash: -25.000000" in text
    assert "- episode 50: density=1 (low), mode=0 (stationary), origin=llm" in text
    assert text.endswith("## Lint warnings\n(none)")
    assert "Active reward program" not in build_reflection_summary(stats, history)
