import numpy as np
import pytest

from learningFlow.curriculum_engine import (
    CURRICULUM_SET, CurriculumEngine, CurriculumWorkflow, EpsilonSchedule, decode_curriculum,
    select, target_curriculum,
)
from learningFlow.driving_sim import CurriculumId, MotionMode
from learningFlow.errors import CurriculumDecodeError
from learningFlow.llm_gateway import LLMGateway, MockProvider, ProviderConfig
from learningFlow.memory_store import RunStore, WindowStats


def _gateway(mock_dir, transcripts=None):
    config = ProviderConfig(provider="mock", mock_dir=mock_dir, max_retries=2)
    sink = transcripts.append if transcripts is not None else None
    return LLMGateway(MockProvider(mock_dir), config, transcript_sink=sink, sleep=lambda s: None)


def _stats():
    return WindowStats(episodes=100, first_episode=0, last_episode=99, success_rate=0.6,
                       collision_rate=0.1, timeout_rate=0.3, mean_total_reward=12.5,
                       component_means={"progress": 3.0}, curriculum_counts={"empty/stationary": 100})


# ---------------------------------------------------------------- set and schedule

def test_curriculum_set_members():
    assert len(CURRICULUM_SET) == 12
    assert CurriculumId(3, 2) in CURRICULUM_SET
    assert (3, 2) not in CURRICULUM_SET
    assert list(CURRICULUM_SET)[:3] == [CurriculumId(0, 0), CurriculumId(0, 1), CurriculumId(0, 2)]


def test_epsilon_schedule_decays_linearly():
    schedule = EpsilonSchedule(total_episodes=1000)
    assert schedule.value(0) == pytest.approx(0.3)
    assert schedule.value(400) == pytest.approx(0.15)
    assert schedule.value(800) == pytest.approx(0.0)
    assert schedule.value(1000) == pytest.approx(0.0)


def test_target_curriculum_is_interactive():
    assert target_curriculum(1) == CurriculumId(1, MotionMode.INTERACTIVE)


# ---------------------------------------------------------------- selection

def test_select_extremes():
    rng = np.random.default_rng(0)
    c = CurriculumId(2, 1)
    assert all(select(c, 0.0, rng) == (c, "llm") for _ in range(200))
    assert all(select(c, 1.0, rng)[1] == "random" for _ in range(200))
    with pytest.raises(ValueError):
        select(c, 1.5, rng)


def test_select_frequencies():
    rng = np.random.default_rng(7)
    c = CurriculumId(1, 2)
    draws = [select(c, 0.3, rng) for _ in range(20000)]
    random_share = np.mean([origin == "random" for _, origin in draws])
    same_share = np.mean([chosen == c for chosen, _ in draws])
    assert abs(random_share - 0.3) < 0.02
    assert abs(same_share - (0.7 + 0.3 / 12)) < 0.02
    randoms = [chosen for chosen, origin in draws if origin == "random"]
    assert set(randoms) == set(CURRICULUM_SET)


@pytest.mark.parametrize("eps", [0.0, 0.25, 0.5, 1.0])
def test_random_origin_rate_matches_epsilon(eps):
    rng = np.random.default_rng(11)
    c = CurriculumId(0, 0)
    origins = [select(c, eps, rng)[1] for _ in range(10000)]
    rate = origins.count("random") / len(origins)
    assert abs(rate - eps) < 0.02
    if eps == 0.0:
        assert rate == 0.0


# ---------------------------------------------------------------- decoding

@pytest.mark.parametrize("text, expected", [
    ("Go harder.\n<curriculum density=2 mode=1/>", CurriculumId(2, 1)),
    ('<curriculum density="3" mode="2" />', CurriculumId(3, 2)),
    ("<Curriculum mode=0 density=1>", CurriculumId(1, 0)),
])
def test_decode_curriculum(text, expected):
    assert decode_curriculum(text) == expected


@pytest.mark.parametrize("text, kind", [
    ("density 2, mode 1", "missing_tag"),
    ("<curriculum density=1 mode=0/> or <curriculum density=2 mode=0/>", "duplicate_tag"),
    ("<curriculum density=two mode=0/>", "non_integer"),
    ("<curriculum density=2.5 mode=0/>", "non_integer"),
    ("<curriculum density=1/>", "non_integer"),
    ("<curriculum density=4 mode=0/>", "out_of_range"),
    ("<curriculum density=1 mode=-1/>", "out_of_range"),
])
def test_decode_curriculum_errors(text, kind):
    with pytest.raises(CurriculumDecodeError) as info:
        decode_curriculum(text)
    assert info.value.kind == kind


# ---------------------------------------------------------------- workflow

def test_workflow_retries_with_error_feedback(overtaking, write_scripts):
    mock_dir = write_scripts({"curriculum_generation": [
        "I would add some traffic now.",
        "Add one stopped vehicle. <curriculum density=1 mode=0/>",
    ]})
    transcripts = []
    workflow = CurriculumWorkflow(_gateway(mock_dir, transcripts), overtaking)
    chosen, rationale = workflow.step(0, [], None)

    assert chosen == CurriculumId(1, 0)
    assert rationale == "Add one stopped vehicle."
    generation = [t for t in transcripts if t["role"] == "curriculum_generation"]
    assert [t["outcome"] for t in generation] == ["extraction_error: missing_tag", "ok"]
    assert "error kind: missing_tag" in generation[1]["prompt"]
    assert "error kind" not in generation[0]["prompt"]
    assert transcripts[0]["role"] == "curriculum_analysis"


def test_workflow_gives_up_after_three_attempts(overtaking, write_scripts):
    mock_dir = write_scripts({"curriculum_generation": ["no tag here"]})
    transcripts = []
    workflow = CurriculumWorkflow(_gateway(mock_dir, transcripts), overtaking, use_analysis=False)
    assert workflow.step(0, [], None) == (None, "")
    assert len(transcripts) == 3


def test_workflow_transport_failure(overtaking, write_scripts):
    mock_dir = write_scripts({"curriculum_generation": ["!timeout"]})
    transcripts = []
    workflow = CurriculumWorkflow(_gateway(mock_dir, transcripts), overtaking, use_analysis=False)
    assert workflow.step(0, [], None) == (None, "")
    assert [t["outcome"].split(":")[0] for t in transcripts] == ["transport_error"] * 2


def test_workflow_reflects_on_window(overtaking, write_scripts):
    mock_dir = write_scripts({"curriculum_generation": ["<curriculum density=1 mode=1/>"],
                              "curriculum_reflection": ["Success is stable; add traffic."]})
    transcripts = []
    workflow = CurriculumWorkflow(_gateway(mock_dir, transcripts), overtaking)
    workflow.step(100, [], _stats(), "progress = v_ego / v_limit\ntotal = progress",
                  ["[accumulation] progress is positive on every step"])
    assert workflow.feedback.startswith("Success is stable; add traffic.")
    assert "success rate: 60.0%" in workflow.feedback
    assert "## Active reward program\nprogress = v_ego / v_limit\ntotal = progress" in workflow.feedback
    assert "- [accumulation] progress is positive on every step" in workflow.feedback
    assert "## Active reward program" in transcripts[0]["prompt"]
    assert [t["role"] for t in transcripts] == [
        "curriculum_reflection", "curriculum_analysis", "curriculum_generation"]
    assert "Success is stable" in transcripts[1]["prompt"]


# ---------------------------------------------------------------- engine

def test_engine_boundaries_and_history(overtaking, write_scripts, tmp_path):
    mock_dir = write_scripts({"curriculum_generation": [
        "<curriculum density=0 mode=0/>", "<curriculum density=1 mode=1/>", "<curriculum density=2 mode=2/>"]})
    store = RunStore(str(tmp_path / "run"))
    engine = CurriculumEngine(CurriculumWorkflow(_gateway(mock_dir), overtaking),
                              EpsilonSchedule(30, eps_start=0.0), n_c=10, seed=0, store=store)

    deployed = [engine.curriculum_for(e, _stats() if e else None) for e in range(30)]
    assert [c for c, _ in deployed[:10]] == [CurriculumId(0, 0)] * 10
    assert [c for c, _ in deployed[10:20]] == [CurriculumId(1, 1)] * 10
    assert deployed[25] == (CurriculumId(2, 2), "llm")
    assert [d.episode for d in engine.history] == [0, 10, 20]
    assert [d.episode for d in store.curriculum_history()] == [0, 10, 20]


def test_engine_keeps_previous_choice_on_failure(overtaking, write_scripts):
    mock_dir = write_scripts({"curriculum_generation": [
        "<curriculum density=2 mode=1/>", "nothing", "nothing", "nothing"]})
    engine = CurriculumEngine(CurriculumWorkflow(_gateway(mock_dir), overtaking, use_analysis=False),
                              EpsilonSchedule(20, eps_start=0.0), n_c=10, seed=0)
    engine.curriculum_for(0)
    curriculum, origin = engine.curriculum_for(10, _stats())
    assert curriculum == CurriculumId(2, 1)
    assert engine.history[-1].fallback
    assert engine.history[-1].llm_curriculum == CurriculumId(2, 1)


def test_engine_fixed_curriculum_skips_workflow():
    engine = CurriculumEngine(None, EpsilonSchedule(10), n_c=5, seed=0,
                              fixed_curriculum=CurriculumId(1, 2))
    assert engine.curriculum_for(0) == (CurriculumId(1, 2), "fixed")
    assert engine.history == []


def test_engine_state_round_trip(overtaking, write_scripts):
    mock_dir = write_scripts({"curriculum_generation": ["<curriculum density=3 mode=2/>"]})

    def build():
        return CurriculumEngine(CurriculumWorkflow(_gateway(mock_dir), overtaking, use_analysis=False),
                                EpsilonSchedule(1000, eps_start=0.5, eps_final=0.5), n_c=100, seed=3)

    engine = build()
    engine.curriculum_for(0)
    state = engine.state()
    expected = [engine.curriculum_for(e) for e in range(1, 50)]

    restored = build()
    restored.load_state(state, engine.history[:1])
    assert [restored.curriculum_for(e) for e in range(1, 50)] == expected
