import os
import shutil

import pytest

from learningFlow.driving_sim import CurriculumId, DrivingSimulator, ScenarioConfig
from learningFlow.errors import ConfigurationError, GatewayUnavailableError
from learningFlow.llm_gateway import ProviderConfig
from learningFlow.memory_store import EpisodeRecord, RunStore, load
from learningFlow.orchestrator import (
    ABORTED, FIXED_REWARD_PROGRAM, PolicyEvaluator, RunConfig, Trainer, episode_seed, eval_table,
    evaluate, export_metrics, latest_policy, load_run_config, rates, resume, run_episode,
    training_curve,
)
from learningFlow.reward_dsl import lint, parse
from learningFlow.rl_core import Hyperparams, PPOAgent, RolloutBuffer
from learningFlow.tracking_controller import WaypointTracker

PROGRAM_A = "```reward\nprogress = 0.1 * v_ego / v_limit\ncompletion = 100 * success\ntotal = progress + completion\n```"
PROGRAM_B = ("```reward\nprogress = 0.2 * v_ego / v_limit\ncrash = -100 * collision\n"
             "completion = 100 * success\ntotal = progress + crash + completion\n```")


def _short_scenario():
    return ScenarioConfig(task="overtaking", lane_count=3, lane_width=3.5, road_length=200.0,
                          v_limit=15.0, dt=0.1, max_steps=15)


def _config(out_dir, mock_dir=None, **overrides):
    values = dict(scenario=_short_scenario(), episodes=6, n_p=2, n_c=3, n_r=4, seed=0,
                  out_dir=str(out_dir), hyper=Hyperparams(epochs=2), eps_start=0.0, eps_final=0.0)
    if mock_dir:
        values['provider'] = ProviderConfig(provider="mock", mock_dir=mock_dir)
    values.update(overrides)
    return RunConfig(**values)


@pytest.fixture
def pipeline_scripts(write_scripts):
    return write_scripts({
        "curriculum_generation": ["<curriculum density=1 mode=0/>", "<curriculum density=2 mode=1/>"],
        "reward_generation": [PROGRAM_A, PROGRAM_B],
    })


class BrakingPolicy:
    def greedy(self, obs):
        return (0, 0, 0)


# ---------------------------------------------------------------- config

def test_run_config_validation():
    with pytest.raises(ConfigurationError):
        RunConfig(episodes=0, fixed_reward=True, no_curriculum=True)
    with pytest.raises(ConfigurationError):
        RunConfig(target_density=4, fixed_reward=True, no_curriculum=True)
    with pytest.raises(ConfigurationError):
        RunConfig()
    assert RunConfig(fixed_reward=True, no_curriculum=True).method_label == "vanilla_ppo"
    config = RunConfig(provider=ProviderConfig(provider="http"), no_analysis=True, fixed_reward=True)
    assert config.method_label == "learningflow_no_analysis_fixed_reward"


def test_run_config_from_dict():
    config = RunConfig.from_dict({
        "scenario": "merging",
        "episodes": 10,
        "hyper": {"epochs": 3},
        "provider": {"provider": "mock", "mock_dir": "mock_scripts/overtaking"},
    })
    assert config.scenario.merge_zone == (60.0, 160.0)
    assert config.hyper.epochs == 3
    assert RunConfig.from_dict(config.to_dict()).to_dict() == config.to_dict()
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"episodes": 10, "learning_rate": 0.1})
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"hyper": {"gamma": 1.5}, "fixed_reward": True, "no_curriculum": True})


def test_fixed_reward_program_is_clean(overtaking):
    program = parse(FIXED_REWARD_PROGRAM)
    assert program.component_names == ["progress", "centering", "completion", "crash", "lane_change"]
    assert lint(program, overtaking) == []


def test_episode_seed():
    assert episode_seed(0, 5) == episode_seed(0, 5)
    assert len({episode_seed(0, e) for e in range(100)}) == 100
    assert episode_seed(0, 5) != episode_seed(1, 5)


# ---------------------------------------------------------------- rollout

def test_run_episode_fills_buffer():
    scenario = _short_scenario()
    buffer = RolloutBuffer()
    program = parse(FIXED_REWARD_PROGRAM)
    result = run_episode(DrivingSimulator(scenario), WaypointTracker(scenario), PPOAgent(seed=0),
                         CurriculumId(0, 0), seed=1, program=program, buffer=buffer)
    assert len(buffer) == result.steps
    assert buffer.dones[-1] and not any(buffer.dones[:-1])
    assert sum(buffer.rewards) == pytest.approx(result.total_reward)
    assert set(result.components) == set(program.component_names)
    assert sum(result.components.values()) == pytest.approx(result.total_reward)


def test_rates_sum_to_hundred():
    assert rates(["success", "collision", "timeout"]) == (33.3, 33.3, 33.4)
    assert rates(["timeout", ABORTED]) == (0.0, 0.0, 100.0)


# ---------------------------------------------------------------- training

def test_pipeline_cadence(tmp_path, pipeline_scripts):
    run_dir = tmp_path / "run"
    Trainer(_config(run_dir, pipeline_scripts), sleep=lambda s: None).train()
    history = load(str(run_dir))

    assert [r.episode for r in history.episodes] == list(range(6))
    assert [r.curriculum for r in history.episodes] == [CurriculumId(1, 0)] * 3 + [CurriculumId(2, 1)] * 3
    assert [d.episode for d in history.curriculum] == [0, 3]
    assert [(h.episode_start, h.episode_end) for h in history.rewards] == [(0, 4), (4, 6)]
    assert [h.origin for h in history.rewards] == ["llm", "llm"]
    fingerprints = [h.fingerprint for h in history.rewards]
    assert [r.fingerprint for r in history.episodes] == [fingerprints[0]] * 4 + [fingerprints[1]] * 2
    assert [r.seed for r in history.episodes] == [episode_seed(0, e) for e in range(6)]
    assert sorted(os.listdir(run_dir / "checkpoints")) == ["ep_000000", "ep_000002", "ep_000004", "ep_000006"]
    assert latest_policy(str(run_dir)).endswith(os.path.join("ep_000006", "policy.bin"))
    assert all(t["outcome"] == "ok" for t in history.transcripts)
    roles = {t["role"] for t in history.transcripts}
    assert {"curriculum_reflection", "reward_reflection", "reward_analysis"} <= roles
    reflections = [t for t in history.transcripts if t["role"] == "curriculum_reflection"]
    assert [t["episode"] for t in reflections] == [3]
    assert "## Active reward program\nprogress = 0.1 * v_ego / v_limit" in reflections[0]["prompt"]


def test_no_analysis_skips_analysis_agents(tmp_path, pipeline_scripts):
    run_dir = tmp_path / "run"
    Trainer(_config(run_dir, pipeline_scripts, no_analysis=True), sleep=lambda s: None).train()
    roles = {t["role"] for t in load(str(run_dir)).transcripts}
    assert "curriculum_analysis" not in roles
    assert "reward_analysis" not in roles


def test_training_is_deterministic(tmp_path, pipeline_scripts):
    for name in ("a", "b"):
        Trainer(_config(tmp_path / name, pipeline_scripts), sleep=lambda s: None).train()
    first = [r.to_dict() for r in RunStore(str(tmp_path / "a")).episodes]
    second = [r.to_dict() for r in RunStore(str(tmp_path / "b")).episodes]
    assert first == second


def test_resume_matches_uninterrupted_run(tmp_path, pipeline_scripts):
    Trainer(_config(tmp_path / "full", pipeline_scripts), sleep=lambda s: None).train()
    crashed = tmp_path / "crashed"
    Trainer(_config(crashed, pipeline_scripts), sleep=lambda s: None).train()
    RunStore(str(crashed)).truncate_from(5)
    shutil.rmtree(crashed / "checkpoints" / "ep_000006")

    resume(str(crashed))
    expected = [r.to_dict() for r in RunStore(str(tmp_path / "full")).episodes]
    assert [r.to_dict() for r in RunStore(str(crashed)).episodes] == expected
    assert [h.episode_start for h in RunStore(str(crashed)).reward_history()] == [0, 4]


def test_existing_run_requires_resume(tmp_path):
    config = _config(tmp_path / "run", fixed_reward=True, no_curriculum=True, episodes=2)
    Trainer(config).train()
    with pytest.raises(ConfigurationError):
        Trainer(config).train()


def test_vanilla_run_uses_fixed_program(tmp_path):
    run_dir = tmp_path / "vanilla"
    Trainer(_config(run_dir, fixed_reward=True, no_curriculum=True, episodes=2)).train()
    history = load(str(run_dir))
    assert history.rewards[0].origin == "fixed"
    assert history.rewards[0].fingerprint == parse(FIXED_REWARD_PROGRAM).fingerprint
    assert all(r.curriculum == CurriculumId(1, 2) and r.origin == "fixed" for r in history.episodes)
    assert history.transcripts == []


def test_reward_fallback(tmp_path, write_scripts):
    mock_dir = write_scripts({"reward_generation": ["no program here"]})
    run_dir = tmp_path / "fallback"
    Trainer(_config(run_dir, mock_dir, no_curriculum=True, episodes=2,
                    fallback_reward=FIXED_REWARD_PROGRAM), sleep=lambda s: None).train()
    history = load(str(run_dir))
    assert history.rewards[0].origin == "fallback"
    attempts = [t for t in history.transcripts if t["role"] == "reward_generation"]
    assert len(attempts) == 3
    assert "error kind: missing_block" in attempts[1]["prompt"]


def test_malformed_refinement_keeps_previous_program(tmp_path, write_scripts):
    mock_dir = write_scripts({
        "curriculum_generation": ["<curriculum density=1 mode=0/>"],
        "reward_generation": [PROGRAM_A, "```reward\ntotal = v_ego +\n```"],
    })
    run_dir = tmp_path / "run"
    Trainer(_config(run_dir, mock_dir), sleep=lambda s: None).train()
    history = load(str(run_dir))
    assert [(h.episode_start, h.episode_end) for h in history.rewards] == [(0, 6)]
    assert len({r.fingerprint for r in history.episodes}) == 1
    rejected = [t for t in history.transcripts if t["role"] == "reward_generation" and t["episode"] == 4]
    assert [t["outcome"] for t in rejected] == ["extraction_error: syntax"] * 3


def test_missing_initial_reward_without_fallback(tmp_path, write_scripts):
    mock_dir = write_scripts({"reward_generation": ["!error"]})
    trainer = Trainer(_config(tmp_path / "run", mock_dir, no_curriculum=True, episodes=2), sleep=lambda s: None)
    with pytest.raises(GatewayUnavailableError):
        trainer.train()


def test_mock_provider_must_script_generation_roles(tmp_path, write_scripts):
    mock_dir = write_scripts({"reward_generation": [PROGRAM_A]})
    with pytest.raises(ConfigurationError):
        Trainer(_config(tmp_path / "run", mock_dir))


# ---------------------------------------------------------------- evaluation and export

def test_braking_policy_always_times_out(tmp_path):
    report = evaluate(BrakingPolicy(), "overtaking", [0], episodes=5, method="brake",
                      out_dir=str(tmp_path), dump_dir=str(tmp_path / "traj"))
    cell = report.cell("overtaking", 0)
    assert (cell.success, cell.collision, cell.timeout) == (0.0, 0.0, 100.0)
    assert os.path.exists(tmp_path / "eval" / "brake_overtaking.csv")
    assert len(os.listdir(tmp_path / "traj")) == 5

    table = eval_table(str(tmp_path))
    assert list(table.columns) == ["method", "task", "empty_S", "empty_C", "empty_TO"]
    assert table.loc[0, "empty_TO"] == 100.0


def test_evaluator_requires_policy():
    with pytest.raises(ValueError):
        PolicyEvaluator().evaluate("overtaking", [0])


def test_evaluation_is_repeatable(tmp_path):
    scenario = _short_scenario()
    agent = PPOAgent(seed=4)
    first = evaluate(agent, scenario, [1, 2], episodes=4).to_frame()
    second = evaluate(agent, scenario, [1, 2], episodes=4).to_frame()
    assert first.equals(second)
    assert (first["S"] + first["C"] + first["TO"]).round(1).tolist() == [100.0, 100.0]


def test_training_curve_blocks():
    records = [EpisodeRecord(e, e // 2, 0, "llm", "success" if e % 2 else "collision", 10, float(e),
                             {"progress": float(e)}, "f", e) for e in range(5)]
    curve = training_curve(records, window=2)
    assert curve["episode"].tolist() == [1, 3, 4]
    assert curve["success_rate"].tolist() == [0.5, 0.5, 0.0]
    assert curve["component_progress"].tolist() == [0.5, 2.5, 4.0]
    assert curve["curriculum"].tolist() == ["empty/stationary", "low/stationary", "medium/stationary"]


def test_export_metrics(tmp_path):
    run_dir = tmp_path / "run"
    Trainer(_config(run_dir, fixed_reward=True, no_curriculum=True, episodes=4)).train()
    evaluate(latest_policy(str(run_dir)), _short_scenario(), [0], episodes=2, method="vanilla_ppo",
             out_dir=str(run_dir))
    written = export_metrics(str(run_dir), window=2)
    assert set(written) == {"training_curve", "eval_table", "eval_table_xlsx"}
    assert all(os.path.exists(path) for path in written.values())


@pytest.mark.slow
def test_scripted_overtaking_run(tmp_path):
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    config = load_run_config(os.path.join(root, "configs", "overtaking.yaml"))
    config.provider.mock_dir = os.path.join(root, "mock_scripts", "overtaking")
    config.out_dir = str(tmp_path / "overtaking")
    config.episodes = 300
    Trainer(config, sleep=lambda s: None).train()

    history = load(config.out_dir)
    assert len(history.episodes) == 300
    assert [d.episode for d in history.curriculum] == [0, 100, 200]
    assert [d.llm_curriculum for d in history.curriculum] == [
        CurriculumId(0, 0), CurriculumId(1, 0), CurriculumId(1, 0)]
    assert [h.episode_start for h in history.rewards] == [0]
