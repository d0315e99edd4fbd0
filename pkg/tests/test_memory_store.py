import os

import numpy as np
import pytest

from learningFlow.errors import EmptyStoreError, MemoryStoreError
from learningFlow.memory_store import (
    CurriculumDecision, EpisodeRecord, RewardHistoryEntry, RunStore, compute_window_stats, load,
)


def _record(e, outcome="success", reward=1.0, components=None, density=0, mode=0):
    return EpisodeRecord(episode=e, density=density, mode=mode, origin="llm", outcome=outcome, steps=10,
                         total_reward=reward, components=components or {"progress": reward},
                         fingerprint="abcd", seed=e)


def test_append_and_reload(tmp_path):
    run_dir = str(tmp_path / "run")
    store = RunStore(run_dir)
    for e in range(5):
        store.append_episode(_record(e))
    store.append_curriculum(CurriculumDecision(0, 0, 0, "llm", 0, 0, rationale="start easy"))
    store.append_transcript({"role": "reward_generation", "episode": 0, "outcome": "ok"})

    history = load(run_dir)
    assert [r.episode for r in history.episodes] == list(range(5))
    assert history.curriculum[0].rationale == "start easy"
    assert history.transcripts[0]["outcome"] == "ok"
    assert RunStore(run_dir).next_episode == 5


def test_episode_index_regression_is_rejected(tmp_path):
    store = RunStore(str(tmp_path))
    store.append_episode(_record(3))
    with pytest.raises(MemoryStoreError):
        store.append_episode(_record(3))
    with pytest.raises(MemoryStoreError):
        store.append_episode(_record(1))


def test_window_stats_match_recomputation(tmp_path):
    rng = np.random.default_rng(0)
    store = RunStore(str(tmp_path))
    outcomes = rng.choice(["success", "collision", "timeout"], size=237)
    rewards = rng.normal(size=237)
    for e, (outcome, reward) in enumerate(zip(outcomes, rewards)):
        store.append_episode(_record(e, str(outcome), float(reward), density=e % 4, mode=e % 3))

    for window in (1, 50, 100, 1000):
        stats = store.window_stats(window)
        tail = list(zip(outcomes, rewards))[-window:]
        n = len(tail)
        assert stats.episodes == n
        assert stats.success_rate == pytest.approx(sum(o == "success" for o, _ in tail) / n)
        assert stats.collision_rate == pytest.approx(sum(o == "collision" for o, _ in tail) / n)
        assert stats.mean_total_reward == pytest.approx(float(np.mean([r for _, r in tail])))
        assert stats.component_means["progress"] == pytest.approx(float(np.mean([r for _, r in tail])))
        assert stats.success_rate + stats.collision_rate + stats.timeout_rate == pytest.approx(1.0)
        assert sum(stats.curriculum_counts.values()) == n
        assert stats.last_episode == 236


def test_component_means_only_over_declaring_episodes():
    records = [_record(0, components={"progress": 2.0}),
               _record(1, components={"progress": 4.0, "crash": -100.0})]
    stats = compute_window_stats(records)
    assert stats.component_means == {"progress": 3.0, "crash": -100.0}


def test_empty_window(tmp_path):
    with pytest.raises(EmptyStoreError):
        RunStore(str(tmp_path)).window_stats(10)
    with pytest.raises(EmptyStoreError):
        compute_window_stats([])


def test_reward_history_ranges(tmp_path):
    store = RunStore(str(tmp_path))
    store.append_reward(RewardHistoryEntry(0, 0, "total = 1", "f0", "generated"))
    store.append_reward(RewardHistoryEntry(1, 1000, "total = 2", "f1", "generated", lint_warnings=["[counter] x"]))
    for e in range(1500, 1503):
        store.append_episode(_record(e))
    history = store.reward_history()
    assert [(h.episode_start, h.episode_end) for h in history] == [(0, 1000), (1000, 1503)]
    assert history[1].lint_warnings == ["[counter] x"]


def test_torn_final_line_is_recovered(tmp_path):
    run_dir = str(tmp_path)
    store = RunStore(run_dir)
    for e in range(3):
        store.append_episode(_record(e))
    with open(os.path.join(run_dir, "episodes.jsonl"), "a", encoding="utf-8") as f:
        f.write('{"episode": 3, "dens')

    reopened = RunStore(run_dir)
    assert [r.episode for r in reopened.episodes] == [0, 1, 2]
    reopened.append_episode(_record(3))
    assert [r.episode for r in RunStore(run_dir).episodes] == [0, 1, 2, 3]


def test_truncate_from(tmp_path):
    store = RunStore(str(tmp_path))
    for e in range(10):
        store.append_episode(_record(e))
    for e in (0, 5):
        store.append_curriculum(CurriculumDecision(e, 1, 1, "llm", 1, 1))
        store.append_reward(RewardHistoryEntry(e // 5, e, "total = 1", "f", "generated"))
        store.append_transcript({"role": "reward_generation", "episode": e, "outcome": "ok"})

    store.truncate_from(5)
    assert store.next_episode == 5
    reloaded = RunStore(str(tmp_path)).load()
    assert [r.episode for r in reloaded.episodes] == [0, 1, 2, 3, 4]
    assert [d.episode for d in reloaded.curriculum] == [0]
    assert [r.episode_start for r in reloaded.rewards] == [0]
    assert [t["episode"] for t in reloaded.transcripts] == [0]


def test_config_snapshot_round_trip(tmp_path):
    store = RunStore(str(tmp_path))
    store.save_config_snapshot({"episodes": 300, "scenario": "overtaking", "hyper": {"gamma": 0.99}})
    assert store.load_config_snapshot()["hyper"] == {"gamma": 0.99}


def test_load_missing_run(tmp_path):
    with pytest.raises(IOError):
        load(str(tmp_path / "nope"))
