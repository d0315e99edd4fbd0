"""
Persistent run history: episode outcomes, curriculum decisions, reward
generations and agent transcripts, one JSON-lines stream each.

Run directory layout:

    episodes.jsonl     one EpisodeRecord per finished episode
    curriculum.jsonl   one CurriculumDecision per curriculum boundary
    rewards.jsonl      one RewardHistoryEntry per activated reward program
    transcripts.jsonl  one entry per provider attempt
    config.snapshot    resolved run configuration (YAML)
    checkpoints/       policy.bin / trainer_state.pt per policy update
"""

import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import pandas as pd

from learningFlow.driving_sim import CurriculumId
from learningFlow.errors import EmptyStoreError, MemoryStoreError
from learningFlow.file_handler import (
    append_jsonl, load_config, read_jsonl, rewrite_jsonl, save_config,
)

logger = logging.getLogger(__name__)

EPISODES_FILE = "episodes.jsonl"
CURRICULUM_FILE = "curriculum.jsonl"
REWARDS_FILE = "rewards.jsonl"
TRANSCRIPTS_FILE = "transcripts.jsonl"
CONFIG_SNAPSHOT = "config.snapshot"
CHECKPOINTS_DIR = "checkpoints"
EVAL_DIR = "eval"

TERMINAL_KINDS = ("success", "collision", "timeout")


@dataclass
class EpisodeRecord:
    episode: int
    density: int
    mode: int
    origin: str
    outcome: str
    steps: int
    total_reward: float
    components: Dict[str, float]
    fingerprint: str
    seed: int

    @property
    def curriculum(self) -> CurriculumId:
        return CurriculumId(self.density, self.mode)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EpisodeRecord":
        return cls(**data)


@dataclass
class CurriculumDecision:
    """One curriculum boundary: the LLM choice and the curriculum deployed after the epsilon draw."""
    episode: int
    density: int
    mode: int
    origin: str
    llm_density: int
    llm_mode: int
    rationale: str = ""
    fallback: bool = False

    @property
    def curriculum(self) -> CurriculumId:
        return CurriculumId(self.density, self.mode)

    @property
    def llm_curriculum(self) -> CurriculumId:
        return CurriculumId(self.llm_density, self.llm_mode)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CurriculumDecision":
        return cls(**data)


@dataclass
class RewardHistoryEntry:
    """An activated reward program; it stays active until the next entry's start."""
    generation: int
    episode_start: int
    source: str
    fingerprint: str
    origin: str
    lint_warnings: List[str] = field(default_factory=list)
    analysis: str = ""
    episode_end: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop('episode_end')
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RewardHistoryEntry":
        return cls(**data)


@dataclass
class WindowStats:
    episodes: int
    first_episode: int
    last_episode: int
    success_rate: float
    collision_rate: float
    timeout_rate: float
    mean_total_reward: float
    component_means: Dict[str, float]
    curriculum_counts: Dict[str, int]


@dataclass
class RunHistory:
    episodes: List[EpisodeRecord]
    curriculum: List[CurriculumDecision]
    rewards: List[RewardHistoryEntry]
    transcripts: List[Dict[str, Any]]


def compute_window_stats(records: List[EpisodeRecord]) -> WindowStats:
    """
    Outcome rates, reward means and curriculum counts over a list of records.

    Component means are taken over the episodes whose active program declared
    that component. The timeout rate is the remainder of the other two rates,
    so the three always sum to exactly 1.
    """
    if not records:
        raise EmptyStoreError("no episode records to summarize")
    df = pd.DataFrame([r.to_dict() for r in records])
    n = len(df)
    counts = df['outcome'].value_counts()
    success = counts.get('success', 0) / n
    collision = counts.get('collision', 0) / n
    timeout = 1.0 - (success + collision)

    components = pd.DataFrame(list(df['components']))
    component_means = {name: float(components[name].mean()) for name in components.columns}

    labels = df.apply(lambda row: CurriculumId(row['density'], row['mode']).label, axis=1)
    curriculum_counts = {label: int(count) for label, count in labels.value_counts(sort=False).items()}

    return WindowStats(
        episodes=n,
        first_episode=int(df['episode'].iloc[0]),
        last_episode=int(df['episode'].iloc[-1]),
        success_rate=float(success),
        collision_rate=float(collision),
        timeout_rate=float(timeout),
        mean_total_reward=float(df['total_reward'].mean()),
        component_means=component_means,
        curriculum_counts=curriculum_counts,
    )


class RunStore:
    """
    Single-writer handle on a run directory.

    Usage:
        store = RunStore("runs/overtaking-0")
        store.append_episode(record)
        stats = store.window_stats(100)
    """

    def __init__(self, run_dir: str):
        self.run_dir = run_dir
        os.makedirs(os.path.join(run_dir, CHECKPOINTS_DIR), exist_ok=True)
        self._episodes: List[EpisodeRecord] = []
        self.load()

    def path(self, name: str) -> str:
        return os.path.join(self.run_dir, name)

    @property
    def checkpoints_dir(self) -> str:
        return self.path(CHECKPOINTS_DIR)

    @property
    def episodes(self) -> List[EpisodeRecord]:
        return list(self._episodes)

    @property
    def next_episode(self) -> int:
        return self._episodes[-1].episode + 1 if self._episodes else 0

    # ------------------------------------------------------------- writes

    def append_episode(self, record: EpisodeRecord):
        """Durably append an episode record; indices must strictly increase."""
        if self._episodes and record.episode <= self._episodes[-1].episode:
            raise MemoryStoreError(
                f"episode index regression: {record.episode} after {self._episodes[-1].episode}")
        append_jsonl(self.path(EPISODES_FILE), record.to_dict())
        self._episodes.append(record)

    def append_curriculum(self, decision: CurriculumDecision):
        append_jsonl(self.path(CURRICULUM_FILE), decision.to_dict())

    def append_reward(self, entry: RewardHistoryEntry):
        append_jsonl(self.path(REWARDS_FILE), entry.to_dict())

    def append_transcript(self, entry: Dict[str, Any]):
        append_jsonl(self.path(TRANSCRIPTS_FILE), entry)

    def save_config_snapshot(self, config: Dict[str, Any]):
        save_config(config, self.path(CONFIG_SNAPSHOT))

    def load_config_snapshot(self) -> Dict[str, Any]:
        return load_config(self.path(CONFIG_SNAPSHOT))

    # ------------------------------------------------------------- reads

    def load(self) -> RunHistory:
        """
        Read every stream of the run directory.

        Torn final lines (a crash during a write) are dropped with a warning
        and truncated on disk so that later appends start on a clean line.
        """
        episodes, dropped = read_jsonl(self.path(EPISODES_FILE), repair=True)
        self._episodes = [EpisodeRecord.from_dict(r) for r in episodes]
        curriculum, _ = read_jsonl(self.path(CURRICULUM_FILE), repair=True)
        rewards, _ = read_jsonl(self.path(REWARDS_FILE), repair=True)
        transcripts, _ = read_jsonl(self.path(TRANSCRIPTS_FILE), repair=True)
        if dropped:
            logger.warning("Recovered %d episode records from %s", len(self._episodes), self.run_dir)
        return RunHistory(
            episodes=list(self._episodes),
            curriculum=[CurriculumDecision.from_dict(r) for r in curriculum],
            rewards=self._with_ranges([RewardHistoryEntry.from_dict(r) for r in rewards]),
            transcripts=transcripts,
        )

    def _with_ranges(self, entries: List[RewardHistoryEntry]) -> List[RewardHistoryEntry]:
        for current, following in zip(entries, entries[1:] + [None]):
            current.episode_end = following.episode_start if following else self.next_episode
        return entries

    def curriculum_history(self) -> List[CurriculumDecision]:
        records, _ = read_jsonl(self.path(CURRICULUM_FILE))
        return [CurriculumDecision.from_dict(r) for r in records]

    def reward_history(self) -> List[RewardHistoryEntry]:
        """Reward generations with their active ranges [episode_start, episode_end)."""
        records, _ = read_jsonl(self.path(REWARDS_FILE))
        return self._with_ranges([RewardHistoryEntry.from_dict(r) for r in records])

    def transcripts(self) -> List[Dict[str, Any]]:
        return read_jsonl(self.path(TRANSCRIPTS_FILE))[0]

    def window_stats(self, window: int) -> WindowStats:
        """Statistics over the min(window, available) most recent episodes."""
        if not self._episodes:
            raise EmptyStoreError(f"run {self.run_dir} has no episode records")
        return compute_window_stats(self._episodes[-window:])

    # ------------------------------------------------------------- resume

    def truncate_from(self, episode: int):
        """Drop every record at or after an episode index (rewind to a checkpoint)."""
        self._episodes = [r for r in self._episodes if r.episode < episode]
        rewrite_jsonl(self.path(EPISODES_FILE), [r.to_dict() for r in self._episodes])
        for name, key in ((CURRICULUM_FILE, 'episode'), (REWARDS_FILE, 'episode_start'),
                          (TRANSCRIPTS_FILE, 'episode')):
            records, _ = read_jsonl(self.path(name))
            kept = [r for r in records if r[key] < episode]
            if os.path.exists(self.path(name)):
                rewrite_jsonl(self.path(name), kept)
        logger.info("Truncated run %s to episodes < %d", self.run_dir, episode)


def load(run_dir: str) -> RunHistory:
    """Load every history stream of a run directory."""
    if not os.path.isdir(run_dir):
        raise IOError(f"Error loading {run_dir}: not a run directory")
    return RunStore(run_dir).load()
