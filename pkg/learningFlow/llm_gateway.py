"""
All LLM interaction: context descriptors, reflection summaries, the HTTP and
mock providers, retries, response extraction and transcripts.

Providers implement ``complete(role, bundle, temperature, timeout) -> str`` and
signal transport problems with httpx exceptions, so the mock provider fails
the same way a real endpoint does.
"""

import logging
import os
import re
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence

import httpx

from learningFlow.driving_sim import (
    DENSITY_SV_COUNT, Density, ScenarioConfig, Task,
)
from learningFlow.errors import ConfigurationError, ExtractionError, GatewayUnavailableError
from learningFlow.memory_store import CurriculumDecision, WindowStats
from learningFlow.prompt_templates import PromptBundle
from learningFlow.reward_dsl import VARIABLE_SCHEMA, variable_ranges

logger = logging.getLogger(__name__)

API_KEY_ENV = "LEARNINGFLOW_API_KEY"
SCRIPT_TIMEOUT = "!timeout"
SCRIPT_ERROR = "!error"


class AgentRole(str, Enum):
    CURRICULUM_ANALYSIS = "curriculum_analysis"
    CURRICULUM_GENERATION = "curriculum_generation"
    CURRICULUM_REFLECTION = "curriculum_reflection"
    REWARD_ANALYSIS = "reward_analysis"
    REWARD_GENERATION = "reward_generation"
    REWARD_REFLECTION = "reward_reflection"

    @property
    def is_generation(self) -> bool:
        return self in (AgentRole.CURRICULUM_GENERATION, AgentRole.REWARD_GENERATION)


DEFAULT_RESPONSES = {
    AgentRole.CURRICULUM_ANALYSIS: (
        "The policy should master the current stage before traffic is added. Increase density "
        "once the success rate is high and collisions are rare; switch to interactive traffic last."
    ),
    AgentRole.CURRICULUM_REFLECTION: (
        "Curriculum feedback: compare the success rate with the previous window and only advance "
        "the difficulty when the policy has stabilized."
    ),
    AgentRole.REWARD_ANALYSIS: (
        "The reward needs a dense progress term toward the goal, a completion bonus that outweighs "
        "any accumulated per-step terms, a collision penalty and an event-triggered lane change cost."
    ),
    AgentRole.REWARD_REFLECTION: (
        "Reward feedback: check that per-step components stay small relative to the completion "
        "reward and that lane changes are penalized only when they happen."
    ),
}


@dataclass
class ProviderConfig:
    provider: str = "mock"
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    temperature: Optional[float] = None
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0
    api_key_env: str = API_KEY_ENV
    mock_dir: Optional[str] = None

    def __post_init__(self):
        if self.provider not in ("http", "mock"):
            raise ConfigurationError(f"unknown provider '{self.provider}'")
        if self.timeout <= 0:
            raise ConfigurationError("provider timeout must be positive")
        if self.max_retries < 1:
            raise ConfigurationError("max_retries must be at least 1")
        if self.provider == "mock" and not self.mock_dir:
            raise ConfigurationError("the mock provider needs a mock_dir")

    def temperature_for(self, role: AgentRole) -> float:
        if self.temperature is not None:
            return self.temperature
        return 0.2 if role.is_generation else 0.0


@dataclass
class TranscriptEntry:
    timestamp: str
    role: str
    episode: int
    attempt: int
    prompt: str
    response: Optional[str]
    outcome: str

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


# ---------------------------------------------------------------------- providers

class HttpChatProvider:
    """Chat-completion client for any endpoint that speaks the /chat/completions shape."""

    def __init__(self, config: ProviderConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self.client = client or httpx.Client()

    def complete(self, role: AgentRole, bundle: PromptBundle, temperature: float, timeout: float) -> str:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.config.model,
            "temperature": temperature,
            "messages": [
                {"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user},
            ],
        }
        url = f"{self.config.endpoint.rstrip('/')}/chat/completions"
        response = self.client.post(url, json=payload, headers=headers, timeout=timeout)
        response.raise_for_status()
        try:
            return response.json()["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise httpx.DecodingError(f"malformed completion payload: {e}", request=response.request)


class MockProvider:
    """
    Scripted provider reading ``<mock_dir>/<role>/*.txt``.

    Files are consumed in lexicographic order, one per call; the last file
    repeats once the sequence is exhausted. A file containing exactly
    ``!timeout`` or ``!error`` fails that attempt like a transport error.
    Analysis and reflection roles without a directory answer with built-in
    texts.
    """

    def __init__(self, mock_dir: str):
        if not os.path.isdir(mock_dir):
            raise ConfigurationError(f"mock script directory '{mock_dir}' does not exist")
        self.mock_dir = mock_dir
        self.scripts: Dict[AgentRole, List[str]] = {}
        for role in AgentRole:
            role_dir = os.path.join(mock_dir, role.value)
            if not os.path.isdir(role_dir):
                continue
            names = sorted(name for name in os.listdir(role_dir) if name.endswith(".txt"))
            texts = []
            for name in names:
                with open(os.path.join(role_dir, name), "r", encoding="utf-8") as f:
                    texts.append(f.read())
            if texts:
                self.scripts[role] = texts
        self.cursors: Dict[str, int] = {role.value: 0 for role in AgentRole}

    def require(self, roles: Sequence[AgentRole]):
        """Fail fast when a generation role the run needs has no scripts."""
        missing = [role.value for role in roles if role.is_generation and role not in self.scripts]
        if missing:
            raise ConfigurationError(f"mock scripts missing for: {', '.join(missing)}")

    def complete(self, role: AgentRole, bundle: PromptBundle, temperature: float, timeout: float) -> str:
        role = AgentRole(role)
        texts = self.scripts.get(role)
        if texts is None:
            if role.is_generation:
                raise ConfigurationError(f"mock scripts missing for {role.value}")
            return DEFAULT_RESPONSES[role]
        cursor = self.cursors[role.value]
        self.cursors[role.value] = cursor + 1
        text = texts[min(cursor, len(texts) - 1)]
        if text.strip() == SCRIPT_TIMEOUT:
            raise httpx.TimeoutException("scripted timeout")
        if text.strip() == SCRIPT_ERROR:
            raise httpx.ConnectError("scripted transport error")
        return text

    def state(self) -> Dict[str, int]:
        return dict(self.cursors)

    def load_state(self, state: Dict[str, int]):
        self.cursors.update({role: int(cursor) for role, cursor in state.items()})


def build_provider(config: ProviderConfig):
    if config.provider == "mock":
        return MockProvider(config.mock_dir)
    return HttpChatProvider(config)


# ---------------------------------------------------------------------- gateway

class LLMGateway:
    """
    Retrying front end over a provider.

    Every attempt, successful or not, produces exactly one transcript entry
    handed to ``transcript_sink``.
    """

    def __init__(self, provider, config: ProviderConfig,
                 transcript_sink: Optional[Callable[[Dict[str, Any]], None]] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.provider = provider
        self.config = config
        self.transcript_sink = transcript_sink
        self.sleep = sleep
        self.calls = 0

    def _record(self, role: AgentRole, episode: int, attempt: int, bundle: PromptBundle,
                response: Optional[str], outcome: str):
        entry = TranscriptEntry(
            timestamp=datetime.now(timezone.utc).isoformat(),
            role=role.value,
            episode=episode,
            attempt=attempt,
            prompt=bundle.render(),
            response=response,
            outcome=outcome,
        )
        if self.transcript_sink is not None:
            self.transcript_sink(entry.to_dict())

    def complete(self, role: AgentRole, bundle: PromptBundle, episode: int,
                 extract: Optional[Callable[[str], Any]] = None) -> Any:
        """
        One completion with transport retries.

        Args:
            role: Agent role issuing the call
            bundle: Rendered prompt
            episode: Episode index the call belongs to (for transcripts)
            extract: Optional decoder applied to the response; its outcome is
                recorded in the transcript and its errors propagate

        Returns:
            The raw response, or extract(response) when extract is given

        Raises:
            GatewayUnavailableError: all max_retries attempts failed in transport
        """
        role = AgentRole(role)
        temperature = self.config.temperature_for(role)
        for attempt in range(1, self.config.max_retries + 1):
            self.calls += 1
            try:
                text = self.provider.complete(role, bundle, temperature, self.config.timeout)
            except httpx.HTTPError as e:
                self._record(role, episode, attempt, bundle, None, f"transport_error: {e}")
                logger.warning("%s attempt %d/%d failed: %s", role.value, attempt, self.config.max_retries, e)
                if attempt < self.config.max_retries:
                    self.sleep(self.config.backoff_base * 2 ** (attempt - 1))
                continue

            if extract is None:
                self._record(role, episode, attempt, bundle, text, "ok")
                return text
            try:
                value = extract(text)
            except Exception as e:
                kind = getattr(e, "kind", type(e).__name__)
                self._record(role, episode, attempt, bundle, text, f"extraction_error: {kind}")
                raise
            self._record(role, episode, attempt, bundle, text, "ok")
            return value

        logger.error("%s unavailable after %d attempts", role.value, self.config.max_retries)
        raise GatewayUnavailableError(f"{role.value}: all {self.config.max_retries} attempts failed")


# ---------------------------------------------------------------------- extraction

_REWARD_BLOCK = re.compile(r"```reward[ \t]*\r?\n(.*?)```", re.DOTALL)


def extract_program_block(response: str) -> str:
    """Contents of the single ```reward fenced block in a response."""
    blocks = _REWARD_BLOCK.findall(response)
    if not blocks:
        raise ExtractionError("missing_block", "no ```reward fenced block found in the response")
    if len(blocks) > 1:
        raise ExtractionError("multiple_blocks", f"found {len(blocks)} ```reward blocks; return exactly one")
    return blocks[0]


# ---------------------------------------------------------------------- descriptors

TASK_NARRATIVES = {
    Task.OVERTAKING: (
        "The ego vehicle drives on a straight {lanes}-lane road of {length:g} m, starting in the "
        "middle lane. It must overtake the slower or stopped vehicles ahead and reach the last "
        "{depth:g} m of the road, centered in a lane, without colliding or leaving the road."
    ),
    Task.MERGING: (
        "The ego vehicle starts on an on-ramp next to a {main}-lane main road of {length:g} m. "
        "The merge zone spans x = {start:g} m to x = {end:g} m; the ramp ends with a barrier at "
        "x = {end:g} m. It must merge into the main road inside the merge zone and reach lane "
        "{target} (the second main lane from the left) in the last {depth:g} m of the road "
        "without colliding."
    ),
}


def build_context_descriptor(scenario: ScenarioConfig) -> str:
    """
    Natural-language description of the training task, the curriculum set and
    the accessible reward variables. Deterministic in its inputs.
    """
    goal = scenario.goal_region
    narrative = TASK_NARRATIVES[scenario.task].format(
        lanes=scenario.lane_count,
        length=scenario.road_length,
        depth=goal.x_max - goal.x_min,
        main=scenario.lane_count - 1,
        start=scenario.merge_zone[0] if scenario.merge_zone else 0.0,
        end=scenario.merge_zone[1] if scenario.merge_zone else 0.0,
        target=scenario.target_lane,
    )

    sv_counts = DENSITY_SV_COUNT[scenario.task]
    density_lines = [f"  density={d.value} ({d.name.lower()}): {sv_counts[d.value]} surrounding vehicles"
                     for d in Density]
    mode_lines = [
        "  mode=0 (stationary): surrounding vehicles stand still",
        "  mode=1 (constant_velocity): surrounding vehicles keep their speed and lane",
        "  mode=2 (interactive): surrounding vehicles follow traffic and change lanes with random driving styles",
    ]
    ranges = variable_ranges(scenario)
    variable_lines = [f"  {name} [{entry.unit}] in [{ranges[name][0]:.4g}, {ranges[name][1]:.4g}]: {entry.description}"
                      for name, entry in VARIABLE_SCHEMA.items()]

    return "\n".join([
        f"# Task: {scenario.task.value}",
        narrative,
        f"Speed limit {scenario.v_limit:g} m/s, time step {scenario.dt:g} s, at most {scenario.max_steps} steps per episode.",
        "",
        "# Curriculum set (every density combined with every motion mode)",
        *density_lines,
        *mode_lines,
        "",
        "# Accessible variables (per step)",
        *variable_lines,
        "",
        "# Objectives",
        "Learn a driving policy that reaches the goal reliably, avoids collisions and does not waste time. "
        "Train from easy to hard curricula and shape the reward so that completing the task is always "
        "worth more than any accumulation of per-step rewards.",
    ])


def format_curriculum_history(history: Sequence[CurriculumDecision], limit: int = 10) -> str:
    lines = []
    for decision in list(history)[-limit:]:
        c = decision.curriculum
        note = " (fallback)" if decision.fallback else ""
        lines.append(f"- episode {decision.episode}: density={int(c.density)} ({c.density.name.lower()}), "
                     f"mode={int(c.motion_mode)} ({c.motion_mode.name.lower()}), origin={decision.origin}{note}")
    return "\n".join(lines)


def build_reflection_summary(stats: WindowStats, history: Sequence[CurriculumDecision],
                             program_source: Optional[str] = None,
                             lint_warnings: Sequence[str] = ()) -> str:
    """
    Feedback text P_f for one statistics window.

    Returns:
        Deterministic text with outcome rates, reward means, the curriculum
        excerpt and the active reward program with its lint warnings
    """
    lines = [
        f"## Window: episodes {stats.first_episode}-{stats.last_episode} ({stats.episodes} episodes)",
        f"success rate: {100.0 * stats.success_rate:.1f}%",
        f"collision rate: {100.0 * stats.collision_rate:.1f}%",
        f"timeout rate: {100.0 * stats.timeout_rate:.1f}%",
        f"mean total reward: {stats.mean_total_reward:.6f}",
        "## Reward components (window mean)",
    ]
    lines += [f"- {name}: {value:.6f}" for name, value in stats.component_means.items()] or ["(none)"]
    lines.append("## Curriculum counts")
    lines += [f"- {label}: {count}" for label, count in stats.curriculum_counts.items()]
    lines.append("## Curriculum sequence (most recent last)")
    lines.append(format_curriculum_history(history) or "(none)")
    if program_source is not None:
        lines.append("## Active reward program")
        lines.append(program_source.strip())
        lines.append("## Lint warnings")
        lines += [f"- {warning}" for warning in lint_warnings] or ["(none)"]
    return "\n".join(lines)
