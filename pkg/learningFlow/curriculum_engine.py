"""
Two-layer curriculum set, epsilon-curriculum selection and the curriculum
workflow (reflection -> analysis -> generation) driven by the LLM gateway.
"""

import logging
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from learningFlow.driving_sim import N_MM_MAX, N_TD_MAX, CurriculumId, MotionMode, ScenarioConfig
from learningFlow.errors import CurriculumDecodeError, GatewayUnavailableError
from learningFlow.llm_gateway import (
    AgentRole, LLMGateway, build_context_descriptor, build_reflection_summary,
    format_curriculum_history,
)
from learningFlow.memory_store import CurriculumDecision, RunStore, WindowStats
from learningFlow.prompt_templates import (
    curriculum_analysis_prompt, curriculum_generation_prompt, reflection_prompt, retry_followup,
)

logger = logging.getLogger(__name__)

INITIAL_CURRICULUM = CurriculumId(0, 0)
MAX_GENERATION_ATTEMPTS = 3
RATIONALE_CHARS = 300

_TAG = re.compile(r"<curriculum\b[^>]*>", re.IGNORECASE)
_ATTR = re.compile(r"(\w+)\s*=\s*[\"']?([^\s\"'/>]*)[\"']?")
_INTEGER = re.compile(r"[+-]?\d+")


class CurriculumSet:
    """All (density, motion mode) pairs, density-major."""

    def __init__(self, n_td_max: int = N_TD_MAX, n_mm_max: int = N_MM_MAX):
        self.members: Tuple[CurriculumId, ...] = tuple(
            CurriculumId(d, m) for d in range(n_td_max + 1) for m in range(n_mm_max + 1))

    def __contains__(self, item) -> bool:
        return isinstance(item, CurriculumId) and item in self.members

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


CURRICULUM_SET = CurriculumSet()


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from eps_start to eps_final, reached at decay_fraction of the planned episodes."""
    total_episodes: int
    eps_start: float = 0.3
    eps_final: float = 0.0
    decay_fraction: float = 0.8

    def value(self, episode: int) -> float:
        horizon = max(self.decay_fraction * self.total_episodes, 1.0)
        progress = min(max(episode / horizon, 0.0), 1.0)
        eps = self.eps_start + (self.eps_final - self.eps_start) * progress
        return float(min(max(eps, 0.0), 1.0))


def select(c_llm: CurriculumId, eps: float, rng: np.random.Generator) -> Tuple[CurriculumId, str]:
    """
    Epsilon-curriculum selection.

    Returns:
        (c_llm, "llm") with probability 1 - eps, otherwise a uniform member of
        the curriculum set with origin "random"
    """
    if c_llm not in CURRICULUM_SET:
        raise ValueError(f"{c_llm} is not a member of the curriculum set")
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    if rng.random() < eps:
        return CURRICULUM_SET.members[int(rng.integers(len(CURRICULUM_SET)))], "random"
    return c_llm, "llm"


def decode_curriculum(response: str) -> CurriculumId:
    """
    Extract the ``<curriculum density=D mode=M/>`` selection tag.

    Raises:
        CurriculumDecodeError: missing_tag, duplicate_tag, non_integer or out_of_range
    """
    tags = _TAG.findall(response)
    if not tags:
        raise CurriculumDecodeError("missing_tag", "no <curriculum density=D mode=M/> tag found")
    if len(tags) > 1:
        raise CurriculumDecodeError("duplicate_tag", f"found {len(tags)} curriculum tags; give exactly one")

    attrs = {key.lower(): value for key, value in _ATTR.findall(tags[0])}
    values = {}
    for key in ("density", "mode"):
        raw = attrs.get(key)
        if raw is None or not _INTEGER.fullmatch(raw):
            raise CurriculumDecodeError("non_integer", f"{key} must be an integer, got {raw!r}")
        values[key] = int(raw)
    try:
        return CurriculumId(values["density"], values["mode"])
    except ValueError:
        raise CurriculumDecodeError(
            "out_of_range",
            f"(density={values['density']}, mode={values['mode']}) is outside the curriculum set "
            f"(density 0..{N_TD_MAX}, mode 0..{N_MM_MAX})")


def rationale_excerpt(response: str) -> str:
    text = _TAG.sub("", response).strip()
    return text[:RATIONALE_CHARS]


class CurriculumWorkflow:
    """
    One curriculum step: reflection on the last window, analysis, then
    generation with up to MAX_GENERATION_ATTEMPTS decode retries.
    """

    def __init__(self, gateway: LLMGateway, scenario: ScenarioConfig, use_analysis: bool = True):
        self.gateway = gateway
        self.descriptor = build_context_descriptor(scenario)
        self.use_analysis = use_analysis
        self.analysis = ""
        self.feedback = ""

    def reflect(self, episode: int, stats: WindowStats, history: List[CurriculumDecision],
                program_source: Optional[str] = None, lint_warnings: Sequence[str] = ()) -> str:
        summary = build_reflection_summary(stats, history, program_source, lint_warnings)
        bundle = reflection_prompt(AgentRole.CURRICULUM_REFLECTION.value, self.descriptor, summary)
        try:
            reflection = self.gateway.complete(AgentRole.CURRICULUM_REFLECTION, bundle, episode)
        except GatewayUnavailableError:
            logger.warning("Curriculum reflection unavailable at episode %d; using raw summary", episode)
            return summary
        return f"{reflection.strip()}\n\n{summary}"

    def step(self, episode: int, history: List[CurriculumDecision], stats: Optional[WindowStats],
             program_source: Optional[str] = None,
             lint_warnings: Sequence[str] = ()) -> Tuple[Optional[CurriculumId], str]:
        """
        Args:
            program_source: Reward program active for the coming episodes
            lint_warnings: Its lint warnings, shown next to it in the feedback

        Returns:
            (curriculum, rationale); curriculum is None when every generation
            attempt failed and the caller should fall back
        """
        if stats is not None:
            self.feedback = self.reflect(episode, stats, history, program_source, lint_warnings)
        history_text = format_curriculum_history(history)

        analysis = None
        if self.use_analysis:
            bundle = curriculum_analysis_prompt(self.descriptor, history_text, self.analysis, self.feedback)
            try:
                self.analysis = self.gateway.complete(AgentRole.CURRICULUM_ANALYSIS, bundle, episode)
            except GatewayUnavailableError:
                logger.warning("Curriculum analysis unavailable at episode %d; keeping previous analysis", episode)
            analysis = self.analysis

        base = curriculum_generation_prompt(self.descriptor, history_text, self.feedback, analysis)
        bundle = base
        for attempt in range(1, MAX_GENERATION_ATTEMPTS + 1):
            try:
                return self.gateway.complete(
                    AgentRole.CURRICULUM_GENERATION, bundle, episode,
                    extract=lambda text: (decode_curriculum(text), rationale_excerpt(text)))
            except CurriculumDecodeError as e:
                logger.warning("Curriculum decode failed at episode %d (attempt %d): %s", episode, attempt, e)
                bundle = base.with_followup(retry_followup(e.kind, str(e)))
            except GatewayUnavailableError:
                break
        return None, ""

    def state(self) -> Dict[str, str]:
        return {'analysis': self.analysis, 'feedback': self.feedback}

    def load_state(self, state: Dict[str, str]):
        self.analysis = state.get('analysis', "")
        self.feedback = state.get('feedback', "")


class CurriculumEngine:
    """
    Owns the curriculum history and the epsilon schedule.

    At every episode e with e % n_c == 0 the workflow picks a new LLM
    curriculum; every episode then draws the deployed curriculum against the
    most recent LLM choice. Boundary decisions are appended to the history and
    persisted.
    """

    def __init__(self, workflow: Optional[CurriculumWorkflow], schedule: EpsilonSchedule,
                 n_c: int, seed: int, store: Optional[RunStore] = None,
                 fixed_curriculum: Optional[CurriculumId] = None):
        self.workflow = workflow
        self.schedule = schedule
        self.n_c = n_c
        self.store = store
        self.fixed_curriculum = fixed_curriculum
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        self.c_llm = INITIAL_CURRICULUM
        self.history: List[CurriculumDecision] = []

    def curriculum_for(self, episode: int, stats: Optional[WindowStats] = None,
                       program_source: Optional[str] = None,
                       lint_warnings: Sequence[str] = ()) -> Tuple[CurriculumId, str]:
        """
        Curriculum to deploy for an episode.

        Args:
            episode: Episode index about to start
            stats: Statistics of the window since the previous boundary (None at initialization)
            program_source: Active reward program, passed to the reflection agent
            lint_warnings: Lint warnings of the active program

        Returns:
            Tuple of (curriculum, origin)
        """
        if self.fixed_curriculum is not None:
            return self.fixed_curriculum, "fixed"

        boundary = episode % self.n_c == 0
        rationale, fallback = "", False
        if boundary:
            chosen, rationale = self.workflow.step(episode, self.history, stats,
                                                   program_source, lint_warnings)
            if chosen is None:
                fallback = True
                logger.warning("Curriculum generation failed at episode %d; retaining %s",
                               episode, self.c_llm.label)
            else:
                self.c_llm = chosen

        curriculum, origin = select(self.c_llm, self.schedule.value(episode), self.rng)
        if boundary:
            decision = CurriculumDecision(
                episode=episode,
                density=int(curriculum.density),
                mode=int(curriculum.motion_mode),
                origin=origin,
                llm_density=int(self.c_llm.density),
                llm_mode=int(self.c_llm.motion_mode),
                rationale=rationale,
                fallback=fallback,
            )
            self.history.append(decision)
            if self.store is not None:
                self.store.append_curriculum(decision)
            logger.info("Curriculum at episode %d: %s (origin %s, llm choice %s)",
                        episode, curriculum.label, origin, self.c_llm.label)
        return curriculum, origin

    def state(self) -> Dict:
        return {
            'rng': self.rng.bit_generator.state,
            'c_llm': self.c_llm.to_dict(),
            'workflow': self.workflow.state() if self.workflow else {},
        }

    def load_state(self, state: Dict, history: List[CurriculumDecision]):
        self.rng.bit_generator.state = state['rng']
        self.c_llm = CurriculumId.from_dict(state['c_llm'])
        if self.workflow:
            self.workflow.load_state(state['workflow'])
        self.history = list(history)


def target_curriculum(density: int) -> CurriculumId:
    """Curriculum used by the no-curriculum baseline: the target density with interactive traffic."""
    return CurriculumId(density, MotionMode.INTERACTIVE)
