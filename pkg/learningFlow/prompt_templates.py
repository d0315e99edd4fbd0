"""
Prompt templates for the six agent roles.

Every render function is a pure function of its arguments; the same inputs
always produce byte-identical prompts.
"""

from dataclasses import dataclass
from typing import Optional

from learningFlow.reward_dsl import GRAMMAR_EBNF

CURRICULUM_TAG_FORMAT = "<curriculum density=D mode=M/>"


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    schema: str

    def render(self) -> str:
        """Flat text form stored in transcripts."""
        return f"[system]\n{self.system}\n\n[user]\n{self.user}\n\n[expected output]\n{self.schema}"

    def with_followup(self, text: str) -> "PromptBundle":
        return PromptBundle(self.system, f"{self.user}\n\n## Previous attempt rejected\n{text}", self.schema)


CHARTERS = {
    "curriculum_analysis": (
        "You are the curriculum analysis agent. Study the training task, the curriculum set, "
        "the curriculum history and the feedback, then reason about which difficulty the "
        "driving policy is ready for next. Do not select a curriculum yourself."
    ),
    "curriculum_generation": (
        "You are the curriculum generation agent. Using the analysis, pick exactly one member "
        "of the curriculum set for the next training stage."
    ),
    "curriculum_reflection": (
        "You are the curriculum reflection agent. Summarize the curriculum sequence, the reward "
        "trajectory and the task metrics below into concise feedback for the curriculum agents."
    ),
    "reward_analysis": (
        "You are the reward analysis agent. Study the task, the accessible variables, the reward "
        "history and the feedback, and describe which sub-rewards the next reward function needs "
        "and how they should be weighted."
    ),
    "reward_generation": (
        "You are the reward generation agent. Write a reward program in the reward language "
        "below. Every sub-reward must be a named component so that its value can be reported."
    ),
    "reward_reflection": (
        "You are the reward reflection agent. Review how each reward component behaved during "
        "training and point out design flaws, such as per-step terms that accumulate past the "
        "completion reward or counters that are not event-triggered."
    ),
}


def _section(title: str, body: Optional[str]) -> str:
    body = body.strip() if body and body.strip() else "(none)"
    return f"## {title}\n{body}"


def _bundle(role: str, descriptor: str, sections, schema: str) -> PromptBundle:
    system = f"{descriptor}\n\n{CHARTERS[role]}"
    return PromptBundle(system, "\n\n".join(sections), schema)


def curriculum_analysis_prompt(descriptor: str, history: str, previous_analysis: str,
                               feedback: str) -> PromptBundle:
    sections = [
        _section("Curriculum history", history),
        _section("Previous analysis", previous_analysis),
        _section("Feedback", feedback),
        _section("Task", "Analyse the training progress and recommend the difficulty of the next stage."),
    ]
    return _bundle("curriculum_analysis", descriptor, sections, "Free-form analysis text.")


def curriculum_generation_prompt(descriptor: str, history: str, feedback: str,
                                 analysis: Optional[str]) -> PromptBundle:
    sections = [_section("Curriculum history", history), _section("Feedback", feedback)]
    if analysis is not None:
        sections.append(_section("Analysis", analysis))
    sections.append(_section(
        "Output format",
        f"Give a short rationale, then end with exactly one selection tag:\n{CURRICULUM_TAG_FORMAT}\n"
        "where D is the density index and M the motion-mode index from the curriculum set."))
    return _bundle("curriculum_generation", descriptor, sections,
                   f"Rationale followed by one tag {CURRICULUM_TAG_FORMAT}.")


def reward_analysis_prompt(descriptor: str, history: str, previous_analysis: str,
                           feedback: str) -> PromptBundle:
    sections = [
        _section("Reward history", history),
        _section("Previous analysis", previous_analysis),
        _section("Feedback", feedback),
        _section("Task", "Analyse which sub-rewards the next reward function should contain."),
    ]
    return _bundle("reward_analysis", descriptor, sections, "Free-form analysis text.")


def reward_generation_prompt(descriptor: str, history: str, feedback: str,
                             analysis: Optional[str]) -> PromptBundle:
    sections = [_section("Reward history", history), _section("Feedback", feedback)]
    if analysis is not None:
        sections.append(_section("Analysis", analysis))
    sections.append(_section("Reward language", GRAMMAR_EBNF))
    sections.append(_section(
        "Output format",
        "Return the program in a single fenced block tagged reward:\n"
        "```reward\n<component> = <expr>\n...\ntotal = <expr>\n```\n"
        "Only the accessible variables, earlier component names and the listed functions may be used."))
    return _bundle("reward_generation", descriptor, sections, "One ```reward fenced block.")


def reflection_prompt(role: str, descriptor: str, summary: str) -> PromptBundle:
    sections = [_section("Training summary", summary),
                _section("Task", "Write feedback for the next analysis and generation steps.")]
    return _bundle(role, descriptor, sections, "Free-form feedback text.")


def retry_followup(kind: str, message: str) -> str:
    """Follow-up text quoting the exact decode, extraction or parse error of the last attempt."""
    return f"Your previous response could not be used.\nerror kind: {kind}\nerror: {message}\nPlease answer again following the output format exactly."
