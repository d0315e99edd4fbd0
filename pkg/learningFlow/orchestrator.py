"""
The LearningFlow training loop, its run configuration, resumption, the
evaluation harness and the metrics export.

One control loop owns the simulator, the PPO agent, both agent workflows and
the run store. LLM workflows run synchronously between episodes; rollouts
pause while they run.
"""

import glob
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch

from learningFlow.curriculum_engine import (
    CurriculumEngine, CurriculumWorkflow, EpsilonSchedule, target_curriculum,
)
from learningFlow.driving_sim import (
    CurriculumId, Density, DrivingSimulator, MotionMode, OutcomeKind, ScenarioConfig, Task,
    default_scenario,
)
from learningFlow.errors import (
    ConfigurationError, ExtractionError, GatewayUnavailableError, NumericalError,
    RewardEvaluationError, RewardProgramError,
)
from learningFlow.file_handler import load_config, load_csv, save_csv, save_excel
from learningFlow.llm_gateway import (
    AgentRole, LLMGateway, ProviderConfig, build_context_descriptor, build_provider,
    build_reflection_summary, extract_program_block,
)
from learningFlow.memory_store import (
    EVAL_DIR, EpisodeRecord, RewardHistoryEntry, RunStore, WindowStats, compute_window_stats,
)
from learningFlow.prompt_templates import (
    reflection_prompt, retry_followup, reward_analysis_prompt, reward_generation_prompt,
)
from learningFlow.reward_dsl import (
    AccessibleVars, LintWarning, RewardProgram, lint, parse,
)
from learningFlow.rl_core import (
    Hyperparams, PPOAgent, RolloutBuffer, configure_determinism, load_policy, save_policy,
)
from learningFlow.tracking_controller import WaypointTracker

logger = logging.getLogger(__name__)

N_P = 50
N_C = 100
N_R = 1000
EVAL_EPISODES = 100
EVAL_SEED_BASE = 10_000
MAX_REWARD_ATTEMPTS = 3

POLICY_FILE = "policy.bin"
TRAINER_STATE_FILE = "trainer_state.pt"
TRAINING_CURVE_FILE = "training_curve.csv"
EVAL_TABLE_FILE = "eval_table.csv"
EVAL_TABLE_XLSX = "eval_table.xlsx"
ABORTED = "aborted"

# Hand-written program of the fixed-reward baseline and the default fallback
# when no R0 can be generated. Every per-step term stays below the completion
# reward when summed over an episode.
FIXED_REWARD_PROGRAM = """\
# progress: drive near the speed limit
progress = 0.1 * v_ego / v_limit
# stay centered in the lane
centering = -0.05 * abs(lane_offset)
completion = 100 * success
crash = -100 * collision
lane_change = -0.2 * lane_change_event
total = progress + centering + completion + crash + lane_change
"""


# ---------------------------------------------------------------------- config

@dataclass
class RunConfig:
    """
    Everything a training run needs. Persisted as config.snapshot in the run directory.

    fixed_reward skips the reward workflow and trains on FIXED_REWARD_PROGRAM
    (or fallback_reward when given); no_curriculum trains on the target
    density with interactive traffic; no_analysis calls both generation
    agents without a preceding analysis agent.
    """
    scenario: ScenarioConfig = field(default_factory=lambda: default_scenario("overtaking"))
    episodes: int = 3000
    n_p: int = N_P
    n_c: int = N_C
    n_r: int = N_R
    seed: int = 0
    provider: Optional[ProviderConfig] = None
    out_dir: str = "runs/default"
    eval_episodes: int = EVAL_EPISODES
    hyper: Hyperparams = field(default_factory=Hyperparams)
    eps_start: float = 0.3
    eps_final: float = 0.0
    eps_decay_fraction: float = 0.8
    fixed_reward: bool = False
    no_curriculum: bool = False
    no_analysis: bool = False
    target_density: int = int(Density.LOW)
    fallback_reward: Optional[str] = None
    method: Optional[str] = None

    def __post_init__(self):
        for name in ("episodes", "n_p", "n_c", "n_r", "eval_episodes"):
            if int(getattr(self, name)) <= 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= int(self.target_density) <= int(Density.HIGH):
            raise ConfigurationError(f"target_density must lie in 0..{int(Density.HIGH)}")
        if self.needs_provider and self.provider is None:
            raise ConfigurationError("a provider configuration is required unless both "
                                     "--fixed-reward and --no-curriculum are set")
        if self.episodes < self.n_r and not self.fixed_reward:
            logger.warning("episodes (%d) < n_r (%d): no reward refinement will run after R0",
                           self.episodes, self.n_r)

    @property
    def needs_provider(self) -> bool:
        return not (self.fixed_reward and self.no_curriculum)

    @property
    def method_label(self) -> str:
        if self.method:
            return self.method
        if self.fixed_reward and self.no_curriculum:
            return "vanilla_ppo"
        parts = ["learningflow"]
        if self.no_analysis:
            parts.append("no_analysis")
        if self.fixed_reward:
            parts.append("fixed_reward")
        if self.no_curriculum:
            parts.append("no_curriculum")
        return "_".join(parts)

    def to_dict(self) -> Dict[str, Any]:
        data = {name: getattr(self, name) for name in _SCALAR_FIELDS}
        data['scenario'] = self.scenario.to_dict()
        data['hyper'] = self.hyper.to_dict()
        data['provider'] = asdict(self.provider) if self.provider else None
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """
        Build a run config from a mapping (a YAML file or a snapshot).

        ``scenario`` may be a task name or a full scenario mapping.
        """
        unknown = set(data) - set(_SCALAR_FIELDS) - {'scenario', 'hyper', 'provider'}
        if unknown:
            raise ConfigurationError(f"unknown run config keys: {', '.join(sorted(unknown))}")
        kwargs = {name: data[name] for name in _SCALAR_FIELDS if name in data}

        scenario = data.get('scenario', "overtaking")
        if isinstance(scenario, str):
            kwargs['scenario'] = default_scenario(scenario)
        else:
            kwargs['scenario'] = ScenarioConfig.from_dict(scenario)
        try:
            if data.get('hyper'):
                kwargs['hyper'] = Hyperparams(**data['hyper'])
            if data.get('provider'):
                kwargs['provider'] = ProviderConfig(**data['provider'])
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"invalid run config: {e}")
        return cls(**kwargs)


_SCALAR_FIELDS = (
    "episodes", "n_p", "n_c", "n_r", "seed", "out_dir", "eval_episodes", "eps_start",
    "eps_final", "eps_decay_fraction", "fixed_reward", "no_curriculum", "no_analysis",
    "target_density", "fallback_reward", "method",
)


def load_run_config(filepath: str) -> RunConfig:
    """Load a RunConfig from a YAML file."""
    return RunConfig.from_dict(load_config(filepath))


def episode_seed(seed: int, episode: int) -> int:
    """Environment seed of one training episode; independent of everything that ran before it."""
    return int(np.random.SeedSequence([seed, episode]).generate_state(1)[0])


# ---------------------------------------------------------------------- reward workflow

class RewardWorkflow:
    """
    Reward design loop: reflection on the last window, analysis, then
    generation with up to MAX_REWARD_ATTEMPTS extract/parse retries.

    The active program only changes between episodes. A failed step keeps the
    previous program, which simply extends its episode range.
    """

    def __init__(self, gateway: Optional[LLMGateway], scenario: ScenarioConfig,
                 store: Optional[RunStore] = None, use_analysis: bool = True):
        self.gateway = gateway
        self.scenario = scenario
        self.store = store
        self.use_analysis = use_analysis
        self.descriptor = build_context_descriptor(scenario)
        self.program: Optional[RewardProgram] = None
        self.warnings: List[LintWarning] = []
        self.generation = 0
        self.analysis = ""
        self.feedback = ""

    def activate(self, program: RewardProgram, episode: int, origin: str):
        """Make a program active from an episode on and record it."""
        self.program = program
        self.warnings = lint(program, self.scenario)
        for warning in self.warnings:
            logger.warning("Reward generation %d lint: %s", self.generation, warning)
        entry = RewardHistoryEntry(
            generation=self.generation,
            episode_start=episode,
            source=program.source_text,
            fingerprint=program.fingerprint,
            origin=origin,
            lint_warnings=[str(w) for w in self.warnings],
            analysis=self.analysis,
        )
        if self.store is not None:
            self.store.append_reward(entry)
        logger.info("Activated reward generation %d at episode %d (%s, fingerprint %s, components %s)",
                    self.generation, episode, origin, program.fingerprint, program.component_names)
        self.generation += 1

    def _history_text(self) -> str:
        if self.store is None:
            return ""
        lines = []
        for entry in self.store.reward_history():
            lines.append(f"- generation {entry.generation} (episodes {entry.episode_start}-{entry.episode_end}, "
                         f"{entry.origin}):\n{entry.source.strip()}")
            lines += [f"  lint: {w}" for w in entry.lint_warnings]
        return "\n".join(lines)

    def reflect(self, episode: int, stats: WindowStats, curriculum_history) -> str:
        summary = build_reflection_summary(
            stats, curriculum_history,
            self.program.source_text if self.program else None,
            [str(w) for w in self.warnings])
        bundle = reflection_prompt(AgentRole.REWARD_REFLECTION.value, self.descriptor, summary)
        try:
            reflection = self.gateway.complete(AgentRole.REWARD_REFLECTION, bundle, episode)
        except GatewayUnavailableError:
            logger.warning("Reward reflection unavailable at episode %d; using raw summary", episode)
            return summary
        return f"{reflection.strip()}\n\n{summary}"

    def generate(self, episode: int, stats: Optional[WindowStats], curriculum_history) -> Optional[RewardProgram]:
        """
        Run one workflow step.

        Returns:
            The new program, or None when every attempt failed
        """
        if stats is not None:
            self.feedback = self.reflect(episode, stats, curriculum_history)
        history_text = self._history_text()

        analysis = None
        if self.use_analysis:
            bundle = reward_analysis_prompt(self.descriptor, history_text, self.analysis, self.feedback)
            try:
                self.analysis = self.gateway.complete(AgentRole.REWARD_ANALYSIS, bundle, episode)
            except GatewayUnavailableError:
                logger.warning("Reward analysis unavailable at episode %d; keeping previous analysis", episode)
            analysis = self.analysis

        base = reward_generation_prompt(self.descriptor, history_text, self.feedback, analysis)
        bundle = base
        for attempt in range(1, MAX_REWARD_ATTEMPTS + 1):
            try:
                return self.gateway.complete(
                    AgentRole.REWARD_GENERATION, bundle, episode,
                    extract=lambda text: parse(extract_program_block(text)))
            except (ExtractionError, RewardProgramError) as e:
                logger.warning("Reward program rejected at episode %d (attempt %d): %s", episode, attempt, e)
                bundle = base.with_followup(retry_followup(e.kind, str(e)))
            except GatewayUnavailableError:
                break
        return None

    def step(self, episode: int, stats: Optional[WindowStats], curriculum_history) -> bool:
        """Generate and activate a new program; False when the previous program stays active."""
        program = self.generate(episode, stats, curriculum_history)
        if program is None:
            logger.warning("Reward generation failed at episode %d; keeping the active program", episode)
            return False
        self.activate(program, episode, "llm")
        return True

    def state(self) -> Dict[str, Any]:
        return {
            'source': self.program.source_text if self.program else None,
            'generation': self.generation,
            'analysis': self.analysis,
            'feedback': self.feedback,
        }

    def load_state(self, state: Dict[str, Any]):
        self.program = parse(state['source']) if state.get('source') else None
        self.warnings = lint(self.program, self.scenario) if self.program else []
        self.generation = int(state['generation'])
        self.analysis = state.get('analysis', "")
        self.feedback = state.get('feedback', "")


# ---------------------------------------------------------------------- rollout

@dataclass
class EpisodeResult:
    outcome: str
    steps: int
    total_reward: float
    components: Dict[str, float]
    diagnostics: int = 0


def run_episode(sim: DrivingSimulator, tracker: WaypointTracker, agent, curriculum: CurriculumId,
                seed: int, program: Optional[RewardProgram] = None,
                buffer: Optional[RolloutBuffer] = None, greedy: bool = False) -> EpisodeResult:
    """
    Roll out one episode.

    Args:
        sim: Simulator of the episode's scenario
        tracker: Decode-and-track pipeline for the same scenario
        agent: PPOAgent, or any object with ``greedy(obs) -> action triple`` when greedy is set
        curriculum: Curriculum to reset the simulator with
        seed: Environment seed
        program: Active reward program (training only)
        buffer: Rollout buffer receiving every step (training only)
        greedy: Take per-head argmax actions and leave the normalizer untouched

    Returns:
        EpisodeResult with per-component reward sums
    """
    scenario = sim.scenario
    sim.reset(curriculum, seed)
    components = {name: 0.0 for name in program.component_names} if program else {}
    total_reward = 0.0
    diagnostics = 0

    while True:
        state = sim.state
        obs = sim.observe()
        try:
            if greedy:
                action = agent.greedy(obs)
                log_prob = value = 0.0
                normed = obs
            else:
                action, log_prob, value, normed = agent.act(obs)
        except NumericalError as e:
            logger.error("Episode aborted at step %d: %s", sim.outcome.step, e)
            if buffer is not None:
                buffer.discard_open_episode()
            return EpisodeResult(ABORTED, sim.outcome.step, total_reward, components, diagnostics)

        decoded, control = tracker.control(action, state)
        new_state, outcome, events = sim.step(control, decoded.coerced)

        reward = 0.0
        if program is not None:
            variables = AccessibleVars.from_step(new_state.ego, outcome, events, scenario)
            try:
                breakdown = program.evaluate(variables)
            except RewardEvaluationError as e:
                logger.warning("Reward evaluation failed at step %d: %s; step reward set to 0", events.step, e)
                diagnostics += 1
            else:
                reward = breakdown.total
                diagnostics += len(breakdown.diagnostics)
                for name, amount in breakdown.components.items():
                    components[name] += amount
        total_reward += reward

        if buffer is not None:
            buffer.add(normed, action, log_prob, reward, value, outcome.terminal)
        if outcome.terminal:
            return EpisodeResult(outcome.kind.value, outcome.step, total_reward, components, diagnostics)


# ---------------------------------------------------------------------- training

class Trainer:
    """
    Runs (or resumes) one training run.

    Usage:
        trainer = Trainer(config)
        run_dir = trainer.train()
    """

    def __init__(self, config: RunConfig, sleep=None):
        configure_determinism()
        self.config = config
        self.scenario = config.scenario
        self.store = RunStore(config.out_dir)
        self.sim = DrivingSimulator(self.scenario)
        self.tracker = WaypointTracker(self.scenario)
        self.agent = PPOAgent(config.hyper, seed=config.seed)
        self.buffer = RolloutBuffer()

        self.provider = None
        self.gateway = None
        if config.needs_provider:
            self.provider = build_provider(config.provider)
            if hasattr(self.provider, "require"):
                roles = []
                if not config.no_curriculum:
                    roles.append(AgentRole.CURRICULUM_GENERATION)
                if not config.fixed_reward:
                    roles.append(AgentRole.REWARD_GENERATION)
                self.provider.require(roles)
            kwargs = {'sleep': sleep} if sleep is not None else {}
            self.gateway = LLMGateway(self.provider, config.provider, self.store.append_transcript, **kwargs)

        use_analysis = not config.no_analysis
        workflow = None if config.no_curriculum else CurriculumWorkflow(self.gateway, self.scenario, use_analysis)
        schedule = EpsilonSchedule(config.episodes, config.eps_start, config.eps_final, config.eps_decay_fraction)
        fixed = target_curriculum(config.target_density) if config.no_curriculum else None
        self.curriculum = CurriculumEngine(workflow, schedule, config.n_c, config.seed, self.store, fixed)
        self.rewards = RewardWorkflow(None if config.fixed_reward else self.gateway,
                                      self.scenario, self.store, use_analysis)

    # ------------------------------------------------------------- checkpoints

    def checkpoint_dir(self, episode: int) -> str:
        return os.path.join(self.store.checkpoints_dir, f"ep_{episode:06d}")

    def save_checkpoint(self, episode: int):
        """policy.bin plus trainer_state.pt: everything needed to continue at this episode."""
        directory = self.checkpoint_dir(episode)
        os.makedirs(directory, exist_ok=True)
        save_policy(self.agent, os.path.join(directory, POLICY_FILE))
        state = {
            'episode': episode,
            'agent': self.agent.trainer_state(),
            'curriculum': self.curriculum.state(),
            'rewards': self.rewards.state(),
            'provider': self.provider.state() if hasattr(self.provider, "state") else {},
        }
        torch.save(state, os.path.join(directory, TRAINER_STATE_FILE))
        logger.info("Checkpoint written at episode %d: %s", episode, directory)

    def latest_checkpoint(self) -> Optional[int]:
        """Newest checkpoint not beyond the persisted episodes."""
        episodes = []
        for path in glob.glob(os.path.join(self.store.checkpoints_dir, "ep_*", TRAINER_STATE_FILE)):
            episodes.append(int(os.path.basename(os.path.dirname(path))[3:]))
        usable = [e for e in episodes if e <= self.store.next_episode]
        return max(usable) if usable else None

    def restore(self, episode: int):
        directory = self.checkpoint_dir(episode)
        self.store.truncate_from(episode)
        agent = load_policy(os.path.join(directory, POLICY_FILE), self.config.hyper)
        self.agent.load_named_tensors(agent.named_tensors())
        state = torch.load(os.path.join(directory, TRAINER_STATE_FILE), weights_only=False)
        self.agent.load_trainer_state(state['agent'])
        self.curriculum.load_state(state['curriculum'], self.store.curriculum_history())
        self.rewards.load_state(state['rewards'])
        if hasattr(self.provider, "load_state"):
            self.provider.load_state(state['provider'])
        self.buffer.clear()
        logger.info("Resumed run %s from the checkpoint at episode %d", self.config.out_dir, episode)

    # ------------------------------------------------------------- workflows

    def _stats(self, episode: int, window: int) -> Optional[WindowStats]:
        if episode == 0:
            return None
        return self.store.window_stats(window)

    def _initialize_reward(self):
        """Activate R0, falling back to the configured fallback program."""
        config = self.config
        if config.fixed_reward:
            self.rewards.activate(parse(config.fallback_reward or FIXED_REWARD_PROGRAM), 0, "fixed")
            return
        if self.rewards.step(0, None, self.curriculum.history):
            return
        if config.fallback_reward is None:
            raise GatewayUnavailableError("no initial reward program could be generated and no "
                                          "fallback_reward is configured")
        self.rewards.activate(parse(config.fallback_reward), 0, "fallback")

    # ------------------------------------------------------------- main loop

    def train(self, resume: bool = False) -> str:
        """
        Run the loop until config.episodes episodes are recorded.

        Args:
            resume: Continue from the newest checkpoint of an existing run directory

        Returns:
            The run directory
        """
        config = self.config
        start = 0
        if resume:
            checkpoint = self.latest_checkpoint()
            if checkpoint is not None:
                self.restore(checkpoint)
                start = checkpoint
            else:
                self.store.truncate_from(0)
        else:
            if self.store.next_episode > 0:
                raise ConfigurationError(f"run directory {config.out_dir} already holds episodes; use resume")
            self.store.truncate_from(0)
            self.store.save_config_snapshot(config.to_dict())

        if start == 0:
            self.save_checkpoint(0)

        for episode in range(start, config.episodes + 1):
            if episode > 0 and len(self.buffer) and (episode % config.n_p == 0 or episode == config.episodes):
                diagnostics = self.agent.update(self.buffer)
                logger.info("PPO update %d at episode %d: %s", self.agent.updates, episode, diagnostics.summary())
                self.save_checkpoint(episode)
            if episode == config.episodes:
                break

            if episode == 0:
                self._initialize_reward()
            elif not config.fixed_reward and episode % config.n_r == 0:
                self.rewards.step(episode, self._stats(episode, config.n_r), self.curriculum.history)
            curriculum_stats = None
            if episode % config.n_c == 0 and not config.no_curriculum:
                curriculum_stats = self._stats(episode, config.n_c)
            active = self.rewards.program
            curriculum, origin = self.curriculum.curriculum_for(
                episode, curriculum_stats,
                active.source_text if active else None,
                [str(w) for w in self.rewards.warnings])

            seed = episode_seed(config.seed, episode)
            program = self.rewards.program
            result = run_episode(self.sim, self.tracker, self.agent, curriculum, seed, program, self.buffer)
            self.store.append_episode(EpisodeRecord(
                episode=episode,
                density=int(curriculum.density),
                mode=int(curriculum.motion_mode),
                origin=origin,
                outcome=result.outcome,
                steps=result.steps,
                total_reward=result.total_reward,
                components=result.components,
                fingerprint=program.fingerprint,
                seed=seed,
            ))
            if (episode + 1) % config.n_c == 0:
                stats = self.store.window_stats(config.n_c)
                logger.info("Episodes %d-%d: success %.1f%%, collision %.1f%%, mean reward %.3f",
                            stats.first_episode, stats.last_episode, 100 * stats.success_rate,
                            100 * stats.collision_rate, stats.mean_total_reward)

        logger.info("Training finished (%s): %d episodes in %s", config.method_label, config.episodes, config.out_dir)
        return config.out_dir


def train(config: RunConfig, resume: bool = False) -> str:
    """
    Train a policy and return the run directory.

    Raises:
        ConfigurationError: invalid configuration or existing run directory
        GatewayUnavailableError: no initial reward program and no fallback
    """
    return Trainer(config).train(resume=resume)


def resume(run_dir: str) -> str:
    """Continue an interrupted run from its newest checkpoint using its config snapshot."""
    store = RunStore(run_dir)
    config = RunConfig.from_dict(store.load_config_snapshot())
    config.out_dir = run_dir
    return Trainer(config).train(resume=True)


def latest_policy(run_dir: str) -> str:
    """Path of the newest policy.bin of a run."""
    paths = sorted(glob.glob(os.path.join(run_dir, "checkpoints", "ep_*", POLICY_FILE)))
    if not paths:
        raise IOError(f"Error loading {run_dir}: no checkpoints")
    return paths[-1]


# ---------------------------------------------------------------------- evaluation

@dataclass
class EvalCell:
    task: str
    density: int
    episodes: int
    success: float
    collision: float
    timeout: float

    @property
    def density_name(self) -> str:
        return Density(self.density).name.lower()


@dataclass
class EvalReport:
    """Success / collision / timeout percentages per (task, density)."""
    method: str
    checkpoint: str
    cells: List[EvalCell] = field(default_factory=list)

    def cell(self, task: str, density: int) -> EvalCell:
        for cell in self.cells:
            if cell.task == Task(task).value and cell.density == int(density):
                return cell
        raise KeyError(f"no evaluation cell for ({task}, {density})")

    def to_frame(self) -> pd.DataFrame:
        rows = [{'method': self.method, 'checkpoint': self.checkpoint, 'task': c.task,
                 'density': c.density_name, 'episodes': c.episodes, 'S': c.success,
                 'C': c.collision, 'TO': c.timeout} for c in self.cells]
        return pd.DataFrame(rows, columns=['method', 'checkpoint', 'task', 'density', 'episodes', 'S', 'C', 'TO'])


def rates(outcomes: Sequence[str]) -> Tuple[float, float, float]:
    """Percentages (S, C, TO) rounded to one decimal; TO is the remainder so the three sum to 100."""
    n = len(outcomes)
    success = round(100.0 * sum(o == OutcomeKind.SUCCESS.value for o in outcomes) / n, 1)
    collision = round(100.0 * sum(o == OutcomeKind.COLLISION.value for o in outcomes) / n, 1)
    return success, collision, round(100.0 - success - collision, 1)


class PolicyEvaluator:
    """
    Greedy evaluation harness: interactive traffic, a fixed seed block per density.

    Usage:
        evaluator = PolicyEvaluator().load_policy("runs/x/checkpoints/ep_003000/policy.bin")
        report = evaluator.evaluate("overtaking", [0, 1, 2, 3])
    """

    def __init__(self, policy=None, label: str = "policy"):
        self.policy = policy
        self.label = label

    def load_policy(self, filepath: str) -> "PolicyEvaluator":
        self.policy = load_policy(filepath)
        self.label = filepath
        return self

    def evaluate(self, scenario: Union[str, ScenarioConfig], densities: Sequence[int],
                 episodes: int = EVAL_EPISODES, seed_base: int = EVAL_SEED_BASE,
                 method: str = "policy", dump_dir: Optional[str] = None) -> EvalReport:
        """
        Evaluate the loaded policy on each density.

        Args:
            scenario: Task name or scenario; any task works with any checkpoint
            densities: Density indices to evaluate
            episodes: Episodes per density
            seed_base: First seed of the block; episode k uses seed_base + k
            method: Row label in the evaluation table
            dump_dir: Write trajectory_<density>_<episode>.csv files here when given

        Returns:
            EvalReport with one cell per density
        """
        if self.policy is None:
            raise ValueError("Policy not loaded. Call load_policy first.")
        configure_determinism()
        if isinstance(scenario, str):
            scenario = default_scenario(scenario)
        sim = DrivingSimulator(scenario, record_trajectory=dump_dir is not None)
        tracker = WaypointTracker(scenario)
        if dump_dir:
            os.makedirs(dump_dir, exist_ok=True)

        report = EvalReport(method, self.label)
        for density in densities:
            curriculum = CurriculumId(int(density), MotionMode.INTERACTIVE)
            outcomes = []
            for k in range(episodes):
                result = run_episode(sim, tracker, self.policy, curriculum, seed_base + k, greedy=True)
                outcomes.append(result.outcome)
                if dump_dir:
                    save_csv(sim.trajectory_frame(),
                             os.path.join(dump_dir, f"trajectory_{Density(int(density)).name.lower()}_{k}.csv"))
            success, collision, timeout = rates(outcomes)
            report.cells.append(EvalCell(scenario.task.value, int(density), episodes, success, collision, timeout))
            logger.info("Evaluation %s density %s: S %.1f C %.1f TO %.1f", scenario.task.value,
                        Density(int(density)).name.lower(), success, collision, timeout)
        return report


def evaluate(policy, scenario: Union[str, ScenarioConfig], densities: Sequence[int],
             episodes: int = EVAL_EPISODES, seed_base: int = EVAL_SEED_BASE,
             method: Optional[str] = None, dump_dir: Optional[str] = None,
             out_dir: Optional[str] = None) -> EvalReport:
    """
    Evaluate a checkpoint path or a policy object.

    When out_dir is given the report is saved as ``<out_dir>/eval/<method>_<task>.csv``.
    """
    if isinstance(policy, str):
        evaluator = PolicyEvaluator().load_policy(policy)
    else:
        evaluator = PolicyEvaluator(policy)
    report = evaluator.evaluate(scenario, densities, episodes, seed_base, method or "policy", dump_dir)
    if out_dir:
        save_eval_report(report, out_dir)
    return report


def save_eval_report(report: EvalReport, run_dir: str) -> str:
    directory = os.path.join(run_dir, EVAL_DIR)
    os.makedirs(directory, exist_ok=True)
    task = report.cells[0].task if report.cells else "none"
    path = os.path.join(directory, f"{report.method}_{task}.csv")
    save_csv(report.to_frame(), path)
    return path


# ---------------------------------------------------------------------- export

def training_curve(records: Sequence[EpisodeRecord], window: int = N_C) -> pd.DataFrame:
    """
    One row per block of ``window`` episodes: outcome rates, mean reward,
    per-component means and the most frequent curriculum of the block.
    """
    rows = []
    for start in range(0, len(records), window):
        block = list(records[start:start + window])
        stats = compute_window_stats(block)
        row = {
            'episode': stats.last_episode,
            'mean_reward': stats.mean_total_reward,
            'success_rate': stats.success_rate,
            'collision_rate': stats.collision_rate,
            'timeout_rate': stats.timeout_rate,
            'curriculum': max(stats.curriculum_counts, key=stats.curriculum_counts.get),
        }
        row.update({f"component_{name}": value for name, value in stats.component_means.items()})
        rows.append(row)
    return pd.DataFrame(rows)


def eval_table(run_dir: str) -> pd.DataFrame:
    """
    Every evaluation report under ``<run>/eval/`` pivoted to one row per
    (method, task) and columns ``<density>_S``, ``<density>_C``, ``<density>_TO``.
    """
    paths = sorted(glob.glob(os.path.join(run_dir, EVAL_DIR, "*.csv")))
    if not paths:
        return pd.DataFrame()
    frame = pd.concat([load_csv(path) for path in paths], ignore_index=True)
    order = [d.name.lower() for d in Density if d.name.lower() in set(frame['density'])]
    table = frame.pivot_table(index=['method', 'task'], columns='density', values=['S', 'C', 'TO'], aggfunc='first')
    columns = [(metric, density) for density in order for metric in ('S', 'C', 'TO')]
    table = table.reindex(columns=columns)
    table.columns = [f"{density}_{metric}" for metric, density in columns]
    return table.reset_index()


def export_metrics(run_dir: str, window: int = N_C, excel: bool = True, plots: bool = False) -> Dict[str, str]:
    """
    Write training_curve.csv, eval_table.csv (and eval_table.xlsx) into a run directory.

    Returns:
        Dictionary of artifact name -> path
    """
    store = RunStore(run_dir)
    written = {}
    records = store.episodes
    if records:
        curve = training_curve(records, window)
        written['training_curve'] = os.path.join(run_dir, TRAINING_CURVE_FILE)
        save_csv(curve, written['training_curve'])
        if plots:
            from visualization import save_training_figures
            written.update(save_training_figures(curve, store.curriculum_history(), run_dir))
    table = eval_table(run_dir)
    if not table.empty:
        written['eval_table'] = os.path.join(run_dir, EVAL_TABLE_FILE)
        save_csv(table, written['eval_table'])
        if excel:
            written['eval_table_xlsx'] = os.path.join(run_dir, EVAL_TABLE_XLSX)
            save_excel({'eval_table': table}, written['eval_table_xlsx'])
    logger.info("Exported %s for run %s", ", ".join(written) or "nothing", run_dir)
    return written
