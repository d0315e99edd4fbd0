"""
learningFlow package: LLM-guided curriculum and reward design for
reinforcement-learning driving policies.

This package contains the 2D driving simulator, the waypoint tracking
controller, the PPO executor, the reward language, the curriculum engine,
the LLM gateway, the run store and the training loop that ties them together.
"""

from learningFlow.driving_sim import (
    CurriculumId,
    Density,
    DrivingSimulator,
    MotionMode,
    ScenarioConfig,
    Task,
    check_collision,
    default_scenario,
    observe
)

from learningFlow.tracking_controller import (
    WaypointTracker,
    decode,
    track
)

from learningFlow.rl_core import (
    Hyperparams,
    PPOAgent,
    RolloutBuffer,
    compute_gae,
    load_policy,
    ppo_update,
    save_policy
)

from learningFlow.reward_dsl import (
    AccessibleVars,
    RewardProgram,
    evaluate as evaluate_reward,
    fingerprint,
    lint,
    parse
)

from learningFlow.curriculum_engine import (
    CURRICULUM_SET,
    CurriculumEngine,
    CurriculumWorkflow,
    EpsilonSchedule,
    decode_curriculum,
    select
)

from learningFlow.llm_gateway import (
    AgentRole,
    LLMGateway,
    MockProvider,
    ProviderConfig,
    build_context_descriptor,
    build_reflection_summary
)

from learningFlow.memory_store import (
    RunStore,
    compute_window_stats,
    load as load_run
)

from learningFlow.orchestrator import (
    EvalReport,
    PolicyEvaluator,
    RunConfig,
    Trainer,
    evaluate,
    export_metrics,
    load_run_config,
    resume,
    train
)

from learningFlow.file_handler import (
    append_jsonl,
    load_config,
    load_csv,
    read_jsonl,
    save_config,
    save_csv,
    save_excel
)

__all__ = [
    # Driving simulator module
    'CurriculumId',
    'Density',
    'DrivingSimulator',
    'MotionMode',
    'ScenarioConfig',
    'Task',
    'check_collision',
    'default_scenario',
    'observe',

    # Tracking controller module
    'WaypointTracker',
    'decode',
    'track',

    # PPO module
    'Hyperparams',
    'PPOAgent',
    'RolloutBuffer',
    'compute_gae',
    'load_policy',
    'ppo_update',
    'save_policy',

    # Reward language module
    'AccessibleVars',
    'RewardProgram',
    'evaluate_reward',
    'fingerprint',
    'lint',
    'parse',

    # Curriculum module
    'CURRICULUM_SET',
    'CurriculumEngine',
    'CurriculumWorkflow',
    'EpsilonSchedule',
    'decode_curriculum',
    'select',

    # LLM gateway module
    'AgentRole',
    'LLMGateway',
    'MockProvider',
    'ProviderConfig',
    'build_context_descriptor',
    'build_reflection_summary',

    # Run store module
    'RunStore',
    'compute_window_stats',
    'load_run',

    # Training loop module
    'EvalReport',
    'PolicyEvaluator',
    'RunConfig',
    'Trainer',
    'evaluate',
    'export_metrics',
    'load_run_config',
    'resume',
    'train',

    # File handler module
    'append_jsonl',
    'load_config',
    'load_csv',
    'read_jsonl',
    'save_config',
    'save_csv',
    'save_excel'
]
