"""
Exception hierarchy for the learningFlow package.

Every error that crosses a module boundary derives from LearningFlowError.
Errors that are fed back to an LLM agent carry a machine-readable ``kind``
string which is quoted verbatim in the retry follow-up prompt.
"""

from typing import Optional


class LearningFlowError(Exception):
    """Base class for all learningFlow errors."""


class ConfigurationError(LearningFlowError):
    """Invalid scenario, run or provider configuration."""


class SimulationUsageError(LearningFlowError, ValueError):
    """The simulator was driven outside its contract (e.g. step after a terminal outcome)."""


class ControllerUsageError(LearningFlowError, ValueError):
    """An action index outside its sub-action space was passed to the decoder."""


class NumericalError(LearningFlowError):
    """A network produced a non-finite value."""


class RewardProgramError(LearningFlowError):
    """
    A reward program failed to parse or validate.

    Attributes:
        kind: One of syntax, missing_total, duplicate_component,
              unknown_identifier, arity_mismatch, limit_exceeded
        line: 1-based line of the offending token, if known
        column: 1-based column of the offending token, if known
        identifier: Offending name for binder errors
    """

    def __init__(self, kind: str, message: str, line: Optional[int] = None,
                 column: Optional[int] = None, identifier: Optional[str] = None):
        self.kind = kind
        self.line = line
        self.column = column
        self.identifier = identifier
        location = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"[{kind}] {message}{location}")


class RewardEvaluationError(LearningFlowError):
    """A reward component evaluated to a non-finite value."""

    def __init__(self, component: str, message: str):
        self.component = component
        super().__init__(f"component '{component}': {message}")


class CurriculumDecodeError(LearningFlowError):
    """
    The curriculum selection tag could not be decoded.

    kind is one of missing_tag, duplicate_tag, non_integer, out_of_range.
    """

    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(f"[{kind}] {message}")


class ExtractionError(LearningFlowError):
    """No usable ```reward block in a generation response (kind: missing_block, multiple_blocks)."""

    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(f"[{kind}] {message}")


class GatewayUnavailableError(LearningFlowError):
    """All provider attempts failed."""


class MemoryStoreError(LearningFlowError, ValueError):
    """Misuse of the run store, e.g. an episode index regression."""


class EmptyStoreError(MemoryStoreError):
    """Statistics were requested from a store without episode records."""
