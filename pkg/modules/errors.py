"""
Exception hierarchy for the dimension recommendation pipeline.

Library code raises these; app.py maps them to process exit codes.
"""


class DiRecError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


# Numeric core

class ShapeError(DiRecError, ValueError):
    pass


class NumericError(DiRecError, ArithmeticError):
    """A forward op produced NaN or Inf."""


class TapeError(DiRecError, RuntimeError):
    pass


class NonDeterministicForwardError(DiRecError, RuntimeError):
    pass


# Graph core

class SchemaViolationError(DiRecError, ValueError):
    pass


class DanglingNodeError(DiRecError, ValueError):
    pass


class DuplicateEdgeError(DiRecError, ValueError):
    pass


class GraphFormatError(DiRecError, ValueError):
    exit_code = 3


class InfeasibleConfigError(DiRecError, ValueError):
    exit_code = 2


# Sampling

class SamplingError(DiRecError, ValueError):
    pass


# Configuration and persistence

class ConfigError(DiRecError, ValueError):
    exit_code = 2


class CheckpointError(DiRecError, ValueError):
    exit_code = 3


class WidthMismatchError(DiRecError, ValueError):
    exit_code = 5


# Training and evaluation

class TrainingDivergedError(DiRecError, RuntimeError):
    exit_code = 4


class EvaluationError(DiRecError, ValueError):
    pass


class ScalingTimeoutError(DiRecError, RuntimeError):
    pass


class EmptyNameError(DiRecError, ValueError):
    pass
