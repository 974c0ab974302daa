"""
Exception hierarchy shared by all plateau-flow packages.

Degeneration of the metric (ℓ reaching its floor, |b| reaching its ceiling)
is a classification outcome and never raised; everything below signals a
genuine failure or a misuse.
"""


class PlateauFlowError(Exception):
    """Base class for every error raised by plateau-flow."""


class DomainError(PlateauFlowError, ValueError):
    """A closed-form expression was evaluated outside of its domain."""


class ParameterError(PlateauFlowError, ValueError):
    """Invalid parameters (|b| >= 1, infeasible anchors, bad grid sizes...)."""


class CurvesNotDisjointError(PlateauFlowError):
    """The two prescribed boundary curves touch or intersect."""


class NumericalFailure(PlateauFlowError):
    """A numerical kernel failed (singular metric, CG stagnation, root solve)."""


class DegenerateBasisError(NumericalFailure):
    """The Gram matrix of the tangent tensors is numerically singular."""


class MinimizerError(NumericalFailure):
    """The map step increased its objective or lost admissibility."""


class UsageError(PlateauFlowError):
    """An operation was called in a state where it is not defined."""


class ConfigError(PlateauFlowError):
    """Malformed configuration; remembers the offending key and line."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        location = ""
        if key is not None:
            location += f" [key={key}]"
        if line is not None:
            location += f" [line={line}]"
        super().__init__(f"{message}{location}")


class FlowAbort(PlateauFlowError):
    """A flow step failed; the state before the step was dumped to disk."""

    def __init__(self, message: str, step_index: int, dump_path: str | None = None):
        self.step_index = step_index
        self.dump_path = dump_path
        super().__init__(f"step {step_index}: {message} (state dump: {dump_path})")
