"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line front end can map
failures onto process exit statuses without a lookup table.
"""


class ShdrError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InputError(ShdrError):
    """Malformed or unusable input data or arguments."""

    exit_code = 2


class NumericalError(ShdrError):
    """A numerical stage could not produce a valid result."""

    exit_code = 3


class ParseError(InputError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyInput(InputError):
    pass


class ShortSeries(InputError):
    pass


class DegenerateChannel(InputError):
    pass


class EmbeddingTooLong(InputError):
    pass


class ArgumentRange(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class ConstantSeries(NumericalError):
    pass


class NoUsablePairs(NumericalError):
    pass


class DegenerateGeometry(NumericalError):
    pass


class DisconnectedGraph(NumericalError):
    def __init__(self, component_sizes):
        self.component_sizes = list(component_sizes)
        shown = self.component_sizes[:10]
        more = "" if len(self.component_sizes) <= 10 else ", ..."
        super().__init__(
            f"graph has {len(self.component_sizes)} connected components "
            f"(sizes {shown}{more}); reconstruct per component or use exact mode"
        )


class ConvergenceFailure(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergedTrajectory(NumericalError):
    pass


class NoOrbitsFound(NumericalError):
    pass


class StageError(ShdrError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage, error):
        super().__init__(f"[{stage}] {error}")
        self.stage = stage
        self.error = error
        self.exit_code = getattr(error, "exit_code", 1)
