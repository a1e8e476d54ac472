"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures to the
documented process status without inspecting types.
"""


class EduOutcomesError(Exception):
    exit_code = 3


class ConfigError(EduOutcomesError):
    exit_code = 2


class DataError(EduOutcomesError):
    exit_code = 3


class NumericError(EduOutcomesError):
    exit_code = 4


# -- tabular ---------------------------------------------------------------

class MalformedCell(DataError):
    def __init__(self, row, column, token):
        self.row, self.column, self.token = row, column, token
        super().__init__(f"malformed cell at row {row}, column {column!r}: {token!r}")


class MissingHeader(DataError):
    pass


class UnknownColumnInSchema(ConfigError):
    pass


class DuplicateKey(DataError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"duplicate key value: {key!r}")


class KeyMissing(DataError):
    pass


class EmptyGroupColumn(DataError):
    pass


class ScoreOutOfRange(DataError):
    pass


class DegenerateDistribution(DataError):
    pass


class SingleClass(DataError):
    pass


class AllMissingColumn(DataError):
    pass


# -- models / interpretation ------------------------------------------------

class EmptyNode(NumericError):
    pass


class NonConvergence(NumericError):
    def __init__(self, iterations, grad_norm):
        self.iterations, self.grad_norm = iterations, grad_norm
        super().__init__(
            f"Newton solver did not converge after {iterations} iterations "
            f"(gradient norm {grad_norm:.3e})"
        )


class FeatureMismatch(DataError):
    pass


class EmptyBackground(DataError):
    pass


class TooManyFeatures(NumericError):
    pass


class NotASingleTree(EduOutcomesError):
    pass


# -- statistics --------------------------------------------------------------

class DegenerateTable(NumericError):
    pass


class AllValuesIdentical(NumericError):
    pass


class ZeroWithinVariance(NumericError):
    pass


class InvalidParameter(NumericError):
    pass


# -- evaluation ---------------------------------------------------------------

class TooFewRows(DataError):
    pass


class EmptyInput(DataError):
    pass


class EmptyGrid(ConfigError):
    pass


class StageError(EduOutcomesError):
    """Wraps a module error with the pipeline stage it surfaced in."""

    def __init__(self, stage, cause):
        self.stage, self.cause = stage, cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"[{stage}] {cause}")
