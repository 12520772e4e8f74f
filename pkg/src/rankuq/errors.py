"""Exception hierarchy. ``exit_code`` is what the CLI returns for each class."""

from __future__ import annotations


class RankUQError(Exception):
    exit_code = 1


class InputError(RankUQError):
    exit_code = 3


class InvalidRecord(InputError):
    pass


class DimensionMismatch(InputError, ValueError):
    pass


class ParseError(InputError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnknownWinnerTag(ParseError):
    pass


class MissingCovariate(ParseError):
    def __init__(self, field: str, line: int):
        super().__init__(line, f"missing covariate {field!r}")
        self.field = field


class IdentifiabilityError(RankUQError):
    exit_code = 4


class DisconnectedGraph(IdentifiabilityError):
    def __init__(self, components: list[list[int]]):
        super().__init__(f"comparison graph has {len(components)} components: {components}")
        self.components = components


class RankDeficientDesign(IdentifiabilityError):
    def __init__(self, rank: int, required: int):
        super().__init__(f"design has rank {rank}, need {required}")
        self.rank = rank
        self.required = required


class NumericalError(RankUQError):
    exit_code = 5


class NonFiniteLikelihood(NumericalError):
    pass


class TooManyFailedReplicates(NumericalError):
    def __init__(self, failed: int, total: int):
        super().__init__(f"{failed} of {total} bootstrap replicates failed")
        self.failed = failed
        self.total = total


class NegativeVariance(NumericalError):
    pass


class DegeneratePair(NumericalError):
    def __init__(self, pairs):
        super().__init__(f"zero standard error for pairs {list(pairs)}")
        self.pairs = list(pairs)


class FactorizationFailure(NumericalError):
    pass


class DimensionTooLarge(RankUQError):
    pass


class NotConverged(NumericalError):
    pass
