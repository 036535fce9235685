"""Exception hierarchy shared by every module of the package."""


class GbfError(Exception):
    """Base class for all errors raised by gbfselect."""


class InputError(GbfError):
    """Problems with user-supplied data or configuration."""


class NonFinite(InputError):
    pass


class ConstantColumn(InputError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"predictor column {column!r} has zero variance after centering")


class DegenerateResponse(InputError):
    pass


class BadHyper(InputError):
    pass


class TooManyPredictors(InputError):
    pass


class ModelError(GbfError):
    """A single model cannot be scored; sweeps record these as exclusions."""


class RankDeficient(ModelError):
    pass


class InvalidModel(ModelError):
    pass


class SaturatedFit(ModelError):
    pass


class Unavailable(ModelError):
    """The criterion is undefined for this model size (e.g. ZE when q >= n-1)."""


class NoResidualDf(Unavailable):
    pass


class AiccUndefined(Unavailable):
    pass


class QuadratureNonConverged(GbfError):
    pass


class MixedCriteria(GbfError):
    pass


class AbortEmpty(GbfError):
    pass
