"""Exception hierarchy shared by all modules."""


class BayesportError(Exception):
    """Base class for every error raised by this package."""


class NumericalError(BayesportError):
    """Raised when a numerical routine cannot produce a trustworthy answer."""


class RankDeficient(NumericalError):
    pass


class NumericalRange(NumericalError):
    pass


class IntegrationFailure(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class Infeasible(NumericalError):
    pass


class WeightSum(BayesportError, ValueError):
    pass


class Degenerate(BayesportError):
    pass


class InsufficientDraws(BayesportError):
    pass


class DataError(BayesportError):
    pass


class InsufficientData(DataError):
    pass


class InsufficientAssets(DataError):
    pass


class ConfigError(BayesportError):
    pass
