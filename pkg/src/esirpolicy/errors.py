"""Exception types raised across the package."""


class EsirPolicyError(Exception):
    """Base class for all package errors."""


class ConfigError(EsirPolicyError):
    """Invalid or unreadable run configuration."""


class DataIntegrityError(EsirPolicyError, ValueError):
    """Input data violates a structural or monotonicity requirement."""


class ParseError(DataIntegrityError):
    pass


class LookupFailure(DataIntegrityError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class RangeError(DataIntegrityError):
    pass


class InconsistencyError(DataIntegrityError):
    pass


class CoverageError(EsirPolicyError, ValueError):
    """A requested date window is not fully covered by the series."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = list(missing)


class InsufficientDataError(EsirPolicyError, ValueError):
    pass


class EmptyInputError(InsufficientDataError):
    pass


class SingularityError(EsirPolicyError, ArithmeticError):
    pass


class NoFeasibleSpanError(EsirPolicyError, ValueError):
    pass


class DomainError(EsirPolicyError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InitializationError(EsirPolicyError, RuntimeError):
    pass


class CollinearityError(EsirPolicyError, ValueError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = list(columns)


class InsufficientObservationsError(EsirPolicyError, ValueError):
    pass


class UndefinedCorrelationError(EsirPolicyError, ValueError):
    pass
