class ITRError(Exception):
    """Base error for the integrative treatment-rule toolkit"""

    exit_code = 3


class ConfigError(ITRError):
    """Invalid run configuration or command-line usage"""

    exit_code = 1


class DataError(ITRError, ValueError):
    """Malformed trial data, schema mismatch or degenerate input"""

    exit_code = 2


class NumericalError(ITRError, ArithmeticError):
    """Singular systems, non-finite objectives and other numerical failures"""

    exit_code = 3
