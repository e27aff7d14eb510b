"""Exception hierarchy.  Each family maps to a distinct CLI exit code."""


class DecayError(Exception):
    exit_code = 1


class NumericsError(DecayError):
    exit_code = 10


class FaddeevaOverflowError(NumericsError):
    """w(z) is not representable in double precision (deep lower half plane)."""


class BoundaryZeroError(NumericsError):
    """The function vanishes (numerically) on the counting contour."""


class ConvergenceError(NumericsError):
    pass


class ProfileError(DecayError):
    exit_code = 20


class PoleSearchError(DecayError):
    exit_code = 30


class IncompletePoleSetError(PoleSearchError):
    pass


class StateError(DecayError):
    exit_code = 40


class DynamicsError(DecayError):
    exit_code = 50


class OracleError(DecayError):
    exit_code = 60


class ConfigError(DecayError):
    exit_code = 2
