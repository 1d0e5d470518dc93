from __future__ import annotations


class NormgamError(Exception):
    """Base for every error the CLI knows how to report."""

    exit_code = 2


class InputError(NormgamError):
    """Malformed files, bad flags, parameters outside their domain."""

    exit_code = 2


class DegenerateSampleError(InputError):
    pass


class GridResolutionError(NormgamError):
    exit_code = 2


class NumericalError(NormgamError):
    """Quadrature / root-finding trouble on otherwise valid input."""

    exit_code = 1
