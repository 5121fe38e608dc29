"""Exception hierarchy shared across the package.

Two broad failure classes matter to callers (and to the CLI exit codes):
contract violations (bad arguments, dimension mismatches, unsupported
variants) and numerical failures (factorizations, consistency checks,
oracle non-convergence).
"""

from __future__ import annotations


class UqpropError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(UqpropError, ValueError):
    """An argument or input violates a documented precondition."""


class NumericalError(UqpropError, RuntimeError):
    """A numerical operation failed or produced inconsistent results."""


class OracleFailure(NumericalError):
    """The quadrature reference did not converge to the requested tolerance."""
