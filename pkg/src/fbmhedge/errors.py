"""Exception types shared across the package."""


class NumericalError(ArithmeticError):
    """A numerical routine (factorization, quadrature) did not succeed."""
