"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: InputError -> 2, NumericError -> 3,
OSError -> 4.
"""


class InputError(ValueError):
    """Bad or inconsistent input data / arguments."""


class NumericError(ArithmeticError):
    """Non-finite value encountered where finiteness is required."""
