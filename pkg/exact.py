"""Exact scalars shared by every pricing module.

Market files carry prices as strings ("1.25" or "5/4"); everything downstream
works on `Fraction` so that duality gaps can be checked with zero tolerance.
Float mode only appears inside the solver and in reports.
"""

from fractions import Fraction
from typing import Annotated, Any, Iterable, Sequence, Union

from pydantic import BeforeValidator, PlainSerializer


def to_fraction(value: Any) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ValueError(f"not a scalar: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"not a decimal or rational scalar: {value!r}")
    raise ValueError(f"scalars must be strings or integers, got {type(value).__name__}")


def to_number(value: Any) -> Union[Fraction, float]:
    """Inverse of `format_scalar`: floats keep their repr, everything else is exact."""
    if isinstance(value, float):
        return value
    if isinstance(value, str):
        text = value.strip()
        if any(marker in text.lower() for marker in (".", "e", "inf", "nan")):
            return float(text)
    return to_fraction(value)


def format_scalar(value: Union[Fraction, float, int]) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(Fraction(value))


# Exact scalar field: accepts "5/4", "1.25", 3 or Fraction; dumps to "5/4" in JSON.
Scalar = Annotated[Fraction, BeforeValidator(to_fraction), PlainSerializer(format_scalar, when_used="json")]

# Exact or float scalar, as produced by the solver in either mode.
Number = Annotated[
    Union[Fraction, float],
    BeforeValidator(to_number),
    PlainSerializer(format_scalar, when_used="json"),
]


def dot(left: Sequence, right: Sequence):
    return sum((a * b for a, b in zip(left, right)), Fraction(0))


def fsum(values: Iterable):
    return sum(values, Fraction(0))


def exact_rank(rows: Sequence[Sequence]) -> int:
    """Rank of a rational matrix by fraction-exact row reduction."""
    pivots = []
    for row in rows:
        vec = [Fraction(v) for v in row]
        for col, basis_row in pivots:
            if vec[col] != 0:
                factor = vec[col]
                vec = [a - factor * b for a, b in zip(vec, basis_row)]
        lead = next((i for i, v in enumerate(vec) if v != 0), None)
        if lead is not None:
            pivots.append((lead, [v / vec[lead] for v in vec]))
    return len(pivots)
