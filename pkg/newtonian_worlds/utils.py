"""
Utility functions for Newtonian Worlds.
"""
import json
import os
import re

THREADS_ENV = "MIW_THREADS"

axis_re = re.compile(
    r"""
    ^\s*
    (?P<lower>
        [-+]?[\d.]+(?:[eE][-+]?\d+)?
    )
    :
    (?P<upper>
        [-+]?[\d.]+(?:[eE][-+]?\d+)?
    )
    :
    (?P<points>
        \d+
    )
    \s*$
    """,
    re.VERBOSE,
)

kwarg_re = re.compile(
    r"""
    (?:
        (
            [\w\-\.]+ # dotted key
        )
        =
    )?
    (.+) # value
    """,
    re.VERBOSE,
)


def parse_axis(spec: str) -> tuple[float, float, int]:
    """Parse an axis written as ``lower:upper:points``."""
    match = axis_re.match(spec)
    if not match:
        raise ValueError(f"Malformed axis '{spec}'. Axes are written as lower:upper:points.")
    return float(match["lower"]), float(match["upper"]), int(match["points"])


def parse_value(raw: str):
    """Interpret a raw override as a JSON literal, falling back to the plain string."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_overrides(bits: list[str]) -> dict:
    """
    Parse ``key=value`` overrides and return a dictionary of the parsed values
    retrieved from the ``bits`` list.

    Dotted keys (``params.omega=2``) are kept as-is; nesting is resolved by the
    configuration layer. Parsing stops at the first bit that is not a keyword
    argument; the bits that were consumed are removed from the list.
    """
    if not bits:
        return {}

    overrides = {}
    while bits:
        match = kwarg_re.match(bits[0])
        if not match or not match[1]:
            return overrides
        key, value = match.groups()
        del bits[:1]

        overrides[key] = parse_value(value)
    return overrides


def worker_count() -> int | None:
    """Number of FFT worker threads allowed by the environment (None means the scipy default)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        workers = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got '{raw}'")
    if workers < 1:
        raise ValueError(f"{THREADS_ENV} must be at least 1, got {workers}")
    return workers
