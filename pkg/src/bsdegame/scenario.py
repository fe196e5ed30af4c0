"""Scenario config files: line-oriented ``key = value`` text.

Recognised keys
---------------
``T``, ``steps``, ``pattern`` (SymmetricW2 | FullVsW2 | W1VsW2),
the time-indexed coefficients ``a b1 b2 f1 f2 c k1 k2 n1 n2 l1 l2 m1 m2``
(scalar or ``table:t0:v0,t1:v1,...``), the constants ``r1 r2 h1 h2``,
and ``xi = c0,c1,c2``.

Unknown keys are errors.  Blank lines and ``#`` comments are ignored.
Omitted coefficients default to 0 except l1 = l2 = m1 = m2 = 1; ``xi``
defaults to 0,0,0.  ``T``, ``steps`` and ``pattern`` are required.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError
from .model import (Coefficient, CoefficientSet, InformationPattern, TerminalCondition,
                    TimeGrid, TIME_COEFFICIENTS, ValidatedModel, validate)

_CONSTANT_KEYS = ("r1", "r2", "h1", "h2")
_PATTERNS = {p.value: p for p in InformationPattern}


@dataclass(frozen=True)
class Scenario:
    """Parsed but not yet validated scenario contents."""

    grid: TimeGrid
    pattern: InformationPattern
    coefficients: CoefficientSet
    terminal: TerminalCondition

    def build(self, *, pattern: InformationPattern | None = None,
              steps: int | None = None) -> ValidatedModel:
        """Validate into a model, optionally overriding pattern or steps."""
        grid = self.grid if steps is None else TimeGrid(self.grid.horizon, steps)
        return validate(self.coefficients, self.terminal,
                        pattern or self.pattern, grid)


def _parse_float(raw: str, line_no: int, key: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(line_no, f"key {key!r}: cannot parse {raw!r} as a number") from None


def _parse_table(raw: str, line_no: int, key: str) -> Coefficient:
    body = raw[len("table:"):]
    parts = body.split(",")
    pairs = []
    for part in parts:
        tv = part.split(":")
        if len(tv) != 2:
            raise ParseError(line_no, f"key {key!r}: table entry {part!r} is not t:v")
        pairs.append((_parse_float(tv[0], line_no, key), _parse_float(tv[1], line_no, key)))
    if len(pairs) < 2:
        raise ParseError(line_no, f"key {key!r}: a table needs at least two knots")
    try:
        return Coefficient(table=pairs)
    except ValueError as exc:
        raise ParseError(line_no, f"key {key!r}: {exc}") from None


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text; raises ParseError with the offending line."""
    seen: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError(line_no, f"expected key = value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key in seen:
            raise ParseError(line_no, f"duplicate key {key!r}")

        if key == "T":
            seen[key] = _parse_float(raw, line_no, key)
        elif key == "steps":
            try:
                seen[key] = int(raw)
            except ValueError:
                raise ParseError(line_no, f"key 'steps': cannot parse {raw!r} as an integer") from None
        elif key == "pattern":
            if raw not in _PATTERNS:
                raise ParseError(line_no, f"unknown pattern {raw!r}; "
                                          f"expected one of {sorted(_PATTERNS)}")
            seen[key] = _PATTERNS[raw]
        elif key == "xi":
            parts = raw.split(",")
            if len(parts) != 3:
                raise ParseError(line_no, "key 'xi': expected c0,c1,c2")
            seen[key] = TerminalCondition(*(_parse_float(p, line_no, "xi") for p in parts))
        elif key in TIME_COEFFICIENTS:
            if raw.startswith("table:"):
                seen[key] = _parse_table(raw, line_no, key)
            else:
                seen[key] = Coefficient(_parse_float(raw, line_no, key))
        elif key in _CONSTANT_KEYS:
            seen[key] = _parse_float(raw, line_no, key)
        else:
            raise ParseError(line_no, f"unknown key {key!r}")

    for required in ("T", "steps", "pattern"):
        if required not in seen:
            raise ParseError(0, f"missing required key {required!r}")

    coeff_kwargs = {k: v for k, v in seen.items()
                    if k in TIME_COEFFICIENTS or k in _CONSTANT_KEYS}
    return Scenario(
        grid=TimeGrid(seen["T"], seen["steps"]),
        pattern=seen["pattern"],
        coefficients=CoefficientSet(**coeff_kwargs),
        terminal=seen.get("xi", TerminalCondition()),
    )


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def render_scenario(values: dict) -> str:
    """Inverse convenience for tests and docs: dict -> config text."""
    lines = []
    for key, val in values.items():
        if key == "xi":
            lines.append(f"xi = {val[0]},{val[1]},{val[2]}")
        elif isinstance(val, (list, tuple)):
            body = ",".join(f"{t}:{v}" for t, v in val)
            lines.append(f"{key} = table:{body}")
        else:
            lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
