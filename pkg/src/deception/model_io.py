"""JSON model files: a joint law P(x, y) and a distortion table d(x, xhat).

Probabilities and distortions are exact rationals written as strings
("9/20", "0.45") or integers.  JSON floats are rejected so that thresholds
stay exact end to end.  See docs/model-format.md.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .prob import Alphabet, DistortionSpec, JointPmf, parse_rational

SCHEMA = 1


class ModelError(ValueError):
    """A model file failed to parse or validate; the message names the field and line."""


@dataclass(frozen=True, eq=False)
class Model:
    p: JointPmf
    spec: DistortionSpec
    name: str = ""
    path: str = ""


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return lineno
    return None


def _where(source: str, text: str, key: str) -> str:
    line = _line_of(text, key)
    return f"{source}:{line}" if line is not None else source


def _rational(value, field: str) -> Fraction:
    if isinstance(value, float):
        raise ModelError(f"field {field}: JSON number {value!r} is a float; write it as a string such as "
                         f'"{Fraction(repr(value))}"')
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise ModelError(f"field {field}: expected a rational string or integer, got {value!r}")
    try:
        return parse_rational(value)
    except ValueError as exc:
        raise ModelError(f"field {field}: {exc}") from None


def _table(raw, field: str, rows: int | None, cols: int | None) -> list[list[Fraction]]:
    if not isinstance(raw, list) or not raw or not all(isinstance(r, list) for r in raw):
        raise ModelError(f"field {field}: expected a non-empty list of rows")
    if rows is not None and len(raw) != rows:
        raise ModelError(f"field {field}: expected {rows} rows, found {len(raw)}")
    width = len(raw[0]) if cols is None else cols
    out = []
    for i, row in enumerate(raw):
        if len(row) != width:
            raise ModelError(f"field {field}[{i}]: expected {width} entries, found {len(row)}")
        out.append([_rational(v, f"{field}[{i}][{j}]") for j, v in enumerate(row)])
    return out


def _alphabet(raw, field: str) -> Alphabet | None:
    if raw is None:
        return None
    if isinstance(raw, int) and not isinstance(raw, bool):
        return Alphabet(raw)
    if isinstance(raw, list) and raw:
        try:
            return Alphabet(len(raw), tuple(str(s) for s in raw))
        except ValueError as exc:
            raise ModelError(f"field {field}: {exc}") from None
    raise ModelError(f"field {field}: expected a list of symbol labels or a size")


def parse_model(text: str, source: str = "<model>") -> Model:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{source}:{exc.lineno}: invalid JSON ({exc.msg}, column {exc.colno})") from None
    if not isinstance(doc, dict):
        raise ModelError(f"{source}:1: top level must be a JSON object")

    def fail(key, exc):
        raise ModelError(f"{_where(source, text, key)}: {exc}") from None

    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        fail("schema", f"field schema: unsupported version {schema!r} (expected {SCHEMA})")
    try:
        xa = _alphabet(doc.get("x_alphabet"), "x_alphabet")
    except ModelError as exc:
        fail("x_alphabet", exc)
    try:
        ya = _alphabet(doc.get("y_alphabet"), "y_alphabet")
    except ModelError as exc:
        fail("y_alphabet", exc)
    try:
        xha = _alphabet(doc.get("xhat_alphabet"), "xhat_alphabet")
    except ModelError as exc:
        fail("xhat_alphabet", exc)

    if "P" not in doc:
        raise ModelError(f"{source}: missing field P (joint law, rows indexed by x, columns by y)")
    try:
        table = _table(doc["P"], "P", xa.size if xa else None, ya.size if ya else None)
        if any(v < 0 for r in table for v in r):
            raise ModelError("field P: negative probability")
        total = sum(v for r in table for v in r)
        if total != 1:
            raise ModelError(f"field P: entries sum to {total}, not 1")
        p = JointPmf.from_table(table, xa, ya)
    except (ModelError, ValueError) as exc:
        fail("P", exc)

    raw_d = doc.get("d", "hamming")
    try:
        if raw_d == "hamming":
            k = xha.size if xha else p.shape[0]
            if k != p.shape[0]:
                raise ModelError("field d: hamming needs |Xhat| = |X|")
            spec = DistortionSpec.from_table(DistortionSpec.hamming(k).d, p.x_alphabet, xha or p.x_alphabet)
        else:
            d = _table(raw_d, "d", p.shape[0], xha.size if xha else None)
            spec = DistortionSpec.from_table(d, p.x_alphabet, xha)
    except (ModelError, ValueError) as exc:
        fail("d", exc)
    name = doc.get("name", "")
    return Model(p, spec, str(name), source)


def load_model(path) -> Model:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelError(f"{path}: cannot read model file ({exc.strerror})") from None
    return parse_model(text, str(path))


def _fmt(v: Fraction) -> str:
    return str(v)


def dump_model(model: Model) -> str:
    p, spec = model.p, model.spec
    doc = {
        "schema": SCHEMA,
        "name": model.name,
        "x_alphabet": list(p.x_alphabet.labels or range(p.shape[0])),
        "y_alphabet": list(p.y_alphabet.labels or range(p.shape[1])),
        "xhat_alphabet": list(spec.xhat_alphabet.labels or range(spec.shape[1])),
        "P": [[_fmt(v) for v in row] for row in p.exact],
        "d": [[_fmt(v) for v in row] for row in spec.d],
    }
    doc["x_alphabet"] = [str(s) for s in doc["x_alphabet"]]
    doc["y_alphabet"] = [str(s) for s in doc["y_alphabet"]]
    doc["xhat_alphabet"] = [str(s) for s in doc["xhat_alphabet"]]
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
