"""
Reader for the shared ``key = value`` params file.

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected, since
a misspelt threshold name would otherwise silently fall back to its default.
"""

from __future__ import annotations

import dataclasses
from fractions import Fraction
from typing import Iterable

from .chain import ChainParams
from .errors import ParamsError
from .patterns import PatternParams


def parse_kv(lines: Iterable[str], source: str = "<params>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParamsError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise ParamsError(f"{source}:{lineno}: empty key or value")
        if key in out:
            raise ParamsError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(value: str, kind, key: str):
    try:
        if kind is Fraction:
            return Fraction(value)
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
    except (ValueError, ZeroDivisionError):
        raise ParamsError(f"{key}: cannot parse {value!r} as {kind.__name__}") from None
    return value


def build_dataclass(cls, values: dict[str, str], source: str = "<params>"):
    """Instantiate ``cls`` from string values, converting by the field defaults' types."""
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in values:
            kind = type(f.default) if f.default is not dataclasses.MISSING else int
            kwargs[f.name] = _convert(values[f.name], kind, f.name)
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ParamsError(f"{source}: {e}") from None


def load_params(path=None) -> tuple[ChainParams, PatternParams]:
    """Chain and pattern params from ``path``; defaults when ``path`` is None."""
    if path is None:
        return ChainParams(), PatternParams()
    try:
        with open(path, encoding="utf-8") as fh:
            values = parse_kv(fh, str(path))
    except OSError as e:
        raise ParamsError(f"cannot read params file {path}: {e}") from None
    chain_keys = {f.name for f in dataclasses.fields(ChainParams)}
    pattern_keys = {f.name for f in dataclasses.fields(PatternParams)}
    unknown = sorted(set(values) - chain_keys - pattern_keys)
    if unknown:
        raise ParamsError(f"{path}: unknown key(s): {', '.join(unknown)}")
    chain = build_dataclass(ChainParams, {k: v for k, v in values.items() if k in chain_keys}, str(path))
    pattern = build_dataclass(PatternParams, {k: v for k, v in values.items() if k in pattern_keys}, str(path))
    return chain, pattern
