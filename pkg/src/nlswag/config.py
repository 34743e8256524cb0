"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Unknown keys and unparsable values are rejected before any computation.
"""

from __future__ import annotations

from dataclasses import fields

from .filter import FilterParams


class ConfigError(ValueError):
    """Invalid run configuration."""


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats3(text: str) -> tuple:
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise ValueError("expected three numbers")
    return tuple(float(p) for p in parts)


def _int(text: str) -> int:
    return int(text.strip())


FILTER_KEYS = {
    "search_half": _int,
    "patch_half_stage1": _int,
    "patch_half_stage2": _int,
    "h1": float,
    "h2": float,
    "fringe_block": _int,
    "fringe_fft": _int,
    "sigma_smooth": float,
    "xi_coeffs": _floats3,
    "fringe_compensation": _bool,
    "fringe_subbin": _bool,
}

RUN_KEYS = {
    "method": str,
    "k": _int,
    "seed": _int,
    "master": str,
    "slave": str,
    "input": str,
    "out": str,
    "calibration": str,
}

KEYS = {**FILTER_KEYS, **RUN_KEYS}

assert set(FILTER_KEYS) == {f.name for f in fields(FilterParams)}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def read_config(path) -> dict:
    with open(path) as fh:
        return parse_config_text(fh.read(), str(path))


def filter_params(settings: dict) -> FilterParams:
    """FilterParams from the filter keys of ``settings``; validation errors become ConfigError."""
    kw = {k: v for k, v in settings.items() if k in FILTER_KEYS}
    try:
        return FilterParams(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
