"""Plain-text interchange formats.

* matrices: CSV of decimal floats, optionally with a header row
* label tracks: one integer per line
* config and manifest files: ``key=value`` lines; ``#`` starts a comment

Floats are written with ``repr`` so a write/read round trip is exact.
"""

import csv
from dataclasses import fields
import os

import numpy as np

from .errors import ConfigError, ParseError

__all__ = [
    "read_matrix",
    "write_matrix",
    "read_labels",
    "write_labels",
    "read_kv",
    "write_kv",
    "config_from_kv",
    "parse_value",
    "feature_header",
]


def feature_header(k):
    return [f"fn_{j}" for j in range(k)]


def _fmt(x):
    return repr(float(x))


def write_matrix(path, values, header=None):
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        if header is not None:
            fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(values):
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_matrix(path, header=False):
    """Read a numeric CSV into a float array.

    With ``header=True`` the first line is returned as a list of names
    alongside the array.
    """
    rows = []
    names = None
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and names is None:
                names = row
                width = len(row)
                continue
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric cell in {row!r}") from None
    if not rows:
        raise ParseError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.float64)
    return (arr, names) if header else arr


def write_labels(path, labels):
    with open(path, "w") as fh:
        for x in np.asarray(labels, dtype=np.int64):
            fh.write(f"{int(x)}\n")


def read_labels(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: not an integer label: {line!r}") from None
    return np.array(out, dtype=np.int64)


def read_kv(path):
    """Parse a ``key=value`` file into an ordered dict of strings."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ParseError(f"{path}:{lineno}: empty key")
            out[key] = value
    return out


def write_kv(path, items):
    with open(path, "w") as fh:
        for key, value in items:
            fh.write(f"{key}={format_value(value)}\n")


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, os.PathLike):
        return os.fspath(value)
    return str(value)


def parse_value(text, typ):
    """Convert ``text`` to ``typ`` (int, float, bool, str or a tuple of ints)."""
    text = text.strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text.replace("_", ""))
        if typ is float:
            return float(text)
        if typ is str:
            return text
        # Tuple[int, ...] and friends
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as {getattr(typ, '__name__', typ)}") from None


def config_from_kv(cls, values, extra=()):
    """Build config dataclass ``cls`` from string values.

    Keys must be field names of ``cls`` or listed in ``extra``; anything
    else is an error.  Returns ``(config, leftover)`` where ``leftover``
    holds the parsed ``extra`` keys as raw strings.
    """
    types = {f.name: f.type for f in fields(cls)}
    kwargs, leftover = {}, {}
    for key, raw in values.items():
        if key in types:
            kwargs[key] = parse_value(raw, types[key]) if isinstance(raw, str) else raw
        elif key in extra:
            leftover[key] = raw
        else:
            raise ConfigError(f"unknown config key {key!r} for {cls.__name__}")
    return cls(**kwargs), leftover
