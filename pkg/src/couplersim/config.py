"""Reader for the sectioned key/value text format used by device, LUT and
experiment files.

A file is a sequence of ``[kind name]`` section headers followed by
``key = value [unit]`` lines.  ``#`` starts a comment.  Values keep their
source line so that validation errors can point at the offending line::

    [mode Q0]
    kind = transmon
    f_sweetspot = 5.295 GHz
    anharmonicity = -275 MHz
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

_UNITS = {
    # frequency, canonical GHz
    "ghz": ("frequency", 1.0),
    "mhz": ("frequency", 1e-3),
    "khz": ("frequency", 1e-6),
    "hz": ("frequency", 1e-9),
    # time, canonical ns
    "s": ("time", 1e9),
    "ms": ("time", 1e6),
    "us": ("time", 1e3),
    "µs": ("time", 1e3),
    "ns": ("time", 1.0),
    # capacitance, canonical fF
    "ff": ("capacitance", 1.0),
    "pf": ("capacitance", 1e3),
    # length, canonical um
    "um": ("length", 1.0),
    "µm": ("length", 1.0),
    "nm": ("length", 1e-3),
    "mm": ("length", 1e3),
    # flux, canonical flux quanta
    "phi0": ("flux", 1.0),
    "rad": ("angle", 1.0),
    "deg": ("angle", 0.017453292519943295),
    "%": ("fraction", 1e-2),
}

_HEADER = re.compile(r"^\[\s*([A-Za-z_][\w-]*)(?:\s+([^\]]+?))?\s*\]$")
_ENTRY = re.compile(r"^([A-Za-z_][\w.-]*)\s*=\s*(.*)$")


@dataclass(frozen=True)
class Entry:
    key: str
    raw: str
    line: int
    source: str | None = None

    def error(self, message):
        return ValidationError(f"{self.key}: {message}", line=self.line, source=self.source)

    def text(self) -> str:
        return self.raw

    def _split(self):
        parts = self.raw.split()
        if not parts:
            raise self.error("empty value")
        return parts

    def number(self, unit: str | None = None) -> float:
        """Parse a scalar, converting an in-file unit to ``unit``.

        ``unit`` names the unit the caller wants back (e.g. ``"MHz"``).  A bare
        number is taken to already be in that unit.
        """
        parts = self._split()
        if len(parts) > 2:
            raise self.error(f"expected '<number> [unit]', got {self.raw!r}")
        try:
            value = float(parts[0])
        except ValueError:
            raise self.error(f"not a number: {parts[0]!r}") from None
        if len(parts) == 1 or unit is None:
            if len(parts) == 2 and unit is None:
                raise self.error(f"unexpected unit {parts[1]!r}")
            return value
        return value * _conversion(parts[1], unit, self)

    def integer(self) -> int:
        value = self.number()
        if value != int(value):
            raise self.error(f"expected an integer, got {self.raw!r}")
        return int(value)

    def boolean(self) -> bool:
        v = self.raw.strip().lower()
        if v in ("true", "yes", "on", "1"):
            return True
        if v in ("false", "no", "off", "0"):
            return False
        raise self.error(f"expected a boolean, got {self.raw!r}")

    def numbers(self, unit: str | None = None) -> list[float]:
        """Comma or whitespace separated list with an optional trailing unit."""
        tokens = self.raw.replace(",", " ").split()
        if not tokens:
            raise self.error("empty list")
        factor = 1.0
        try:
            float(tokens[-1])
        except ValueError:
            if unit is None:
                raise self.error(f"unexpected unit {tokens[-1]!r}") from None
            factor = _conversion(tokens[-1], unit, self)
            tokens = tokens[:-1]
        try:
            return [float(t) * factor for t in tokens]
        except ValueError as exc:
            raise self.error(str(exc)) from None


def _conversion(from_unit: str, to_unit: str, entry: Entry) -> float:
    try:
        dim_a, fa = _UNITS[from_unit.lower()]
    except KeyError:
        raise entry.error(f"unknown unit {from_unit!r}") from None
    dim_b, fb = _UNITS[to_unit.lower()]
    if dim_a != dim_b:
        raise entry.error(f"unit {from_unit!r} is not a {dim_b}")
    return fa / fb


@dataclass
class Section:
    kind: str
    name: str | None
    line: int
    source: str | None = None
    entries: dict[str, Entry] = field(default_factory=dict)

    def __contains__(self, key):
        return key in self.entries

    def __getitem__(self, key) -> Entry:
        try:
            return self.entries[key]
        except KeyError:
            raise ValidationError(
                f"[{self.kind} {self.name or ''}] is missing '{key}'",
                line=self.line, source=self.source,
            ) from None

    def get(self, key, default=None):
        return self.entries.get(key, default)

    def error(self, message):
        return ValidationError(message, line=self.line, source=self.source)

    def check_keys(self, allowed):
        for key, entry in self.entries.items():
            if key not in allowed:
                raise entry.error("unknown key")


@dataclass
class Document:
    sections: list[Section]
    source: str | None = None
    text: str = ""

    def of_kind(self, kind) -> list[Section]:
        return [s for s in self.sections if s.kind == kind]

    def one(self, kind, required=True) -> Section | None:
        found = self.of_kind(kind)
        if len(found) > 1:
            raise found[1].error(f"duplicate [{kind}] section")
        if not found:
            if required:
                raise ValidationError(f"missing [{kind}] section", source=self.source)
            return None
        return found[0]

    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()[:16]


def parse_text(text: str, source: str | None = None) -> Document:
    sections: list[Section] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            current = Section(m.group(1).lower(), m.group(2), lineno, source)
            sections.append(current)
            continue
        m = _ENTRY.match(line)
        if not m:
            raise ValidationError(f"cannot parse {raw.strip()!r}", line=lineno, source=source)
        if current is None:
            raise ValidationError("entry before any [section]", line=lineno, source=source)
        key = m.group(1)
        if key in current.entries:
            raise ValidationError(f"duplicate key '{key}'", line=lineno, source=source)
        current.entries[key] = Entry(key, m.group(2).strip(), lineno, source)
    return Document(sections, source, text)


def parse_file(path) -> Document:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read file: {exc}", source=str(path)) from None
    return parse_text(text, source=str(path))
