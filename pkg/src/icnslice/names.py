"""Hierarchical content names: the unit of routing, caching and mobility."""

from __future__ import annotations

from dataclasses import dataclass

SEP = "/"


class ParseError(ValueError):
    """Raised when a name string cannot be parsed."""


@dataclass(frozen=True, order=True)
class Name:
    """An ordered sequence of non-empty text components, rendered /c1/c2/...."""

    components: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise ParseError("a name needs at least one component")
        for c in self.components:
            if not c:
                raise ParseError("empty name component")
            if SEP in c:
                raise ParseError(f"component {c!r} contains the separator")

    def __str__(self) -> str:
        return SEP + SEP.join(self.components)

    def __len__(self) -> int:
        return len(self.components)

    def is_prefix_of(self, other: "Name") -> bool:
        n = len(self.components)
        return self.components == other.components[:n]

    def append(self, *extra: str) -> "Name":
        return Name(self.components + tuple(extra))

    @property
    def parent(self) -> "Name":
        if len(self.components) == 1:
            raise ParseError("root-level name has no parent")
        return Name(self.components[:-1])


def name(*components: str) -> Name:
    """Shorthand constructor: name("a", "b") == parse("/a/b")."""
    return Name(tuple(components))


def parse(text: str) -> Name:
    """Parse '/c1/c2/...' into a Name; rendering round-trips canonically."""
    if not text or not text.startswith(SEP):
        raise ParseError(f"name must start with {SEP!r}: {text!r}")
    parts = text.split(SEP)[1:]
    if parts and parts[-1] == "":
        # Tolerate exactly one trailing separator; it renders away.
        parts = parts[:-1]
    if not parts:
        raise ParseError("empty name")
    if any(p == "" for p in parts):
        raise ParseError(f"empty component in {text!r}")
    return Name(tuple(parts))
