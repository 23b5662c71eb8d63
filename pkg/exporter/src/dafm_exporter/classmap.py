"""Merge tables: collapse a model's class set onto a few target channels.

One mapping per line, `source -> target` (the unicode arrow works too).
Sources are model class indices or, when the model publishes class names,
the names themselves; targets are output channel indices. Source classes
missing from the table are dropped and each pixel is renormalized
afterwards, so the result stays on the probability simplex.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import IoFailure, MergeTableError


@dataclass(frozen=True)
class MergeTable:
    """Mapping from source classes (index or name) to target channels."""

    rules: tuple[tuple[int | str, int], ...]

    def __post_init__(self) -> None:
        if not self.rules:
            raise MergeTableError("merge table maps no classes")
        targets = {target for _, target in self.rules}
        if min(targets) < 0 or max(targets) != len(targets) - 1:
            raise MergeTableError(
                f"target channels must cover 0..T-1 without gaps, got {sorted(targets)}"
            )

    @property
    def channels(self) -> int:
        return len({target for _, target in self.rules})

    def resolve(self, class_names: Sequence[str] | None, num_classes: int) -> list[tuple[int, int]]:
        """Turn name-based rules into index pairs for a concrete model."""
        resolved: list[tuple[int, int]] = []
        seen: set[int] = set()
        for source, target in self.rules:
            if isinstance(source, str):
                if class_names is None:
                    raise MergeTableError(
                        f"rule {source!r} names a class but the model has no class names"
                    )
                try:
                    index = list(class_names).index(source)
                except ValueError as exc:
                    raise MergeTableError(f"unknown class name {source!r}") from exc
            else:
                index = source
            if not 0 <= index < num_classes:
                raise MergeTableError(
                    f"source class {source!r} outside the model's {num_classes} classes"
                )
            if index in seen:
                raise MergeTableError(f"source class {source!r} mapped twice")
            seen.add(index)
            resolved.append((index, target))
        return resolved


def parse_merge_table(text: str) -> MergeTable:
    rules: list[tuple[int | str, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        for arrow in ("->", "→"):
            if arrow in line:
                source_text, _, target_text = line.partition(arrow)
                break
        else:
            raise MergeTableError(f"line {lineno}: expected 'source -> target'")
        source_text = source_text.strip()
        target_text = target_text.strip()
        try:
            target = int(target_text)
        except ValueError as exc:
            raise MergeTableError(f"line {lineno}: bad target channel {target_text!r}") from exc
        source: int | str
        try:
            source = int(source_text)
        except ValueError:
            source = source_text
        if source == "":
            raise MergeTableError(f"line {lineno}: empty source class")
        rules.append((source, target))
    return MergeTable(tuple(rules))


def load_merge_table(path: str | Path) -> MergeTable:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read merge table {path}: {exc}") from exc
    return parse_merge_table(text)
