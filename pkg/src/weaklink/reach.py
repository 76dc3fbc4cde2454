"""Reverse indexes and popularity metrics.

Builds the two indexes the analyzers share (package -> direct dependents,
maintainer identity -> owned packages) and computes the popularity metrics:
package reach (direct dependents + 12-month downloads) and maintainer reach
(unique dependents across a maintainer's packages). Transitive dependents
are out of scope; edges are name-level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable, Sequence

from .errors import EmptyInputError, UnknownMaintainerError
from .ingest import Corpus

DependentsIndex = dict[str, set[str]]


@dataclass(frozen=True)
class MaintainerInfo:
    owned_packages: frozenset[str]
    last_activity: datetime


MaintainerIndex = dict[str, MaintainerInfo]


@dataclass(frozen=True)
class ReachMetrics:
    subject: str
    direct_dependents: int
    downloads_12mo: int | None
    maintainer_reach: int | None = None


def build_dependents_index(corpus: Corpus, dep_kinds: Sequence[str] = ("runtime",)) -> DependentsIndex:
    """Map each depended-upon name to the set of packages that declare it.

    Self-edges are dropped. Names not present in the corpus are still
    indexed (a package may depend on something outside the snapshot), and
    corpus packages nobody depends on get an empty entry.
    """
    if not dep_kinds:
        raise ValueError("dep_kinds must be nonempty")
    index: DependentsIndex = {rec.name: set() for rec in corpus.records}
    for rec in corpus.records:
        for kind in dep_kinds:
            for dep_name in rec.dependency_map(kind):
                if dep_name == rec.name:
                    continue
                index.setdefault(dep_name, set()).add(rec.name)
    return index


def build_maintainer_index(corpus: Corpus) -> MaintainerIndex:
    """Group packages by maintainer identity with each identity's last activity."""
    owned: dict[str, set[str]] = {}
    activity: dict[str, datetime] = {}
    for rec in corpus.records:
        for person in rec.maintainers:
            key = person.identity_key
            owned.setdefault(key, set()).add(rec.name)
            prev = activity.get(key)
            if prev is None or rec.last_modified > prev:
                activity[key] = rec.last_modified
    return {
        key: MaintainerInfo(owned_packages=frozenset(pkgs), last_activity=activity[key])
        for key, pkgs in owned.items()
    }


def package_reach(
    name: str,
    index: DependentsIndex,
    downloads: Callable[[str], int | None] | None = None,
) -> ReachMetrics:
    """Direct dependents plus 12-month downloads for one package.

    Downloads come back as None (unknown, not zero) when the provider has
    no data or fails.
    """
    count = len(index.get(name, ()))
    dl: int | None = None
    if downloads is not None:
        dl = downloads(name)
    return ReachMetrics(subject=name, direct_dependents=count, downloads_12mo=dl)


def maintainer_reach(
    key: str,
    mindex: MaintainerIndex,
    dindex: DependentsIndex,
    exclude_own: bool = False,
) -> int:
    """Unique dependents across all packages a maintainer owns.

    By default dependents that happen to be the maintainer's own packages
    are counted too (the literal reading of "unique dependents");
    ``exclude_own`` drops them.
    """
    info = mindex.get(key)
    if info is None:
        raise UnknownMaintainerError(key)
    union: set[str] = set()
    for pkg in info.owned_packages:
        union.update(dindex.get(pkg, ()))
    if exclude_own:
        union -= info.owned_packages
    return len(union)


def top_n(subjects: Sequence[tuple[str, object]], n: int) -> list[tuple[str, object]]:
    """Top n by score, descending, with a closed cutoff.

    Ties are broken lexicographically on the subject id; every subject tied
    with the n-th score is included, so the result can be longer than n.
    """
    if not subjects:
        raise EmptyInputError("no subjects to rank")
    ranked = sorted(subjects, key=lambda item: (_neg(item[1]), item[0]))
    if n >= len(ranked):
        return ranked
    cutoff_score = ranked[n - 1][1]
    end = n
    while end < len(ranked) and ranked[end][1] == cutoff_score:
        end += 1
    return ranked[:end]


class _neg:
    """Descending-order wrapper that avoids negating non-numeric scores."""

    __slots__ = ("value",)

    def __init__(self, value):
        self.value = value

    def __lt__(self, other):
        return other.value < self.value

    def __eq__(self, other):
        return self.value == other.value


def top_percent(subjects: Sequence[tuple[str, object]], percent: float) -> list[tuple[str, object]]:
    """Top ``percent`` of subjects by score with closed-cutoff tie handling."""
    if not 0 < percent <= 100:
        raise ValueError(f"percent must be in (0, 100], got {percent}")
    if not subjects:
        raise EmptyInputError("no subjects to rank")
    k = math.ceil(len(subjects) * percent / 100.0)
    return top_n(subjects, k)


def dump_dependents_index(index: DependentsIndex, path: str | Path) -> None:
    """Write the index as sorted JSONL for incremental runs."""
    with open(path, "w", encoding="utf-8") as fh:
        for name in sorted(index):
            fh.write(json.dumps({"name": name, "dependents": sorted(index[name])}, sort_keys=True))
            fh.write("\n")


def load_dependents_index(path: str | Path) -> DependentsIndex:
    index: DependentsIndex = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            index[row["name"]] = set(row["dependents"])
    return index
