"""Exemplar corpus: loading, validation, and code-length statistics.

A corpus lives in a directory with a ``manifest.jsonl`` at its root plus
``code/`` and ``images/`` asset subdirectories. Each manifest line describes
one text-code-image triplet. A "full-shape" corpus (strict mode) has exactly
50 categories split 25 indoor / 25 outdoor with 10 variations each.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass
from pathlib import Path

from .errors import DomainError

SETTINGS = ("indoor", "outdoor")

STRICT_CATEGORIES = 50
STRICT_PER_SETTING = 25
STRICT_VARIATIONS = 10
STRICT_ENTRIES = 500

MANIFEST_NAME = "manifest.jsonl"
_MANIFEST_FIELDS = ("id", "category", "setting", "variation", "description", "code_path", "image_path")

STATS_CSV_HEADER = "category,setting,count,min_chars,max_chars,mean_chars,median_chars"
OVERALL_ROW_NAME = "overall"


class CorpusError(DomainError):
    pass


class MissingManifest(CorpusError):
    pass


class ManifestParseError(CorpusError):
    pass


class MissingAsset(CorpusError):
    def __init__(self, entry_id: str, path: str):
        super().__init__(f"entry {entry_id!r}: missing asset {path}")
        self.entry_id = entry_id
        self.path = path


class DuplicateId(CorpusError):
    pass


class InvalidEntry(CorpusError):
    def __init__(self, entry_id: str, reason: str):
        super().__init__(f"entry {entry_id!r}: {reason}")
        self.entry_id = entry_id
        self.reason = reason


class ShapeViolation(CorpusError):
    pass


class EmptyCorpus(CorpusError):
    pass


@dataclass(frozen=True)
class CorpusEntry:
    """One text-code-image triplet with category metadata."""

    id: str
    category: str
    setting: str
    variation: int
    description: str
    code_path: str
    image_path: str
    code_chars: int


@dataclass(frozen=True)
class Corpus:
    """Immutable loaded corpus; safe to share across threads."""

    root: Path
    entries: tuple[CorpusEntry, ...]
    categories: dict[str, tuple[str, int]]  # category -> (setting, entry count)

    def __len__(self) -> int:
        return len(self.entries)

    def by_id(self) -> dict[str, CorpusEntry]:
        return {e.id: e for e in self.entries}

    def code_text(self, entry: CorpusEntry) -> str:
        return read_code_file(self.root / entry.code_path)


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validate_corpus."""

    subject: str  # entry id, or category name for shape violations
    code: str
    detail: str


@dataclass(frozen=True)
class CategoryStats:
    setting: str
    count: int
    min: int
    max: int
    mean: float
    median: float


@dataclass(frozen=True)
class CorpusStats:
    per_category: dict[str, CategoryStats]
    overall: CategoryStats


def read_code_file(path: Path) -> str:
    """Read a script counting raw characters; a byte-order mark is dropped."""
    return path.read_text(encoding="utf-8-sig")


def _parse_manifest_line(line: str, lineno: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"line {lineno}: invalid JSON ({exc})") from None
    if not isinstance(record, dict):
        raise ManifestParseError(f"line {lineno}: expected an object")
    missing = [f for f in _MANIFEST_FIELDS if f not in record]
    if missing:
        raise ManifestParseError(f"line {lineno}: missing fields {missing}")
    return record


def load_corpus(root: str | Path, strict: bool = False) -> Corpus:
    """Load and check a corpus directory.

    Structural problems (missing manifest or assets, duplicate ids, empty
    descriptions) raise immediately; in strict mode the full-shape invariant
    is enforced on top.
    """
    root = Path(root)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise MissingManifest(f"no {MANIFEST_NAME} under {root}")

    entries: list[CorpusEntry] = []
    seen_ids: set[str] = set()
    categories: dict[str, tuple[str, int]] = {}

    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        record = _parse_manifest_line(line, lineno)
        entry_id = str(record["id"])
        if entry_id in seen_ids:
            raise DuplicateId(f"duplicate entry id {entry_id!r}")
        seen_ids.add(entry_id)

        setting = record["setting"]
        if setting not in SETTINGS:
            raise InvalidEntry(entry_id, f"unknown setting {setting!r}")
        variation = int(record["variation"])
        if variation < 1:
            raise InvalidEntry(entry_id, f"variation must be >= 1, got {variation}")
        description = str(record["description"])
        if not description.strip():
            raise InvalidEntry(entry_id, "empty description")

        code_path = root / record["code_path"]
        if not code_path.is_file():
            raise MissingAsset(entry_id, record["code_path"])
        image_path = root / record["image_path"]
        if not image_path.is_file():
            raise MissingAsset(entry_id, record["image_path"])

        code = read_code_file(code_path)
        if not code:
            raise InvalidEntry(entry_id, "empty code file")

        category = str(record["category"])
        if category in categories:
            cat_setting, count = categories[category]
            if cat_setting != setting:
                raise InvalidEntry(entry_id, f"category {category!r} mixes settings {cat_setting!r} and {setting!r}")
            categories[category] = (cat_setting, count + 1)
        else:
            categories[category] = (setting, 1)

        entries.append(
            CorpusEntry(
                id=entry_id,
                category=category,
                setting=setting,
                variation=variation,
                description=description,
                code_path=str(record["code_path"]),
                image_path=str(record["image_path"]),
                code_chars=len(code),
            )
        )

    corpus = Corpus(root=root, entries=tuple(entries), categories=categories)
    if strict:
        shape = _shape_violations(corpus)
        if shape:
            v = shape[0]
            raise ShapeViolation(f"{v.subject}: {v.detail}" + (f" (+{len(shape) - 1} more)" if len(shape) > 1 else ""))
    return corpus


def _shape_violations(corpus: Corpus) -> list[Violation]:
    violations = []
    n_categories = len(corpus.categories)
    if n_categories != STRICT_CATEGORIES:
        violations.append(
            Violation("corpus", "ShapeViolation", f"expected {STRICT_CATEGORIES} categories, got {n_categories}")
        )
    for setting in SETTINGS:
        n = sum(1 for s, _ in corpus.categories.values() if s == setting)
        if n != STRICT_PER_SETTING:
            violations.append(
                Violation("corpus", "ShapeViolation", f"expected {STRICT_PER_SETTING} {setting} categories, got {n}")
            )
    for category in sorted(corpus.categories):
        variations = sorted(e.variation for e in corpus.entries if e.category == category)
        if variations != list(range(1, STRICT_VARIATIONS + 1)):
            violations.append(
                Violation(
                    category,
                    "ShapeViolation",
                    f"expected variations 1..{STRICT_VARIATIONS}, got {variations}",
                )
            )
    if len(corpus.entries) != STRICT_ENTRIES:
        violations.append(
            Violation("corpus", "ShapeViolation", f"expected {STRICT_ENTRIES} entries, got {len(corpus.entries)}")
        )
    return violations


def validate_corpus(corpus: Corpus, strict: bool = False) -> list[Violation]:
    """Re-check every corpus invariant against the data and the files on disk.

    Violations are data, not errors: the report is empty when the corpus is
    valid, and ordered deterministically by (subject, code).
    """
    violations: list[Violation] = []
    seen: set[str] = set()
    for entry in corpus.entries:
        if entry.id in seen:
            violations.append(Violation(entry.id, "DuplicateId", "entry id appears more than once"))
        seen.add(entry.id)

        if not entry.description.strip():
            violations.append(Violation(entry.id, "EmptyDescription", "description is empty"))
        if entry.setting not in SETTINGS:
            violations.append(Violation(entry.id, "InvalidSetting", f"unknown setting {entry.setting!r}"))
        if entry.variation < 1:
            violations.append(Violation(entry.id, "InvalidVariation", f"variation {entry.variation} < 1"))

        cat = corpus.categories.get(entry.category)
        if cat is None:
            violations.append(Violation(entry.id, "UnknownCategory", f"category {entry.category!r} not in corpus map"))
        elif cat[0] != entry.setting:
            violations.append(
                Violation(entry.id, "SettingMismatch", f"entry setting {entry.setting!r} != category setting {cat[0]!r}")
            )

        code_path = corpus.root / entry.code_path
        if not code_path.is_file():
            violations.append(Violation(entry.id, "MissingAsset", f"code file missing: {entry.code_path}"))
        else:
            code = read_code_file(code_path)
            if not code:
                violations.append(Violation(entry.id, "EmptyCode", f"code file empty: {entry.code_path}"))
            elif len(code) != entry.code_chars:
                violations.append(
                    Violation(entry.id, "CodeCharsMismatch", f"code_chars {entry.code_chars} != actual {len(code)}")
                )
        if not (corpus.root / entry.image_path).is_file():
            violations.append(Violation(entry.id, "MissingAsset", f"image file missing: {entry.image_path}"))

    for category, (setting, count) in corpus.categories.items():
        actual = sum(1 for e in corpus.entries if e.category == category)
        if actual != count:
            violations.append(
                Violation(category, "CategoryCountMismatch", f"category map says {count} entries, found {actual}")
            )
        if setting not in SETTINGS:
            violations.append(Violation(category, "InvalidSetting", f"unknown setting {setting!r}"))

    if strict:
        violations.extend(_shape_violations(corpus))

    violations.sort(key=lambda v: (v.subject, v.code, v.detail))
    return violations


def code_length_stats(corpus: Corpus) -> CorpusStats:
    """Per-category and overall {min, max, mean, median} of code_chars."""
    if not corpus.entries:
        raise EmptyCorpus("cannot compute statistics of an empty corpus")

    def aggregate(setting: str, lengths: list[int]) -> CategoryStats:
        return CategoryStats(
            setting=setting,
            count=len(lengths),
            min=min(lengths),
            max=max(lengths),
            mean=statistics.mean(lengths),
            median=statistics.median(lengths),
        )

    per_category: dict[str, CategoryStats] = {}
    for category in sorted(corpus.categories):
        lengths = [e.code_chars for e in corpus.entries if e.category == category]
        per_category[category] = aggregate(corpus.categories[category][0], lengths)
    overall = aggregate("-", [e.code_chars for e in corpus.entries])
    return CorpusStats(per_category=per_category, overall=overall)


def stats_to_csv(stats: CorpusStats) -> str:
    """Render stats as CSV, one row per category plus a final overall row."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(STATS_CSV_HEADER.split(","))
    rows = list(stats.per_category.items()) + [(OVERALL_ROW_NAME, stats.overall)]
    for name, s in rows:
        writer.writerow([name, s.setting, s.count, s.min, s.max, f"{s.mean:.1f}", f"{s.median:.1f}"])
    return out.getvalue()
