"""Quadruple record model, presence masks, dataset container, and line-delimited JSON I/O.

A record bundles the four evidence fields for one (post, account) pair:
posted comment (PC), posted image (PI), homepage bio (HB), and homepage
images (HI). Fields are authoritative; the presence mask is derived from
them and any externally supplied mask must agree.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

MAX_HOMEPAGE_IMAGES = 10

DATASET_FIELDS = (
    "user_id",
    "post_id",
    "label",
    "pc_text",
    "pi_ref",
    "hb_text",
    "hi_refs",
    "hashtags",
)


class DatasetError(ValueError):
    """Raised for malformed dataset files or records that violate invariants."""


def normalize_hashtag(tag: str) -> str:
    """Lowercase a hashtag and strip any leading '#'."""
    return tag.lstrip("#").lower()


@dataclass(frozen=True)
class PresenceMask:
    """4-bit indicator of which quadruple fields exist for a record."""

    pc_present: bool
    pi_present: bool
    hb_present: bool
    hi_present: bool

    def as_tuple(self) -> tuple[bool, bool, bool, bool]:
        return (self.pc_present, self.pi_present, self.hb_present, self.hi_present)

    @classmethod
    def from_fields(
        cls,
        pc_text: str | None,
        pi_ref: str | None,
        hb_text: str | None,
        hi_refs: tuple[str, ...],
    ) -> "PresenceMask":
        return cls(
            pc_present=pc_text is not None,
            pi_present=pi_ref is not None,
            hb_present=hb_text is not None,
            hi_present=len(hi_refs) > 0,
        )


def validate_mask(mask: PresenceMask) -> bool:
    """True iff the mask is tolerable for quadruple fusion.

    Each of the two fusion pairs -- the post pair (PI, PC) and the homepage
    pair (HB, HI) -- must keep at least one present element. That gives 3
    admissible states per pair, hence 9 of the 16 possible masks.
    """
    post_ok = mask.pc_present or mask.pi_present
    homepage_ok = mask.hb_present or mask.hi_present
    return post_ok and homepage_ok


def all_masks() -> list[PresenceMask]:
    """All 16 presence masks, in binary order (pc, pi, hb, hi)."""
    return [
        PresenceMask(bool(pc), bool(pi), bool(hb), bool(hi))
        for pc in (0, 1)
        for pi in (0, 1)
        for hb in (0, 1)
        for hi in (0, 1)
    ]


@dataclass(frozen=True)
class QuadrupleRecord:
    """One (post, account) evidence tuple plus its binary label.

    ``label`` is 1 for a dealer account, 0 otherwise. Absent text/image
    fields are ``None``; ``hi_refs`` holds up to 10 homepage image
    references. ``mask`` is always consistent with field absence: pass one
    explicitly only to cross-check an external source, a mismatch raises.
    """

    user_id: str
    post_id: str
    label: int
    pc_text: str | None = None
    pi_ref: str | None = None
    hb_text: str | None = None
    hi_refs: tuple[str, ...] = ()
    hashtags: frozenset[str] = frozenset()
    mask: PresenceMask = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.label not in (0, 1) or isinstance(self.label, bool):
            raise DatasetError(f"label must be 0 or 1, got {self.label!r}")
        object.__setattr__(self, "hi_refs", tuple(self.hi_refs))
        if len(self.hi_refs) > MAX_HOMEPAGE_IMAGES:
            raise DatasetError(
                f"hi_refs holds {len(self.hi_refs)} references, limit is {MAX_HOMEPAGE_IMAGES}"
            )
        object.__setattr__(self, "hashtags", frozenset(self.hashtags))
        for tag in self.hashtags:
            if not tag or tag != normalize_hashtag(tag):
                raise DatasetError(f"hashtag {tag!r} is not normalized (lowercase, no '#')")
        derived = PresenceMask.from_fields(self.pc_text, self.pi_ref, self.hb_text, self.hi_refs)
        if self.mask is None:
            object.__setattr__(self, "mask", derived)
        elif self.mask != derived:
            raise DatasetError(
                f"mask {self.mask.as_tuple()} inconsistent with fields {derived.as_tuple()}"
            )


@dataclass
class Dataset:
    """An ordered collection of quadruple records."""

    records: list[QuadrupleRecord]
    split_seed: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def labels(self) -> list[int]:
        return [rec.label for rec in self.records]


def split(ds: Dataset, train_fraction: float, seed: int | None = None) -> tuple[Dataset, Dataset]:
    """Disjoint train/test partition via a seeded uniform permutation.

    The train set takes ``round(train_fraction * len(ds))`` records. The
    split is by record, not by user: an account appearing in several
    records can land on both sides.
    """
    if not ds.records:
        raise DatasetError("empty dataset")
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if seed is None:
        seed = ds.split_seed
    indices = list(range(len(ds.records)))
    random.Random(seed).shuffle(indices)
    n_train = int(round(train_fraction * len(indices)))
    train = [ds.records[i] for i in sorted(indices[:n_train])]
    test = [ds.records[i] for i in sorted(indices[n_train:])]
    return Dataset(train, split_seed=seed), Dataset(test, split_seed=seed)


def _record_to_json(rec: QuadrupleRecord) -> dict:
    doc: dict = {
        "user_id": rec.user_id,
        "post_id": rec.post_id,
        "label": rec.label,
        "hi_refs": list(rec.hi_refs),
        "hashtags": sorted(rec.hashtags),
    }
    if rec.pc_text is not None:
        doc["pc_text"] = rec.pc_text
    if rec.pi_ref is not None:
        doc["pi_ref"] = rec.pi_ref
    if rec.hb_text is not None:
        doc["hb_text"] = rec.hb_text
    return doc


def _record_from_json(doc: dict) -> QuadrupleRecord:
    unknown = set(doc) - set(DATASET_FIELDS) - {"mask"}
    if unknown:
        raise DatasetError(f"unknown fields {sorted(unknown)}")
    for key in ("user_id", "post_id"):
        if not isinstance(doc.get(key), str):
            raise DatasetError(f"missing or non-string field {key!r}")
    label = doc.get("label")
    if isinstance(label, bool) or not isinstance(label, int):
        raise DatasetError(f"label must be an integer, got {label!r}")

    hi_refs = doc.get("hi_refs") or []
    if not isinstance(hi_refs, list) or not all(isinstance(r, str) for r in hi_refs):
        raise DatasetError("hi_refs must be a list of strings")
    hashtags = doc.get("hashtags") or []
    if not isinstance(hashtags, list) or not all(isinstance(t, str) for t in hashtags):
        raise DatasetError("hashtags must be a list of strings")

    mask = None
    if "mask" in doc and doc["mask"] is not None:
        m = doc["mask"]
        try:
            mask = PresenceMask(
                bool(m["pc_present"]),
                bool(m["pi_present"]),
                bool(m["hb_present"]),
                bool(m["hi_present"]),
            )
        except (TypeError, KeyError) as exc:
            raise DatasetError(f"malformed mask object: {exc}") from exc

    return QuadrupleRecord(
        user_id=doc["user_id"],
        post_id=doc["post_id"],
        label=label,
        pc_text=doc.get("pc_text"),
        pi_ref=doc.get("pi_ref"),
        hb_text=doc.get("hb_text"),
        hi_refs=tuple(hi_refs),
        hashtags=frozenset(normalize_hashtag(t) for t in hashtags),
        mask=mask,
    )


def record_to_doc(rec: QuadrupleRecord) -> dict:
    """The JSON object written for one record by :func:`save_dataset`."""
    return _record_to_json(rec)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write one UTF-8 JSON object per line; absent fields are omitted."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for rec in ds.records:
            fh.write(json.dumps(_record_to_json(rec), ensure_ascii=False))
            fh.write("\n")


def load_dataset(path: str | Path) -> Dataset:
    """Load a line-delimited JSON dataset, naming the offending line on error.

    Accepts exactly the documented field names plus an optional ``mask``
    object; when a mask is present it is compared against the one derived
    from the fields and a mismatch is an error, never silently fixed.
    """
    path = Path(path)
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(doc, dict):
                raise DatasetError(f"{path}: line {lineno}: expected a JSON object")
            try:
                records.append(_record_from_json(doc))
            except DatasetError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from exc
    return Dataset(records)
