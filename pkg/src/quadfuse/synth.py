"""Seeded synthetic corpus generator with separable dealer/benign classes.

Records are built from two disjoint vocabularies so that every source
(comment text, post image path, bio, homepage image paths) carries class
signal once embedded. Class counts are exact: round(n * dealer_fraction)
records are dealers. A slice of records can optionally be generated with
a non-fusable presence mask to exercise exclusion logic downstream.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .records import Dataset, QuadrupleRecord

DEALER_WORDS = (
    "xanax", "oxy", "percs", "molly", "acid", "shrooms", "carts", "plug",
    "stash", "grams", "dose", "trip", "blotter", "pressed", "bars", "ship",
)
BENIGN_WORDS = (
    "sunset", "coffee", "travel", "garden", "recipe", "puppy", "hiking",
    "painting", "guitar", "soccer", "beach", "books", "yoga", "baking",
    "cycling", "museum",
)
DEALER_TAGS = ("xanax", "oxycodone", "lsd", "shrooms", "mdma", "carts", "plug")
BENIGN_TAGS = ("sunset", "travel", "foodie", "fitness", "art", "music", "nature")
PLACE_TAGS = ("california", "texas", "florida", "london", "toronto", "newyork")

CONTACT_PHRASES = ("dm me", "hit my snap", "wickr only", "fast ship", "menu in bio")
BENIGN_PHRASES = ("love this", "great day", "so pretty", "new post", "weekend vibes")


@dataclass
class SynthSpec:
    """Knobs for the generator; derived class counts are exact.

    ``noise_rate`` is the per-source chance of drawing content from the
    opposite class's vocabulary. Independent noise across the four sources
    is what makes fusing them genuinely better than any single pair.
    """

    n_records: int = 500
    dealer_fraction: float = 0.5
    missing_rate: float = 0.2
    noise_rate: float = 0.1
    invalid_fraction: float = 0.0
    tags_per_record: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_records < 1:
            raise ValueError("n_records must be positive")
        for name in ("dealer_fraction", "missing_rate", "noise_rate", "invalid_fraction"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def n_dealers(self) -> int:
        return int(round(self.n_records * self.dealer_fraction))


def _text(rng: random.Random, words, phrases, n_words=4) -> str:
    picked = rng.sample(words, k=min(n_words, len(words)))
    return f"{rng.choice(phrases)} {' '.join(picked)}"


def _image_ref(rng: random.Random, words, prefix: str, i: int) -> str:
    return f"img/{prefix}/{rng.choice(words)}_{rng.choice(words)}_{i}.jpg"


def generate_dataset(spec: SynthSpec) -> Dataset:
    """Deterministic labeled corpus; same spec -> identical dataset."""
    rng = random.Random(spec.seed)
    labels = [1] * spec.n_dealers + [0] * (spec.n_records - spec.n_dealers)
    rng.shuffle(labels)
    n_invalid = int(round(spec.n_records * spec.invalid_fraction))

    records = []
    for i, label in enumerate(labels):
        tag_pool = DEALER_TAGS if label else BENIGN_TAGS

        def vocab():
            flipped = rng.random() < spec.noise_rate
            klass = (1 - label) if flipped else label
            if klass:
                return DEALER_WORDS, CONTACT_PHRASES
            return BENIGN_WORDS, BENIGN_PHRASES

        words, phrases = vocab()
        pc_text = _text(rng, words, phrases)
        words, _ = vocab()
        pi_ref = _image_ref(rng, words, "post", i)
        words, phrases = vocab()
        hb_text = _text(rng, words, phrases, n_words=3)
        words, _ = vocab()
        hi_refs = tuple(
            _image_ref(rng, words, "home", i * 10 + j) for j in range(rng.randint(1, 3))
        )
        tags = set(rng.sample(tag_pool, k=min(spec.tags_per_record, len(tag_pool))))
        if label and rng.random() < 0.3:
            tags.add(rng.choice(PLACE_TAGS))

        if i < n_invalid:
            # deliberately non-fusable: the post pair is fully absent
            pc_text, pi_ref = None, None
        elif rng.random() < spec.missing_rate:
            # drop one field; its pair partner stays, so the mask stays valid
            drop = rng.choice(("pc", "pi", "hb", "hi"))
            if drop == "pc":
                pc_text = None
            elif drop == "pi":
                pi_ref = None
            elif drop == "hb":
                hb_text = None
            else:
                hi_refs = ()

        records.append(QuadrupleRecord(
            user_id=f"user_{i:05d}", post_id=f"post_{i:05d}", label=label,
            pc_text=pc_text, pi_ref=pi_ref, hb_text=hb_text, hi_refs=hi_refs,
            hashtags=frozenset(tags)))
    return Dataset(records=tuple(records), split_seed=spec.seed)


def subsample_ratio(ds: Dataset, ratio: float, seed: int) -> Dataset:
    """Keep all positives and a seeded sample of round(ratio * P) negatives.

    Record order is preserved. Raises if the corpus cannot supply the
    requested number of negatives.
    """
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    n_pos = sum(1 for r in ds if r.label == 1)
    neg_indices = [i for i, r in enumerate(ds) if r.label == 0]
    wanted = int(round(ratio * n_pos))
    if wanted > len(neg_indices):
        raise ValueError(
            f"insufficient negatives: need {wanted}, have {len(neg_indices)}"
        )
    rng = random.Random(seed)
    chosen = set(rng.sample(neg_indices, k=wanted))
    records = tuple(r for i, r in enumerate(ds) if r.label == 1 or i in chosen)
    return Dataset(records=records, split_seed=ds.split_seed)
