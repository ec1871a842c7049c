"""Feature extraction behind pluggable providers.

Deep text/image encoders are abstracted away: synthetic providers hash the
input into a bag of character n-grams (text) or path tokens (image
references) and project it through seeded Gaussian rows, so every vector is
bit-reproducible offline. A file-backed provider serves externally computed
vectors keyed by the SHA-256 of the exact input string.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TEXT_DIM = 768
IMAGE_DIM = 2048

Modality = str  # "text" | "image"
Source = str  # "post_comment" | "post_image" | "homepage_bio" | "homepage_image"

SOURCES = ("post_comment", "post_image", "homepage_bio", "homepage_image")


class EmbeddingError(LookupError):
    """Raised when a provider cannot produce a vector for its input."""


@dataclass(frozen=True)
class FeatureVector:
    """A fixed-dimension real vector with its modality and origin attached."""

    values: np.ndarray
    modality: Modality
    source: Source

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"feature values must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature values must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return len(self.values)


def _stable_hash(namespace: str, token: str) -> int:
    digest = hashlib.blake2b(f"{namespace}|{token}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class _HashedBagProvider:
    """Shared machinery: token bag -> sum of seeded Gaussian rows -> L2 norm.

    Each distinct token deterministically owns one projection row derived
    from (seed, token hash); rows are cached per provider instance.
    """

    namespace = ""

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.seed = seed
        self._rows: dict[int, np.ndarray] = {}

    def _row(self, token: str) -> np.ndarray:
        key = _stable_hash(self.namespace, token)
        row = self._rows.get(key)
        if row is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, key]))
            row = rng.standard_normal(self.dim)
            self._rows[key] = row
        return row

    def _project(self, tokens: Counter) -> np.ndarray:
        vec = np.zeros(self.dim)
        for token, count in tokens.items():
            vec += count * self._row(token)
        norm = np.linalg.norm(vec)
        if norm > 0:
            vec /= norm
        return vec


class SyntheticTextProvider(_HashedBagProvider):
    """Character n-gram bag embedding for unicode text.

    Empty text embeds to the all-zeros vector: posted-but-trivial, which is
    distinct from an absent field.
    """

    namespace = "text"

    def __init__(self, dim: int = TEXT_DIM, seed: int = 0, ngram: int = 3):
        super().__init__(dim, seed)
        self.ngram = ngram

    def embed(self, text: str) -> np.ndarray:
        if text == "":
            return np.zeros(self.dim)
        n = self.ngram
        if len(text) < n:
            grams = [text]
        else:
            grams = [text[i : i + n] for i in range(len(text) - n + 1)]
        return self._project(Counter(grams))


class SyntheticImageProvider(_HashedBagProvider):
    """Token bag embedding over an image reference string (path/URI)."""

    namespace = "image"

    def __init__(self, dim: int = IMAGE_DIM, seed: int = 0):
        super().__init__(dim, seed)

    def embed(self, ref: str) -> np.ndarray:
        if not ref:
            raise EmbeddingError("image reference is absent")
        tokens = [t for t in re.split(r"[^0-9A-Za-z]+", ref) if t]
        if not tokens:
            tokens = [ref]
        return self._project(Counter(tokens))


def store_key(value: str) -> str:
    """SHA-256 hex key of the exact input string, as used by file-backed stores."""
    return hashlib.sha256(value.encode("utf-8")).hexdigest()


class FileBackedProvider:
    """Looks up precomputed vectors from a directory store.

    Layout: one raw little-endian float32 file per key (filename = hex key)
    plus ``index.json`` mapping key -> dimension.
    """

    def __init__(self, root: str | Path, dim: int):
        self.root = Path(root)
        self.dim = dim
        index_path = self.root / "index.json"
        if not index_path.exists():
            raise EmbeddingError(f"no index.json under {self.root}")
        self._index: dict[str, int] = json.loads(index_path.read_text(encoding="utf-8"))

    def embed(self, value: str) -> np.ndarray:
        key = store_key(value)
        if key not in self._index:
            raise EmbeddingError(f"embedding not found: {key}")
        stored_dim = self._index[key]
        if stored_dim != self.dim:
            raise EmbeddingError(
                f"embedding {key} has dim {stored_dim}, provider expects {self.dim}"
            )
        data = np.fromfile(self.root / key, dtype="<f4")
        if len(data) != stored_dim:
            raise EmbeddingError(f"embedding {key} is truncated")
        return data.astype(np.float64)


def write_store(root: str | Path, vectors: dict[str, np.ndarray]) -> None:
    """Write a file-backed store: ``vectors`` maps raw input string -> vector."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    index: dict[str, int] = {}
    for value, vec in vectors.items():
        key = store_key(value)
        arr = np.asarray(vec, dtype="<f4")
        arr.tofile(root / key)
        index[key] = len(arr)
    (root / "index.json").write_text(json.dumps(index, indent=0), encoding="utf-8")


def embed_text(provider, text: str, source: Source = "post_comment") -> FeatureVector:
    """Embed a text field through a text-capable provider."""
    return FeatureVector(provider.embed(text), modality="text", source=source)


def embed_image(provider, ref: str, source: Source = "post_image") -> FeatureVector:
    """Embed an image reference through an image-capable provider."""
    return FeatureVector(provider.embed(ref), modality="image", source=source)


def average_homepage(features: list[FeatureVector], dim: int) -> FeatureVector:
    """Elementwise mean of up to 10 homepage-image features.

    With no images the slot is filled with zeros; with n >= 1 the mean runs
    over exactly the provided n features.
    """
    if not features:
        return FeatureVector(np.zeros(dim), modality="image", source="homepage_image")
    for fv in features:
        if fv.dim != dim:
            raise ValueError(f"homepage feature dim {fv.dim} != expected {dim}")
    stacked = np.stack([fv.values for fv in features])
    return FeatureVector(stacked.mean(axis=0), modality="image", source="homepage_image")


@dataclass
class ProviderSet:
    """The text and image providers used to featurize records."""

    text: SyntheticTextProvider | FileBackedProvider
    image: SyntheticImageProvider | FileBackedProvider

    @classmethod
    def synthetic(cls, text_dim: int = TEXT_DIM, image_dim: int = IMAGE_DIM, seed: int = 0):
        return cls(
            text=SyntheticTextProvider(dim=text_dim, seed=seed),
            image=SyntheticImageProvider(dim=image_dim, seed=seed),
        )

    @property
    def text_dim(self) -> int:
        return self.text.dim

    @property
    def image_dim(self) -> int:
        return self.image.dim


def featurize(rec, providers: ProviderSet):
    """Turn one record into (pc, pi, hb, hi) feature vectors plus its mask.

    Absent modalities yield zero vectors of the correct dimension with the
    corresponding mask bit false; homepage images are embedded individually
    and averaged.
    """
    tdim, idim = providers.text_dim, providers.image_dim
    mask = rec.mask

    if mask.pc_present:
        pc = embed_text(providers.text, rec.pc_text, source="post_comment")
    else:
        pc = FeatureVector(np.zeros(tdim), modality="text", source="post_comment")

    if mask.pi_present:
        pi = embed_image(providers.image, rec.pi_ref, source="post_image")
    else:
        pi = FeatureVector(np.zeros(idim), modality="image", source="post_image")

    if mask.hb_present:
        hb = embed_text(providers.text, rec.hb_text, source="homepage_bio")
    else:
        hb = FeatureVector(np.zeros(tdim), modality="text", source="homepage_bio")

    hi_feats = [
        embed_image(providers.image, ref, source="homepage_image") for ref in rec.hi_refs
    ]
    hi = average_homepage(hi_feats, idim)

    return pc, pi, hb, hi, mask


@dataclass
class FeatureBatch:
    """Featurized dataset: one row per record in each per-source matrix.

    ``mask`` is an (n, 4) boolean array in (pc, pi, hb, hi) column order and
    ``y`` the 0/1 label vector; ``user_ids`` keeps row-to-record identity.
    """

    pc: np.ndarray
    pi: np.ndarray
    hb: np.ndarray
    hi: np.ndarray
    mask: np.ndarray
    y: np.ndarray
    user_ids: tuple = ()

    def __len__(self) -> int:
        return self.mask.shape[0]


def featurize_dataset(ds, providers: ProviderSet) -> FeatureBatch:
    """Featurize every record of a dataset into a FeatureBatch (row order kept)."""
    tdim, idim = providers.text_dim, providers.image_dim
    n = len(ds)
    batch = FeatureBatch(
        pc=np.zeros((n, tdim)),
        pi=np.zeros((n, idim)),
        hb=np.zeros((n, tdim)),
        hi=np.zeros((n, idim)),
        mask=np.zeros((n, 4), dtype=bool),
        y=np.zeros(n, dtype=np.int64),
        user_ids=tuple(rec.user_id for rec in ds),
    )
    for i, rec in enumerate(ds):
        pc, pi, hb, hi, mask = featurize(rec, providers)
        batch.pc[i] = pc.values
        batch.pi[i] = pi.values
        batch.hb[i] = hb.values
        batch.hi[i] = hi.values
        batch.mask[i] = mask.as_tuple()
        batch.y[i] = rec.label
    return batch
