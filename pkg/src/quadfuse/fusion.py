"""Feature-level fusion strategies and the two-stage quadruple fusion rule.

Four strategies are implemented over pairs of feature vectors:

* concatenation, with zero imputation for missing elements;
* bilinear pooling, the flattened outer product (optionally signed-sqrt +
  L2 stabilized), which tolerates one missing element by passing the
  present vector through unchanged;
* compact bilinear pooling via the tensor-sketch construction (count
  sketches circularly convolved through the FFT);
* factorized bilinear coding: a sparse code against a dictionary whose
  atoms are low-rank factor pairs, solved in closed form by a
  Gram-corrected projection followed by soft thresholding.

Quadruple fusion runs in two stages: the post pair (PI, PC) and homepage
pair (HI, HB) are fused first, then the two stage outputs are
concatenated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .records import PresenceMask, validate_mask

STRATEGIES = ("concat", "bilinear", "compact_bilinear", "fbc")
PROTOCOLS = ("post_level", "homepage_level", "text_source", "image_source", "quadruple")

GRAM_CONDITION_LIMIT = 1e12


class FusionError(ValueError):
    """Raised for shape mismatches, intolerable masks, or degenerate dictionaries."""


def soft_threshold(values: np.ndarray, threshold: float) -> np.ndarray:
    """Shrinkage operator sign(v) * max(|v| - threshold, 0)."""
    return np.sign(values) * np.maximum(np.abs(values) - threshold, 0.0)


def signed_sqrt(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.sqrt(np.abs(values))


def _l2_normalize(values: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(values)
    return values / norm if norm > 0 else values


def _as_vector(x) -> np.ndarray:
    values = getattr(x, "values", x)
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise FusionError(f"expected a 1-D feature vector, got shape {arr.shape}")
    return arr


def fuse_concat(parts: list) -> np.ndarray:
    """Order-preserving concatenation; output dim is the sum of input dims."""
    if len(parts) < 2:
        raise FusionError("concatenation needs at least two parts")
    return np.concatenate([_as_vector(p) for p in parts])


def fuse_bilinear(
    x,
    y,
    x_present: bool = True,
    y_present: bool = True,
    stabilize: bool = True,
) -> np.ndarray:
    """Outer-product pooling of two vectors, flattened row-major to length p*q.

    With exactly one input missing the present vector is returned
    unchanged; with both missing there is nothing to pool and an error is
    raised. Stabilization (signed square root then L2 normalization) only
    applies to the pooled output, never to a passed-through vector.
    """
    if not x_present and not y_present:
        raise FusionError("no modality present")
    if not y_present:
        return _as_vector(x).copy()
    if not x_present:
        return _as_vector(y).copy()
    xv, yv = _as_vector(x), _as_vector(y)
    pooled = np.outer(xv, yv).ravel()
    if stabilize:
        pooled = _l2_normalize(signed_sqrt(pooled))
    return pooled


def _sketch_hashes(d: int, sketch_dim: int, seed) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    h1 = rng.integers(0, sketch_dim, size=d)
    s1 = rng.choice(np.array([-1.0, 1.0]), size=d)
    h2 = rng.integers(0, sketch_dim, size=d)
    s2 = rng.choice(np.array([-1.0, 1.0]), size=d)
    return h1, s1, h2, s2


def _count_sketch(v: np.ndarray, idx: np.ndarray, sign: np.ndarray, sketch_dim: int) -> np.ndarray:
    out = np.zeros(sketch_dim)
    np.add.at(out, idx, sign * v)
    return out


def _pad_to(v: np.ndarray, d: int) -> np.ndarray:
    if len(v) == d:
        return v
    out = np.zeros(d)
    out[: len(v)] = v
    return out


def fuse_compact_bilinear(x, y, sketch_dim: int, seed=0) -> np.ndarray:
    """Tensor-sketch approximation of bilinear pooling, output length sketch_dim.

    The shorter input is zero-padded to the longer one (padding preserves
    inner products exactly), each padded vector is count-sketched with its
    own seeded hash/sign pair, and the sketches are circularly convolved
    through the FFT. Fixed seed implies an identical sketch.
    """
    if sketch_dim < 1:
        raise FusionError(f"sketch_dim must be positive, got {sketch_dim}")
    xv, yv = _as_vector(x), _as_vector(y)
    d = max(len(xv), len(yv))
    xv, yv = _pad_to(xv, d), _pad_to(yv, d)
    h1, s1, h2, s2 = _sketch_hashes(d, sketch_dim, seed)
    fx = np.fft.rfft(_count_sketch(xv, h1, s1, sketch_dim))
    fy = np.fft.rfft(_count_sketch(yv, h2, s2, sketch_dim))
    return np.fft.irfft(fx * fy, n=sketch_dim)


@dataclass
class FbcDictionary:
    """k low-rank dictionary atoms: atom l is U[l] @ V[l].T with rank r factors.

    ``U`` has shape (k, p, r) and ``V`` shape (k, q, r); ``lam`` weighs the
    L1 sparsity of the code.
    """

    U: np.ndarray
    V: np.ndarray
    lam: float = 0.0

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.float64)
        self.V = np.asarray(self.V, dtype=np.float64)
        if self.U.ndim != 3 or self.V.ndim != 3:
            raise FusionError("U and V must have shape (atoms, dim, rank)")
        if self.U.shape[0] != self.V.shape[0] or self.U.shape[2] != self.V.shape[2]:
            raise FusionError("U and V must agree on atom count and rank")
        if self.k < 1 or self.r < 1:
            raise FusionError("need at least one atom of rank >= 1")
        if self.lam < 0:
            raise FusionError("sparsity weight must be nonnegative")
        self._gram_inv: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.U.shape[0]

    @property
    def r(self) -> int:
        return self.U.shape[2]

    @property
    def p(self) -> int:
        return self.U.shape[1]

    @property
    def q(self) -> int:
        return self.V.shape[1]

    @classmethod
    def from_seed(cls, k: int, r: int, p: int, q: int, lam: float, seed=0) -> "FbcDictionary":
        """Fixed random dictionary, entries i.i.d. uniform on [-1/sqrt(r), 1/sqrt(r)]."""
        rng = np.random.default_rng(seed)
        scale = 1.0 / np.sqrt(r)
        U = rng.uniform(-scale, scale, size=(k, p, r))
        V = rng.uniform(-scale, scale, size=(k, q, r))
        return cls(U=U, V=V, lam=lam)

    def atom_matrix(self, l: int) -> np.ndarray:
        """Atom l as the p x q matrix U[l] @ V[l].T."""
        return self.U[l] @ self.V[l].T

    def gram(self) -> np.ndarray:
        """Exact Gram of the vectorized atoms: G[l,m] = <vec(atom_l), vec(atom_m)>.

        Computed by pooling the elementwise product of the factor Grams over
        each atom's rank block, which equals sum_{s,t} (u_ls . u_mt)(v_ls . v_mt).
        """
        UU = np.einsum("kps,mpt->ksmt", self.U, self.U)
        VV = np.einsum("kqs,mqt->ksmt", self.V, self.V)
        return np.einsum("ksmt->km", UU * VV)

    def _gram_solve(self, g: np.ndarray) -> np.ndarray:
        if self._gram_inv is None:
            G = self.gram()
            if not np.all(np.isfinite(G)) or np.linalg.cond(G) > GRAM_CONDITION_LIMIT:
                raise FusionError("degenerate dictionary")
            self._gram_inv = np.linalg.inv(G)
        return self._gram_inv @ g

    def encode(self, x, y) -> np.ndarray:
        """Closed-form sparse code of the bilinear feature x y^T, length k.

        The rank-pooled bilinear form g_l = sum_s (u_ls . x)(v_ls . y) equals
        the projection of vec(x y^T) onto atom l; the Gram-corrected
        projection is then soft-thresholded at lam/2. For orthonormal
        vectorized atoms this is the exact LASSO solution.
        """
        xv, yv = _as_vector(x), _as_vector(y)
        if len(xv) != self.p or len(yv) != self.q:
            raise FusionError(
                f"dictionary expects dims ({self.p}, {self.q}), got ({len(xv)}, {len(yv)})"
            )
        ux = np.einsum("kps,p->ks", self.U, xv)
        vy = np.einsum("kqs,q->ks", self.V, yv)
        g = np.sum(ux * vy, axis=1)
        corrected = self._gram_solve(g)
        return soft_threshold(corrected, self.lam / 2.0)


def fbc_encode(dictionary: FbcDictionary, x, y) -> np.ndarray:
    """Encode the pair (x, y) against ``dictionary``; see FbcDictionary.encode."""
    return dictionary.encode(x, y)


def save_fbc_dictionary(dictionary: FbcDictionary, root: str | Path) -> None:
    """Persist factors as raw little-endian float32 blocks plus a meta file."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    dictionary.U.astype("<f4").tofile(root / "U")
    dictionary.V.astype("<f4").tofile(root / "V")
    meta = {"k": dictionary.k, "r": dictionary.r, "p": dictionary.p, "q": dictionary.q, "lambda": dictionary.lam}
    (root / "meta.json").write_text(json.dumps(meta), encoding="utf-8")


def load_fbc_dictionary(root: str | Path) -> FbcDictionary:
    root = Path(root)
    meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
    k, r, p, q = meta["k"], meta["r"], meta["p"], meta["q"]
    U = np.fromfile(root / "U", dtype="<f4").reshape(k, p, r).astype(np.float64)
    V = np.fromfile(root / "V", dtype="<f4").reshape(k, q, r).astype(np.float64)
    return FbcDictionary(U=U, V=V, lam=meta["lambda"])


@dataclass
class FusionConfig:
    """Strategy/protocol selection plus the knobs each strategy needs."""

    strategy: str = "concat"
    protocol: str = "quadruple"
    sketch_dim: int = 1024
    fbc_atoms: int = 64
    fbc_rank: int = 2
    fbc_lambda: float = 0.01
    seed: int = 0
    stabilize: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise FusionError(f"unknown strategy {self.strategy!r}")
        if self.protocol not in PROTOCOLS:
            raise FusionError(f"unknown protocol {self.protocol!r}")


@dataclass
class FusedFeature:
    """A fused record-level feature with the config and mask that produced it."""

    values: np.ndarray
    provenance: FusionConfig
    mask_used: PresenceMask

    @property
    def dim(self) -> int:
        return len(self.values)


class _PairFuser:
    """Fuses one (image-ish, text-ish) pair; holds any per-pair state."""

    def __init__(self, cfg: FusionConfig, dim_a: int, dim_b: int, slot_seed):
        self.cfg = cfg
        self.dim_a = dim_a
        self.dim_b = dim_b
        if cfg.strategy == "compact_bilinear":
            d = max(dim_a, dim_b)
            self._hashes = _sketch_hashes(d, cfg.sketch_dim, slot_seed)
            self._d = d
        elif cfg.strategy == "fbc":
            self.dictionary = FbcDictionary.from_seed(
                cfg.fbc_atoms, cfg.fbc_rank, dim_a, dim_b, cfg.fbc_lambda, seed=slot_seed
            )

    @property
    def fused_dim(self) -> int:
        cfg = self.cfg
        if cfg.strategy == "concat":
            return self.dim_a + self.dim_b
        if cfg.strategy == "bilinear":
            return self.dim_a * self.dim_b
        if cfg.strategy == "compact_bilinear":
            return cfg.sketch_dim
        return cfg.fbc_atoms

    @property
    def slot_dim(self) -> int:
        """Fixed-width slot: fused output or either passed-through vector fits."""
        if self.cfg.strategy == "concat":
            return self.fused_dim
        return max(self.fused_dim, self.dim_a, self.dim_b)

    def fuse(self, a: np.ndarray, b: np.ndarray, a_present: bool, b_present: bool) -> np.ndarray:
        """Spec output for one pair: variable length under missing tolerance."""
        cfg = self.cfg
        if cfg.strategy == "concat":
            return fuse_concat([a if a_present else np.zeros(self.dim_a),
                                b if b_present else np.zeros(self.dim_b)])
        if not a_present and not b_present:
            raise FusionError("no modality present")
        if not b_present:
            return np.asarray(a, dtype=np.float64).copy()
        if not a_present:
            return np.asarray(b, dtype=np.float64).copy()
        if cfg.strategy == "bilinear":
            return fuse_bilinear(a, b, stabilize=cfg.stabilize)
        if cfg.strategy == "compact_bilinear":
            h1, s1, h2, s2 = self._hashes
            fa = np.fft.rfft(_count_sketch(_pad_to(a, self._d), h1, s1, cfg.sketch_dim))
            fb = np.fft.rfft(_count_sketch(_pad_to(b, self._d), h2, s2, cfg.sketch_dim))
            return np.fft.irfft(fa * fb, n=cfg.sketch_dim)
        return self.dictionary.encode(a, b)

    def fuse_slot(self, a, b, a_present, b_present) -> np.ndarray:
        """Fixed-width variant: the pair output left-aligned in a zero slot."""
        out = np.zeros(self.slot_dim)
        fused = self.fuse(a, b, a_present, b_present)
        out[: len(fused)] = fused
        return out


def fuse_quadruple(pc, pi, hb, hi, mask: PresenceMask, cfg: FusionConfig) -> FusedFeature:
    """Two-stage quadruple fusion of one record's four feature vectors.

    Concatenation joins (pi, pc, hi, hb) with zero imputation. The pooling
    strategies fuse the post pair (pi, pc) and homepage pair (hi, hb) with
    single-missing tolerance, then concatenate the two stage outputs, so
    the output length varies with the mask.
    """
    if not validate_mask(mask):
        raise FusionError("intolerable missing pattern")
    pc_v, pi_v, hb_v, hi_v = (_as_vector(v) for v in (pc, pi, hb, hi))
    post = _PairFuser(cfg, len(pi_v), len(pc_v), slot_seed=(cfg.seed, 0))
    home = _PairFuser(cfg, len(hi_v), len(hb_v), slot_seed=(cfg.seed, 1))
    stage_post = post.fuse(pi_v, pc_v, mask.pi_present, mask.pc_present)
    stage_home = home.fuse(hi_v, hb_v, mask.hi_present, mask.hb_present)
    return FusedFeature(
        values=np.concatenate([stage_post, stage_home]), provenance=cfg, mask_used=mask
    )


# (image-ish source, text-ish source) per pair protocol; quadruple uses both stages.
_PAIR_SLOTS = {
    "post_level": [("pi", "pc")],
    "homepage_level": [("hi", "hb")],
    "text_source": [("pc", "hb")],
    "image_source": [("pi", "hi")],
    "quadruple": [("pi", "pc"), ("hi", "hb")],
}

_SOURCE_INDEX = {"pc": 0, "pi": 1, "hb": 2, "hi": 3}


class QuadrupleFusionTransformer(BaseEstimator, TransformerMixin):
    """Maps featurized record batches to a fixed-width fused design matrix.

    The input is a FeatureBatch (see quadfuse.embedding.featurize_dataset).
    Each protocol slot has a fixed width so records with different presence
    masks land in one design matrix: a passed-through single vector is
    left-aligned and zero-padded inside its slot. Rows whose slot has no
    present element raise for the pooling strategies (concatenation fills
    zeros instead); filter those rows out beforehand, e.g. with
    ``rows_fusable``.
    """

    def __init__(
        self,
        strategy: str = "concat",
        protocol: str = "quadruple",
        sketch_dim: int = 1024,
        fbc_atoms: int = 64,
        fbc_rank: int = 2,
        fbc_lambda: float = 0.01,
        seed: int = 0,
        stabilize: bool = True,
    ):
        self.strategy = strategy
        self.protocol = protocol
        self.sketch_dim = sketch_dim
        self.fbc_atoms = fbc_atoms
        self.fbc_rank = fbc_rank
        self.fbc_lambda = fbc_lambda
        self.seed = seed
        self.stabilize = stabilize

    def _config(self) -> FusionConfig:
        return FusionConfig(
            strategy=self.strategy,
            protocol=self.protocol,
            sketch_dim=self.sketch_dim,
            fbc_atoms=self.fbc_atoms,
            fbc_rank=self.fbc_rank,
            fbc_lambda=self.fbc_lambda,
            seed=self.seed,
            stabilize=self.stabilize,
        )

    def fit(self, X, y=None):
        cfg = self._config()
        dims = {"pc": X.pc.shape[1], "pi": X.pi.shape[1], "hb": X.hb.shape[1], "hi": X.hi.shape[1]}
        self.fusers_ = []
        for slot_index, (a, b) in enumerate(_PAIR_SLOTS[cfg.protocol]):
            self.fusers_.append(
                (a, b, _PairFuser(cfg, dims[a], dims[b], slot_seed=(cfg.seed, slot_index)))
            )
        self.width_ = sum(f.slot_dim for _, _, f in self.fusers_)
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "fusers_"):
            raise NotFittedError("fit the transformer before transform")
        blocks = {"pc": X.pc, "pi": X.pi, "hb": X.hb, "hi": X.hi}
        n = X.mask.shape[0]
        out = np.zeros((n, self.width_))
        for i in range(n):
            offset = 0
            for a, b, fuser in self.fusers_:
                present_a = bool(X.mask[i, _SOURCE_INDEX[a]])
                present_b = bool(X.mask[i, _SOURCE_INDEX[b]])
                out[i, offset : offset + fuser.slot_dim] = fuser.fuse_slot(
                    blocks[a][i], blocks[b][i], present_a, present_b
                )
                offset += fuser.slot_dim
        return out

    def rows_fusable(self, X) -> np.ndarray:
        """Boolean row filter: every slot of this protocol has >= 1 present element."""
        ok = np.ones(X.mask.shape[0], dtype=bool)
        for a, b in _PAIR_SLOTS[self.protocol]:
            ok &= X.mask[:, _SOURCE_INDEX[a]] | X.mask[:, _SOURCE_INDEX[b]]
        return ok
