"""Experiment harness: protocol/strategy grids, decision-level baseline,
negative/positive ratio sweep.

Every number an experiment emits is a deterministic function of its config:
the split, provider projections, fusion state, subsampling, and training
are all seeded from it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classify import (
    DECISION_WEIGHTS,
    Metrics,
    SoftmaxClassifier,
    TrainConfig,
    compute_metrics,
    decision_fuse,
)
from .embedding import FeatureBatch, ProviderSet, featurize_dataset
from .fusion import PROTOCOLS, STRATEGIES, QuadrupleFusionTransformer
from .records import Dataset, load_dataset, split
from .synth import SynthSpec, generate_dataset, subsample_ratio

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    """What to run: data source, fusion grid, training settings, sweep ratios."""

    dataset_path: str | None = None
    synth: SynthSpec | None = None
    protocols: tuple = ("post_level", "homepage_level", "quadruple")
    strategies: tuple = ("concat",)
    train: TrainConfig = field(default_factory=TrainConfig)
    text_dim: int = 64
    image_dim: int = 128
    train_fraction: float = 0.7
    np_ratios: tuple = (2.0, 4.0, 6.0, 8.0)
    sketch_dim: int = 256
    fbc_atoms: int = 64
    fbc_rank: int = 2
    fbc_lambda: float = 0.01
    seed: int = 0

    def __post_init__(self):
        for p in self.protocols:
            if p not in PROTOCOLS:
                raise ValueError(f"unknown protocol {p!r}")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must lie in (0, 1)")
        if any(r < 1 for r in self.np_ratios):
            raise ValueError("ratios must be >= 1")
        if self.dataset_path is None and self.synth is None:
            self.synth = SynthSpec(n_records=500, seed=self.seed)


@dataclass
class ExperimentRow:
    protocol: str
    strategy: str
    n_train: int
    n_test: int
    excluded_train: int
    excluded_test: int
    metrics: Metrics

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "strategy": self.strategy,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "excluded_train": self.excluded_train,
            "excluded_test": self.excluded_test,
            **self.metrics.to_dict(),
        }


@dataclass
class RatioPoint:
    ratio: float
    n_pos: int
    n_neg: int
    metrics: Metrics

    def to_dict(self) -> dict:
        return {"ratio": self.ratio, "n_pos": self.n_pos, "n_neg": self.n_neg,
                **self.metrics.to_dict()}


def load_corpus(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset_path is not None:
        return load_dataset(cfg.dataset_path)
    return generate_dataset(cfg.synth)


def _valid_rows(batch: FeatureBatch) -> np.ndarray:
    """Quadruple-fusable rows: each stage pair has at least one present bit."""
    m = batch.mask
    return (m[:, 0] | m[:, 1]) & (m[:, 2] | m[:, 3])


def _take(batch: FeatureBatch, keep: np.ndarray) -> FeatureBatch:
    return FeatureBatch(
        pc=batch.pc[keep], pi=batch.pi[keep], hb=batch.hb[keep], hi=batch.hi[keep],
        mask=batch.mask[keep], y=batch.y[keep],
        user_ids=tuple(u for u, k in zip(batch.user_ids, keep) if k),
    )


def _transformer(protocol: str, strategy: str, cfg: ExperimentConfig) -> QuadrupleFusionTransformer:
    return QuadrupleFusionTransformer(
        strategy=strategy, protocol=protocol, sketch_dim=cfg.sketch_dim,
        fbc_atoms=cfg.fbc_atoms, fbc_rank=cfg.fbc_rank, fbc_lambda=cfg.fbc_lambda,
        seed=cfg.seed,
    )


def run_cell(train_batch: FeatureBatch, test_batch: FeatureBatch,
             protocol: str, strategy: str, cfg: ExperimentConfig) -> ExperimentRow:
    """One grid cell: filter -> fuse -> train -> evaluate."""
    transformer = _transformer(protocol, strategy, cfg)
    keep_train = _valid_rows(train_batch)
    keep_test = _valid_rows(test_batch)
    if strategy != "concat":
        # pooling strategies cannot fuse a fully-absent pair; concat zero-fills
        keep_train &= transformer.rows_fusable(train_batch)
        keep_test &= transformer.rows_fusable(test_batch)
    excluded_train = int(len(train_batch) - keep_train.sum())
    excluded_test = int(len(test_batch) - keep_test.sum())
    if excluded_train or excluded_test:
        log.info("cell (%s, %s): excluded %d train / %d test records with "
                 "non-fusable masks", protocol, strategy, excluded_train, excluded_test)
    tr, te = _take(train_batch, keep_train), _take(test_batch, keep_test)
    X_train = transformer.fit(tr).transform(tr)
    X_test = transformer.transform(te)
    t = cfg.train
    clf = SoftmaxClassifier(lr=t.lr, beta1=t.beta1, beta2=t.beta2, epsilon=t.epsilon,
                            batch_size=t.batch_size, epochs=t.epochs, seed=t.seed,
                            threshold=t.threshold)
    clf.fit(X_train, tr.y)
    preds = clf.predict(X_test)
    return ExperimentRow(protocol=protocol, strategy=strategy,
                         n_train=len(tr), n_test=len(te),
                         excluded_train=excluded_train, excluded_test=excluded_test,
                         metrics=compute_metrics(te.y, preds))


_SOURCE_BLOCKS = ("pc", "pi", "hb", "hi")


def run_decision_level(train_batch: FeatureBatch, test_batch: FeatureBatch,
                       cfg: ExperimentConfig) -> ExperimentRow:
    """Late-fusion baseline: four single-source heads, linearly pooled.

    Each head trains on the rows where its source is present; at test time
    an absent source contributes a neutral 0.5 with its weight retained.
    """
    keep_train = _valid_rows(train_batch)
    keep_test = _valid_rows(test_batch)
    tr, te = _take(train_batch, keep_train), _take(test_batch, keep_test)
    t = cfg.train
    channel_probs = []
    for idx, name in enumerate(_SOURCE_BLOCKS):
        X_all = getattr(tr, name)
        present = tr.mask[:, idx]
        clf = SoftmaxClassifier(lr=t.lr, beta1=t.beta1, beta2=t.beta2, epsilon=t.epsilon,
                                batch_size=t.batch_size, epochs=t.epochs, seed=t.seed,
                                threshold=t.threshold)
        clf.fit(X_all[present], tr.y[present])
        probs = np.full(len(te), np.nan)
        te_present = te.mask[:, idx]
        if te_present.any():
            probs[te_present] = clf.predict_proba(getattr(te, name)[te_present])[:, 1]
        channel_probs.append(probs)
    fused = decision_fuse(channel_probs, weights=list(DECISION_WEIGHTS))
    preds = (fused >= t.threshold).astype(np.int64)
    return ExperimentRow(protocol="decision_level", strategy="linear_pool",
                         n_train=len(tr), n_test=len(te),
                         excluded_train=int(len(train_batch) - len(tr)),
                         excluded_test=int(len(test_batch) - len(te)),
                         metrics=compute_metrics(te.y, preds))


@dataclass
class ExperimentResult:
    rows: list
    config: ExperimentConfig

    def to_dicts(self) -> list:
        return [row.to_dict() for row in self.rows]

    def format_table(self) -> str:
        header = f"{'protocol':<16} {'strategy':<18} {'acc':>7} {'prec':>7} {'rec':>7} {'f1':>7} {'n_test':>7}"
        lines = [header, "-" * len(header)]
        for row in self.rows:
            m = row.metrics
            lines.append(f"{row.protocol:<16} {row.strategy:<18} "
                         f"{m.accuracy:>7.4f} {m.precision:>7.4f} {m.recall:>7.4f} "
                         f"{m.f1:>7.4f} {row.n_test:>7}")
        return "\n".join(lines)


def prepare_batches(cfg: ExperimentConfig, ds: Dataset | None = None):
    """Split and featurize once; cells share the same partition."""
    if ds is None:
        ds = load_corpus(cfg)
    train_ds, test_ds = split(ds, cfg.train_fraction, seed=cfg.seed)
    providers = ProviderSet.synthetic(text_dim=cfg.text_dim, image_dim=cfg.image_dim,
                                      seed=cfg.seed)
    return featurize_dataset(train_ds, providers), featurize_dataset(test_ds, providers)


def run_experiment(cfg: ExperimentConfig, include_decision: bool = False) -> ExperimentResult:
    """Full grid over cfg.protocols x cfg.strategies (+ optional late-fusion row)."""
    train_batch, test_batch = prepare_batches(cfg)
    rows = []
    for protocol in cfg.protocols:
        for strategy in cfg.strategies:
            rows.append(run_cell(train_batch, test_batch, protocol, strategy, cfg))
    if include_decision:
        rows.append(run_decision_level(train_batch, test_batch, cfg))
    return ExperimentResult(rows=rows, config=cfg)


def ratio_sweep(cfg: ExperimentConfig, protocol: str = "quadruple",
                strategy: str | None = None) -> list:
    """Retrain at each negative/positive ratio on a seeded negative subsample."""
    strategy = strategy or cfg.strategies[0]
    full = load_corpus(cfg)
    points = []
    for i, ratio in enumerate(cfg.np_ratios):
        ds = subsample_ratio(full, ratio, seed=cfg.seed * 1000 + i)
        train_ds, test_ds = split(ds, cfg.train_fraction, seed=cfg.seed)
        providers = ProviderSet.synthetic(text_dim=cfg.text_dim, image_dim=cfg.image_dim,
                                          seed=cfg.seed)
        train_batch = featurize_dataset(train_ds, providers)
        test_batch = featurize_dataset(test_ds, providers)
        row = run_cell(train_batch, test_batch, protocol, strategy, cfg)
        n_pos = sum(1 for r in ds if r.label == 1)
        points.append(RatioPoint(ratio=ratio, n_pos=n_pos, n_neg=len(ds) - n_pos,
                                 metrics=row.metrics))
    return points
