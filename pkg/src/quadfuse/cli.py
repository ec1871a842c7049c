"""Command-line front end for the dealer-detection toolkit.

Every subcommand takes ``--config`` (INI file, flat key=value under
sections), ``--seed`` (overrides any configured seed) and, where it writes
artifacts, ``--out``. The resolved configuration actually used is echoed to
``config_used.ini`` inside the output directory.

Exit codes: 0 success, 2 configuration problem, 3 data problem.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from contextlib import contextmanager
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .annotation import AnnotationError, AnnotationStore, create_app, store_from_world
from .classify import (
    SoftmaxClassifier,
    TrainConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
)
from .community import (
    CommunityError,
    betweenness,
    build_graph,
    clustering_coefficient,
    detect_communities,
    save_edge_list,
    save_sunburst,
    sunburst_export,
)
from .crawlsim import (
    CrawlError,
    WorldSpec,
    generate_world,
    load_world,
    run_crawl,
    save_world,
    seed_hashtags,
)
from .embedding import ProviderSet, featurize_dataset
from .experiments import (
    ExperimentConfig,
    _take,
    _valid_rows,
    ratio_sweep,
    run_experiment,
)
from .fusion import FusionConfig, FusionError, QuadrupleFusionTransformer
from .records import DatasetError, load_dataset, save_dataset
from .synth import SynthSpec, generate_dataset


class ConfigError(Exception):
    """Anything wrong with flags or config values, as opposed to data."""


@contextmanager
def _config_phase():
    """Translate validation failures while building configs into ConfigError."""
    try:
        yield
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path is None:
        return parser
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        parser.read(p, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    return parser


_BOOLS = {"1": True, "true": True, "yes": True, "on": True,
          "0": False, "false": False, "no": False, "off": False}


def cfg_get(cp, section: str, key: str, default, cast=str):
    """Typed config lookup; ``cast=tuple`` parses a comma list of strings."""
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    try:
        if cast is bool:
            return _BOOLS[raw.lower()]
        if cast is tuple:
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        return cast(raw)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def cfg_floats(cp, section: str, key: str, default) -> tuple:
    items = cfg_get(cp, section, key, None, tuple)
    if items is None:
        return default
    try:
        return tuple(float(s) for s in items)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: expected numbers") from exc


def _eff_seed(args, cp, section: str) -> int:
    if args.seed is not None:
        return args.seed
    return cfg_get(cp, section, "seed", 0, int)


def _prepare_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt_value(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(str(v) for v in value)
    if value is None:
        return ""
    return str(value)


def write_config_echo(out: Path, sections: dict) -> None:
    echo = configparser.ConfigParser()
    for name, mapping in sections.items():
        echo[name] = {key: _fmt_value(value) for key, value in mapping.items()}
    with (out / "config_used.ini").open("w", encoding="utf-8") as fh:
        echo.write(fh)


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n",
                    encoding="utf-8")


# ---------------------------------------------------------------------------
# config -> dataclass builders


def _synth_spec(cp, seed: int) -> SynthSpec:
    with _config_phase():
        return SynthSpec(
            n_records=cfg_get(cp, "synth", "n_records", 500, int),
            dealer_fraction=cfg_get(cp, "synth", "dealer_fraction", 0.5, float),
            missing_rate=cfg_get(cp, "synth", "missing_rate", 0.2, float),
            noise_rate=cfg_get(cp, "synth", "noise_rate", 0.1, float),
            invalid_fraction=cfg_get(cp, "synth", "invalid_fraction", 0.0, float),
            tags_per_record=cfg_get(cp, "synth", "tags_per_record", 3, int),
            seed=seed,
        )


def _train_config(cp, seed: int) -> TrainConfig:
    with _config_phase():
        return TrainConfig(
            lr=cfg_get(cp, "train", "lr", 0.001, float),
            beta1=cfg_get(cp, "train", "beta1", 0.9, float),
            beta2=cfg_get(cp, "train", "beta2", 0.999, float),
            epsilon=cfg_get(cp, "train", "epsilon", 1e-8, float),
            batch_size=cfg_get(cp, "train", "batch_size", 10, int),
            epochs=cfg_get(cp, "train", "epochs", 50, int),
            threshold=cfg_get(cp, "train", "threshold", 0.5, float),
            seed=seed,
        )


def _fusion_config(cp, seed: int) -> FusionConfig:
    with _config_phase():
        return FusionConfig(
            strategy=cfg_get(cp, "fusion", "strategy", "concat"),
            protocol=cfg_get(cp, "fusion", "protocol", "quadruple"),
            sketch_dim=cfg_get(cp, "fusion", "sketch_dim", 256, int),
            fbc_atoms=cfg_get(cp, "fusion", "fbc_atoms", 64, int),
            fbc_rank=cfg_get(cp, "fusion", "fbc_rank", 2, int),
            fbc_lambda=cfg_get(cp, "fusion", "fbc_lambda", 0.01, float),
            stabilize=cfg_get(cp, "fusion", "stabilize", True, bool),
            seed=seed,
        )


def _embed_dims(cp) -> tuple[int, int]:
    with _config_phase():
        return (cfg_get(cp, "embed", "text_dim", 64, int),
                cfg_get(cp, "embed", "image_dim", 128, int))


def _experiment_config(cp, args, seed: int) -> ExperimentConfig:
    dataset_path = getattr(args, "data", None) or \
        cfg_get(cp, "experiment", "dataset_path", None)
    text_dim, image_dim = _embed_dims(cp)
    with _config_phase():
        return ExperimentConfig(
            dataset_path=dataset_path,
            synth=None if dataset_path else _synth_spec(cp, seed),
            protocols=cfg_get(cp, "experiment", "protocols",
                              ("post_level", "homepage_level", "quadruple"), tuple),
            strategies=cfg_get(cp, "experiment", "strategies", ("concat",), tuple),
            train=_train_config(cp, seed),
            text_dim=text_dim,
            image_dim=image_dim,
            train_fraction=cfg_get(cp, "experiment", "train_fraction", 0.7, float),
            np_ratios=cfg_floats(cp, "experiment", "np_ratios", (2.0, 4.0, 6.0, 8.0)),
            sketch_dim=cfg_get(cp, "fusion", "sketch_dim", 256, int),
            fbc_atoms=cfg_get(cp, "fusion", "fbc_atoms", 64, int),
            fbc_rank=cfg_get(cp, "fusion", "fbc_rank", 2, int),
            fbc_lambda=cfg_get(cp, "fusion", "fbc_lambda", 0.01, float),
            seed=seed,
        )


def _classifier(tcfg: TrainConfig) -> SoftmaxClassifier:
    return SoftmaxClassifier(lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2,
                             epsilon=tcfg.epsilon, batch_size=tcfg.batch_size,
                             epochs=tcfg.epochs, seed=tcfg.seed,
                             threshold=tcfg.threshold)


def _fused_design(ds, fcfg: FusionConfig, text_dim: int, image_dim: int):
    """Featurize, drop non-fusable rows, and build the fused design matrix."""
    providers = ProviderSet.synthetic(text_dim, image_dim, fcfg.seed)
    batch = featurize_dataset(ds, providers)
    transformer = QuadrupleFusionTransformer(
        strategy=fcfg.strategy, protocol=fcfg.protocol,
        sketch_dim=fcfg.sketch_dim, fbc_atoms=fcfg.fbc_atoms,
        fbc_rank=fcfg.fbc_rank, fbc_lambda=fcfg.fbc_lambda,
        seed=fcfg.seed, stabilize=fcfg.stabilize)
    keep = _valid_rows(batch)
    if fcfg.strategy != "concat":
        keep = keep & transformer.rows_fusable(batch)
    excluded = int((~keep).sum())
    batch = _take(batch, keep)
    if len(batch) == 0:
        raise DatasetError("no fusable records left after filtering")
    X = transformer.fit(batch).transform(batch)
    return X, batch, transformer, excluded


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_synth(args, cp) -> int:
    seed = _eff_seed(args, cp, "synth")
    spec = _synth_spec(cp, seed)
    out = _prepare_out(args)
    ds = generate_dataset(spec)
    save_dataset(ds, out / "dataset.jsonl")
    write_config_echo(out, {"synth": asdict(spec)})
    print(f"wrote {len(ds)} records to {out / 'dataset.jsonl'}")
    return 0


def cmd_embed(args, cp) -> int:
    seed = _eff_seed(args, cp, "embed")
    text_dim, image_dim = _embed_dims(cp)
    out = _prepare_out(args)
    ds = load_dataset(args.data)
    batch = featurize_dataset(ds, ProviderSet.synthetic(text_dim, image_dim, seed))
    np.savez(out / "features.npz", pc=batch.pc, pi=batch.pi, hb=batch.hb,
             hi=batch.hi, mask=batch.mask, y=batch.y,
             user_ids=np.array(batch.user_ids))
    write_config_echo(out, {"embed": {"text_dim": text_dim,
                                      "image_dim": image_dim,
                                      "seed": seed, "data": args.data}})
    print(f"embedded {len(batch)} records -> {out / 'features.npz'}")
    return 0


def cmd_train(args, cp) -> int:
    seed = _eff_seed(args, cp, "train")
    tcfg = _train_config(cp, seed)
    fcfg = _fusion_config(cp, seed)
    text_dim, image_dim = _embed_dims(cp)
    out = _prepare_out(args)

    ds = load_dataset(args.data)
    X, batch, _, excluded = _fused_design(ds, fcfg, text_dim, image_dim)
    clf = _classifier(tcfg).fit(X, batch.y)
    save_checkpoint(out / "model.ckpt", clf, strategy=fcfg.strategy)
    metrics = evaluate(clf, X, batch.y)
    _write_json(out / "train_metrics.json",
                {"excluded": excluded, "final_loss": clf.loss_curve_[-1],
                 **metrics.to_dict()})
    write_config_echo(out, {"train": asdict(tcfg), "fusion": asdict(fcfg),
                            "embed": {"text_dim": text_dim,
                                      "image_dim": image_dim}})
    print(metrics.format_table())
    print(f"checkpoint -> {out / 'model.ckpt'}")
    return 0


def cmd_eval(args, cp) -> int:
    clf = load_checkpoint(args.model)
    fcfg = replace(_fusion_config(cp, int(clf.seed)), strategy=clf.strategy_)
    text_dim, image_dim = _embed_dims(cp)
    out = _prepare_out(args)

    ds = load_dataset(args.data)
    X, batch, _, excluded = _fused_design(ds, fcfg, text_dim, image_dim)
    if X.shape[1] != clf.n_features_in_:
        raise DatasetError(
            f"fused width {X.shape[1]} does not match checkpoint "
            f"({clf.n_features_in_}); align [fusion]/[embed] settings")
    metrics = evaluate(clf, X, batch.y)
    _write_json(out / "metrics.json", {"excluded": excluded, **metrics.to_dict()})
    write_config_echo(out, {"fusion": asdict(fcfg),
                            "embed": {"text_dim": text_dim,
                                      "image_dim": image_dim}})
    print(metrics.format_table())
    return 0


def cmd_experiment(args, cp) -> int:
    seed = _eff_seed(args, cp, "experiment")
    ecfg = _experiment_config(cp, args, seed)
    out = _prepare_out(args)
    result = run_experiment(ecfg, include_decision=args.decision)
    _write_json(out / "results.json", result.to_dicts())
    echo = {"experiment": {"protocols": ecfg.protocols,
                           "strategies": ecfg.strategies,
                           "train_fraction": ecfg.train_fraction,
                           "dataset_path": ecfg.dataset_path,
                           "seed": ecfg.seed},
            "train": asdict(ecfg.train),
            "embed": {"text_dim": ecfg.text_dim, "image_dim": ecfg.image_dim}}
    if ecfg.synth is not None:
        echo["synth"] = asdict(ecfg.synth)
    write_config_echo(out, echo)
    print(result.format_table())
    return 0


def cmd_ratio_sweep(args, cp) -> int:
    seed = _eff_seed(args, cp, "experiment")
    ecfg = _experiment_config(cp, args, seed)
    with _config_phase():
        protocol = cfg_get(cp, "experiment", "sweep_protocol", "quadruple")
        strategy = cfg_get(cp, "experiment", "sweep_strategy", None)
    out = _prepare_out(args)
    points = ratio_sweep(ecfg, protocol=protocol, strategy=strategy)
    _write_json(out / "sweep.json", [p.to_dict() for p in points])
    echo = {"experiment": {"np_ratios": ecfg.np_ratios,
                           "sweep_protocol": protocol,
                           "sweep_strategy": strategy or "",
                           "seed": ecfg.seed},
            "train": asdict(ecfg.train)}
    if ecfg.synth is not None:
        echo["synth"] = asdict(ecfg.synth)
    write_config_echo(out, echo)
    for point in points:
        print(f"1:{point.ratio:g}  pos={point.n_pos}  neg={point.n_neg}  "
              f"acc={point.metrics.accuracy:.4f}  f1={point.metrics.f1:.4f}")
    return 0


def _world_spec(cp, seed: int) -> WorldSpec:
    with _config_phase():
        return WorldSpec(
            n_posts=cfg_get(cp, "crawl", "n_posts", 200, int),
            n_users=cfg_get(cp, "crawl", "n_users", 80, int),
            dealer_fraction=cfg_get(cp, "crawl", "dealer_fraction", 0.2, float),
            dealer_post_fraction=cfg_get(cp, "crawl", "dealer_post_fraction",
                                         0.3, float),
            tags_per_post=cfg_get(cp, "crawl", "tags_per_post", 3, int),
            n_components=cfg_get(cp, "crawl", "n_components", 1, int),
            seed=seed,
        )


def cmd_crawl_sim(args, cp) -> int:
    seed = _eff_seed(args, cp, "crawl")
    with _config_phase():
        seeds = (tuple(args.seeds.split(",")) if args.seeds
                 else cfg_get(cp, "crawl", "seeds", ("xanax",), tuple))
        seeds = tuple(s for s in seeds if s.strip())
        if not seeds:
            raise ConfigError("crawl seeds must not be empty")
        dealer_threshold = (args.threshold if args.threshold is not None
                            else cfg_get(cp, "crawl", "dealer_threshold", 50, int))
        detector = cfg_get(cp, "crawl", "detector_threshold", 0.5, float)
    out = _prepare_out(args)

    if args.world:
        world = load_world(args.world)
        world_path = args.world
    else:
        world = generate_world(_world_spec(cp, seed))
        world_path = out / "world.jsonl"
        save_world(world, world_path)
    state = seed_hashtags(seeds, threshold=dealer_threshold)
    report = run_crawl(state, world, detector_threshold=detector)
    _write_json(out / "crawl_report.json", report.to_dict())
    write_config_echo(out, {"crawl": {"seeds": seeds,
                                      "dealer_threshold": dealer_threshold,
                                      "detector_threshold": detector,
                                      "world": str(world_path),
                                      "seed": seed}})
    print(f"steps={report.steps}  accounts={len(report.collected_accounts)}  "
          f"recall={report.dealer_recall:.3f}  "
          f"coverage={report.hashtag_coverage:.3f}")
    return 0


def _tag_sets(ds) -> list:
    posts = [set(rec.hashtags) for rec in ds if rec.hashtags]
    if not posts:
        raise DatasetError("dataset has no hashtags")
    return posts


def cmd_community(args, cp) -> int:
    with _config_phase():
        max_reported = cfg_get(cp, "community", "max_reported", 10, int)
    out = _prepare_out(args)
    posts = _tag_sets(load_dataset(args.data))
    graph = build_graph(posts)
    part = detect_communities(graph, max_nodes_per_cluster=max_reported)
    central = betweenness(graph)
    coeffs = clustering_coefficient(graph)
    top = sorted(central.items(), key=lambda kv: (-kv[1], kv[0]))[:20]
    _write_json(out / "community.json", {
        "n_nodes": graph.n_nodes(),
        "n_clusters": len(part.clusters),
        "modularity": part.modularity,
        "clusters": part.reported,
        "betweenness_top": [{"tag": t, "score": s} for t, s in top],
        "mean_clustering": (sum(coeffs.values()) / len(coeffs)) if coeffs else 0.0,
    })
    save_edge_list(graph, out / "edges.txt")
    write_config_echo(out, {"community": {"max_reported": max_reported,
                                          "data": args.data}})
    print(f"{len(part.clusters)} communities over {graph.n_nodes()} tags, "
          f"modularity {part.modularity:.4f}")
    return 0


def cmd_sunburst(args, cp) -> int:
    with _config_phase():
        grouping = args.grouping or cfg_get(cp, "sunburst", "grouping", "drug_type")
        seed_tag = args.seed_tag or cfg_get(cp, "sunburst", "seed_tag", None)
        taxonomy = cfg_get(cp, "sunburst", "taxonomy_path", None)
        places = cfg_get(cp, "sunburst", "place_path", None)
        if grouping not in ("drug_type", "geography"):
            raise ConfigError(f"unknown grouping {grouping!r}")
        if grouping == "geography" and not seed_tag:
            raise ConfigError("geography grouping requires --seed-tag")
    out = _prepare_out(args)
    posts = _tag_sets(load_dataset(args.data))
    doc = sunburst_export(posts, grouping=grouping, seed_tag=seed_tag,
                          taxonomy_path=taxonomy, place_path=places)
    save_sunburst(doc, out / "sunburst.json")
    write_config_echo(out, {"sunburst": {"grouping": grouping,
                                         "seed_tag": seed_tag,
                                         "data": args.data}})
    print(f"sunburst with {len(doc['children'])} groups -> "
          f"{out / 'sunburst.json'}")
    return 0


def _token_table(cp) -> dict:
    raw = cfg_get(cp, "annotation", "tokens", None)
    if not raw:
        raise ConfigError(
            "[annotation] tokens is required, e.g. tokens = tok1:alice, tok2:bob")
    table = {}
    for part in raw.split(","):
        token, sep, name = part.strip().partition(":")
        if not sep or not token or not name:
            raise ConfigError(f"bad token entry {part.strip()!r}, "
                              "expected token:annotator")
        table[token] = name
    return table


def cmd_serve_annotation(args, cp) -> int:
    tokens = _token_table(cp)
    if args.world:
        store = store_from_world(load_world(args.world), log_path=args.log)
    elif args.log and Path(args.log).is_file():
        store = AnnotationStore.replay(args.log)
    else:
        raise ConfigError("serve-annotation needs --world or an existing --log")
    app = create_app(store, tokens, static_dir=args.static_dir)
    if args.check:
        stats = store.stats()
        print(f"annotation service ok: {stats['tasks']} tasks, "
              f"{len(tokens)} tokens")
        return 0
    import uvicorn

    print(f"serving annotation API on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_export_dataset(args, cp) -> int:
    store = AnnotationStore.replay(args.log)
    out = _prepare_out(args)
    ds = store.export_labeled()
    save_dataset(ds, out / "labeled.jsonl")
    write_config_echo(out, {"export": {"log": args.log,
                                       "records": len(ds)}})
    print(f"exported {len(ds)} labeled records -> {out / 'labeled.jsonl'}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadfuse",
        description="Dealer-account detection: synthesis, fusion, training, "
                    "crawl simulation, hashtag analysis, annotation service.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, needs_out=True, needs_data=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override every configured seed")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        if needs_data:
            p.add_argument("--data", required=True,
                           help="line-delimited JSON dataset")
        p.set_defaults(func=func)
        return p

    add("gen-synth", cmd_gen_synth, "generate a synthetic labeled dataset")
    add("embed", cmd_embed, "featurize a dataset into arrays", needs_data=True)
    add("train", cmd_train, "train a fused classifier", needs_data=True)

    p = add("eval", cmd_eval, "evaluate a checkpoint on a dataset",
            needs_data=True)
    p.add_argument("--model", required=True, help="checkpoint file")

    p = add("experiment", cmd_experiment,
            "protocol x strategy grid on one shared split")
    p.add_argument("--data", default=None, help="dataset (default: synthesize)")
    p.add_argument("--decision", action="store_true",
                   help="append the decision-level fusion baseline")

    p = add("ratio-sweep", cmd_ratio_sweep,
            "repeat training over negative:positive ratios")
    p.add_argument("--data", default=None, help="dataset (default: synthesize)")

    p = add("crawl-sim", cmd_crawl_sim, "run the hashtag crawl simulator")
    p.add_argument("--world", default=None, help="existing world file")
    p.add_argument("--seeds", default=None, help="comma list of seed hashtags")
    p.add_argument("--threshold", type=int, default=None,
                   help="stop after collecting this many dealers")

    add("community", cmd_community, "hashtag graph communities + centralities",
        needs_data=True)

    p = add("sunburst", cmd_sunburst, "two-level grouped hashtag shares",
            needs_data=True)
    p.add_argument("--grouping", default=None,
                   choices=("drug_type", "geography"))
    p.add_argument("--seed-tag", default=None,
                   help="anchor hashtag for geography grouping")

    p = add("serve-annotation", cmd_serve_annotation,
            "run the annotation HTTP service", needs_out=False)
    p.add_argument("--world", default=None, help="world file to build tasks from")
    p.add_argument("--log", default=None, help="append-only event log path")
    p.add_argument("--static-dir", default=None, help="UI bundle to serve at /")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--check", action="store_true",
                   help="validate wiring and exit without serving")

    p = add("export-dataset", cmd_export_dataset,
            "replay an annotation log and export labeled records")
    p.add_argument("--log", required=True, help="annotation event log")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cp = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args, cp)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, FusionError, CrawlError, CommunityError,
            AnnotationError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
