"""Command-line driver for the detection pipeline.

Exit codes: 0 success, 2 bad input (missing/corrupt files, config or
artifact hash mismatch), 3 internal failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from . import io, pipeline, svm
from .config import PipelineConfig, load_config
from .evaluate import class_subsample
from .ingest import (
    EcgEpisode,
    WfdbError,
    extract_episodes,
    read_csv_episode,
    read_record,
    write_csv_episode,
)
from .synth import make_corpus

log = logging.getLogger("vfdetect")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class InputError(Exception):
    pass


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.episode_length is not None:
        cfg = cfg.replace(episode_length_s=args.episode_length)
    return cfg


def _emit(text: str, out: str | None) -> None:
    if out:
        io.atomic_write(out, text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _expand(paths: list[str]) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out += sorted(p.glob("*.hea")) + sorted(p.glob("*.csv"))
        else:
            out.append(p)
    return out


def _load_inputs(paths: list[str], cfg: PipelineConfig) -> list[EcgEpisode]:
    """Episodes from WFDB records, CSV episodes and episode caches."""
    if not paths:
        raise InputError("no inputs")
    episodes, failed = [], 0
    for p in _expand(paths):
        try:
            if p.suffix == ".csv":
                eps = [read_csv_episode(p)]
            elif p.suffix in (".vfe", ".bin") or (p.is_file() and p.read_bytes()[:8] == io.EPISODE_MAGIC):
                eps, _ = io.read_episode_cache(p, cfg.stage_hash("ingest"))
            else:
                rec = read_record(p, vf_labels=cfg.vf_label_set())
                eps = extract_episodes(rec, cfg.episode_length_s, cfg.hop_s, cfg.channel, cfg.vf_threshold)
            n_vf = sum(e.is_vf for e in eps)
            log.info("%s: %d episodes (%d VF)", p, len(eps), n_vf)
            episodes += eps
        except (OSError, WfdbError, io.CacheError, ValueError, IndexError) as exc:
            failed += 1
            log.error("%s: %s", p, exc)
    if not episodes:
        raise InputError(f"no episodes read ({failed} inputs failed)")
    return episodes


def _write_episodes(episodes, args, cfg):
    if args.format == "csv":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, ep in enumerate(episodes):
            write_csv_episode(out / f"ep{i:06d}.csv", ep)
    else:
        io.write_episode_cache(args.out, episodes, cfg.stage_hash("ingest"))
    n_vf = sum(e.is_vf for e in episodes)
    log.info(
        "wrote %d episodes to %s: %d VF (%.1f%%), %d not VF",
        len(episodes), args.out, n_vf, 100.0 * n_vf / len(episodes), len(episodes) - n_vf,
    )


def cmd_ingest(args) -> int:
    cfg = _config(args)
    _write_episodes(_load_inputs(args.inputs, cfg), args, cfg)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    episodes = make_corpus(
        args.n_vf, args.n_not_vf, fs=args.fs, episode_length_s=cfg.episode_length_s,
        noise=args.noise, seed=cfg.seed,
    )
    _write_episodes(episodes, args, cfg)
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = _config(args)
    episodes = _load_inputs(args.inputs, cfg)
    lengths = {len(e.samples) for e in episodes}
    if len(lengths) != 1:
        raise InputError(f"episodes have mixed lengths {sorted(lengths)}")
    X, kept = pipeline.extract_features(episodes, cfg, jobs=args.jobs)
    if not len(kept):
        raise InputError("feature extraction failed on every episode")
    eps = [episodes[i] for i in kept]
    y = pipeline.episode_labels(eps)
    h = cfg.stage_hash("features")
    writer = io.write_feature_csv if args.format == "csv" else io.write_feature_cache
    writer(args.out, X, y, [e.source for e in eps], [e.start for e in eps], h)
    log.info("wrote %d x %d features to %s (%d skipped)", *X.shape, args.out, len(episodes) - len(kept))
    return EXIT_OK


def _features(args, cfg) -> io.FeatureTable:
    table = io.read_feature_cache(args.features, cfg.stage_hash("features"))
    if not len(table.y):
        raise InputError(f"{args.features}: no feature rows")
    return table


def _mask(args, cfg, table):
    mask, meta = io.read_mask(args.mask)
    if meta.get("features_hash") != table.config_hash:
        raise InputError(
            f"{args.mask} was ranked on features {meta.get('features_hash')}, "
            f"but {args.features} has {table.config_hash}"
        )
    if meta.get("config_hash") != cfg.stage_hash("rank"):
        raise InputError(f"{args.mask} was built with different ranking settings; rerun rank")
    if mask.dim != table.dim:
        raise InputError(f"mask is for {mask.dim} features, cache has {table.dim}")
    return mask


def cmd_rank(args) -> int:
    cfg = _config(args)
    table = _features(args, cfg)
    imp, mask = pipeline.rank_features(table.X, table.y, cfg)
    io.write_mask(args.out, mask, cfg.stage_hash("rank"), table.config_hash)
    io.write_importances(args.importances or args.out + ".importances", imp, cfg.stage_hash("rank"))
    log.info("kept %d of %d features", len(mask), mask.dim)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    table = _features(args, cfg)
    mask = _mask(args, cfg, table)
    model = pipeline.fit_model(table.X, table.y, mask, cfg)
    hashes = {
        "features": table.config_hash,
        "rank": cfg.stage_hash("rank"),
        "model": cfg.stage_hash("model"),
    }
    io.save_model(args.out, model, cfg.to_dict(), hashes)
    log.info("trained on %d rows: %d support vectors", len(table.y), len(model.dual_coef))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    table = _features(args, cfg)
    mask = _mask(args, cfg, table)
    report = pipeline.cross_validate(table.X, table.y, mask, cfg, jobs=args.jobs)
    _emit(report.to_text() + "\n\n" + report.to_keyvalue(), args.out)
    return EXIT_OK


def cmd_grid_search(args) -> int:
    cfg = _config(args)
    table = _features(args, cfg)
    mask = _mask(args, cfg, table)
    tr, va = class_subsample(
        table.y, cfg.split_vf_samples, cfg.split_not_vf_samples, cfg.seed, max_fraction=0.6
    )
    X = mask.apply(table.X)
    c_vals, g_vals = cfg.grid()
    result = svm.grid_search(
        X[tr], table.y[tr], X[va], table.y[va], svm.GridSearchSpec(c_vals, g_vals), tol=cfg.svm_tol
    )
    _emit(
        f"# train={len(tr)} validation={len(va)}\n{result.table()}\n"
        f"best_c={result.best_c:g} best_gamma={result.best_gamma:g}\n",
        args.out,
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _config(args)
    model, doc = io.load_model(args.model)
    want = (doc.get("hashes") or {}).get("features")
    if want is None:
        raise InputError(f"{args.model}: no feature hash recorded")
    if want != cfg.stage_hash("features"):
        raise InputError(
            f"{args.model} expects features built with config hash {want}, "
            f"the current config gives {cfg.stage_hash('features')}"
        )
    if args.features:
        table = io.read_feature_cache(args.features, want)
        X, names = table.X, list(zip(table.sources, table.starts.tolist()))
    else:
        episodes = _load_inputs(args.inputs, cfg)
        X, kept = pipeline.extract_features(episodes, cfg, jobs=args.jobs)
        names = [(episodes[i].source, episodes[i].start) for i in kept]
    if model.feature_mask is not None and X.shape[1] <= int(model.feature_mask.max(initial=-1)):
        raise InputError(f"features have {X.shape[1]} columns, model mask needs more")
    labels, dec = pipeline.predict_episodes(model, X)
    lines = ["source\tstart\tlabel\tdecision"] + [
        f"{src}\t{start}\t{'VF' if lab > 0 else 'NOT_VF'}\t{float(d)!r}"
        for (src, start), lab, d in zip(names, labels, dec)
    ]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value pipeline config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--episode-length", type=float, help="episode length in seconds")
    common.add_argument("--out", help="output file (stdout when omitted, where allowed)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--format", choices=("binary", "csv"), default="binary")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vfdetect", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="WFDB/CSV records -> episode cache")
    s.add_argument("inputs", nargs="*", help="record paths, .hea/.csv files or directories")
    s.set_defaults(func=cmd_ingest, needs_out=True)

    s = sub.add_parser("synth", parents=[common], help="synthetic VF-like / QRS-like episodes")
    s.add_argument("--n-vf", type=int, default=500)
    s.add_argument("--n-not-vf", type=int, default=500)
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--fs", type=float, default=250.0)
    s.set_defaults(func=cmd_synth, needs_out=True)

    s = sub.add_parser("features", parents=[common], help="episodes -> feature cache")
    s.add_argument("inputs", nargs="*", help="episode caches, CSV episodes or WFDB records")
    s.set_defaults(func=cmd_features, needs_out=True)

    s = sub.add_parser("rank", parents=[common], help="random-forest feature mask")
    s.add_argument("--features", required=True)
    s.add_argument("--importances", help="importance listing (default: <out>.importances)")
    s.set_defaults(func=cmd_rank, needs_out=True)

    for name, func, needs_out in (
        ("train", cmd_train, True),
        ("evaluate", cmd_evaluate, False),
        ("grid-search", cmd_grid_search, False),
    ):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--features", required=True)
        s.add_argument("--mask", required=True)
        s.set_defaults(func=func, needs_out=needs_out)

    s = sub.add_parser("predict", parents=[common], help="apply a saved model")
    s.add_argument("--model", required=True)
    s.add_argument("--features", help="feature cache to classify")
    s.add_argument("inputs", nargs="*", help="episodes to classify when --features is absent")
    s.set_defaults(func=cmd_predict, needs_out=False)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    if args.needs_out and not args.out:
        parser.error(f"{args.command} needs --out")
    try:
        return args.func(args)
    except (InputError, io.CacheError, WfdbError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except Exception:
        log.exception("internal failure")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
