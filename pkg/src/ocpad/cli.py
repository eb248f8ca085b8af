"""``ocpad`` command line: gen-data, train, score, bench.

Configuration precedence is flags > ``--config`` file > ``$OCPAD_SEED`` >
defaults. Every key is reachable with ``--set section.key=value``; run
``ocpad keys`` to list them with their defaults.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import bench
from .checkpoint import load_checkpoint, save_checkpoint, write_atomic
from .config import parse_assignment, resolve
from .data import Dataset, generate_synthetic, load_dataset, save_dataset, split_protocol
from .errors import ConfigError, OcpadError
from .evaluation import evaluate_per_identity


def _add_common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--seed", type=int, help="top-level seed (overrides $OCPAD_SEED)")


def build_parser():
    parser = argparse.ArgumentParser(prog="ocpad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic benchmark dataset")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--attack-offset", type=float, help="data.attack_offset")
    p.add_argument("--num-identities", type=int, help="data.num_identities")
    p.add_argument("--dim", type=int, help="data.dim")
    p.add_argument("--offset-mode", choices=("shared_direction", "per_identity_direction"))

    p = sub.add_parser("train", help="train or fit one method and save a checkpoint")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--method", default="proposed", choices=bench.METHODS)
    p.add_argument("--protocol", default="none", choices=("none", "p1", "p2"),
                   help="split the file first; 'none' means the file is the training set")
    p.add_argument("--fraction", type=float, help="split.fraction")
    p.add_argument("--epochs", type=int, help="trainer.epochs")
    p.add_argument("--pc-off", action="store_true", help="disable the pairwise-confusion term")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="per-epoch training log (network methods)")
    p.add_argument("--test-out", help="write the held-out split here (with --protocol)")

    p = sub.add_parser("score", help="score a dataset with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="identity,label,score lines")
    p.add_argument("--report", help="per-identity evaluation report (tab separated)")
    p.add_argument("--embed-out", help="export extractor embeddings (network checkpoints)")

    p = sub.add_parser("bench", help="compare methods over one or more seeds")
    _add_common(p)
    p.add_argument("--data", help="dataset file; default generates the synthetic benchmark per seed")
    p.add_argument("--methods", default=",".join(bench.DEFAULT_METHODS))
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--protocol", choices=("p1", "p2"), help="split.protocol")
    p.add_argument("--fraction", type=float, help="split.fraction")
    p.add_argument("--epochs", type=int, help="trainer.epochs")
    p.add_argument("--pc-off", action="store_true", help="add a proposed-nopc ablation row")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="machine-readable report path")

    sub.add_parser("keys", help="list configuration keys and defaults")
    return parser


def _overrides(args, mapping):
    pairs = [parse_assignment(s) for s in getattr(args, "set", [])]
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            pairs.append((key, value if isinstance(value, str) else repr(value) if isinstance(value, float) else str(value)))
    if getattr(args, "seed", None) is not None:
        pairs.append(("seed", str(args.seed)))
    return pairs


def cmd_gen_data(args):
    cfg = resolve(args.config, _overrides(args, {
        "attack_offset": "data.attack_offset",
        "num_identities": "data.num_identities",
        "dim": "data.dim",
        "offset_mode": "data.offset_mode",
    }))
    ds = generate_synthetic(dataclasses.replace(cfg.data, seed=cfg.seed))
    ds.metadata.update({f"config.{line.partition('=')[0]}": line.partition("=")[2] for line in cfg.echo()})
    save_dataset(ds, args.out)
    n_att = int(ds.is_attack.sum())
    print(f"wrote {args.out}: {len(ds.identity_set())} identities, "
          f"{len(ds) - n_att} bonafide + {n_att} attack samples, dim={ds.dim}")
    return 0


def _training_log_text(cfg_lines, log):
    out = [f"# config {line}" for line in cfg_lines]
    out.append("epoch\tsteps\tce\tpc\ttotal")
    for e in log.epochs:
        out.append(f"{e.epoch}\t{e.n_steps}\t{e.loss.ce!r}\t{e.loss.pc!r}\t{e.loss.total!r}")
    return "\n".join(out) + "\n"


def cmd_train(args):
    mapping = {"fraction": "split.fraction", "epochs": "trainer.epochs"}
    overrides = _overrides(args, mapping)
    if args.protocol != "none":
        overrides.append(("split.protocol", args.protocol))
    if args.pc_off:
        overrides.append(("trainer.pc_mode", "off"))
    cfg = resolve(args.config, overrides)
    data = load_dataset(args.data)
    test = None
    if args.protocol == "none":
        if np.any(data.is_attack):
            raise ConfigError(
                f"{args.data} contains attack samples; training is one-class "
                "(use --protocol p1/p2 to split a mixed file)"
            )
        train_set = data
    else:
        rng = np.random.default_rng([cfg.seed, 2])
        train_set, test = split_protocol(data, cfg.split.protocol, cfg.split.fraction, rng)
    model, running_mean, log = bench.fit_method(args.method, train_set, cfg, cfg.seed)
    echo = cfg.echo() + [f"method={args.method}", f"protocol={args.protocol}", f"data={args.data}"]
    if args.method in bench.NETWORK_METHODS:
        echo.append(f"trainer.mean_mode={model.config.mean_mode}")
        echo.append(f"trainer.pc_mode={model.config.pc_mode}")
    # write everything only after fitting succeeded
    save_checkpoint(model, args.out, kind=args.method, running_mean=running_mean,
                    extra={"config": echo})
    if args.log and log is not None:
        write_atomic(args.log, _training_log_text(echo, log))
    if args.test_out and test is not None:
        save_dataset(test, args.test_out)
    for line in echo:
        print(line)
    if log is not None:
        first, last = log.epochs[0].loss.total, log.epochs[-1].loss.total
        print(f"trained {args.method}: {len(log.epochs)} epochs, {len(log.steps)} steps, "
              f"total loss {first:.4f} -> {last:.4f}")
    else:
        print(f"fitted {args.method} on {len(train_set)} bonafide samples")
    print(f"checkpoint: {args.out}")
    return 0


def cmd_score(args):
    ckpt = load_checkpoint(args.model)
    data = load_dataset(args.data)
    scores = bench.score_method(ckpt.model, data.features)
    lines = [f"# model={args.model}", f"# kind={ckpt.kind}", f"# data={args.data}"]
    lines.extend(f"# config {c}" for c in ckpt.extra.get("config", []))
    lines.extend(f"{i},{l},{s!r}" for i, l, s in zip(data.identities, data.labels, scores.tolist()))
    report = None
    if np.any(data.is_attack) and np.any(~data.is_attack):
        report = evaluate_per_identity(scores, data.is_attack, data.identities)
    write_atomic(args.out, "\n".join(lines) + "\n")
    if args.embed_out:
        from .trainer import embed

        if ckpt.kind not in bench.NETWORK_METHODS:
            raise ConfigError("embeddings are only available for network checkpoints")
        feats = embed(ckpt.model, data.features)
        emb = Dataset(feats, data.identities, data.labels, {"source": args.data, "model": args.model})
        save_dataset(emb, args.embed_out)
    if report is not None:
        if args.report:
            write_atomic(args.report, "\n".join(report.to_lines()) + "\n")
        print(report.to_table())
    print(f"scores: {args.out}")
    return 0


def cmd_bench(args):
    mapping = {"protocol": "split.protocol", "fraction": "split.fraction", "epochs": "trainer.epochs"}
    cfg = resolve(args.config, _overrides(args, mapping))
    methods = list(bench.parse_methods(args.methods))
    if args.pc_off and "proposed-nopc" not in methods:
        methods.append("proposed-nopc")
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    seeds = [cfg.seed + i for i in range(args.seeds)]
    dataset = load_dataset(args.data) if args.data else None
    source = args.data if args.data else "synthetic"
    rows = bench.run_bench(cfg, methods, seeds, dataset, jobs=args.jobs)
    summaries = bench.summarize(rows, methods)
    if args.out:
        write_atomic(args.out, bench.format_report(cfg, rows, summaries, seeds, source))
    print(f"protocol={cfg.split.protocol} seeds={','.join(map(str, seeds))} source={source}")
    print("note: OC-SVM and SVDD are linear variants (no kernel)")
    print(bench.format_table(summaries, rows))
    return 0


def cmd_keys(args):
    from .config import RunConfig

    for line in RunConfig().echo():
        print(line)
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "score": cmd_score,
    "bench": cmd_bench,
    "keys": cmd_keys,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except bench.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OcpadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
