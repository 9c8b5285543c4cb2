"""Command-line entry points: generate, compare, train-lm, exact, verify-report.

Exit codes: 0 success, 2 configuration error, 3 language-model backend error.
Per-input chains are seeded as base seed + input index, so runs are
reproducible regardless of worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .lm import BackendError, BridgeLm, NGramModel
from .logic import FormulaError
from .sampler import run_chain
from .soft import SoftConstraintError
from .tasks import ConfigError, build_task, make_chain_config, validate_config
from .vocab import VocabError, load_vocabulary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BACKEND = 3


def _load_backend(lm_spec, vocab, order):
    if lm_spec.startswith("ngram:"):
        return NGramModel.load(lm_spec[len("ngram:"):], vocab)
    if lm_spec.startswith("bridge:"):
        client = BridgeLm(lm_spec[len("bridge:"):], vocab)
        client.healthz()  # fail fast before step 1
        return client
    raise ConfigError(
        f"language model must be 'ngram:<path>' or 'bridge:<url>', got {lm_spec!r}"
    )


def _read_inputs(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            rows.append(tuple(w for w in line.split("\t") if w))
    if not rows:
        raise ConfigError(f"{path}: no keyword sets found")
    return rows


_worker_cache = {}


def _cached_backend(vocab_path, lm_spec, order):
    """Vocab + model reused across inputs within one worker process."""
    key = (vocab_path, lm_spec)
    if key not in _worker_cache:
        vocab = load_vocabulary(vocab_path)
        _worker_cache[key] = (vocab, _load_backend(lm_spec, vocab, order))
    return _worker_cache[key]


def _run_one(args):
    """Worker body: one chain for one keyword set."""
    spec, method, keywords, seed, vocab_path, lm_spec = args
    vocab, lm = _cached_backend(vocab_path, lm_spec, spec.ngram_order)
    partition, constraints, soft = build_task(spec, vocab, keywords=keywords)
    config = make_chain_config(spec, method, keywords=keywords, seed=seed)
    result = run_chain(config, partition, constraints, lm, soft)
    from .vocab import detokenize

    return {
        "lines": list(result.jsonl_lines(vocab)),
        "best_sentence": detokenize(result.best.tokens, vocab),
        "best_log_pi": result.best.log_pi,
        "valid_pct": 100.0 * result.valid_fraction,
        "accept_pct": 100.0 * result.acceptance_rate,
        "mean_log_pi": result.mean_log_pi,
    }


def _aggregate(ok_rows):
    n = len(ok_rows)
    if n == 0:
        return {"n_ok": 0}
    return {
        "n_ok": n,
        "valid_pct": sum(r["valid_pct"] for r in ok_rows) / n,
        "accept_pct": sum(r["accept_pct"] for r in ok_rows) / n,
        "mean_log_pi": sum(r["mean_log_pi"] for r in ok_rows) / n,
    }


def cmd_generate(args):
    spec = validate_config(args.config)
    lm_spec = args.lm or spec.lm
    if not lm_spec:
        raise ConfigError("no language model: set [lm].backend or pass --lm")
    base_seed = spec.seed if args.seed is None else args.seed
    vocab = load_vocabulary(spec.vocab_path)
    _load_backend(lm_spec, vocab, spec.ngram_order)  # validate before fan-out
    inputs = _read_inputs(args.inputs) if args.inputs else [tuple(spec.keywords)]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    rows = []
    for index, keywords in enumerate(inputs):
        row = {"index": index, "keywords": list(keywords), "seed": base_seed + index}
        missing = [w for w in keywords if w not in vocab]
        if not keywords or missing:
            row["status"] = "skipped"
            row["reason"] = (
                "empty keyword set" if not keywords
                else "out-of-vocabulary keywords: " + ", ".join(missing)
            )
        else:
            row["status"] = "ok"
            jobs.append(
                (index, (spec, args.method, keywords, base_seed + index,
                         spec.vocab_path, lm_spec))
            )
        rows.append(row)

    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            outcomes = list(pool.map(_run_one, [j[1] for j in jobs]))
    else:
        outcomes = [_run_one(j[1]) for j in jobs]

    for (index, _), outcome in zip(jobs, outcomes):
        jsonl_name = f"input_{index:03d}.jsonl"
        (out_dir / jsonl_name).write_text(
            "".join(line + "\n" for line in outcome.pop("lines")), encoding="utf-8"
        )
        rows[index].update(outcome)
        rows[index]["jsonl"] = jsonl_name

    ok_rows = [r for r in rows if r["status"] == "ok"]
    report = {
        "method": args.method,
        "config": str(args.config),
        "config_sha256": spec.config_sha256,
        "base_seed": base_seed,
        "inputs": rows,
        "aggregate": _aggregate(ok_rows),
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    with open(out_dir / "best_sentences.txt", "w", encoding="utf-8") as fh:
        for r in ok_rows:
            fh.write(f"{r['index']}\t{r['best_sentence']}\n")
    lines = [
        f"method: {args.method}   inputs: {len(rows)} ok: {len(ok_rows)}",
    ]
    agg = report["aggregate"]
    if ok_rows:
        lines.append(
            f"valid%: {agg['valid_pct']:.2f}   accept%: {agg['accept_pct']:.2f}"
            f"   mean log pi: {agg['mean_log_pi']:.3f}"
        )
    for r in rows:
        if r["status"] == "ok":
            lines.append(
                f"[{r['index']:03d}] {' '.join(r['keywords'])!r}"
                f" -> {r['best_sentence']!r} (valid% {r['valid_pct']:.1f})"
            )
        else:
            lines.append(f"[{r['index']:03d}] skipped: {r['reason']}")
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines[:2]))
    print(f"report written to {out_dir}")
    return EXIT_OK


def sign_test_p_value(wins, losses):
    """One-sided exact sign test: P[Bin(n, 1/2) >= wins]."""
    n = wins + losses
    if n == 0:
        return 1.0
    return sum(math.comb(n, i) for i in range(wins, n + 1)) / 2.0 ** n


def _load_report(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from exc


def cmd_compare(args):
    a = _load_report(args.report_a)
    b = _load_report(args.report_b)
    a_in = [tuple(r["keywords"]) for r in a["inputs"]]
    b_in = [tuple(r["keywords"]) for r in b["inputs"]]
    if a_in != b_in:
        raise ConfigError("reports cover different inputs; refusing to compare")
    ok = [
        (ra, rb)
        for ra, rb in zip(a["inputs"], b["inputs"])
        if ra["status"] == "ok" and rb["status"] == "ok"
    ]
    if not ok:
        raise ConfigError("no inputs completed in both reports")
    wins = sum(1 for ra, rb in ok if ra["valid_pct"] > rb["valid_pct"])
    losses = sum(1 for ra, rb in ok if ra["valid_pct"] < rb["valid_pct"])
    p = sign_test_p_value(wins, losses)

    def mean(rows, key):
        return sum(r[key] for r in rows) / len(rows)

    headers = ["metric", a.get("method", "A"), b.get("method", "B"), "delta"]
    table = []
    for key, label in [
        ("valid_pct", "Valid%"),
        ("mean_log_pi", "mean log pi"),
        ("accept_pct", "Accept%"),
    ]:
        va = mean([ra for ra, _ in ok], key)
        vb = mean([rb for _, rb in ok], key)
        table.append((label, va, vb, va - vb))

    heldout = None
    if args.heldout_lm:
        if not args.vocab:
            raise ConfigError("--heldout-lm needs --vocab to score sentences")
        vocab = load_vocabulary(args.vocab)
        model = _load_backend(args.heldout_lm, vocab, order=3)
        from .vocab import tokenize

        def score_rows(rows):
            total = 0.0
            for r in rows:
                total += model.sentence_logscore(tokenize(r["best_sentence"], vocab))
            return total / len(rows)

        heldout = (
            score_rows([ra for ra, _ in ok]),
            score_rows([rb for _, rb in ok]),
        )
        table.append(("held-out log P", heldout[0], heldout[1], heldout[0] - heldout[1]))

    width = max(len(h) for h in headers + [t[0] for t in table]) + 2
    lines = ["".join(h.ljust(width) for h in headers)]
    for label, va, vb, delta in table:
        lines.append(
            label.ljust(width)
            + f"{va:.3f}".ljust(width)
            + f"{vb:.3f}".ljust(width)
            + f"{delta:+.3f}"
        )
    lines.append(
        f"sign test on per-input Valid%: wins={wins} losses={losses}"
        f" ties={len(ok) - wins - losses} p={p:.3e}"
    )
    text = "\n".join(lines)
    print(text)
    if args.out:
        payload = {
            "inputs_compared": len(ok),
            "rows": {label: {"a": va, "b": vb, "delta": d} for label, va, vb, d in table},
            "sign_test": {"wins": wins, "losses": losses, "p_value": p},
        }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_train_lm(args):
    vocab = load_vocabulary(args.vocab)
    model = NGramModel.train(args.corpus, vocab, order=args.order, add_k=args.add_k)
    model.save(args.out)
    print(f"trained order-{args.order} model on {args.corpus} -> {args.out}")
    return EXIT_OK


def cmd_exact(args):
    from .sampler import (
        ChainConfig,
        Target,
        empirical_distribution,
        exact_distribution,
        total_variation,
    )
    from .vocab import detokenize

    spec = validate_config(args.config)
    lm_spec = args.lm or spec.lm
    if not lm_spec:
        raise ConfigError("no language model: set [lm].backend or pass --lm")
    vocab = load_vocabulary(spec.vocab_path)
    lm = _load_backend(lm_spec, vocab, spec.ngram_order)
    partition, constraints, soft = build_task(spec, vocab)
    target = Target(partition, constraints, lm, soft)
    try:
        dist = exact_distribution(target, spec.max_len)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    top = sorted(dist.items(), key=lambda kv: -kv[1])[:20]
    report = {
        "states": len(dist),
        "max_len": spec.max_len,
        "top": [
            {"sentence": detokenize(t, vocab), "probability": p} for t, p in top
        ],
    }
    if args.chain_steps:
        import dataclasses

        histories = []
        for seed in range(args.seeds):
            config = make_chain_config(spec, args.method, seed=spec.seed + seed)
            config = dataclasses.replace(config, steps=args.chain_steps)
            result = run_chain(config, partition, constraints, lm, soft)
            histories.append(result.history[args.burn_in:])
        report["chain"] = {
            "method": args.method,
            "steps": args.chain_steps,
            "burn_in": args.burn_in,
            "seeds": args.seeds,
            "tv_distance": total_variation(empirical_distribution(histories), dist),
        }
    text = json.dumps(report, indent=2, ensure_ascii=False)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_verify_report(args):
    report_path = Path(args.report)
    report = _load_report(report_path)
    base = report_path.parent
    failures = []
    for row in report["inputs"]:
        if row["status"] != "ok":
            continue
        entries = []
        with open(base / row["jsonl"], encoding="utf-8") as fh:
            for line in fh:
                entries.append(json.loads(line))
        n = len(entries)
        recomputed = {
            "valid_pct": 100.0 * sum(e["constraint_error"] == 0 for e in entries) / n,
            "accept_pct": 100.0 * sum(e["accepted"] for e in entries) / n,
            "mean_log_pi": sum(e["log_pi"] for e in entries) / n,
            "best_log_pi": max(e["log_pi"] for e in entries),
        }
        for key, value in recomputed.items():
            if row[key] != value:
                failures.append(f"input {row['index']}: {key} {row[key]} != {value}")
    ok_rows = [r for r in report["inputs"] if r["status"] == "ok"]
    agg = _aggregate(ok_rows)
    for key, value in agg.items():
        if report["aggregate"].get(key) != value:
            failures.append(f"aggregate {key}: {report['aggregate'].get(key)} != {value}")
    if failures:
        for f in failures:
            print("MISMATCH:", f)
        raise ConfigError(f"report does not match its JSONL ({len(failures)} mismatches)")
    print(f"report verified: {len(ok_rows)} inputs, aggregates match the JSONL exactly")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tsmh",
        description="Constrained sentence sampling with tree-search proposals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="run chains for a file of keyword sets")
    g.add_argument("--config", required=True)
    g.add_argument("--method", choices=("tsmh", "cgmh"), default="tsmh")
    g.add_argument("--inputs", help="keyword sets, one per line, tab-separated")
    g.add_argument("--seed", type=int, default=None, help="override [chain].seed")
    g.add_argument("--out", required=True)
    g.add_argument("--lm", help="ngram:<path> or bridge:<url> (overrides config)")
    g.add_argument("--workers", type=int, default=1)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("compare", help="side-by-side metrics for two reports")
    c.add_argument("report_a")
    c.add_argument("report_b")
    c.add_argument("--heldout-lm", help="ngram:<path> scoring best sentences")
    c.add_argument("--vocab", help="vocabulary for --heldout-lm")
    c.add_argument("--out", help="also write the comparison as JSON")
    c.set_defaults(func=cmd_compare)

    t = sub.add_parser("train-lm", help="train and save an n-gram model")
    t.add_argument("--corpus", required=True)
    t.add_argument("--vocab", required=True)
    t.add_argument("--order", type=int, default=3)
    t.add_argument("--add-k", type=float, default=0.01)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train_lm)

    e = sub.add_parser("exact", help="exhaustive target distribution on a toy space")
    e.add_argument("--config", required=True)
    e.add_argument("--lm", help="ngram:<path> or bridge:<url> (overrides config)")
    e.add_argument("--method", choices=("tsmh", "cgmh"), default="tsmh")
    e.add_argument("--chain-steps", type=int, default=0,
                   help="also run chains and report the TV distance")
    e.add_argument("--burn-in", type=int, default=1000)
    e.add_argument("--seeds", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_exact)

    v = sub.add_parser("verify-report", help="recompute a report from its JSONL")
    v.add_argument("report")
    v.set_defaults(func=cmd_verify_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, VocabError, FormulaError, SoftConstraintError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
