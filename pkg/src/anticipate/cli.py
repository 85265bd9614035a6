"""Command-line entry point.

Subcommands: ``synth``, ``cooc-build``, ``correct``, ``reward``, ``train`` and
``eval``. Exit status is 0 on success, 2 for invalid input and 3 when an
internal consistency check fails.
"""

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from .cooccurrence import (
    SemanticCorrector,
    build_cooccurrence,
    map_decode,
    read_cooccurrence_csv,
    write_cooccurrence_csv,
)
from .exceptions import InputError, MalformedLine
from .grpo import GrpoConfig, GRPOTrainer, write_log_csv
from .metrics import (
    CATEGORIES,
    DEFAULT_HORIZONS,
    FreqRareSplit,
    ego4d_eval,
    make_freq_rare_split,
    map_eval,
)
from .rewards import RewardConfig, RewardScorer
from .structured import PromptTemplate
from .vocab import (
    SyntheticTaskConfig,
    decode_sequence,
    generate_synthetic_task,
    load_vocabulary,
    parse_annotations,
    write_annotations,
    write_vocabulary,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class InvariantViolation(RuntimeError):
    """An internal consistency check failed."""


def read_json(path, what):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{what} not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg})") from None


def read_jsonl(path, what):
    """Yield ``(line number, object)`` for every non-blank line."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{what} not found: {path}")
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedLine(lineno, "expected a JSON object")
            yield lineno, obj


def write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_jsonl(rows, path):
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def format_table(header, rows):
    cells = [list(map(str, header))] + [[fmt_cell(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def fmt_cell(x):
    if x is None:
        return "n/a"
    if isinstance(x, float):
        return f"{x:.4f}"
    return str(x)


def out_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def index_by_clip(records):
    out = {}
    for rec in records:
        if rec.clip_id in out:
            raise InputError(f"duplicate clip_id {rec.clip_id!r} in truth file")
        out[rec.clip_id] = rec
    return out


def cmd_synth(args):
    cfg = read_json(args.config, "task config") if args.config else {}
    if args.seed is not None:
        cfg = {**cfg, "seed": args.seed}
    task = SyntheticTaskConfig.from_dict(cfg)
    vocab, records, transitions = generate_synthetic_task(task)
    out = out_dir(args.out)
    write_vocabulary(vocab, out / "vocab.csv")
    write_annotations(records, vocab, out / "annotations.jsonl")
    write_json({
        "pairs": [[v, n] for v in vocab.verbs for n in vocab.nouns],
        "transitions": transitions.tolist(),
    }, out / "transitions.json")
    print(f"wrote {len(records)} records over {vocab.n_verbs} verbs x {vocab.n_nouns} nouns to {out}")
    return EXIT_OK


def cmd_cooc_build(args):
    vocab = load_vocabulary(args.vocab)
    records = parse_annotations(args.annotations, vocab)
    cooc = build_cooccurrence(records, vocab, include_future=args.include_future)
    write_cooccurrence_csv(cooc, vocab, args.out)
    print(f"wrote {vocab.n_verbs}x{vocab.n_nouns} counts ({int(cooc.counts.sum())} pairs) to {args.out}")
    return EXIT_OK


def cmd_correct(args):
    cooc, vocab = read_cooccurrence_csv(args.cooc)
    corrector = SemanticCorrector(correct=not args.raw).fit_counts(cooc, vocab)
    ids, rows = [], []
    for lineno, obj in read_jsonl(args.marginals, "marginals file"):
        try:
            p_verb = np.asarray(obj["p_verb"], dtype=float)
            p_noun = np.asarray(obj["p_noun"], dtype=float)
        except (KeyError, TypeError, ValueError):
            raise MalformedLine(lineno, "expected numeric p_verb and p_noun lists") from None
        if p_verb.shape != (vocab.n_verbs,) or p_noun.shape != (vocab.n_nouns,):
            raise MalformedLine(
                lineno, f"expected {vocab.n_verbs} verb and {vocab.n_nouns} noun probabilities"
            )
        ids.append(obj.get("id", lineno))
        rows.append(np.concatenate([p_verb, p_noun]))
    results = []
    if rows:
        X = np.vstack(rows)
        grids = corrector.score_grids(X)
        raw = SemanticCorrector(correct=False).fit_counts(cooc, vocab).score_grids(X)
        for clip, grid, raw_grid in zip(ids, grids, raw):
            v, n = map_decode(grid)
            rv, rn = map_decode(raw_grid)
            results.append({
                "id": clip,
                "verb": vocab.verbs[v], "noun": vocab.nouns[n],
                "raw_verb": vocab.verbs[rv], "raw_noun": vocab.nouns[rn],
                "score": float(grid[v, n]),
            })
    write_jsonl(results, args.out)
    changed = sum((r["verb"], r["noun"]) != (r["raw_verb"], r["raw_noun"]) for r in results)
    print(f"decoded {len(results)} rows, {changed} changed by correction")
    return EXIT_OK


def cmd_reward(args):
    vocab = load_vocabulary(args.vocab)
    truth = index_by_clip(parse_annotations(args.annotations, vocab))
    config = RewardConfig.from_json(args.reward_config) if args.reward_config else RewardConfig()
    scorer = RewardScorer(vocab, config)
    rows = []
    for lineno, obj in read_jsonl(args.generations, "generations file"):
        clip = obj.get("clip_id")
        text = obj.get("text")
        if not isinstance(text, str):
            raise MalformedLine(lineno, "missing string field 'text'")
        if clip not in truth:
            raise InputError(f"line {lineno}: no truth record for clip_id {clip!r}")
        rows.append({"clip_id": clip, **scorer.score(text, truth[clip]).to_dict()})
    out = out_dir(args.out)
    write_jsonl(rows, out / "rewards.jsonl")
    keys = ("s_len", "s_fmt", "s_lang", "s_acc", "s_int", "r_soft", "r_task", "r_total")
    summary = {
        "n": len(rows),
        "mean": {k: (float(np.mean([r[k] for r in rows])) if rows else None) for k in keys},
    }
    write_json(summary, out / "summary.json")
    print(format_table(["component", "mean"], [[k, summary["mean"][k]] for k in keys]))
    return EXIT_OK


def cmd_train(args):
    vocab = load_vocabulary(args.vocab)
    records = parse_annotations(args.annotations, vocab)
    if not records:
        raise InputError("annotations file has no records")
    cfg = read_json(args.config, "GRPO config") if args.config else {}
    if args.steps is not None:
        cfg = {**cfg, "steps": args.steps}
    if args.seed is not None:
        cfg = {**cfg, "seed": args.seed}
    # validate the whole config before building the estimator
    grpo = GrpoConfig.from_dict(cfg)
    params = {k: v for k, v in vars(grpo).items() if k != "seed"}
    trainer = GRPOTrainer(
        **params,
        context_order=args.context_order,
        reward_config=RewardConfig.from_json(args.reward_config) if args.reward_config else None,
        template=PromptTemplate.from_file(args.template) if args.template else None,
        random_state=grpo.seed,
    )
    trainer.fit(records, vocab)
    if len(trainer.log_) != grpo.steps:
        raise InvariantViolation(f"expected {grpo.steps} log rows, got {len(trainer.log_)}")
    out = out_dir(args.out)
    write_log_csv(trainer.log_, out / "train_log.csv")
    trainer.policy_.save(out / "policy.json")
    log = trainer.log_
    if log:
        window = min(50, len(log))
        head = [r["mean_reward"] for r in log[:window]]
        tail = [r["mean_reward"] for r in log[-window:]]
        print(format_table(
            ["steps", f"first {window} reward", f"last {window} reward", "final kl"],
            [[len(log), float(np.mean(head)), float(np.mean(tail)), log[-1]["kl"]]],
        ))
    print(f"wrote train_log.csv and policy.json to {out}")
    return EXIT_OK


def parse_horizons(text):
    try:
        horizons = tuple(int(h) for h in text.split(","))
    except ValueError:
        raise InputError(f"--horizons must be comma-separated integers, got {text!r}") from None
    if not horizons or any(not 0 < h < 100 for h in horizons):
        raise InputError("horizons must lie strictly between 0 and 100")
    return horizons


def eval_ego4d(args):
    if args.vocab is None:
        raise InputError("--vocab is required in ego4d mode")
    vocab = load_vocabulary(args.vocab)
    truth = index_by_clip(parse_annotations(args.truth, vocab))
    per_clip = []
    for lineno, obj in read_jsonl(args.predictions, "predictions file"):
        clip = obj.get("clip_id")
        if clip not in truth:
            raise InputError(f"line {lineno}: no truth record for clip_id {clip!r}")
        cands = obj.get("candidates")
        if not isinstance(cands, list):
            raise MalformedLine(lineno, "missing list field 'candidates'")
        seqs = [decode_sequence(c, vocab, lineno) for c in cands]
        try:
            report = ego4d_eval(seqs, truth[clip].future)
        except InputError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
        per_clip.append({"clip_id": clip, **vars(report)})
    if not per_clip:
        raise InputError("predictions file is empty")
    views = ("verb_ed", "noun_ed", "action_ed")
    result = {
        "mode": "ego4d",
        "n_clips": len(per_clip),
        "mean": {v: float(np.mean([r[v] for r in per_clip])) for v in views},
        "per_clip": per_clip,
    }
    table = format_table(["view", "min ED"], [[v.split("_")[0], result["mean"][v]] for v in views])
    return result, table


def load_split(args, counts):
    if args.freq_split:
        obj = read_json(args.freq_split, "freq/rare split")
        try:
            return FreqRareSplit(frozenset(obj["freq"]), frozenset(obj["rare"]))
        except (KeyError, TypeError, ValueError):
            raise InputError("freq/rare split needs integer lists 'freq' and 'rare'") from None
    if args.class_counts:
        counts = read_json(args.class_counts, "class counts")
    return make_freq_rare_split(counts)


def stack_by_horizon(rows, field, horizons, n_classes, lineno_of):
    out = {}
    for h in horizons:
        mats = []
        for clip, obj in rows:
            vec = obj.get(field, {}).get(str(h)) if isinstance(obj.get(field), dict) else None
            if not isinstance(vec, list) or len(vec) != n_classes:
                raise MalformedLine(
                    lineno_of[clip], f"'{field}' needs {n_classes} values at horizon {h}"
                )
            mats.append(vec)
        out[h] = np.asarray(mats, dtype=float)
    return out


def eval_map(args):
    horizons = parse_horizons(args.horizons)
    truth, lineno_of = {}, {}
    for lineno, obj in read_jsonl(args.truth, "truth file"):
        clip = obj.get("clip_id")
        if clip in truth:
            raise MalformedLine(lineno, f"duplicate clip_id {clip!r}")
        truth[clip] = obj
        lineno_of[clip] = lineno
    preds, pred_line = {}, {}
    for lineno, obj in read_jsonl(args.predictions, "predictions file"):
        clip = obj.get("clip_id")
        if clip not in truth:
            raise InputError(f"line {lineno}: no truth record for clip_id {clip!r}")
        preds[clip] = obj
        pred_line[clip] = lineno
    if not preds:
        raise InputError("predictions file is empty")
    clips = sorted(preds, key=pred_line.get)
    first = preds[clips[0]].get("scores", {})
    first = first.get(str(horizons[0])) if isinstance(first, dict) else None
    if not isinstance(first, list) or not first:
        raise MalformedLine(pred_line[clips[0]], f"missing scores at horizon {horizons[0]}")
    n_classes = len(first)
    scores = stack_by_horizon([(c, preds[c]) for c in clips], "scores", horizons, n_classes, pred_line)
    labels = stack_by_horizon([(c, truth[c]) for c in clips], "labels", horizons, n_classes, lineno_of)
    counts = sum(labels[h] for h in horizons).sum(axis=0)
    report = map_eval(scores, labels, load_split(args, counts), horizons)
    result = {"mode": "map", "n_clips": len(clips), **report.to_dict()}
    rows = [[f"P={h}", *(report.per_horizon[h][c] for c in CATEGORIES)] for h in horizons]
    rows.append(["average", *(report.average[c] for c in CATEGORIES)])
    return result, format_table(["horizon", *CATEGORIES], rows)


def cmd_eval(args):
    result, table = eval_ego4d(args) if args.mode == "ego4d" else eval_map(args)
    write_json(result, args.out)
    print(table)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="anticipate",
        description="Action anticipation toolkit: data synthesis, semantic correction, "
                    "rewards, GRPO training on a toy policy, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic Markov-chain anticipation task")
    p.add_argument("--config", help="task config JSON (verb_count, noun_count, K, Z, ...)")
    p.add_argument("--seed", type=int, help="overrides the seed in --config")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("cooc-build", help="count verb-noun co-occurrences")
    p.add_argument("--vocab", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--include-future", action="store_true",
                   help="also count future actions of each record")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_cooc_build)

    p = sub.add_parser("correct", help="decode pairs from verb/noun marginals")
    p.add_argument("--cooc", required=True, help="co-occurrence CSV from cooc-build")
    p.add_argument("--marginals", required=True, help="JSONL rows with id, p_verb, p_noun")
    p.add_argument("--raw", action="store_true", help="skip the co-occurrence correction")
    p.add_argument("--out", required=True, help="output JSONL")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("reward", help="score generations against annotations")
    p.add_argument("--vocab", required=True)
    p.add_argument("--annotations", required=True, help="truth annotations JSONL")
    p.add_argument("--generations", required=True, help="JSONL rows with clip_id and text")
    p.add_argument("--reward-config", help="reward weights / parameters JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_reward)

    p = sub.add_parser("train", help="train the toy policy with GRPO")
    p.add_argument("--vocab", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--config", help="GRPO config JSON")
    p.add_argument("--reward-config", help="reward weights / parameters JSON")
    p.add_argument("--template", help="prompt template file")
    p.add_argument("--context-order", type=int, choices=(0, 1), default=1)
    p.add_argument("--steps", type=int, help="overrides steps in --config")
    p.add_argument("--seed", type=int, help="overrides seed in --config")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="edit-distance or mAP evaluation")
    p.add_argument("--mode", choices=("ego4d", "map"), required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True,
                   help="annotations JSONL (ego4d) or per-horizon label JSONL (map)")
    p.add_argument("--vocab", help="vocabulary CSV (ego4d mode)")
    p.add_argument("--horizons", default=",".join(map(str, DEFAULT_HORIZONS)))
    p.add_argument("--freq-split", help="JSON with explicit 'freq' and 'rare' class lists")
    p.add_argument("--class-counts", help="JSON list of training counts per class")
    p.add_argument("--out", required=True, help="output report JSON")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        traceback.print_exc()
        print("internal error", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
