"""Command-line entry point: ``codemix {synth,train,attack,defend,sweep,analyze}``.

Every command writes into ``--out``; models live under ``<out>/seed-<s>/``
so that several seeds can be run side by side. Options may also come from a
``key=value`` file given with ``--config``; flags on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .blend import AttackConfig, codemix_dataset, generate_dataset, outcomes_to_jsonl
from .config import (RunConfig, parse_languages, parse_ratios, parse_seeds,
                     read_config_file)
from .corpus import (Dataset, Lexicon, _seed_rng, lexicon_path, lexicon_to_tsv, load_dataset,
                     load_lexicon, pseudo_lexicon, split_to_tsv, synth_benchmark, VocabSpec)
from .errors import CodemixError, ConfigError
from .metrics import SeedRun, accuracy, ifdf_analysis, ifdf_csv, ratio_sweep, robustness_report
from .model import load_model, model_to_json, preset, train
from .shot import DefenseStrategy, Strategy, run_strategy
from .translator import HttpTranslator, TranslatorClientConfig

logger = logging.getLogger("codemix")

EXIT_USAGE = 2
EXIT_FAILURE = 1


class Outputs:
    """Tracks files written by a command so a failed run leaves nothing half-done."""

    def __init__(self):
        self.written: list[Path] = []

    def write(self, path: Path, text: str) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".part")
        tmp.write_text(text, encoding="utf-8", newline="\n")
        os.replace(tmp, path)
        self.written.append(path)
        return path

    def rollback(self) -> None:
        for path in reversed(self.written):
            try:
                path.unlink()
            except FileNotFoundError:
                pass
        self.written.clear()


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value run manifest; command-line flags override it")
    p.add_argument("--data", required=False, help="dataset directory (train.tsv, valid.tsv, test.tsv)")
    p.add_argument("--out", required=False, help="run directory for artifacts")
    p.add_argument("--seeds", default="1,2,3", help="comma-separated seeds (default: 1,2,3)")
    p.add_argument("--seed", type=int, help="run a single seed; overrides --seeds")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_train_opts(p: argparse.ArgumentParser, default_preset: str = "default") -> None:
    p.add_argument("--preset", default=default_preset,
                   help="training preset: default, adv, paper, paper-smsa, paper-emot, paper-adv")
    p.add_argument("--lr", type=float, help="override learning rate")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int, help="override max epochs")
    p.add_argument("--patience", type=int)
    p.add_argument("--n-features", type=int, default=1 << 18)
    p.add_argument("--hasher-seed", type=int, default=0)


def _add_attack_opts(p: argparse.ArgumentParser, ratio_flag: bool = True) -> None:
    p.add_argument("--lang", default="en", help="comma-separated embedded languages")
    if ratio_flag:
        p.add_argument("--ratio", type=float, default=0.4, help="perturbation ratio R in (0, 1]")
    p.add_argument("--alpha", type=float, default=0.8, help="similarity threshold")
    p.add_argument("--variant", default="paper", choices=["paper", "textfooler"])
    p.add_argument("--mask-mode", default="mask", choices=["mask", "delete"])
    p.add_argument("--lexicon-dir", help="directory with lexicon_<lang>.tsv (default: --data)")
    p.add_argument("--lexicon", action="append", default=[], metavar="LANG=PATH",
                   help="explicit lexicon file for one language (repeatable)")
    p.add_argument("--source-lang", default="id")
    p.add_argument("--model-dir", help="run directory holding seed-<s>/model.json (default: --out)")
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])
    p.add_argument("--translator", default="lexicon", choices=["lexicon", "http"])
    p.add_argument("--endpoint", help="translator URL for --translator http")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--cache", help="translator cache file (default: $CODEMIX_CACHE_DIR/translations.tsv)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="codemix", description="Code-mixing robustness toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["synth"] = sub.add_parser("synth", help="write a synthetic benchmark and lexicons")
    p.add_argument("--config")
    p.add_argument("--out", required=False)
    p.add_argument("--n-train", type=int, default=600)
    p.add_argument("--n-valid", type=int, default=100)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--n-classes", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lang", default="xx", help="comma-separated pseudo-language tags")
    p.add_argument("-v", "--verbose", action="count", default=0)

    p = subs["train"] = sub.add_parser("train", help="train the built-in classifier")
    _add_common(p)
    _add_train_opts(p)

    p = subs["attack"] = sub.add_parser("attack", help="generate code-mixed test sets and a robustness report")
    _add_common(p)
    _add_attack_opts(p)
    p.add_argument("--model-id", default="hashed-ngram")

    p = subs["defend"] = sub.add_parser("defend", help="adversarial fine-tuning on code-mixed data")
    _add_common(p)
    _add_attack_opts(p)
    _add_train_opts(p)
    p.add_argument("--strategy", required=False, help="cm-only, two-step or joint")
    p.add_argument("--adv-preset", default="adv", help="preset for the code-mixed tuning phase")
    p.add_argument("--init-from", help="checkpoint to start from; '{seed}' is replaced per seed")

    p = subs["sweep"] = sub.add_parser("sweep", help="code-mixed accuracy for each perturbation ratio")
    _add_common(p)
    _add_attack_opts(p, ratio_flag=False)
    p.add_argument("--ratios", default="0.2,0.4,0.6,0.8")

    p = subs["analyze"] = sub.add_parser("analyze", help="IF/DF analysis of the most perturbed words")
    _add_common(p)
    _add_attack_opts(p, ratio_flag=False)
    p.add_argument("--ratios", default="0.2,0.4,0.6,0.8")
    p.add_argument("--top-k", type=int, default=20)

    return parser, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config_file(args.config)
        sp = subs[args.command]
        known = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, value in values.items():
            if key not in known or key in ("help", "config"):
                raise ConfigError(f"{args.config}: unknown option {key!r} for '{args.command}'")
            action = known[key]
            if isinstance(action, argparse._AppendAction):
                defaults[key] = [v.strip() for v in value.split(",") if v.strip()]
            elif isinstance(action, argparse._CountAction):
                defaults[key] = int(value)
            else:
                defaults[key] = value  # argparse applies type= to string defaults
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _require_dir(path, what: str) -> Path:
    if path is None:
        raise ConfigError(f"--{what} is required")
    p = Path(path)
    if not p.is_dir():
        raise ConfigError(f"{what} directory not found: {p}")
    return p


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _train_config(args, preset_name: str, task: str):
    overrides = {}
    if args.lr is not None:
        overrides["learning_rate"] = args.lr
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.epochs is not None:
        overrides["max_epochs"] = args.epochs
    if args.patience is not None:
        overrides["patience"] = args.patience
    return preset(preset_name, task, **overrides)


def run_config(args, dataset_name: str = "") -> RunConfig:
    data = _require_dir(args.data, "data")
    if not args.out:
        raise ConfigError("--out is required")
    seeds = (args.seed,) if args.seed is not None else parse_seeds(args.seeds)
    kwargs = dict(data=data, out=Path(args.out), seeds=seeds)
    if hasattr(args, "preset"):
        kwargs["train"] = _train_config(args, args.preset, dataset_name or data.name)
        kwargs["n_features"] = args.n_features
        kwargs["hasher_seed"] = args.hasher_seed
    if hasattr(args, "lang"):
        langs = parse_languages(args.lang)
        ratio = getattr(args, "ratio", 0.4)
        kwargs.update(
            languages=langs,
            attack=AttackConfig(ratio, args.alpha, langs[0], args.variant, seeds[0], args.mask_mode),
            lexicons=_lexicon_paths(args, data, langs),
            model_dir=Path(args.model_dir) if args.model_dir else None,
            source_language=args.source_lang,
            translator=args.translator,
            endpoint=args.endpoint,
            timeout=args.timeout,
            cache=Path(args.cache) if args.cache else None,
        )
    return RunConfig(**kwargs)


def _lexicon_paths(args, data: Path, langs) -> dict[str, Path]:
    explicit = {}
    for item in args.lexicon:
        if "=" not in item:
            raise ConfigError(f"--lexicon expects LANG=PATH, got {item!r}")
        lang, path = item.split("=", 1)
        explicit[lang.strip()] = Path(path.strip())
    base = Path(args.lexicon_dir) if args.lexicon_dir else data
    return {lang: explicit.get(lang, Path(lexicon_path(base, lang))) for lang in langs}


def _lexicon_for(cfg: RunConfig, lang: str, vocabulary) -> Lexicon:
    if cfg.translator == "http":
        client = HttpTranslator(TranslatorClientConfig(
            cfg.endpoint, cfg.source_language, lang, cfg.timeout,
            str(cfg.cache) if cfg.cache else None))
        return client.build_lexicon(vocabulary)
    path = _require_file(cfg.lexicons[lang], f"lexicon for {lang!r}")
    return load_lexicon(path, cfg.source_language, lang)


def _vocabulary(examples) -> set[str]:
    return {tok for ex in examples for tok in ex.sentence.tokens}


def _load_models(cfg: RunConfig) -> dict:
    models = {}
    for seed in cfg.seeds:
        path = cfg.model_path(seed)
        if not path.is_file():
            raise ConfigError(f"model checkpoint not found: {path} (run 'codemix train' first)")
        models[seed] = load_model(path)
    return models


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, out: Outputs) -> None:
    if not args.out:
        raise ConfigError("--out is required")
    target = Path(args.out)
    langs = parse_languages(args.lang)
    dataset, lexicon = synth_benchmark(args.n_train, args.n_test, args.n_classes,
                                       VocabSpec(target_language=langs[0]), args.seed, args.n_valid)
    for split in ("train", "valid", "test"):
        out.write(target / f"{split}.tsv", split_to_tsv(dataset.splits[split]))
    out.write(target / "labels.txt", "\n".join(dataset.labels) + "\n")
    out.write(Path(lexicon_path(target, langs[0])), lexicon_to_tsv(lexicon))
    avoid = _vocabulary(ex for split in dataset.splits.values() for ex in split)
    for c in lexicon.entries.values():
        avoid.update(c)
    for i, lang in enumerate(langs[1:], start=1):
        extra = pseudo_lexicon(list(lexicon.entries), lang, _seed_rng(args.seed * 1000 + i), avoid)
        out.write(Path(lexicon_path(target, lang)), lexicon_to_tsv(extra))
    print(f"wrote {dataset.name}: {len(dataset.train)}/{len(dataset.valid)}/{len(dataset.test)} "
          f"examples, {len(lexicon)} lexicon entries per language -> {target}")


def cmd_train(args, out: Outputs) -> None:
    data = _require_dir(args.data, "data")
    dataset = load_dataset(data)
    cfg = run_config(args, dataset.name)
    for seed in cfg.seeds:
        model, history = train(dataset, replace(cfg.train, seed=seed),
                               n_features=cfg.n_features, hasher_seed=cfg.hasher_seed)
        seed_dir = cfg.seed_dir(seed)
        out.write(seed_dir / "model.json", model_to_json(model))
        summary = {"seed": seed, "task": dataset.name, "labels": list(model.labels),
                   "config": asdict(replace(cfg.train, seed=seed)), "history": history.to_dict()}
        if dataset.test:
            summary["test_acc"] = accuracy(model, dataset.test)
        out.write(seed_dir / "history.json", _dump(summary))
        msg = f"seed {seed}: {history.epochs_run} epochs, best valid acc {history.best_valid_accuracy:.2f}"
        if dataset.test:
            msg += f", test acc {summary['test_acc']:.2f}"
        print(msg)


def cmd_attack(args, out: Outputs) -> None:
    data = _require_dir(args.data, "data")
    dataset = load_dataset(data)
    cfg = run_config(args, dataset.name)
    examples = dataset.splits.get(args.split, ())
    if not examples:
        raise ConfigError(f"split {args.split!r} of {data} is empty")
    models = _load_models(cfg)
    vocab = _vocabulary(examples)
    lexicons = {lang: _lexicon_for(cfg, lang, vocab) for lang in cfg.languages}
    runs = []
    for seed, model in models.items():
        attacked = {}
        for lang, lexicon in lexicons.items():
            attack = replace(cfg.attack, target_language=lang, seed=seed)
            adv, outcomes = generate_dataset(model, examples, attack, lexicon)
            seed_dir = cfg.seed_dir(seed)
            out.write(seed_dir / f"attacked_{lang}.tsv", split_to_tsv(adv))
            out.write(seed_dir / f"outcomes_{lang}.jsonl", outcomes_to_jsonl(outcomes))
            attacked[lang] = adv
        runs.append(SeedRun(seed, model, attacked))
    report = robustness_report(runs, examples, model_id=args.model_id, task_id=dataset.name,
                               ratio=cfg.attack.perturb_ratio, alpha=cfg.attack.similarity_threshold)
    out.write(cfg.out / "report.json", report.to_json())
    print(report.format_table())


def cmd_defend(args, out: Outputs) -> None:
    if not args.strategy:
        raise ConfigError("--strategy is required (cm-only, two-step, joint)")
    strategy = Strategy.parse(args.strategy)
    data = _require_dir(args.data, "data")
    dataset = load_dataset(data)
    cfg = run_config(args, dataset.name)
    if len(cfg.languages) != 1:
        raise ConfigError("defend takes exactly one --lang")
    lang = cfg.languages[0]
    adv_config = _train_config(args, args.adv_preset, dataset.name)
    base_config = preset(args.preset, dataset.name)
    models = _load_models(cfg)
    lexicon = _lexicon_for(cfg, lang, _vocabulary(ex for s in dataset.splits.values() for ex in s))
    root = cfg.out / f"defend-{strategy.value.replace('_', '-')}"
    rows = []
    for seed, baseline in models.items():
        attack = replace(cfg.attack, target_language=lang, seed=seed)
        codemixed = codemix_dataset(baseline, dataset, attack, lexicon)
        init = None
        if args.init_from:
            init = load_model(_require_file(args.init_from.replace("{seed}", str(seed)), "--init-from checkpoint"))
        result = run_strategy(DefenseStrategy(strategy, replace(adv_config, seed=seed)), init,
                              dataset, codemixed, first_config=replace(base_config, seed=seed),
                              n_features=cfg.n_features, hasher_seed=cfg.hasher_seed)
        out.write(root / f"seed-{seed}" / "model.json", model_to_json(result.model))
        rows.append({
            "seed": seed,
            "orig_acc": accuracy(result.model, dataset.test),
            "cm_acc": accuracy(result.model, codemixed.test),
            "epochs_run": [h.epochs_run for h in result.histories],
            "best_valid_acc": [h.best_valid_accuracy for h in result.histories],
        })
    summary = {
        "strategy": strategy.value.replace("_", "-"),
        "task": dataset.name,
        "lang": lang,
        "R": cfg.attack.perturb_ratio,
        "alpha": cfg.attack.similarity_threshold,
        "seeds": list(cfg.seeds),
        "orig_acc": sum(r["orig_acc"] for r in rows) / len(rows),
        "cm_acc": sum(r["cm_acc"] for r in rows) / len(rows),
        "runs": rows,
    }
    out.write(root / "summary.json", _dump(summary))
    print(f"{summary['strategy']}: Orig {summary['orig_acc']:.2f}  CM {summary['cm_acc']:.2f}")


def _sweep(args, cfg: RunConfig, dataset: Dataset):
    examples = dataset.splits.get(args.split, ())
    if not examples:
        raise ConfigError(f"split {args.split!r} is empty")
    models = _load_models(cfg)
    vocab = _vocabulary(examples)
    lexicons = {lang: _lexicon_for(cfg, lang, vocab) for lang in cfg.languages}
    lang = cfg.languages[0]
    result = ratio_sweep(models, examples, lexicons[lang], cfg.attack.similarity_threshold, lang,
                         parse_ratios(args.ratios), cfg.attack.importance_variant)
    return result, lexicons


def cmd_sweep(args, out: Outputs) -> None:
    data = _require_dir(args.data, "data")
    dataset = load_dataset(data)
    cfg = run_config(args, dataset.name)
    if len(cfg.languages) != 1:
        raise ConfigError("sweep takes exactly one --lang")
    result, _ = _sweep(args, cfg, dataset)
    out.write(cfg.out / "sweep.csv", result.to_csv())
    for r, acc in result.rows:
        print(f"R={r:g}  accuracy {acc:.2f}")


def cmd_analyze(args, out: Outputs) -> None:
    data = _require_dir(args.data, "data")
    dataset = load_dataset(data)
    cfg = run_config(args, dataset.name)
    result, lexicons = _sweep(args, cfg, dataset)
    records = ifdf_analysis(result.outcomes.values(), args.top_k, lexicons)
    out.write(cfg.out / "ifdf.csv", ifdf_csv(records, list(cfg.languages)))
    for rec in records:
        print(f"{rec.word:20s} IF {rec.informative_frequency:6d}  DF {rec.document_frequency:6d}  "
              f"IF/DF {rec.ratio:.3f}")


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "attack": cmd_attack,
    "defend": cmd_defend,
    "sweep": cmd_sweep,
    "analyze": cmd_analyze,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CodemixError as exc:
        print(f"codemix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs()
    started = time.perf_counter()
    try:
        COMMANDS[args.command](args, out)
    except ConfigError as exc:
        out.rollback()
        print(f"codemix {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CodemixError, OSError) as exc:
        out.rollback()
        print(f"codemix {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except BaseException:
        out.rollback()
        raise
    logger.info("%s finished in %.1fs", args.command, time.perf_counter() - started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
