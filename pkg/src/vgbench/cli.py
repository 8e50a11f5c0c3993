"""Command-line interface for the benchmark harness.

Subcommands: validate, run, judge, report, serve-review.  Configuration is
resolved flag > environment > config file > default; environment variables
use the VG_ prefix (VG_PROVIDER_BASE_URL, VG_PROVIDER_API_KEY, VG_MODE,
VG_RUNS_ROOT).  Exit codes: 0 success, 1 domain failure (validation
violations, failed cases the caller should look at), 2 usage, IO, or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path

from . import __version__
from .actor import GUIDELINE_VERSION, load_jargon_lexicon
from .corpus import Corpus, CorpusError, CorpusFilter, load_corpus, stratify
from .gateway import (
    Cassette,
    GatewayPolicy,
    HTTPProvider,
    InvalidPolicy,
    ModelGateway,
)
from .judge import (
    bundled_graph,
    bundled_specialty_map,
    judge_case,
    load_condition_graph,
    load_specialty_map,
)
from .orchestrator import LoopPolicy, SystemUnderTest, run_conversation
from .report import aggregate, load_question_baseline, render
from .store import RunManifest, RunStore, StoreError

logger = logging.getLogger(__name__)

ENV_PREFIX = "VG_"

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


class ConfigError(Exception):
    pass


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def _resolve(flag_value, env_name: str | None, config: dict, config_key: str, default=None):
    """flag > environment > config file > default."""
    if flag_value is not None:
        return flag_value
    if env_name:
        env_value = os.environ.get(ENV_PREFIX + env_name)
        if env_value is not None:
            return env_value
    if config_key in config:
        return config[config_key]
    return default


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vgbench",
        description="Benchmark conversational diagnostic assistants on clinical vignettes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="validate a corpus file")
    p_validate.add_argument("corpus", help="path to a JSONL corpus")
    p_validate.add_argument("--quiet", action="store_true", help="print nothing on success")

    p_run = sub.add_parser("run", help="run conversations and judge them")
    p_run.add_argument("--corpus", required=True)
    p_run.add_argument("--mode", choices=("live", "record", "replay"), default=None)
    p_run.add_argument("--run-id", default=None)
    p_run.add_argument("--runs-root", default=None)
    p_run.add_argument("--config", default=None, help="JSON config file")
    p_run.add_argument("--sut-name", default=None)
    p_run.add_argument("--sut-version", default=None)
    p_run.add_argument("--sut-model", default=None)
    p_run.add_argument("--actor-model", default=None)
    p_run.add_argument("--actor-cassette", default=None)
    p_run.add_argument("--sut-cassette", default=None)
    p_run.add_argument("--provider-url", default=None)
    p_run.add_argument("--provider-key", default=None)
    p_run.add_argument("--max-turns", type=int, default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--retries", type=int, default=None)
    p_run.add_argument("--timeout", type=float, default=None)
    p_run.add_argument("--rate", default=None, help="rate limit as COUNT/SECONDS, e.g. 2/1.0")
    p_run.add_argument("--kg", default=None, help="condition graph JSONL")
    p_run.add_argument("--specialty-map", default=None)
    p_run.add_argument("--baseline", default=None, help="question baseline TSV")
    p_run.add_argument("--filter-specialty", default=None)
    p_run.add_argument("--filter-incidence", default=None)
    p_run.add_argument("--filter-course", default=None)
    p_run.add_argument("--filter-presentation", default=None)
    p_run.add_argument("--no-judge", action="store_true", help="skip judging after conversations")

    p_judge = sub.add_parser("judge", help="judge the transcripts of a stored run")
    p_judge.add_argument("--run", required=True, dest="run_id")
    p_judge.add_argument("--runs-root", default=None)
    p_judge.add_argument("--corpus", default=None, help="defaults to the path in the run manifest")
    p_judge.add_argument("--kg", default=None)
    p_judge.add_argument("--specialty-map", default=None)
    p_judge.add_argument("--baseline", default=None)

    p_report = sub.add_parser("report", help="render the report for a stored run")
    p_report.add_argument("--run", required=True, dest="run_id")
    p_report.add_argument("--runs-root", default=None)
    p_report.add_argument("--corpus", default=None)
    p_report.add_argument("--format", choices=("table", "csv", "markdown"), default="table")
    p_report.add_argument("--baseline", default=None)
    p_report.add_argument("--stdout", action="store_true", help="print instead of writing the artifact")

    p_serve = sub.add_parser("serve-review", help="serve the human-review API for a run")
    p_serve.add_argument("--run", required=True, dest="run_id")
    p_serve.add_argument("--runs-root", default=None)
    p_serve.add_argument("--corpus", default=None)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8330)
    p_serve.add_argument(
        "--token", action="append", default=None, metavar="NAME:TOKEN",
        help="judge identity, repeatable",
    )
    p_serve.add_argument("--specialty-map", default=None)
    p_serve.add_argument("--baseline", default=None)
    p_serve.add_argument("--lease-seconds", type=float, default=900.0)
    p_serve.add_argument("--ui-dist", default=None, help="directory with the review UI build")

    return parser


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        corpus = load_corpus(args.corpus)
    except OSError as exc:
        print(f"error: cannot read {args.corpus}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorpusError as exc:
        print(f"invalid corpus: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if not args.quiet:
        counts = corpus.specialty_counts()
        print(f"{len(corpus)} vignettes, {len(counts)} specialties, hash {corpus.content_hash[:12]}")
        for specialty in sorted(counts):
            print(f"  {specialty}: {counts[specialty]}")
    return EXIT_OK


def _corpus_filter(args: argparse.Namespace) -> CorpusFilter:
    return CorpusFilter(
        specialty=args.filter_specialty,
        incidence_class=args.filter_incidence,
        disease_course=args.filter_course,
        presentation_class=args.filter_presentation,
    )


def _load_kg_and_map(kg_path, map_path, corpus: Corpus | None):
    kg = load_condition_graph(kg_path) if kg_path else bundled_graph()
    if map_path:
        specialty_map = load_specialty_map(map_path, corpus)
    else:
        specialty_map = bundled_specialty_map()
        if corpus is not None:
            # Re-check coverage against the corpus in use.
            from .judge import normalize_condition

            missing = sorted(
                {
                    v.gold_diagnosis
                    for v in corpus
                    if normalize_condition(v.gold_diagnosis) not in specialty_map
                }
            )
            if missing:
                raise ConfigError(f"specialty map misses corpus conditions: {missing}")
    return kg, specialty_map


def _make_gateway(mode: str, cassette_path: str | None, provider_url: str | None,
                  provider_key: str, policy: GatewayPolicy, what: str) -> ModelGateway:
    if mode == "replay":
        if not cassette_path:
            raise ConfigError(f"replay mode needs --{what}-cassette")
        if not Path(cassette_path).exists():
            raise ConfigError(f"{what} cassette not found: {cassette_path}")
        return ModelGateway("replay", cassette=Cassette.load(cassette_path), policy=policy)
    if not provider_url:
        raise ConfigError(f"{mode} mode needs --provider-url or VG_PROVIDER_BASE_URL")
    provider = HTTPProvider(provider_url, provider_key)
    if mode == "record":
        if not cassette_path:
            raise ConfigError(f"record mode needs --{what}-cassette")
        path = Path(cassette_path)
        cassette = Cassette.load(path) if path.exists() else Cassette(path)
        return ModelGateway("record", provider=provider, cassette=cassette, policy=policy)
    return ModelGateway("live", provider=provider, policy=policy)


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config_file(args.config)
    mode = _resolve(args.mode, "MODE", config, "mode", "replay")
    runs_root = _resolve(args.runs_root, "RUNS_ROOT", config, "runs_root", "./bench-data")
    sut_name = _resolve(args.sut_name, None, config, "sut_name", "sut")
    sut_version = _resolve(args.sut_version, None, config, "sut_version", "0")
    sut_model = _resolve(args.sut_model, None, config, "sut_model", "sut-model")
    actor_model = _resolve(args.actor_model, None, config, "actor_model", "patient-actor")
    actor_cassette = _resolve(args.actor_cassette, None, config, "actor_cassette")
    sut_cassette = _resolve(args.sut_cassette, None, config, "sut_cassette")
    provider_url = _resolve(args.provider_url, "PROVIDER_BASE_URL", config, "provider_url")
    provider_key = _resolve(args.provider_key, "PROVIDER_API_KEY", config, "provider_key", "")
    max_turns = int(_resolve(args.max_turns, None, config, "max_turns", 60))
    workers = int(_resolve(args.workers, None, config, "workers", 1))
    retries = int(_resolve(args.retries, None, config, "retries", 3))
    timeout_s = float(_resolve(args.timeout, None, config, "timeout", 60.0))
    rate_raw = _resolve(args.rate, None, config, "rate")

    rate_limit = None
    if rate_raw:
        try:
            count_s, interval_s = str(rate_raw).split("/", 1)
            rate_limit = (int(count_s), float(interval_s))
        except ValueError as exc:
            raise ConfigError(f"--rate must look like COUNT/SECONDS, got {rate_raw!r}") from exc

    corpus = load_corpus(args.corpus)
    flt = _corpus_filter(args)
    selected = stratify(corpus, flt)
    if len(selected) == 0:
        print("error: corpus filter selected no vignettes", file=sys.stderr)
        return EXIT_DOMAIN
    kg, specialty_map = (None, None)
    if not args.no_judge:
        kg, specialty_map = _load_kg_and_map(args.kg, args.specialty_map, selected)
    baseline = load_question_baseline(args.baseline) if args.baseline else load_question_baseline()

    try:
        policy = GatewayPolicy(
            retries=retries, timeout_s=timeout_s, rate_limit=rate_limit,
            backoff_s=0.0 if mode == "replay" else 0.5,
        ).validated()
    except InvalidPolicy as exc:
        raise ConfigError(str(exc)) from exc

    actor_gateway = _make_gateway(mode, actor_cassette, provider_url, provider_key, policy, "actor")
    sut_gateway = _make_gateway(mode, sut_cassette, provider_url, provider_key, policy, "sut")
    sut = SystemUnderTest(name=sut_name, version=sut_version, model=sut_model, gateway=sut_gateway)

    run_id = args.run_id or time.strftime("run-%Y%m%d-%H%M%S")
    store = RunStore(runs_root)
    manifest = RunManifest(
        run_id=run_id,
        corpus_hash=selected.content_hash,
        sut_name=sut_name,
        sut_version=sut_version,
        sut_model=sut_model,
        actor_model=actor_model,
        gateway_mode=mode,
        guideline_version=GUIDELINE_VERSION,
        corpus_path=str(args.corpus),
        corpus_filter=flt.to_dict(),
        policy={"max_turns": max_turns, "retries": retries, "timeout_s": timeout_s},
    )
    store.open_run(manifest)
    print(f"run {run_id} open cases={len(selected)} mode={mode}")

    loop_policy = LoopPolicy(max_turns=max_turns, actor_model=actor_model)
    lexicon = load_jargon_lexicon(
        tuple(v.gold_diagnosis for v in selected)
        + tuple(s for v in selected for s in v.gold_synonyms)
    )

    def one_case(vignette):
        conversation = run_conversation(
            vignette, sut, actor_gateway, loop_policy,
            run_id=run_id, lexicon=lexicon, store=store,
        )
        judgment = None
        if conversation.terminal_state == "closed_normally" and kg is not None:
            judgment = judge_case(conversation, vignette, kg, specialty_map)
            store.append_verdict(run_id, judgment)
        return conversation, judgment

    conversations = []
    judgments = []
    failed = 0
    interrupted = False
    try:
        if workers <= 1:
            for vignette in selected:
                conversation, judgment = one_case(vignette)
                conversations.append(conversation)
                if judgment is not None:
                    judgments.append(judgment)
                if conversation.terminal_state == "gateway_failure":
                    failed += 1
                print(
                    f"case {conversation.id} {conversation.terminal_state} "
                    f"turns={len(conversation.turns)} questions={conversation.question_count}"
                )
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {pool.submit(one_case, v): v for v in selected}
                for future in as_completed(futures):
                    conversation, judgment = future.result()
                    conversations.append(conversation)
                    if judgment is not None:
                        judgments.append(judgment)
                    if conversation.terminal_state == "gateway_failure":
                        failed += 1
                    print(
                        f"case {conversation.id} {conversation.terminal_state} "
                        f"turns={len(conversation.turns)} questions={conversation.question_count}"
                    )
    except KeyboardInterrupt:
        interrupted = True
        print("interrupted: draining, keeping completed work", file=sys.stderr)

    report = aggregate(
        judgments, conversations, selected, run_id=run_id, baseline=baseline
    )
    for fmt in ("table", "csv"):
        store.write_report(run_id, fmt, render(report, fmt))
    store.close_run(run_id)
    unresolved = report.unresolved
    print(
        f"run {run_id} complete cases={len(conversations)} failed={failed} "
        f"unresolved={unresolved} provisional={'yes' if report.provisional else 'no'}"
    )
    if interrupted:
        return EXIT_DOMAIN
    return EXIT_OK


def _store_and_corpus(args: argparse.Namespace):
    runs_root = _resolve(args.runs_root, "RUNS_ROOT", {}, "runs_root", "./bench-data")
    store = RunStore(runs_root)
    manifest = store.manifest(args.run_id)
    corpus_path = args.corpus or manifest.corpus_path
    if not corpus_path:
        raise ConfigError("no --corpus given and the run manifest records no corpus path")
    corpus = load_corpus(corpus_path)
    return store, manifest, corpus


def cmd_judge(args: argparse.Namespace) -> int:
    store, manifest, corpus = _store_and_corpus(args)
    kg, specialty_map = _load_kg_and_map(args.kg, args.specialty_map, None)
    baseline = load_question_baseline(args.baseline) if args.baseline else load_question_baseline()
    loaded = store.load_run(args.run_id)
    judged = 0
    skipped = 0
    for case_id in sorted(loaded.conversations):
        conversation = loaded.conversations[case_id]
        if conversation.terminal_state != "closed_normally":
            skipped += 1
            continue
        vignette = corpus.get(conversation.vignette_id)
        judgment = judge_case(conversation, vignette, kg, specialty_map)
        store.append_verdict(args.run_id, judgment)
        judged += 1
        print(f"verdict {case_id} {judgment.judge_kind} top1={judgment.top1_verdict.rule}")
    reloaded = store.load_run(args.run_id)
    report = aggregate(
        list(reloaded.judgments.values()),
        [c for c in reloaded.conversations.values() if c.terminal_state is not None],
        corpus,
        run_id=args.run_id,
        baseline=baseline,
    )
    for fmt in ("table", "csv"):
        store.write_report(args.run_id, fmt, render(report, fmt))
    print(f"judged {judged} cases, skipped {skipped} (not closed normally)")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    store, manifest, corpus = _store_and_corpus(args)
    baseline = load_question_baseline(args.baseline) if args.baseline else load_question_baseline()
    loaded = store.load_run(args.run_id)
    report = aggregate(
        list(loaded.judgments.values()),
        [c for c in loaded.conversations.values() if c.terminal_state is not None],
        corpus,
        run_id=args.run_id,
        baseline=baseline,
    )
    data = render(report, args.format)
    if args.stdout:
        sys.stdout.write(data.decode("utf-8"))
        return EXIT_OK
    path = store.write_report(args.run_id, args.format, data)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_serve_review(args: argparse.Namespace) -> int:
    import uvicorn

    from .review import create_app

    store, manifest, corpus = _store_and_corpus(args)
    specialty_map = (
        load_specialty_map(args.specialty_map)
        if args.specialty_map
        else bundled_specialty_map()
    )
    baseline = load_question_baseline(args.baseline) if args.baseline else load_question_baseline()
    raw_tokens = args.token or []
    tokens: dict[str, str] = {}
    for item in raw_tokens:
        name, sep, token = item.partition(":")
        if not sep or not name or not token:
            raise ConfigError(f"--token must look like NAME:TOKEN, got {item!r}")
        tokens[token] = name
    if not tokens:
        raise ConfigError("at least one --token NAME:TOKEN is required")
    app = create_app(
        store, args.run_id, corpus, specialty_map, tokens,
        lease_seconds=args.lease_seconds, baseline=baseline, ui_dist=args.ui_dist,
    )
    print(f"serving review for run {args.run_id} on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "validate": cmd_validate,
        "run": cmd_run,
        "judge": cmd_judge,
        "report": cmd_report,
        "serve-review": cmd_serve_review,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StoreError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
