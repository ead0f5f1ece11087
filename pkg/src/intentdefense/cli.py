"""Command-line interface.

Exit codes: 0 success, 1 contract/parse/validation errors, 2 usage errors.
Data goes to stdout, diagnostics to stderr. Every subcommand accepts
``--seed``; when omitted, scenario-driven commands use the scenario's seed
and the rest use 0.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .decision import (
    GreedyPlanner,
    NoOpPlanner,
    OraclePlanner,
    QHyperParams,
    RandomPlanner,
    TabularQPolicy,
    evaluate_policy,
    q_learning_train,
)
from .enforcement import execute_intent, translate_intent
from .errors import DanglingReferenceError, DuplicateIdError, IntentDefenseError, InvalidKnowledgeBase
from .intent import DEFAULT_EXCLUSIONS, MapperRule, Observation, SecurityIntent, derive_candidates
from .ontology import (
    Restriction,
    Violation,
    counter_techniques,
    equivalence_class,
    load_knowledge_base,
    validate_kb,
)
from .simulation.env import DefenseEnv, EpisodeTrace, metrics, run_episode

log = logging.getLogger("intentdefense")

PLANNERS = ("greedy", "random", "noop", "oracle", "q")


class UsageError(Exception):
    pass


# -- output --------------------------------------------------------------------


def emit(data, fmt: str, out=None, table_rows=None) -> None:
    from .report import format_table

    out = out or sys.stdout
    if fmt == "table":
        rows = table_rows if table_rows is not None else _rows(data)
        out.write(format_table(rows))
    elif fmt == "jsonl":
        items = data if isinstance(data, list) else [data]
        for item in items:
            out.write(json.dumps(item, sort_keys=True, separators=(",", ":")) + "\n")
    else:
        out.write(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _rows(data) -> list[dict]:
    if isinstance(data, list):
        return [d if isinstance(d, dict) else {"value": d} for d in data]
    if isinstance(data, dict):
        return [{"key": k, "value": json.dumps(v) if isinstance(v, (dict, list)) else v} for k, v in data.items()]
    return [{"value": data}]


# -- helpers -------------------------------------------------------------------


def _scenario(args):
    from .simulation.scenario import load_scenario

    overrides = json.loads(args.override) if getattr(args, "override", None) else None
    return load_scenario(args.scenario, overrides)


def _seed(args, scenario=None) -> int:
    if args.seed is not None:
        return args.seed
    return scenario.seed if scenario is not None else 0


def build_planner(name: str, scenario, env: DefenseEnv, seed: int, policy: str | None = None):
    if name == "greedy":
        return GreedyPlanner(env.model)
    if name == "random":
        return RandomPlanner(seed)
    if name == "noop":
        return NoOpPlanner()
    if name == "oracle":
        prefs = scenario.planner.get("oracle")
        if not prefs:
            raise UsageError("scenario declares no oracle preferences")
        return OraclePlanner(prefs)
    if name == "q":
        if not policy:
            raise UsageError("--planner q needs --policy")
        return TabularQPolicy.load(policy)
    raise UsageError(f"unknown planner {name!r}; choose from {', '.join(PLANNERS)}")


DEFAULT_KB = "d3fend_subset.kb"


def _read_json(path: str):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# -- subcommands ---------------------------------------------------------------


def cmd_ontology_validate(args) -> int:
    try:
        kb = load_knowledge_base(Path(args.kb))
        violations = validate_kb(kb)
    except InvalidKnowledgeBase as exc:
        violations = exc.violations
    except DanglingReferenceError as exc:
        violations = [Violation(exc.identifier, "dangling-reference", str(exc))]
    except DuplicateIdError as exc:
        violations = [Violation(exc.identifier, "duplicate-id", str(exc))]
    result = {
        "kb": args.kb,
        "valid": not violations,
        "violations": [{"entity": v.entity, "rule": v.rule, "message": v.message} for v in violations],
    }
    emit(result, args.format, table_rows=result["violations"] or [{"kb": args.kb, "valid": True}])
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return 0 if not violations else 1


def cmd_query_counters(args) -> int:
    kb = load_knowledge_base(args.kb)
    ot = kb.offensive(args.technique)
    if args.property or args.artifact:
        if not (args.property and args.artifact):
            raise UsageError("--property and --artifact go together")
        restrictions = [Restriction(args.property, args.artifact)]
    else:
        restrictions = sorted(ot.restrictions)
    rows = []
    for r in restrictions:
        for dt, prop in sorted(counter_techniques(kb, ot, r), key=lambda x: (x[0].id, x[1])):
            rows.append({"offensive": ot.id, "restriction": f"{r.property} {r.artifact_class}",
                         "defensive": dt.id, "property": prop})
    emit(rows, args.format)
    return 0


def cmd_query_eqclass(args) -> int:
    kb = load_knowledge_base(args.kb)
    members = sorted(dt.id for dt in equivalence_class(kb, args.technique))
    emit({"technique": args.technique, "equivalence_class": members}, args.format,
         table_rows=[{"member": m} for m in members])
    return 0


def cmd_intent_derive(args) -> int:
    if args.scenario:
        scenario = _scenario(args)
        kb, rules, exclusions = scenario.kb, scenario.mapper_rules, scenario.exclusion_list
    else:
        if not (args.kb and args.rules):
            raise UsageError("intent derive needs --scenario, or both --kb and --rules")
        kb = load_knowledge_base(args.kb)
        rules = [MapperRule.from_dict(r) for r in _read_json(args.rules)]
        exclusions = DEFAULT_EXCLUSIONS
    if args.exclude is not None:
        exclusions = frozenset(args.exclude)
    alerts = _read_json(args.alerts)
    if isinstance(alerts, dict):
        alerts = alerts.get("alerts", [])
    candidates = sorted(derive_candidates(Observation.from_list(alerts), kb, rules, exclusions))
    rows = [i.to_dict() for i in candidates]
    emit(rows, args.format, table_rows=[
        {"ot": i.ot, "dt": i.dt, "property": i.def_property, "target": i.target.artifact_class,
         "attributes": ",".join(f"{k}={v}" for k, v in i.target.attributes)} for i in candidates])
    return 0


def cmd_train(args) -> int:
    scenario = _scenario(args)
    env = DefenseEnv(scenario)
    hyper = QHyperParams.from_dict(scenario.planner.get("q", {}))
    hyper.seed = _seed(args, scenario)
    episodes = args.episodes if args.episodes is not None else int(scenario.planner.get("train_episodes", 1000))
    log.info("training %d episodes on %s", episodes, scenario.name)
    policy = q_learning_train(env, episodes, hyper)
    policy.save(args.out)
    emit({"policy": str(args.out), "episodes": episodes, "entries": len(policy.q), "seed": hyper.seed},
         args.format)
    return 0


def cmd_evaluate(args) -> int:
    scenario = _scenario(args)
    env = DefenseEnv(scenario)
    seed = _seed(args, scenario)
    if args.policy:
        planner = TabularQPolicy.load(args.policy)
    else:
        planner = build_planner(args.planner, scenario, env, seed)
    result = evaluate_policy(planner, env, args.episodes, seed=seed).to_dict()
    result["planner"] = "q" if args.policy else args.planner
    result["seed"] = seed
    emit(result, args.format)
    return 0


def cmd_run(args) -> int:
    scenario = _scenario(args)
    env = DefenseEnv(scenario)
    seed = _seed(args, scenario)
    planner = build_planner(args.planner, scenario, env, seed, args.policy)
    trace = run_episode(scenario, planner, seed)
    if args.out:
        trace.write(args.out)
        log.info("trace written to %s", args.out)
    if args.figures:
        from .report import render_figures

        for path in render_figures(trace, args.figures):
            log.info("figure written to %s", path)
    _emit_trace(trace, args.format, to_stdout=not args.out)
    return 0


def _emit_trace(trace: EpisodeTrace, fmt: str, to_stdout: bool) -> None:
    from .report import round_rows

    if fmt == "table":
        emit(None, "table", table_rows=round_rows(trace))
        emit(None, "table", table_rows=[{"metric": k, "value": v} for k, v in metrics(trace).items()])
    elif fmt == "jsonl" and to_stdout:
        sys.stdout.write(trace.to_jsonl())
    else:
        emit(metrics(trace), "json" if fmt == "jsonl" else fmt)


def cmd_replay(args) -> int:
    trace = EpisodeTrace.read(args.trace)
    if args.check:
        scenario = _scenario(args)
        env = DefenseEnv(scenario)
        planner = build_planner(trace.planner, scenario, env, trace.seed, args.policy)
        fresh = run_episode(scenario, planner, trace.seed)
        original = Path(args.trace).read_text(encoding="utf-8")
        if fresh.to_jsonl() != original:
            print("replay diverged from the recorded trace", file=sys.stderr)
            return 1
        log.info("replay identical")
    if args.figures:
        from .report import render_figures

        render_figures(trace, args.figures)
    _emit_trace(trace, args.format, to_stdout=False)
    return 0


def cmd_report(args) -> int:
    from .report import render_figures

    trace = EpisodeTrace.read(args.trace)
    paths = render_figures(trace, args.out)
    emit({"figures": [str(p) for p in paths], "metrics": metrics(trace)}, args.format,
         table_rows=[{"figure": str(p)} for p in paths])
    return 0


def cmd_enforce(args) -> int:
    import random

    scenario = _scenario(args)
    intent = SecurityIntent.from_dict(_read_json(args.intent))
    infra = scenario.initial_infrastructure()
    seed = _seed(args, scenario)
    status, after = execute_intent(intent, scenario.registry, infra, random.Random(seed))
    result = {"status": status.to_dict(), "infrastructure": after.summary()}
    try:
        result["plan"] = translate_intent(intent, scenario.registry).to_dict()
    except IntentDefenseError:
        result["plan"] = None
    emit(result, args.format)
    return 0


# -- parser --------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: scenario seed, else 0)")
    common.add_argument("--format", choices=("json", "jsonl", "table"), default=None,
                        help="output format (default: jsonl for run, json otherwise)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--scenario", required=True,
                      help="scenario file or bundled name; also searched in $INTENTDEFENSE_SCENARIO_DIR")
    scen.add_argument("--override", help="JSON object deep-merged into the scenario")

    parser = _Parser(prog="intentdefense", description="Intent-based autonomic defense toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    onto = sub.add_parser("ontology", help="knowledge base tools")
    onto_sub = onto.add_subparsers(dest="ontology_command", required=True, parser_class=_Parser)
    p = onto_sub.add_parser("validate", parents=[common], help="check KB invariants")
    p.add_argument("kb")
    p.set_defaults(leaf=p, func=cmd_ontology_validate)
    query = onto_sub.add_parser("query", help="KB queries")
    query_sub = query.add_subparsers(dest="query_command", required=True, parser_class=_Parser)
    p = query_sub.add_parser("counters", parents=[common], help="counter techniques of an offensive technique")
    p.add_argument("--kb", default=DEFAULT_KB, help=f"KB file or bundled name (default: {DEFAULT_KB})")
    p.add_argument("--ot", "--technique", dest="technique", required=True, help="offensive technique id")
    p.add_argument("--property")
    p.add_argument("--artifact")
    p.set_defaults(leaf=p, func=cmd_query_counters)
    p = query_sub.add_parser("eqclass", parents=[common], help="equivalence class of a defensive technique")
    p.add_argument("--kb", default=DEFAULT_KB, help=f"KB file or bundled name (default: {DEFAULT_KB})")
    p.add_argument("--dt", "--technique", dest="technique", required=True, help="defensive technique id")
    p.set_defaults(leaf=p, func=cmd_query_eqclass)

    intent = sub.add_parser("intent", help="intent derivation")
    intent_sub = intent.add_subparsers(dest="intent_command", required=True, parser_class=_Parser)
    p = intent_sub.add_parser("derive", parents=[common], help="candidate intents for an observation")
    p.add_argument("--observation", "--alerts", dest="alerts", required=True,
                   help="JSON list of alerts, or an object with an 'alerts' list")
    p.add_argument("--scenario")
    p.add_argument("--override")
    p.add_argument("--kb")
    p.add_argument("--rules", help="JSON list of mapper rules")
    p.add_argument("--exclude", nargs="*", help="metadata keys to drop (overrides the default list)")
    p.set_defaults(leaf=p, func=cmd_intent_derive)

    p = sub.add_parser("train", parents=[common, scen], help="train a tabular Q policy")
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(leaf=p, func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common, scen], help="evaluate a planner over many episodes")
    p.add_argument("--policy")
    p.add_argument("--planner", choices=PLANNERS, default="random")
    p.add_argument("--episodes", type=int, default=100)
    p.set_defaults(leaf=p, func=cmd_evaluate)

    p = sub.add_parser("run", parents=[common, scen], help="run one episode and emit its trace")
    p.add_argument("--planner", choices=PLANNERS, default="greedy")
    p.add_argument("--policy")
    p.add_argument("--out", help="write the JSON-lines trace here (stdout otherwise)")
    p.add_argument("--figures", help="directory for rendered figures")
    p.set_defaults(leaf=p, func=cmd_run, default_format="jsonl")

    p = sub.add_parser("replay", parents=[common], help="summarize or re-check a recorded trace")
    p.add_argument("trace")
    p.add_argument("--check", action="store_true", help="re-run the episode and compare byte for byte")
    p.add_argument("--scenario")
    p.add_argument("--override")
    p.add_argument("--policy")
    p.add_argument("--figures")
    p.set_defaults(leaf=p, func=cmd_replay)

    p = sub.add_parser("enforce", parents=[common, scen], help="enforce one intent on the initial infrastructure")
    p.add_argument("--intent", required=True, help="JSON security intent")
    p.set_defaults(leaf=p, func=cmd_enforce)

    p = sub.add_parser("report", parents=[common], help="render figures for a trace")
    p.add_argument("trace")
    p.add_argument("--out", required=True)
    p.set_defaults(leaf=p, func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args, extras = parser.parse_known_args(argv)
        if extras:
            # report against the subcommand so the usage line lists its flags
            getattr(args, "leaf", parser).error(f"unrecognized arguments: {' '.join(extras)}")
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.format is None:
        args.format = getattr(args, "default_format", "json")
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "check", False) and not args.scenario:
        print("replay --check needs --scenario", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (IntentDefenseError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
