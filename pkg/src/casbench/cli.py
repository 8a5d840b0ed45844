"""Terminal front door: create taskfolders, run them, query metadata, rebuild reports.

Exit codes: 0 success (a run counts as successful once every job reached a
terminal status, failures included), 2 unknown names or unreadable input,
3 refusal to clobber an existing directory, 130 run aborted by a double
interrupt, 1 other run aborts.  Every error path prints one line starting
with ``error:`` to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

from . import __version__, metastore, reporting
from .compproblems import Registry, load_registry_file
from .errors import (
    CasbenchError,
    ClobberError,
    ConfigurationError,
    NotFoundError,
    RunAborted,
)
from .resources import NAME_RE, SDTable, scan_tables
from .runner import ControlChannel, RESULTS_XML_NAME, RunLimits, RunSession
from .taskfolder import MachineSettings, Task, build_taskfolder, load_taskfolder

logger = logging.getLogger("casbench")

CONFIG_SECTION = "casbench"
CONFIG_CANDIDATES = (
    Path("casbench.ini"),
    Path.home() / ".config" / "casbench" / "config.ini",
)


@dataclass
class CliConfig:
    """Defaults merged under the command-line flags."""

    resources: Path | None = None
    registry_files: list[Path] = field(default_factory=list)
    metadata: Path | None = None
    time_limit: Decimal | None = None
    mem_limit_mb: int | None = None
    verbosity: int = 0


def load_config(explicit: Path | None) -> CliConfig:
    path = explicit
    if path is None:
        path = next((c for c in CONFIG_CANDIDATES if c.is_file()), None)
        if path is None:
            return CliConfig()
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file '{path}': {exc}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config file '{path}': {exc}") from exc
    if not parser.has_section(CONFIG_SECTION):
        return CliConfig()
    section = parser[CONFIG_SECTION]
    config = CliConfig()
    # relative paths resolve against the working directory, like flag paths
    if section.get("resources"):
        config.resources = Path(section["resources"])
    if section.get("registry"):
        config.registry_files = [Path(part.strip()) for part in section["registry"].split(",") if part.strip()]
    if section.get("metadata"):
        config.metadata = Path(section["metadata"])
    try:
        if section.get("time_limit"):
            config.time_limit = Decimal(section["time_limit"])
        if section.get("mem_limit"):
            config.mem_limit_mb = int(section["mem_limit"])
        if section.get("verbosity"):
            config.verbosity = int(section["verbosity"])
    except (InvalidOperation, ValueError) as exc:
        raise ConfigurationError(f"bad numeric value in '{path}': {exc}") from exc
    return config


def build_registry(files: list[Path], include_builtin: bool = True) -> Registry:
    registry = Registry.builtin() if include_builtin else Registry()
    for path in files:
        load_registry_file(path, registry)
    return registry


# --------------------------------------------------------------------------
# create
# --------------------------------------------------------------------------


def cmd_create(args: argparse.Namespace, config: CliConfig) -> int:
    registry = build_registry(
        [Path(p) for p in args.registry] or config.registry_files,
        include_builtin=not args.no_builtin_registry,
    )
    resources = Path(args.resources) if args.resources else config.resources
    if resources is None:
        raise ConfigurationError("no resource root given (use --resources or a config file)")
    tables = scan_tables(resources)

    overrides = {}
    for item in args.invocation:
        name, _, command = item.partition("=")
        if not command:
            raise ConfigurationError(f"--invocation needs the form backend=command, got '{item}'")
        overrides[name] = command

    if args.interactive:
        selection = _interactive_create(registry, tables, args)
        problem_name, instances, backends, out, time_command = selection
    else:
        missing = [
            flag
            for flag, value in (
                ("--problem", args.problem),
                ("--instances/--query", args.instances or args.query),
                ("--backends", args.backends),
                ("--out", args.out),
            )
            if not value
        ]
        if missing:
            raise ConfigurationError(
                f"non-interactive create needs {', '.join(missing)} (or pass --interactive)"
            )
        problem_name = args.problem
        out = Path(args.out)
        backends = [part.strip() for part in args.backends.split(",") if part.strip()]
        if args.query:
            instances = _instances_from_query(args, config, registry, tables, problem_name)
        else:
            instances = _parse_instance_list(args.instances)
        time_command = args.time_command

    task_name = args.name or out.name
    if not NAME_RE.match(task_name):
        raise ConfigurationError(
            f"'{task_name}' is not a valid task name; pass --name with letters, digits, underscores"
        )
    task = Task(
        name=task_name,
        problem=problem_name,
        instances=tuple(instances),
        backends=tuple(backends),
    )
    settings = MachineSettings(time_command=time_command, invocations=overrides)
    layout = build_taskfolder(task, settings, registry, tables, out)
    print(layout.root)
    return 0


def _parse_instance_list(text: str) -> list[tuple[str, str]]:
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        table, sep, name = chunk.partition("/")
        if not sep or not table or not name:
            raise ConfigurationError(f"instance '{chunk}' must be written as TABLE/NAME")
        pairs.append((table, name))
    if not pairs:
        raise ConfigurationError("no instances given")
    return pairs


def _instances_from_query(
    args: argparse.Namespace,
    config: CliConfig,
    registry: Registry,
    tables: list[SDTable],
    problem_name: str,
) -> list[tuple[str, str]]:
    metadata = Path(args.metadata) if args.metadata else config.metadata
    if metadata is None:
        raise ConfigurationError("--query needs a metadata file (--metadata or config)")
    store = _load_store(metadata)
    matched = _subjects_matching(store, args.query)
    suitable = registry.list_suitable_instances(problem_name, tables)
    selected = [(table, name) for table, name in suitable if name in matched]
    if not selected:
        raise NotFoundError(f"no instances matched query '{args.query}'")
    return selected


def _load_store(path: Path) -> metastore.TripleStore:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read metadata file '{path}': {exc}") from exc
    return metastore.parse_turtle(text)


def _subjects_matching(store: metastore.TripleStore, expression: str) -> set[str]:
    """Instance names whose metadata satisfies ``predicate [OP constant]``."""
    parts = expression.split()
    if len(parts) == 1:
        predicate_text, numeric = parts[0], None
    elif len(parts) == 3:
        predicate_text = parts[0]
        numeric = metastore.parse_filter(f"v {parts[1]} {parts[2]}")
    else:
        raise ConfigurationError(
            f"query must be 'predicate' or 'predicate OP integer', got '{expression}'"
        )
    predicates = _resolve_predicates(store, predicate_text)
    names: set[str] = set()
    for predicate in predicates:
        bindings = metastore.query(
            store,
            [metastore.TriplePattern(metastore.Var("s"), predicate, metastore.Var("v"))],
            numeric_filter=numeric,
        )
        names.update(_local_name(b["s"].value) for b in bindings)
    return names


def _resolve_predicates(store: metastore.TripleStore, text: str) -> list[metastore.Term]:
    if text.startswith("<") and text.endswith(">"):
        return [metastore.Term.iri(text[1:-1])]
    if ":" in text:
        slot = metastore.parse_pattern_text(f"?s {text} ?v", store.prefixes).predicate
        return [slot]
    # bare name: every predicate in the store whose local name matches
    found = {
        triple.predicate for triple in store if _local_name(triple.predicate.value) == text
    }
    return sorted(found, key=metastore.Term.sort_key)


def _local_name(iri: str) -> str:
    for sep in ("#", "/"):
        if sep in iri:
            return iri.rstrip(sep).rsplit(sep, 1)[-1]
    return iri


def _interactive_create(registry: Registry, tables: list[SDTable], args: argparse.Namespace):
    """Three-step terminal dialog: problem, instances, backends + settings."""
    problems = registry.problems()
    if not problems:
        raise ConfigurationError("no computation problems registered")
    print("Computation problems:")
    for i, problem in enumerate(problems, 1):
        print(f"  {i}) {problem.name} (tables: {', '.join(problem.compatible_tables)})")
    problem_name = _pick_one("Choose a problem", [p.name for p in problems], args.problem)

    suitable = registry.list_suitable_instances(problem_name, tables)
    if not suitable:
        raise NotFoundError(f"no scanned SD-Table offers instances for '{problem_name}'")
    labels = [f"{table}/{name}" for table, name in suitable]
    print("Suitable problem instances:")
    for i, label in enumerate(labels, 1):
        print(f"  {i}) {label}")
    chosen = _pick_many("Select instances", labels, args.instances)
    instances = [tuple(label.split("/", 1)) for label in chosen]

    backends = [b.name for b in registry.backends_for_problem(problem_name)]
    if not backends:
        raise NotFoundError(f"no backend has a template for '{problem_name}'")
    print(f"Backends with a template for {problem_name}:")
    for i, name in enumerate(backends, 1):
        print(f"  {i}) {name}")
    chosen_backends = _pick_many("Select backends", backends, args.backends)

    out_default = args.out or f"task_{problem_name}"
    answer = input(f"Output folder [{out_default}]: ").strip()
    out = Path(answer or out_default)
    answer = input(f"Time command [{args.time_command}]: ").strip()
    time_command = answer or args.time_command
    return problem_name, instances, chosen_backends, out, time_command


def _pick_one(prompt: str, names: list[str], preset: str | None) -> str:
    if preset:
        if preset not in names:
            raise NotFoundError(f"'{preset}' is not one of: {', '.join(names)}")
        return preset
    while True:
        answer = input(f"{prompt} [1-{len(names)} or name]: ").strip()
        if answer in names:
            return answer
        if answer.isdigit() and 1 <= int(answer) <= len(names):
            return names[int(answer) - 1]
        print(f"  not a valid choice: {answer!r}")


def _pick_many(prompt: str, names: list[str], preset: str | None) -> list[str]:
    if preset:
        chosen = [part.strip() for part in preset.split(",") if part.strip()]
    else:
        while True:
            answer = input(f"{prompt} [numbers/names, comma-separated, or 'all']: ").strip()
            if answer:
                break
        if answer == "all":
            return list(names)
        chosen = [part.strip() for part in answer.split(",") if part.strip()]
    picked = []
    for item in chosen:
        if item in names:
            picked.append(item)
        elif item.isdigit() and 1 <= int(item) <= len(names):
            picked.append(names[int(item) - 1])
        else:
            raise NotFoundError(f"'{item}' is not one of: {', '.join(names)}")
    return picked


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace, config: CliConfig) -> int:
    folder = load_taskfolder(Path(args.folder))
    try:
        time_limit = Decimal(args.time_limit) if args.time_limit else config.time_limit
        mem_mb = int(args.mem_limit) if args.mem_limit else config.mem_limit_mb
        grace = Decimal(args.grace)
    except (InvalidOperation, ValueError) as exc:
        raise ConfigurationError(f"bad limit value: {exc}") from exc
    limits = RunLimits(
        wall_seconds=time_limit,
        memory_bytes=mem_mb * 1024 * 1024 if mem_mb else None,
        grace_seconds=grace,
    )
    session = RunSession(
        folder,
        limits,
        jobs=args.jobs,
        control=ControlChannel(),
        resume_dir=Path(args.resume) if args.resume else None,
    )
    print(f"results: {session.results_dir}")
    results = session.run()
    for result in results:
        real = f" real {result.times.real:.2f}s" if result.times else ""
        marker = " (resumed)" if result.resumed else ""
        print(f"{result.job_id}: {result.termination}{real}{marker}")
    return 0


# --------------------------------------------------------------------------
# query
# --------------------------------------------------------------------------


def cmd_query(args: argparse.Namespace, config: CliConfig) -> int:
    metadata = Path(args.metadata) if args.metadata else config.metadata
    if metadata is None:
        raise ConfigurationError("no metadata file given (use --metadata or a config file)")
    store = _load_store(metadata)
    patterns = [metastore.parse_pattern_text(text, store.prefixes) for text in args.pattern]
    numeric = metastore.parse_filter(args.filter) if args.filter else None
    bindings = metastore.query(store, patterns, numeric_filter=numeric)
    variables: list[str] = []
    for pattern in patterns:
        for _, slot in pattern.slots():
            if isinstance(slot, metastore.Var) and slot.name not in variables:
                variables.append(slot.name)
    for binding in bindings:
        print("\t".join(binding[name].value for name in variables))
    return 0


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace, config: CliConfig) -> int:
    results_dir = Path(args.results_dir)
    report = reporting.parse_results_xml(results_dir / RESULTS_XML_NAME)
    wanted_html = args.html or not (args.html or args.timings)
    wanted_timings = args.timings or not (args.html or args.timings)
    if wanted_html:
        path = reporting.write_results_html(report, results_dir / "index.html")
        print(path)
    if wanted_timings:
        csv_path = results_dir / "timings.csv"
        csv_path.write_text(reporting.timings_table([report]), encoding="utf-8")
        print(csv_path)
    return 0


# --------------------------------------------------------------------------
# argument parsing and dispatch
# --------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="casbench",
        description="Compile benchmark taskfolders for external solver backends and run them under supervision.",
    )
    parser.add_argument("--version", action="version", version=f"casbench {__version__}")
    parser.add_argument("--config", metavar="FILE", help="config file (default: casbench.ini if present)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    create = sub.add_parser("create", help="compile a taskfolder from the instance database")
    create.add_argument("--problem", help="computation problem name")
    selection = create.add_mutually_exclusive_group()
    selection.add_argument("--instances", help="comma-separated TABLE/NAME pairs")
    selection.add_argument("--query", help="metadata filter, e.g. 'hasDegree <= 36', to preselect instances")
    create.add_argument("--backends", help="comma-separated backend names")
    create.add_argument("--out", help="taskfolder to create (must not exist or be empty)")
    create.add_argument("--name", help="task name (default: the output folder's name)")
    create.add_argument("--resources", help="resource root with SD-Table directories")
    create.add_argument("--registry", action="append", default=[], metavar="FILE", help="extra registry file (repeatable)")
    create.add_argument("--no-builtin-registry", action="store_true", help="start from an empty registry")
    create.add_argument("--metadata", help="Turtle metadata file for --query")
    create.add_argument("--time-command", default="time", help="POSIX time command to record in the bundle")
    create.add_argument(
        "--invocation",
        action="append",
        default=[],
        metavar="BACKEND=CMD",
        help="override a backend's call command in the bundle (repeatable)",
    )
    create.add_argument("--interactive", action="store_true", help="three-step terminal dialog")
    create.set_defaults(func=cmd_create)

    run = sub.add_parser("run", help="run every job of a taskfolder under supervision")
    run.add_argument("folder", help="taskfolder path")
    run.add_argument("--time-limit", metavar="SEC", help="wall-clock limit per job")
    run.add_argument("--mem-limit", metavar="MB", help="resident-set limit per job")
    run.add_argument("--grace", default="5", metavar="SEC", help="SIGTERM-to-SIGKILL grace period (default 5)")
    run.add_argument("--jobs", type=int, default=1, help="parallel workers (default 1; >1 taints timings)")
    run.add_argument("--resume", metavar="RESULTS_DIR", help="continue an interrupted run in place")
    run.set_defaults(func=cmd_run)

    query = sub.add_parser("query", help="run triple-pattern queries over a metadata file")
    query.add_argument("--metadata", help="Turtle metadata file")
    query.add_argument(
        "--pattern",
        action="append",
        default=[],
        required=False,
        help="pattern '?s sd:hasDegree ?d' (repeatable, conjunctive)",
    )
    query.add_argument("--filter", help="numeric filter, e.g. 'd <= 36'")
    query.set_defaults(func=cmd_query)

    report = sub.add_parser("report", help="regenerate HTML / export timings from results.xml")
    report.add_argument("results_dir", help="a run's results directory")
    report.add_argument("--html", action="store_true", help="regenerate index.html")
    report.add_argument("--timings", action="store_true", help="write timings.csv")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "query" and not args.pattern:
        print("error: at least one --pattern is required", file=sys.stderr)
        return 2
    try:
        config = load_config(Path(args.config) if args.config else None)
        logging.basicConfig(
            level=logging.WARNING - 10 * min(max(args.verbose, config.verbosity), 2),
            format="casbench: %(levelname)s: %(message)s",
            stream=sys.stderr,
        )
        return args.func(args, config)
    except ClobberError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RunAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 130 if exc.interrupted else 1
    except CasbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("error: interrupted", file=sys.stderr)
        return 130
    except InvalidOperation as exc:
        print(f"error: bad numeric value: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
