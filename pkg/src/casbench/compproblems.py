"""Computation problems, solver backends, and script-template rendering.

Problems and backends are declared in INI registry files so that new solver
systems can be hooked up by editing data files only.  A built-in registry
ships with the package; user files are merged on top of it at startup.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError, ConflictError, NotFoundError, RenderError, ValidationError
from .resources import NAME_RE, ProblemInstance, SDTable

DEFAULT_SCRIPT_EXTENSION = ".sdc"

PLACEHOLDER_RE = re.compile(r"\$(vars|basis|name|param:[A-Za-z_][A-Za-z0-9_]*)\$")
_CANDIDATE_RE = re.compile(r"\$[A-Za-z_][A-Za-z0-9_:]*\$")


@dataclass(frozen=True)
class TemplateText:
    """Script template body; placeholders are ``$vars$``, ``$basis$``, ``$name$``, ``$param:key$``."""

    body: str

    def __post_init__(self):
        for match in _CANDIDATE_RE.finditer(self.body):
            if not PLACEHOLDER_RE.fullmatch(match.group(0)):
                raise ValidationError(f"unknown placeholder {match.group(0)!r} in template")


@dataclass(frozen=True)
class ComputationProblem:
    name: str
    compatible_tables: tuple[str, ...]
    parameters: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not NAME_RE.match(self.name):
            raise ValidationError(f"invalid computation problem name '{self.name}'")
        if not self.compatible_tables:
            raise ValidationError(f"problem '{self.name}' lists no compatible SD-Tables")


@dataclass(frozen=True)
class Backend:
    """An external solver: how to call it, plus one script template per problem."""

    name: str
    invocation: str
    script_extension: str = DEFAULT_SCRIPT_EXTENSION
    templates: dict[str, TemplateText] = field(default_factory=dict)

    def __post_init__(self):
        if not NAME_RE.match(self.name):
            raise ValidationError(f"invalid backend name '{self.name}'")
        if self.invocation.count("{script}") != 1:
            raise ValidationError(
                f"backend '{self.name}' invocation must contain {{script}} exactly once"
            )


class Registry:
    """Startup-built lookup of problems and backends; read-only afterwards."""

    def __init__(self):
        self._problems: dict[str, ComputationProblem] = {}
        self._backends: dict[str, Backend] = {}

    def register_problem(self, problem: ComputationProblem) -> None:
        if problem.name in self._problems:
            raise ConflictError(f"computation problem '{problem.name}' is already registered")
        self._problems[problem.name] = problem

    def register_backend(self, backend: Backend) -> None:
        if backend.name in self._backends:
            raise ConflictError(f"backend '{backend.name}' is already registered")
        self._backends[backend.name] = backend

    def problem(self, name: str) -> ComputationProblem:
        try:
            return self._problems[name]
        except KeyError:
            known = ", ".join(sorted(self._problems)) or "none"
            raise NotFoundError(f"unknown computation problem '{name}' (registered: {known})") from None

    def backend(self, name: str) -> Backend:
        try:
            return self._backends[name]
        except KeyError:
            known = ", ".join(sorted(self._backends)) or "none"
            raise NotFoundError(f"unknown backend '{name}' (registered: {known})") from None

    def problems(self) -> list[ComputationProblem]:
        return [self._problems[name] for name in sorted(self._problems)]

    def backends(self) -> list[Backend]:
        return [self._backends[name] for name in sorted(self._backends)]

    def backends_for_problem(self, problem_name: str) -> list[Backend]:
        return [b for b in self.backends() if problem_name in b.templates]

    def list_suitable_instances(self, problem_name: str, tables: list[SDTable]) -> list[tuple[str, str]]:
        """All (table, instance) pairs the problem accepts, sorted table-major."""
        problem = self.problem(problem_name)
        pairs = [
            (table.name, entry)
            for table in tables
            if table.name in problem.compatible_tables
            for entry in table.entries
        ]
        return sorted(pairs)

    @classmethod
    def builtin(cls) -> "Registry":
        registry = cls()
        load_registry_file(Path(__file__).parent / "data" / "registry.ini", registry)
        return registry


def load_registry_file(path: Path | str, registry: Registry) -> Registry:
    """Merge one INI registry file into a registry.

    Template values are file paths relative to the registry file.  Section
    names are ``problem <name>`` or ``backend <name>``.
    """
    path = Path(path)
    parser = configparser.ConfigParser(delimiters=("=",), interpolation=None)
    parser.optionxform = str
    try:
        with path.open(encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigurationError(f"cannot read registry file '{path}': {exc}") from exc
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed registry file '{path}': {exc}") from exc

    base = path.parent
    for section in parser.sections():
        words = section.split()
        if len(words) != 2 or words[0] not in ("problem", "backend"):
            raise ConfigurationError(f"unrecognized section '[{section}]' in '{path}'")
        kind, name = words
        options = dict(parser.items(section))
        if kind == "problem":
            registry.register_problem(_problem_from_options(name, options, path))
        else:
            registry.register_backend(_backend_from_options(name, options, base, path))
    return registry


def _problem_from_options(name: str, options: dict[str, str], path: Path) -> ComputationProblem:
    tables_raw = options.pop("tables", "")
    tables = tuple(part.strip() for part in tables_raw.split(",") if part.strip())
    parameters = {}
    for key in list(options):
        if key.startswith("param."):
            parameters[key[len("param.") :]] = options.pop(key)
    if options:
        raise ConfigurationError(f"unknown keys {sorted(options)} for problem '{name}' in '{path}'")
    return ComputationProblem(name=name, compatible_tables=tables, parameters=parameters)


def _backend_from_options(name: str, options: dict[str, str], base: Path, path: Path) -> Backend:
    invocation = options.pop("invocation", None)
    if invocation is None:
        raise ConfigurationError(f"backend '{name}' in '{path}' is missing 'invocation'")
    extension = options.pop("extension", DEFAULT_SCRIPT_EXTENSION)
    templates = {}
    for key in list(options):
        if key.startswith("template."):
            problem_name = key[len("template.") :]
            template_path = base / options.pop(key)
            try:
                body = template_path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigurationError(
                    f"cannot read template '{template_path}' for backend '{name}': {exc}"
                ) from exc
            templates[problem_name] = TemplateText(body)
    if options:
        raise ConfigurationError(f"unknown keys {sorted(options)} for backend '{name}' in '{path}'")
    return Backend(name=name, invocation=invocation, script_extension=extension, templates=templates)


def render_script(problem: ComputationProblem, instance: ProblemInstance, backend: Backend) -> str:
    """Substitute a backend's template for one instance; pure and total.

    The result never contains an unsubstituted placeholder.
    """
    template = backend.templates.get(problem.name)
    if template is None:
        raise RenderError(f"backend '{backend.name}' has no template for problem '{problem.name}'")
    if instance.table not in problem.compatible_tables:
        raise RenderError(
            f"instance '{instance.name}' comes from SD-Table '{instance.table}', "
            f"which problem '{problem.name}' does not accept"
        )

    def substitute(match: re.Match) -> str:
        token = match.group(1)
        if token == "vars":
            return ",".join(instance.variables)
        if token == "basis":
            return ",".join(instance.basis)
        if token == "name":
            return instance.name
        key = token[len("param:") :]
        if key not in problem.parameters:
            raise RenderError(f"template needs parameter '{key}', which problem '{problem.name}' does not define")
        return problem.parameters[key]

    rendered = PLACEHOLDER_RE.sub(substitute, template.body)
    leftover = PLACEHOLDER_RE.search(rendered)
    if leftover is not None:
        raise RenderError(f"substituted value re-introduced placeholder {leftover.group(0)!r}")
    return rendered
