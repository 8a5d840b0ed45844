"""Build and load portable taskfolder bundles.

A taskfolder is data-only and relocatable (no absolute paths inside):

    <out>/taskInfo.xml                                 task descriptor
    <out>/machinesettings.xml                          call commands, env
    <out>/casSources/<instance>/<backend>/executablefile<ext>

The runner later adds ``results/`` next to these.  All invocation command
templates for the task's backends are resolved and written into the
settings file at build time, so a bundle can run on a machine that has the
tool but not the registry files that produced it.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .compproblems import Registry, render_script
from .errors import BuildError, ClobberError, IntegrityError, NotFoundError, TaskFolderLoadError, ValidationError
from .resources import NAME_RE, SDTable, find_table, load_instance

TASK_INFO_NAME = "taskInfo.xml"
MACHINE_SETTINGS_NAME = "machinesettings.xml"
CAS_SOURCES_DIR = "casSources"
SCRIPT_BASENAME = "executablefile"
RESULTS_DIR = "results"


@dataclass(frozen=True)
class Task:
    """A computation problem plus the selected (table, instance) pairs and backends."""

    name: str
    problem: str
    instances: tuple[tuple[str, str], ...]
    backends: tuple[str, ...]

    def __post_init__(self):
        if not NAME_RE.match(self.name):
            raise ValidationError(f"invalid task name '{self.name}'")
        if not self.instances:
            raise ValidationError(f"task '{self.name}' selects no instances")
        if not self.backends:
            raise ValidationError(f"task '{self.name}' selects no backends")
        if len(set(self.instances)) != len(self.instances):
            raise ValidationError(f"task '{self.name}' lists a (table, instance) pair twice")
        if len(set(self.backends)) != len(self.backends):
            raise ValidationError(f"task '{self.name}' lists a backend twice")

    def job_pairs(self) -> list[tuple[str, str]]:
        """(instance, backend) pairs in execution order: instance-major, then backend."""
        return [(iname, bname) for _, iname in self.instances for bname in self.backends]


@dataclass(frozen=True)
class MachineSettings:
    """Per-machine execution settings; the part users edit after moving a bundle."""

    time_command: str = "time"
    invocations: dict[str, str] = field(default_factory=dict)
    environment: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for backend, command in self.invocations.items():
            if command.count("{script}") != 1:
                raise ValidationError(
                    f"invocation override for backend '{backend}' must contain {{script}} exactly once"
                )


@dataclass(frozen=True)
class TaskFolderLayout:
    root: Path
    task: Task
    settings: MachineSettings
    scripts: dict[tuple[str, str], Path] = field(default_factory=dict)

    def script_path(self, instance: str, backend: str) -> Path:
        return self.scripts[(instance, backend)]


def build_taskfolder(
    task: Task,
    settings: MachineSettings,
    registry: Registry,
    tables: list[SDTable],
    out: Path | str,
) -> TaskFolderLayout:
    """Materialize a task into a fresh directory; refuses to clobber existing files."""
    out = Path(out)
    if out.exists():
        if not out.is_dir():
            raise ClobberError(f"output path '{out}' exists and is not a directory")
        if any(out.iterdir()):
            raise ClobberError(f"output directory '{out}' is not empty")

    try:
        problem = registry.problem(task.problem)
        backends = [registry.backend(name) for name in task.backends]
        instances = [load_instance(find_table(tables, tname), iname) for tname, iname in task.instances]
    except NotFoundError as exc:
        raise BuildError(str(exc)) from exc

    seen: dict[str, str] = {}
    for tname, iname in task.instances:
        if iname in seen and seen[iname] != tname:
            raise BuildError(
                f"instance name '{iname}' appears in SD-Tables '{seen[iname]}' and '{tname}'; "
                "script directories are keyed by bare instance name"
            )
        seen[iname] = tname

    resolved = dict(settings.invocations)
    for backend in backends:
        resolved.setdefault(backend.name, backend.invocation)
    full_settings = MachineSettings(
        time_command=settings.time_command,
        invocations=resolved,
        environment=dict(settings.environment),
    )

    out.mkdir(parents=True, exist_ok=True)
    scripts: dict[tuple[str, str], Path] = {}
    for instance in instances:
        for backend in backends:
            text = render_script(problem, instance, backend)
            script_dir = out / CAS_SOURCES_DIR / instance.name / backend.name
            script_dir.mkdir(parents=True, exist_ok=True)
            script = script_dir / f"{SCRIPT_BASENAME}{backend.script_extension}"
            script.write_text(text, encoding="utf-8")
            scripts[(instance.name, backend.name)] = script

    (out / TASK_INFO_NAME).write_text(serialize_task(task), encoding="utf-8")
    (out / MACHINE_SETTINGS_NAME).write_text(serialize_settings(full_settings), encoding="utf-8")
    return TaskFolderLayout(root=out, task=task, settings=full_settings, scripts=scripts)


def load_taskfolder(root: Path | str) -> TaskFolderLayout:
    """Load a bundle back; verifies every described script exists on disk."""
    root = Path(root)
    task = parse_task_xml(_read(root / TASK_INFO_NAME))
    settings = parse_settings_xml(_read(root / MACHINE_SETTINGS_NAME))
    scripts: dict[tuple[str, str], Path] = {}
    for iname, bname in task.job_pairs():
        script_dir = root / CAS_SOURCES_DIR / iname / bname
        found = sorted(script_dir.glob(f"{SCRIPT_BASENAME}*")) if script_dir.is_dir() else []
        if len(found) != 1:
            reason = "has no script file" if not found else "has multiple script files"
            raise IntegrityError(f"job ({iname}, {bname}) {reason} under '{script_dir}'")
        scripts[(iname, bname)] = found[0]
    return TaskFolderLayout(root=root, task=task, settings=settings, scripts=scripts)


def _read(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TaskFolderLoadError(f"missing taskfolder file '{path}': {exc}") from exc


# --------------------------------------------------------------------------
# XML schemas
# --------------------------------------------------------------------------


def serialize_task(task: Task) -> str:
    root = ET.Element("Task", toolVersion=__version__)
    ET.SubElement(root, "name").text = task.name
    ET.SubElement(root, "computationProblem").text = task.problem
    instances = ET.SubElement(root, "problemInstances")
    for tname, iname in task.instances:
        ET.SubElement(instances, "instance", table=tname).text = iname
    systems = ET.SubElement(root, "computerAlgebraSystems")
    for bname in task.backends:
        ET.SubElement(systems, "cas").text = bname
    return _to_text(root)


def parse_task_xml(text: str) -> Task:
    root = _from_text(text, "Task")
    name = _child_text(root, "name")
    problem = _child_text(root, "computationProblem")
    instances = tuple(
        (el.get("table", ""), (el.text or "").strip())
        for el in root.findall("./problemInstances/instance")
    )
    backends = tuple((el.text or "").strip() for el in root.findall("./computerAlgebraSystems/cas"))
    try:
        return Task(name=name, problem=problem, instances=instances, backends=backends)
    except ValidationError as exc:
        raise TaskFolderLoadError(f"invalid task descriptor: {exc}") from exc


def serialize_settings(settings: MachineSettings) -> str:
    root = ET.Element("MachineSettings")
    ET.SubElement(root, "timeCommand").text = settings.time_command
    invocations = ET.SubElement(root, "invocations")
    for backend in sorted(settings.invocations):
        ET.SubElement(invocations, "invocation", backend=backend).text = settings.invocations[backend]
    environment = ET.SubElement(root, "environment")
    for key in sorted(settings.environment):
        ET.SubElement(environment, "env", name=key).text = settings.environment[key]
    return _to_text(root)


def parse_settings_xml(text: str) -> MachineSettings:
    root = _from_text(text, "MachineSettings")
    time_command = _child_text(root, "timeCommand")
    invocations = {
        el.get("backend", ""): (el.text or "").strip()
        for el in root.findall("./invocations/invocation")
    }
    environment = {el.get("name", ""): el.text or "" for el in root.findall("./environment/env")}
    try:
        return MachineSettings(time_command=time_command, invocations=invocations, environment=environment)
    except ValidationError as exc:
        raise TaskFolderLoadError(f"invalid machine settings: {exc}") from exc


def _to_text(root: ET.Element) -> str:
    tree = ET.ElementTree(root)
    ET.indent(tree, space="  ")
    return ET.tostring(root, encoding="unicode") + "\n"


def _from_text(text: str, expected_root: str) -> ET.Element:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise TaskFolderLoadError(f"malformed XML: {exc}") from exc
    if root.tag != expected_root:
        raise TaskFolderLoadError(f"expected root element '{expected_root}', found '{root.tag}'")
    return root


def _child_text(root: ET.Element, tag: str) -> str:
    el = root.find(tag)
    if el is None:
        raise TaskFolderLoadError(f"missing '{tag}' element")
    return (el.text or "").strip()
