"""Shared fixtures: a resource tree, a registry with shell stub backends, metadata."""

from __future__ import annotations

import textwrap
from pathlib import Path

import pytest

from casbench.compproblems import Registry, load_registry_file
from casbench.resources import scan_tables

CAPRASSE_XML = """\
<Instance>
  <vars>x,y,z,t</vars>
  <basis>
    <poly>y^2*z+2*x*y*t-2*x-z</poly>
    <poly>4*x*y^2*z+4*x^2*y*t+2*y^3*t+4*x^2-10*y^2+4*x*z-10*y*t+2-x^3*z</poly>
    <poly>2*y*z*t+x*t^2-x-2*z</poly>
    <poly>4*y*z^2*t+4*x*z*t^2+2*y*t^3+4*x*z+4*z^2-10*y*t-10*t^2+2-x*z^3</poly>
  </basis>
  <degree>56</degree>
  <degreeList>3,3,4,4</degreeList>
  <lengthsList>4,4,9,9</lengthsList>
</Instance>
"""

AMRHEIN_XML = """\
<Instance>
  <vars>x,y,z</vars>
  <basis>
    <poly>x^2+y*z-2*x</poly>
    <poly>y^2+x*z-3*y</poly>
    <poly>z^2+x*y-4*z</poly>
  </basis>
  <degree>8</degree>
</Instance>
"""

COMP_GB_XML = """\
<ComputationProblemDescription>
  <algorithm>GroebnerBasis</algorithm>
  <ordering>lp</ordering>
</ComputationProblemDescription>
"""

TRIVIAL_XML = """\
<Instance>
  <vars>x</vars>
  <basis>
    <poly>x</poly>
  </basis>
</Instance>
"""

CAPRASSE_TTL = """\
@prefix sd: <http://symbolicdata.org/Data/Model/> .

<http://symbolicdata.org/Data/PolynomialSystems/Caprasse>
    a sd:IntPS ;
    sd:hasDegree "56" ;
    sd:hasDegreeList "3,3,4,4" ;
    sd:hasLengthsList "4,4,9,9" ;
    sd:hasVariables "x,y,z,t" ;
    sd:relatedXMLResource
      <http://symbolicdata.org/XMLResources/IntPS/Caprasse.xml> .
"""

REGISTRY_INI = """\
[problem nap]
tables = NAP

[problem alloc]
tables = MEM

[problem trio]
tables = SET

[backend casA]
invocation = sh {script}
extension = .sdc
template.GB_Z_lp = templates/casA_gb.sh
template.nap = templates/echo.sh

[backend casB]
invocation = sh {script}
extension = .sdc
template.GB_Z_lp = templates/casB_gb.sh

[backend casSleep]
invocation = sh {script}
template.nap = templates/sleep10.sh

[backend casErr]
invocation = sh {script}
template.nap = templates/exit3.sh

[backend casMem]
invocation = sh {script}
template.alloc = templates/alloc.sh

[backend casFork]
invocation = sh {script}
template.nap = templates/fork.sh

[backend casJob]
invocation = sh {script}
template.trio = templates/trio_echo.sh

[backend casJobSleep]
invocation = sh {script}
template.trio = templates/trio_case.sh
"""

TEMPLATES = {
    "casA_gb.sh": textwrap.dedent(
        """\
        echo "problem $name$ ordering $param:ordering$"
        echo "vars $vars$"
        echo "basis $basis$"
        """
    ),
    "casB_gb.sh": "printf 'done %s\\n' '$name$'\n",
    "echo.sh": 'echo "nap $name$"\n',
    "sleep10.sh": "sleep 10\n",
    "exit3.sh": "exit 3\n",
    "alloc.sh": (
        'python3 -c "import time; n = int(\'$name$\'[1:]); '
        "b = bytearray(n * 1024 * 1024); b[::4096] = b'x' * (len(b) // 4096); "
        'time.sleep(1.5)"\n'
    ),
    "fork.sh": "sleep 31.417 &\nexec sleep 31.417\n",
    "trio_echo.sh": 'echo "job $name$"\n',
    "trio_case.sh": textwrap.dedent(
        """\
        case "$name$" in
          A1) echo "job $name$" ;;
          *) sleep 30 ;;
        esac
        """
    ),
}


def make_resource_tree(root: Path) -> Path:
    files = {
        "IntPS/Amrhein.xml": AMRHEIN_XML,
        "IntPS/Caprasse.xml": CAPRASSE_XML,
        "COMP/GB_Z_lp.xml": COMP_GB_XML,
        "MEM/M30.xml": TRIVIAL_XML,
        "MEM/M300.xml": TRIVIAL_XML,
        "NAP/Lazy.xml": TRIVIAL_XML,
        "SET/A1.xml": TRIVIAL_XML,
        "SET/A2.xml": TRIVIAL_XML,
        "SET/A3.xml": TRIVIAL_XML,
    }
    for rel, text in files.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    return root


def make_registry_files(root: Path) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    registry_path = root / "registry.ini"
    registry_path.write_text(REGISTRY_INI, encoding="utf-8")
    templates = root / "templates"
    templates.mkdir(exist_ok=True)
    for name, body in TEMPLATES.items():
        (templates / name).write_text(body, encoding="utf-8")
    return registry_path


@pytest.fixture
def resource_root(tmp_path):
    return make_resource_tree(tmp_path / "resources")


@pytest.fixture
def tables(resource_root):
    return scan_tables(resource_root)


@pytest.fixture
def registry_file(tmp_path):
    return make_registry_files(tmp_path / "registry")


@pytest.fixture
def registry(registry_file):
    reg = Registry.builtin()
    load_registry_file(registry_file, reg)
    return reg


@pytest.fixture
def caprasse_ttl_path(tmp_path):
    path = tmp_path / "caprasse.ttl"
    path.write_text(CAPRASSE_TTL, encoding="utf-8")
    return path
