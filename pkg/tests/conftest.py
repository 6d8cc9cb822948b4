import numpy as np
import pytest

from hvibem.bem import build_steklov
from hvibem.bench import RunConfig
from hvibem.kernels import lame_from_engineering
from hvibem.mesh import Part, PartSpec, build_rectangle_boundary

ALL_NEUMANN = PartSpec.uniform(bottom=Part.NEUMANN, right=Part.NEUMANN, top=Part.NEUMANN, left=Part.NEUMANN)


@pytest.fixture(scope="session")
def steel():
    return lame_from_engineering(210000.0, 0.3)


@pytest.fixture(scope="session")
def bench_config():
    return RunConfig()


@pytest.fixture(scope="session")
def bench_mesh(bench_config):
    return bench_config.mesh()


@pytest.fixture(scope="session")
def bench_steklov(bench_mesh, steel):
    return build_steklov(bench_mesh, steel)


@pytest.fixture(scope="session")
def square_steklov(steel):
    mesh = build_rectangle_boundary(1.0, 1.0, h=1 / 8, parts=ALL_NEUMANN, origin=(-0.5, -0.5))
    return build_steklov(mesh, steel)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Append ``criterion N: PASS|FAIL ...`` lines, echoed at the end of the session."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def log(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
