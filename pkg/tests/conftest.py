from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"
MNIST_IMAGES = DATA / "mnist2k-images-idx3-ubyte.gz"
MNIST_LABELS = DATA / "mnist2k-labels-idx1-ubyte.gz"


@pytest.fixture
def mnist_paths():
    return str(MNIST_IMAGES), str(MNIST_LABELS)


# acceptance criteria append "C<k> name: PASS|FAIL detail" lines here
ACCEPTANCE_REPORT: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_REPORT, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
