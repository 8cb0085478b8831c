import numpy as np
import pytest
from PIL import Image

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def write_png(path, array):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path)


@pytest.fixture
def tiny_folder(tmp_path):
    """Two classes: a (2 images), b (3 images), 8x6 grayscale."""
    root = tmp_path / "tiny"
    rng = np.random.default_rng(7)
    for cls, count in (("a", 2), ("b", 3)):
        for i in range(count):
            write_png(root / cls / f"img{i}.png", rng.integers(0, 256, (6, 8)))
    return root
