import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def square_image(width=96, height=80, side=32, fg=(220, 30, 30), bg=(128, 128, 128)):
    """Flat background with a centred square; returns (rgb, mask)."""
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[...] = bg
    mask = np.zeros((height, width), dtype=bool)
    t, l = (height - side) // 2, (width - side) // 2
    mask[t : t + side, l : l + side] = True
    img[mask] = fg
    return img, mask


#: (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE_LINES: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"{status:4s}  {name}: {detail}")
