import numpy as np
import pytest

from illumkit.panorama import Locale
from illumkit.synthetic import BoxRoom, default_cameras, render_views


@pytest.fixture(scope="session")
def room():
    return BoxRoom()


@pytest.fixture(scope="session")
def room_views(room):
    return render_views(room, default_cameras(room, 4))


@pytest.fixture(scope="session")
def center_locale(room):
    return Locale(room.center)


@pytest.fixture(scope="session")
def center_truth(room, center_locale):
    return room.ray_cast_panorama(center_locale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, detail in sorted(RESULTS):
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}: {detail}")
