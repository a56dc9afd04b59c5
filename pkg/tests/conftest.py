import pytest

from guidekit.demo import assembly_trace, sandwich_fsm, sandwich_timelines, square_video


@pytest.fixture(scope="session")
def assembly():
    """(frames, reference segments) for the six-step demo trace."""
    return assembly_trace()


@pytest.fixture(scope="session")
def sandwich():
    return sandwich_fsm()


@pytest.fixture(scope="session")
def timelines():
    return sandwich_timelines()


@pytest.fixture(scope="session")
def square():
    """(frames, truth boxes) for the translating textured square."""
    return square_video()
