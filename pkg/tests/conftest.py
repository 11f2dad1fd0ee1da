import pytest

from refruns import cosine_state, p0_params


@pytest.fixture
def params():
    return p0_params(64)


@pytest.fixture
def p0():
    return p0_params(256)


@pytest.fixture
def perturbed(params):
    return cosine_state(params)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[number])
