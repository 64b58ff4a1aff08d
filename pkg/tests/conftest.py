import pytest

from connlab.corpus import field_log_config, generate_corpus
from connlab.schema import ConnectionAttempt, Outcome, PhaseTiming


@pytest.fixture(scope="session")
def small_corpus():
    """20 k calibrated attempts with traces."""
    return generate_corpus(field_log_config(20_000, seed=3), with_traces=True)


def attempt(i=0, outcome=Outcome.SUCCESS, time=None, phases=None, **kw):
    if outcome is Outcome.SUCCESS and time is None:
        time = 1000
    if outcome is Outcome.SUCCESS and phases is None:
        phases = PhaseTiming(0, 0, 0, time)
    base = dict(attempt_id=f"a{i}", user_id="u", hour_of_day=0, rssi_dbm=-70, num_devices=1,
                device_model="d", ap_model="ap", encrypted=True)
    base.update(kw)
    return ConnectionAttempt(outcome=outcome, connection_time_ms=time if outcome is Outcome.SUCCESS else None,
                             phases=phases if outcome is Outcome.SUCCESS else None, **base)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
