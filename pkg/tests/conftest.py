""" Collects the outcome of every test marked `criterion(n, title)` and prints one line per criterion. """
import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line('markers', 'criterion(number, title): acceptance criterion covered by the test')


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker('criterion')
    if marker is None:
        return
    number, title = marker.args
    entry = _results.setdefault(number, {'title': title, 'passed': True, 'tests': 0})
    if report.when == 'call':
        entry['tests'] += 1
    if report.failed or (report.when == 'call' and report.skipped):
        entry['passed'] = False


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section('acceptance criteria')
    for number in sorted(_results):
        entry = _results[number]
        verdict = 'PASS' if entry['passed'] and entry['tests'] else 'FAIL'
        terminalreporter.write_line(f'criterion {number} [{entry["title"]}]: {verdict}')
