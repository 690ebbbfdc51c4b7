from hypothesis import settings

# Kernels are JIT-compiled on first use; wall-clock deadlines would measure the compiler.
settings.register_profile('default', deadline=None)
settings.load_profile('default')


# One PASS/FAIL line per acceptance criterion, printed after the run.
_criteria = {}


def pytest_runtest_logreport(report):
    if 'test_acceptance.py::test_c' not in report.nodeid:
        return
    if report.when == 'call' or report.failed:
        detail = dict(report.user_properties).get('detail', '')
        name = report.nodeid.split('::test_', 1)[1]
        if report.failed or name not in _criteria:
            _criteria[name] = ('PASS' if report.passed else 'FAIL', detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section('acceptance criteria')
    for name in sorted(_criteria):
        verdict, detail = _criteria[name]
        number, _, title = name.partition('_')
        line = f'{verdict}  {number.upper()} {title.replace("_", " ")}'
        terminalreporter.write_line(f'{line}  ({detail})' if detail else line)
