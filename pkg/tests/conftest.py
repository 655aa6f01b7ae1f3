import scenarios


def pytest_terminal_summary(terminalreporter):
    if not scenarios.ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(scenarios.ACCEPTANCE):
        terminalreporter.write_line(scenarios.ACCEPTANCE[key])
