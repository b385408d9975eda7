def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance criteria PASS/FAIL lines after the run."""
    try:
        import acceptance_helpers
    except ImportError:
        return
    if acceptance_helpers.CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_helpers.CRITERION_LINES:
            terminalreporter.write_line(line)
