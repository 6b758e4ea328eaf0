import sys


def pytest_terminal_summary(terminalreporter):
    # echo the acceptance verdict lines after the run, uncaptured
    for name, mod in sys.modules.items():
        if name.rsplit(".", 1)[-1] == "test_acceptance":
            lines = getattr(mod, "VERDICTS", ())
            if lines:
                terminalreporter.section("acceptance verdicts")
                for line in lines:
                    terminalreporter.write_line(line)
            return
