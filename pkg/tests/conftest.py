from __future__ import annotations

import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {detail}")
