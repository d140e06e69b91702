import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SAMPLE_CSV = """Date,Open,High,Low,Volume,Close
10/01/2014,387.427002,391.378998,380.779999,26229400.0,383.614990
10/02/2014,383.988007,385.497009,372.946014,21777700.0,375.071991
10/03/2014,375.181000,377.695007,357.859009,30901200.0,359.511993
10/04/2014,359.891998,364.487000,325.885986,47236500.0,328.865997
10/05/2014,328.915985,341.800995,289.295990,83308096.0,320.510010
"""

# filled by test_acceptance, printed at the end of the session
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def sample_csv():
    return SAMPLE_CSV


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key:>2}: {detail}")
