import pytest

from resid.records import RunRecord

# the five-run session on the 3-chunk if-program
WORKED_RUNS = [
    RunRecord.bug("1", ["1"], ["1"]),
    RunRecord.bug("2", ["1", "2"], ["2"]),
    RunRecord.ok("3", ["1", "3"]),
    RunRecord.bug("4", ["1", "2"], ["1"]),
    RunRecord.bug("5", ["1", "3"], ["3"]),
]

FIG1_SOURCE = """\
int main(int argc) {
    int x = read_input();
    int y = x * 2;
    if (y > 10) {
        y = y - 10;
        print(y);
    } else {
        y = y + 1;
        print(y);
    }
}
"""

FIG2_SOURCE = """\
int main() {
    int i = 0;
    int total = 0;
    while (i < n) {
        total = total + i;
        i = i + 1;
    }
    print(total);
}
"""

STRAIGHT_SOURCE = """\
int main() {
    int a = 1;
    int b = a + 2;

    print(b);
}
"""


@pytest.fixture
def worked_runs():
    return list(WORKED_RUNS)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
