import pytest

from blockpipe import kernels
from blockpipe.model import GENESIS, Version, make_transaction

# Table of reads/writes over keys K0..K9 for the six-transaction example.
EXAMPLE_READS = [[0, 1], [3, 4, 5], [6, 7], [2, 8], [9], []]
EXAMPLE_WRITES = [[2], [0], [3, 9], [1, 4], [5, 6, 8], [7]]


def six_tx_example():
    return [make_transaction(i, [(f"K{k}", GENESIS) for k in EXAMPLE_READS[i]],
                             {f"K{k}": 1 for k in EXAMPLE_WRITES[i]})
            for i in range(6)]


V1 = Version(0, 0)


def four_tx_example():
    """T1 blindly updates k1; T2..T4 read k1 at its old version."""
    return [
        make_transaction(1, [], {"k1": 2}),
        make_transaction(2, [("k1", V1), ("k2", V1)], {"k2": 2}),
        make_transaction(3, [("k1", V1), ("k3", V1)], {"k3": 2}),
        make_transaction(4, [("k1", V1), ("k3", V1)], {"k4": 2}),
    ]


@pytest.fixture
def six_txs():
    return six_tx_example()


@pytest.fixture
def four_txs():
    return four_tx_example()


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request, monkeypatch):
    """Run a test once per importable kernel backend."""
    mod = kernels.available_backends()[request.param]
    for name in ("conflict_successors", "strongly_connected", "elementary_cycles",
                 "shortest_cycles"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


def pytest_terminal_summary(terminalreporter):
    from _report import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
