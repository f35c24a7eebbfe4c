import numpy as np
import pytest

from mtsent.multitask import MultitaskNetwork, NetworkConfig
from mtsent.optim import TaskData
from mtsent.synthetic import make_corpus

SMALL = NetworkConfig(embed_dim=6, bilstm_out=6, h1_size=6, hm_size=6)


def encode_dataset(net, ds):
    return TaskData([net.encode(ex.tweet.tokens) for ex in ds.examples], ds.labels)


@pytest.fixture(scope="session")
def small_corpus():
    return make_corpus(n_fine=300, n_ternary=300, n_dev=100, vocab_size=60, seed=7)


@pytest.fixture
def small_setup(small_corpus):
    """A fresh two-head network with encoded fine/ternary train sets and a fine dev set."""

    def build(seed=0, config=SMALL):
        net = MultitaskNetwork.create(config, small_corpus.vocab, seed=seed)
        fine = encode_dataset(net, small_corpus.fine_train)
        ternary = encode_dataset(net, small_corpus.ternary_train)
        dev = encode_dataset(net, small_corpus.fine_dev)
        return net, fine, ternary, dev

    return build


def params_equal(a, b):
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


# -- acceptance reporting ----------------------------------------------------

_CRITERIA: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test decides")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    entry = _CRITERIA.setdefault(name, ["PASS", ""])
    if call.excinfo is not None:
        if call.excinfo.errisinstance(pytest.skip.Exception):
            if entry[0] == "PASS":
                entry[0] = "SKIP"
                entry[1] = str(call.excinfo.value)
        else:
            entry[0] = "FAIL"
            entry[1] = call.excinfo.exconly().splitlines()[0][:160]
    elif call.when == "call":
        details = [v for k, v in item.user_properties if k == "detail"]
        if details and entry[0] == "PASS":
            entry[1] = "; ".join([entry[1]] * bool(entry[1]) + [str(d) for d in details])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, (status, detail) in _CRITERIA.items():
        terminalreporter.write_line(f"{status} {name}" + (f": {detail}" if detail else ""))
