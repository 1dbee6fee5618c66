import numpy as np
import pytest

from fednc.federation import FederationConfig, FederationState, partition_data
from fednc.model import Architecture, init_model, make_synthetic
from fednc.seeding import seed_stream

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_state(seed=0, n_clients=20, n_train=600, n_test=200, partition="iid", dim=8,
               arch_kind="mlp", hidden=8, n_classes=10, **fed_kwargs):
    train, test = make_synthetic(n_train, n_test, seed_stream(seed, "data"), n_classes=n_classes, dim=dim)
    fcfg = FederationConfig(n_clients=n_clients, partition=partition, **fed_kwargs)
    clients = partition_data(train, fcfg, seed_stream(seed, "partition"))
    arch = Architecture(arch_kind, dim, n_classes, hidden)
    return FederationState(init_model(arch, seed_stream(seed, "init")), clients, test), fcfg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
