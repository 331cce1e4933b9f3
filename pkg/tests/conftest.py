import numpy as np
import pytest

from peeroff import NetworkConfig, SlotState


def make_cfg(n=3, mu=75.0, tau=0.2, kappa=9e-5, budget_hour=22.0, v=50.0,
             slot=60.0, cap_factor=10.0):
    budget = budget_hour * slot / 3600.0
    return NetworkConfig(
        service_rates=np.full(n, mu),
        lan_delay=tau,
        energy_per_task=kappa,
        energy_budgets=np.full(n, budget),
        energy_cap=cap_factor * budget,
        delay_cap=1e5,
        control_v=v,
        slot_duration=slot,
    )


def make_state(arrivals, deficit=None, uplink=None, tx=None, t=0):
    arrivals = np.asarray(arrivals, dtype=float)
    n = arrivals.size
    return SlotState(
        arrivals=arrivals,
        uplink_delay_cost=np.zeros(n) if uplink is None else np.asarray(uplink, float),
        tx_energy=np.zeros(n) if tx is None else np.asarray(tx, float),
        deficit=np.zeros(n) if deficit is None else np.asarray(deficit, float),
        slot_index=t,
    )


def random_instance(rng, n=None, max_load=0.93, with_deficit=True):
    """A random slot in the ranges the default configuration produces."""
    if n is None:
        n = int(rng.integers(2, 5))
    cfg = make_cfg(n)
    deficit = rng.uniform(0.0, 20.0, n) * rng.integers(0, 2, n) if with_deficit \
        else np.zeros(n)
    st = SlotState(
        arrivals=rng.uniform(0.0, max_load, n) * cfg.service_rates,
        uplink_delay_cost=rng.uniform(0.0, 0.1, n),
        tx_energy=rng.uniform(0.0, 1e-4, n),
        deficit=deficit,
    )
    return cfg, st


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
