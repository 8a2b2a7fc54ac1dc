"""Shared Monte Carlo runs, computed once per session and reused by several test files."""

import time

import numpy as np
import pytest

from cleradii.diffusion import SimConfig, sample_level_hit, simulate_exits
from cleradii.gasket import survival_probability

# step of the exact scheme used by the distributional gates
MC_DT = 1e-2
# step used for the long truncated-horizon tail runs
TAIL_DT = 2e-2
MC_N = 100_000
TAIL_N = 1_000_000
MC_SEED = 20240601
TAIL_S = np.linspace(10.0, 60.0, 11)


class MonteCarloCache:
    def __init__(self):
        self._store = {}
        self.elapsed = {}

    def _get(self, key, make):
        if key not in self._store:
            t0 = time.perf_counter()
            self._store[key] = make()
            self.elapsed[key] = time.perf_counter() - t0
        return self._store[key]

    def exits(self, kappa, n=MC_N, dt_max=MC_DT, seed=MC_SEED):
        return self._get(("exits", kappa, n, dt_max, seed),
                         lambda: simulate_exits(SimConfig(kappa, dt_max=dt_max, seed=seed), n))

    def survival(self, kappa, s=TAIL_S, n=TAIL_N, dt_max=TAIL_DT, seed=MC_SEED):
        s = tuple(float(x) for x in s)
        return self._get(("survival", kappa, s, n, dt_max, seed),
                         lambda: survival_probability(kappa, s, n, seed, dt_max=dt_max))

    def level_hits(self, kappa, theta0, n=MC_N, dt_max=MC_DT, seed=MC_SEED):
        cfg = SimConfig(kappa, theta0=theta0, dt_max=dt_max, seed=seed)
        return self._get(("level", kappa, theta0, n, dt_max, seed),
                         lambda: sample_level_hit(cfg, n))


_CACHE = MonteCarloCache()


@pytest.fixture(scope="session")
def mc():
    return _CACHE



# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
