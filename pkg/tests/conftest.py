import json
import os

import numpy as np
import pytest

from holomera import optimizer as opt
from holomera import serialize as ser

CACHE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                     ".opt-cache")


def cached_ising_network(chi, sweeps, seed=0, **kw):
    """Optimized critical-chain network, cached on disk across sessions.

    The cache key carries chi/sweeps/seed; the loaded network is
    revalidated (isometry residuals) before use.
    """
    os.makedirs(CACHE, exist_ok=True)
    path = os.path.join(CACHE, f"ising-chi{chi}-seed{seed}.json")
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            mera = ser.network_from_json(json.load(fh))
        if mera.meta.get("sweeps_total", 0) >= sweeps:
            mera.validate(tol=1e-10)
            return mera
    h = opt.ising_critical_hamiltonian()
    mera = None
    done = 0
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            mera = ser.network_from_json(json.load(fh))
        done = mera.meta.get("sweeps_total", 0)
    while done < sweeps:
        step = min(250, sweeps - done)
        mera, rep = opt.optimize(h, chi=chi, sweeps=step, seed=seed,
                                 resume=mera, conv_tol=1e-10, **kw)
        done += rep.sweeps
        mera.meta["energy"] = rep.final_energy
        mera.meta["sweeps_total"] = done
        ser.write_json(path, ser.network_to_json(mera))
    return mera


@pytest.fixture(scope="session")
def ising_chi2():
    return cached_ising_network(2, 250)


@pytest.fixture(scope="session")
def ising_chi4():
    return cached_ising_network(4, 500)


@pytest.fixture(scope="session")
def ising_chi6():
    return cached_ising_network(6, 1500)


@pytest.fixture(scope="session")
def ed_dimensions():
    from holomera import ising_exact as ie
    return ie.conformal_dimensions_from_ed(sizes=(10, 12, 14, 16))


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
