"""Shared fixtures. Expensive pretrained policies are cached under
tests/.cache so repeated runs skip the training."""

import pathlib

import numpy as np
import pytest

from hmat import checkpoint, env, hierarchy

CACHE = pathlib.Path(__file__).parent / ".cache"
WORKER_SEED = 1234
WORKER_STEPS = 100_000


def ensure_worker():
    ck = CACHE / "worker_cobp.ckpt"
    lo = CACHE / "worker_cobp_losses.npy"
    if not (ck.exists() and lo.exists()):
        CACHE.mkdir(exist_ok=True)
        rng = np.random.default_rng(WORKER_SEED)
        losses = []
        worker = hierarchy.pretrain_worker(env.cobp_config(), WORKER_STEPS,
                                           rng, loss_log=losses)
        np.save(lo, np.asarray(losses))
        checkpoint.save_policies(str(ck), {"worker": worker},
                                 {"seed": WORKER_SEED, "steps": WORKER_STEPS})
    return ck, lo


@pytest.fixture(scope="session")
def worker_checkpoint_path():
    return str(ensure_worker()[0])


@pytest.fixture(scope="session")
def pretrained_worker():
    policies, _ = checkpoint.load_policies(str(ensure_worker()[0]))
    return policies["worker"]


@pytest.fixture(scope="session")
def worker_losses():
    return np.load(ensure_worker()[1])
