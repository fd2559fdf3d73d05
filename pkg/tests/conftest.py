import math

import numpy as np
import pytest

from rbshare import channel as ch
from rbshare import traffic as tr
from rbshare.environment import BufferEntry, SchedulingEnv


def make_env(buffer_len=10, continuity_len=2, alpha=1.0, beta=0.0, delta=math.inf,
             steps=50, rate="high", seed=0, record_grid=False, **channel_kw):
    params = ch.ChannelParams(**channel_kw)
    ss = np.random.SeedSequence(seed)
    t_ss, c_ss = ss.spawn(2)
    return SchedulingEnv(
        params, ch.default_cqi_table(), tr.service_catalog(rate),
        buffer_len, continuity_len, alpha, beta, delta, steps,
        np.random.default_rng(t_ss), np.random.default_rng(c_ss),
        record_grid=record_grid,
    )


def put_entry(env, slot, type_id=1, ttl=None, remaining=None, bits_per_rb=999):
    """Inject a live request into a buffer slot with a fixed per-RB bit budget."""
    svc = next(s for s in env.catalog_list if s.id == type_id)
    link = ch.draw_link(env.params, env.channel_rng)
    entry = BufferEntry(
        service=svc,
        ttl=svc.max_latency if ttl is None else ttl,
        remaining_bits=svc.pdu_bits if remaining is None else remaining,
        link=link,
        deliverable=np.full(env.R, bits_per_rb, dtype=np.int64),
        admitted_step=env.time_step,
    )
    env.buffer[slot] = entry
    return entry


@pytest.fixture
def env():
    e = make_env()
    e.reset()
    return e
