"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np

from mmwave_assoc.channel import ChannelSet, LargeScaleRecord, LinkState
from mmwave_assoc.mimo import compute_beamformers
from mmwave_assoc.channel import generate_channel_set
from mmwave_assoc.topology import initial_positions, homogeneous_scenario


def make_setup(num_bs, num_ue, seed=0, scenario=None, **scenario_kwargs):
    """Scenario + one slot of channels + beamformers, deterministically seeded."""
    scen = scenario if scenario is not None else homogeneous_scenario(
        num_bs, num_ue, **scenario_kwargs)
    positions = initial_positions(scen, seed)
    channel_set = generate_channel_set(scen, positions, 1000 + seed)
    beamformers = compute_beamformers(channel_set, scen)
    return scen, channel_set, beamformers


def synthetic_channel_set(scenario, matrices, slot=0):
    """ChannelSet with hand-built matrices (records carry zero path loss)."""
    records = [
        [LargeScaleRecord(distance_m=10.0, state=LinkState.LOS,
                          path_loss_db=0.0, shadow_db=0.0)
         for _ in range(scenario.num_bs)]
        for _ in range(scenario.num_ue)
    ]
    channels = [[np.asarray(matrices[k][j], dtype=complex)
                 for j in range(scenario.num_bs)]
                for k in range(scenario.num_ue)]
    return ChannelSet(slot=slot, channels=channels, records=records)
