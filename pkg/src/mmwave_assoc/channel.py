"""Per-slot mmWave channel generation.

Each (UE, BS) link gets a LoS/NLoS state drawn from a distance-dependent
probability, a path loss with lognormal shadowing, and a clustered
small-scale matrix built from uniform-planar-array steering vectors.  The
large-scale amplitude gain 10^(-PL/20) is folded into the channel matrix,
so downstream rate math uses H directly.

All generators are pure functions of (inputs, seed): the same seed always
reproduces the same draw, and distinct (UE, BS) pairs use independent
substreams so slots can be generated in parallel.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .topology import BsNode, Scenario, UeNode

REFERENCE_DISTANCE_M = 1.0
LOS_BREAKPOINT_M = 27.0     # distance up to which the link is surely LoS
LOS_DECAY_M = 71.0          # exponential decay range of the LoS probability

PATH_LOSS_EXPONENT = {"los": 2.0, "nlos": 3.4}
SHADOW_STD_DB = {"los": 4.8, "nlos": 7.9}

# Angle generation defaults: cluster centers are uniform in azimuth, near
# horizontal in elevation; rays scatter around the center with a Laplacian
# spread.  These shapes stand in for external measurement tables and can be
# overridden per call.
RAY_SPREAD_DEG = 5.0
ELEVATION_HALF_RANGE_RAD = math.pi / 12.0


class LinkState(str, Enum):
    LOS = "los"
    NLOS = "nlos"


@dataclass(frozen=True)
class LargeScaleRecord:
    """Large-scale link description: 3-D distance, state, realized path loss."""

    distance_m: float
    state: LinkState
    path_loss_db: float  # includes the shadowing draw
    shadow_db: float

    @property
    def amplitude_gain(self) -> float:
        """Linear amplitude gain 10^(-PL/20) folded into the channel matrix."""
        return 10.0 ** (-self.path_loss_db / 20.0)


@dataclass
class ChannelSet:
    """All (UE, BS) channels for one slot.

    channels[k][j] is the (N_k, M_j) complex matrix with the large-scale
    gain included.  estimates, present in large-scale-only CSI mode, hold
    the deterministic boresight surrogates used for association decisions.
    """

    slot: int
    channels: list[list[np.ndarray]]
    records: list[list[LargeScaleRecord]]
    estimates: list[list[np.ndarray]] | None = None

    @property
    def num_ue(self) -> int:
        return len(self.channels)

    @property
    def num_bs(self) -> int:
        return len(self.channels[0]) if self.channels else 0

    def decision_channels(self) -> list[list[np.ndarray]]:
        """Matrices the association solver is allowed to see."""
        return self.estimates if self.estimates is not None else self.channels


# ---------------------------------------------------------------------------
# link state and path loss
# ---------------------------------------------------------------------------

def los_probability(d_m: float) -> float:
    """Probability that a link of 3-D length d_m is line-of-sight.

    Equals 1 up to the breakpoint distance and decays smoothly beyond it.
    """
    if d_m <= 0:
        raise ValueError(f"distance must be positive, got {d_m}")
    decay = math.exp(-d_m / LOS_DECAY_M)
    bracket = min(LOS_BREAKPOINT_M / d_m, 1.0) * (1.0 - decay) + decay
    return bracket * bracket


def draw_link_state(d_m: float, seed) -> LinkState:
    rng = np.random.default_rng(seed)
    return LinkState.LOS if rng.random() < los_probability(d_m) else LinkState.NLOS


def free_space_db(carrier_hz: float) -> float:
    """Path loss of the 1 m reference distance at the given carrier."""
    wavelength = 299_792_458.0 / carrier_hz
    return 20.0 * math.log10(4.0 * math.pi * REFERENCE_DISTANCE_M / wavelength)


def path_loss_db(d_m: float, state: LinkState, carrier_hz: float,
                 seed=None, shadow_db: float | None = None) -> tuple[float, float]:
    """Distance- and state-dependent path loss in dB plus the shadow draw.

    shadow_db overrides the lognormal draw (useful for deterministic
    checks); otherwise the shadow is Gaussian in dB with the state's
    standard deviation.  Returns (path_loss_db, shadow_db).
    """
    if d_m < REFERENCE_DISTANCE_M:
        raise ValueError(f"distance must be >= {REFERENCE_DISTANCE_M} m, got {d_m}")
    if shadow_db is None:
        rng = np.random.default_rng(seed)
        shadow_db = float(rng.normal(0.0, SHADOW_STD_DB[state.value]))
    exponent = PATH_LOSS_EXPONENT[state.value]
    pl = (free_space_db(carrier_hz)
          + 10.0 * exponent * math.log10(d_m / REFERENCE_DISTANCE_M)
          + shadow_db)
    return pl, shadow_db


# ---------------------------------------------------------------------------
# array response
# ---------------------------------------------------------------------------

def _steering_matrix(phi: np.ndarray, theta: np.ndarray, panel: tuple[int, int],
                     spacing_m: float, wavelength_m: float) -> np.ndarray:
    """Steering vectors for R angle pairs: (U*V, R), u-major element order."""
    u_count, v_count = panel
    k_wave = 2.0 * math.pi / wavelength_m
    u = np.arange(u_count)[:, None, None]
    v = np.arange(v_count)[None, :, None]
    phi = np.atleast_1d(np.asarray(phi, dtype=float))[None, None, :]
    theta = np.atleast_1d(np.asarray(theta, dtype=float))[None, None, :]
    phase = k_wave * spacing_m * (u * np.sin(phi) * np.sin(theta) + v * np.cos(theta))
    return np.exp(1j * phase).reshape(u_count * v_count, -1)


def array_response(phi: float, theta: float, u_count: int, v_count: int,
                   spacing_m: float, wavelength_m: float) -> np.ndarray:
    """Uniform planar array response for azimuth phi / elevation theta (radians).

    Element (u, v) carries phase k*d*(u sin(phi) sin(theta) + v cos(theta))
    with u, v counted from 0 and u the outer (major) index; every entry has
    unit magnitude.
    """
    if u_count < 1 or v_count < 1:
        raise ValueError(f"panel dimensions must be >= 1, got ({u_count}, {v_count})")
    return _steering_matrix(phi, theta, (u_count, v_count), spacing_m, wavelength_m)[:, 0]


# ---------------------------------------------------------------------------
# small-scale channel
# ---------------------------------------------------------------------------

def generate_channel(ue: UeNode, bs: BsNode, record: LargeScaleRecord,
                     scenario: Scenario, seed,
                     ray_spread_deg: float = RAY_SPREAD_DEG,
                     elevation_half_range_rad: float = ELEVATION_HALF_RANGE_RAD,
                     ) -> np.ndarray:
    """Clustered small-scale channel with the large-scale gain folded in.

    C clusters of L rays each: cluster power gains are exponential draws
    normalized to sum to C, ray angles scatter around uniformly drawn
    cluster centers, and each ray carries an i.i.d. uniform phase so the
    1/sqrt(CL) normalization keeps E[||H||_F^2] = gain^2 * N * M.
    Returns the (N_k, M_j) matrix.
    """
    rng = np.random.default_rng(seed)
    c_count = scenario.num_clusters
    l_count = scenario.rays_per_cluster
    gains = rng.exponential(1.0, size=c_count)
    gains = c_count * gains / gains.sum()

    aod_az = rng.uniform(-math.pi, math.pi, size=c_count)
    aoa_az = rng.uniform(-math.pi, math.pi, size=c_count)
    lo = math.pi / 2.0 - elevation_half_range_rad
    hi = math.pi / 2.0 + elevation_half_range_rad
    eod = rng.uniform(lo, hi, size=c_count)
    eoa = rng.uniform(lo, hi, size=c_count)

    spread = math.radians(ray_spread_deg) / math.sqrt(2.0)  # Laplace scale for 5 deg std
    offsets = rng.laplace(0.0, spread, size=(4, c_count, l_count))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=(c_count, l_count))

    ray_aoa_az = (aoa_az[:, None] + offsets[0]).ravel()
    ray_eoa = (eoa[:, None] + offsets[1]).ravel()
    ray_aod_az = (aod_az[:, None] + offsets[2]).ravel()
    ray_eod = (eod[:, None] + offsets[3]).ravel()

    a_ue = _steering_matrix(ray_aoa_az, ray_eoa, ue.panel,
                            scenario.spacing_m, scenario.wavelength_m)
    a_bs = _steering_matrix(ray_aod_az, ray_eod, bs.panel,
                            scenario.spacing_m, scenario.wavelength_m)

    weights = (record.amplitude_gain / math.sqrt(c_count * l_count)
               * np.sqrt(np.repeat(gains, l_count))
               * np.exp(1j * phases.ravel()))
    return (a_ue * weights) @ a_bs.conj().T


def _geometric_angles(from_pos: np.ndarray, to_pos: np.ndarray) -> tuple[float, float]:
    """(azimuth, elevation-from-zenith) of the direction from_pos -> to_pos."""
    delta = np.asarray(to_pos, dtype=float) - np.asarray(from_pos, dtype=float)
    dist = float(np.linalg.norm(delta))
    azimuth = math.atan2(delta[1], delta[0])
    elevation = math.acos(delta[2] / dist) if dist > 0 else math.pi / 2.0
    return azimuth, elevation


def large_scale_estimate(ue: UeNode, bs: BsNode, ue_position: np.ndarray,
                         record: LargeScaleRecord, scenario: Scenario) -> np.ndarray:
    """Deterministic surrogate channel carrying only large-scale information.

    A single boresight ray along the geometric line between the nodes,
    scaled by the realized amplitude gain; rank one by construction.  Used
    for association decisions in large-scale-only CSI mode.
    """
    bs_pos = np.asarray(bs.position, dtype=float)
    aod_az, eod = _geometric_angles(bs_pos, ue_position)
    aoa_az, eoa = _geometric_angles(ue_position, bs_pos)
    a_ue = _steering_matrix(aoa_az, eoa, ue.panel,
                            scenario.spacing_m, scenario.wavelength_m)[:, 0]
    a_bs = _steering_matrix(aod_az, eod, bs.panel,
                            scenario.spacing_m, scenario.wavelength_m)[:, 0]
    return record.amplitude_gain * np.outer(a_ue, a_bs.conj())


def generate_channel_set(scenario: Scenario, positions: np.ndarray, slot_seed: int,
                         slot: int = 0, with_estimates: bool | None = None,
                         ) -> ChannelSet:
    """Draw state, large-scale record and channel matrix for every (UE, BS) pair.

    Pairs use independent substreams spawned from slot_seed, so the set is
    reproducible and order-independent.  Estimates are generated when the
    scenario runs in large-scale-only CSI mode (or when forced).
    """
    if with_estimates is None:
        with_estimates = scenario.csi_mode.value == "large_scale_only"
    positions = np.asarray(positions, dtype=float)
    channels: list[list[np.ndarray]] = []
    records: list[list[LargeScaleRecord]] = []
    estimates: list[list[np.ndarray]] | None = [] if with_estimates else None
    for k, ue in enumerate(scenario.ue_list):
        row_h, row_r = [], []
        row_e = [] if with_estimates else None
        for j, bs in enumerate(scenario.bs_list):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=slot_seed, spawn_key=(k, j)))
            dist = float(np.linalg.norm(positions[k] - np.asarray(bs.position)))
            state = LinkState.LOS if rng.random() < los_probability(dist) else LinkState.NLOS
            pl, shadow = path_loss_db(dist, state, scenario.carrier_hz, seed=rng)
            record = LargeScaleRecord(distance_m=dist, state=state,
                                      path_loss_db=pl, shadow_db=shadow)
            row_r.append(record)
            row_h.append(generate_channel(ue, bs, record, scenario, rng))
            if row_e is not None:
                row_e.append(large_scale_estimate(ue, bs, positions[k], record, scenario))
        channels.append(row_h)
        records.append(row_r)
        if estimates is not None:
            estimates.append(row_e)
    return ChannelSet(slot=slot, channels=channels, records=records, estimates=estimates)


# ---------------------------------------------------------------------------
# channel dump / replay
# ---------------------------------------------------------------------------

def _matrix_to_interleaved(h: np.ndarray) -> list[float]:
    flat = np.empty(2 * h.size, dtype=float)
    flat[0::2] = h.real.ravel()
    flat[1::2] = h.imag.ravel()
    return flat.tolist()


def _matrix_from_interleaved(values: list[float], shape: tuple[int, int]) -> np.ndarray:
    flat = np.asarray(values, dtype=float)
    return (flat[0::2] + 1j * flat[1::2]).reshape(shape)


def dump_channel_set(channel_set: ChannelSet, path: str | Path) -> None:
    """Write one record per (slot, UE, BS) with interleaved real/imag entries."""
    pairs = []
    for k, row in enumerate(channel_set.channels):
        for j, h in enumerate(row):
            rec = channel_set.records[k][j]
            entry = {
                "ue": k + 1,
                "bs": j + 1,
                "state": rec.state.value,
                "distance_m": rec.distance_m,
                "path_loss_db": rec.path_loss_db,
                "shadow_db": rec.shadow_db,
                "shape": list(h.shape),
                "h": _matrix_to_interleaved(h),
            }
            if channel_set.estimates is not None:
                est = channel_set.estimates[k][j]
                entry["estimate"] = _matrix_to_interleaved(est)
            pairs.append(entry)
    doc = {"slot": channel_set.slot, "pairs": pairs}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_channel_set(path: str | Path) -> ChannelSet:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    num_ue = max(entry["ue"] for entry in doc["pairs"])
    num_bs = max(entry["bs"] for entry in doc["pairs"])
    channels = [[None] * num_bs for _ in range(num_ue)]
    records = [[None] * num_bs for _ in range(num_ue)]
    estimates = None
    for entry in doc["pairs"]:
        k, j = entry["ue"] - 1, entry["bs"] - 1
        shape = tuple(entry["shape"])
        channels[k][j] = _matrix_from_interleaved(entry["h"], shape)
        records[k][j] = LargeScaleRecord(
            distance_m=entry["distance_m"], state=LinkState(entry["state"]),
            path_loss_db=entry["path_loss_db"], shadow_db=entry["shadow_db"])
        if "estimate" in entry:
            if estimates is None:
                estimates = [[None] * num_bs for _ in range(num_ue)]
            estimates[k][j] = _matrix_from_interleaved(entry["estimate"], shape)
    return ChannelSet(slot=doc["slot"], channels=channels, records=records,
                      estimates=estimates)
