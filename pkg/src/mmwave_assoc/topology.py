"""Network scenario description (BS/UE geometry, radio constants) and UE mobility.

Coordinates are 3-D in meters with the area rectangle spanning
[0, width] x [0, depth] in the horizontal plane.  BS and UE heights default
to 10 m / 1.5 m (urban-micro values); explicit z coordinates override them.
All indices exposed by this module are 0-based; node ``id`` fields are the
1-based identifiers used in scenario files and exported tables.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

BS_HEIGHT_M = 10.0
UE_HEIGHT_M = 1.5


class CsiMode(str, Enum):
    """Channel knowledge available to the association solver."""

    INSTANTANEOUS = "instantaneous"
    LARGE_SCALE_ONLY = "large_scale_only"


class InterferenceMode(str, Enum):
    """Which transmissions count as interference when rating a link."""

    ASSOCIATION_DEPENDENT = "association_dependent"
    FULL = "full"


class ScenarioError(ValueError):
    """Raised when a scenario document cannot be parsed or is invalid."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class BsNode:
    """Base station: uniform planar array, power and load limits.

    panel is (U, V) elements per dimension, M = U*V antennas.
    max_streams is the downlink stream budget D_j; max_users caps the
    number of simultaneously served UEs Q_j.
    """

    id: int
    position: tuple[float, float, float]
    tx_power_dbm: float
    panel: tuple[int, int]
    max_streams: int
    max_users: int

    @property
    def num_antennas(self) -> int:
        return self.panel[0] * self.panel[1]

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watt(self.tx_power_dbm)


@dataclass(frozen=True)
class UeNode:
    """User equipment: receive panel and per-slot stream demand n_k.

    position is None for UEs placed randomly at experiment start; a fixed
    position pins the UE there for every slot (mobility skips it).
    """

    id: int
    panel: tuple[int, int]
    n_streams: int
    position: tuple[float, float, float] | None = None

    @property
    def num_antennas(self) -> int:
        return self.panel[0] * self.panel[1]

    @property
    def pinned(self) -> bool:
        return self.position is not None


@dataclass(frozen=True)
class Scenario:
    """Immutable description of the network and experiment parameters."""

    area: tuple[float, float]  # (width, depth) meters
    carrier_hz: float
    bandwidth_hz: float
    noise_psd_dbm_hz: float
    bs_list: tuple[BsNode, ...]
    ue_list: tuple[UeNode, ...]
    num_clusters: int = 5
    rays_per_cluster: int = 10
    element_spacing_m: float | None = None  # None -> half wavelength
    slots: int = 1
    mobility_box_m: float = 0.0
    csi_mode: CsiMode = CsiMode.INSTANTANEOUS
    interference_mode: InterferenceMode = InterferenceMode.ASSOCIATION_DEPENDENT

    @property
    def num_bs(self) -> int:
        return len(self.bs_list)

    @property
    def num_ue(self) -> int:
        return len(self.ue_list)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def spacing_m(self) -> float:
        if self.element_spacing_m is not None:
            return self.element_spacing_m
        return self.wavelength_m / 2.0

    @property
    def noise_power_w(self) -> float:
        """Linear noise power over the configured bandwidth (Watts)."""
        return dbm_to_watt(self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz))

    def stream_demands(self) -> np.ndarray:
        return np.array([ue.n_streams for ue in self.ue_list], dtype=int)

    def bs_powers_w(self) -> np.ndarray:
        return np.array([bs.tx_power_w for bs in self.bs_list], dtype=float)


@dataclass(frozen=True)
class UeTrajectory:
    """Per-slot UE positions, shape (T, K, 3)."""

    positions: np.ndarray

    @property
    def num_slots(self) -> int:
        return self.positions.shape[0]


# ---------------------------------------------------------------------------
# placement and mobility
# ---------------------------------------------------------------------------

def place_uniform(seed, scenario: Scenario) -> np.ndarray:
    """Draw K UE positions i.i.d. uniform over the area rectangle.

    Returns an (K, 3) array with z fixed at the UE height.  Deterministic
    for a given seed.
    """
    rng = np.random.default_rng(seed)
    k = scenario.num_ue
    width, depth = scenario.area
    pos = np.empty((k, 3), dtype=float)
    xy = rng.uniform(0.0, 1.0, size=(k, 2))
    pos[:, 0] = xy[:, 0] * width
    pos[:, 1] = xy[:, 1] * depth
    pos[:, 2] = UE_HEIGHT_M
    return pos


def initial_positions(scenario: Scenario, seed) -> np.ndarray:
    """Uniform placement with fixed (pinned) UE positions overriding the draw."""
    pos = place_uniform(seed, scenario)
    for k, ue in enumerate(scenario.ue_list):
        if ue.position is not None:
            pos[k] = ue.position
    return pos


def mobility_step(positions: np.ndarray, scenario: Scenario, seed,
                  frozen: np.ndarray | None = None) -> np.ndarray:
    """Move each UE uniformly within the mobility box centered at its old spot.

    New (x, y) are clamped to the area rectangle; z is unchanged.  UEs
    flagged in ``frozen`` keep their position (pinned fixtures).
    """
    rng = np.random.default_rng(seed)
    box = scenario.mobility_box_m
    width, depth = scenario.area
    pos = np.asarray(positions, dtype=float)
    offsets = (rng.uniform(0.0, 1.0, size=(pos.shape[0], 2)) - 0.5) * box
    new = pos.copy()
    new[:, 0] = np.clip(pos[:, 0] + offsets[:, 0], 0.0, width)
    new[:, 1] = np.clip(pos[:, 1] + offsets[:, 1], 0.0, depth)
    if frozen is not None:
        new[frozen] = pos[frozen]
    return new


def pinned_mask(scenario: Scenario) -> np.ndarray:
    return np.array([ue.pinned for ue in scenario.ue_list], dtype=bool)


def walk_trajectory(scenario: Scenario, slots: int, seed) -> UeTrajectory:
    """Random-walk positions for `slots` slots (slot 0 is the placement)."""
    seeds = np.random.SeedSequence(seed).spawn(slots)
    frozen = pinned_mask(scenario)
    positions = np.empty((slots, scenario.num_ue, 3))
    current = initial_positions(scenario, seeds[0])
    positions[0] = current
    for t in range(1, slots):
        current = mobility_step(current, scenario, seeds[t], frozen=frozen)
        positions[t] = current
    return UeTrajectory(positions=positions)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate_scenario(scenario: Scenario) -> list[str]:
    """Check every scenario invariant; returns one diagnostic per violation.

    An empty list means the scenario is valid.
    """
    diags: list[str] = []
    width, depth = scenario.area
    if width <= 0 or depth <= 0:
        diags.append(f"area must be positive, got {scenario.area}")
    if scenario.bandwidth_hz <= 0:
        diags.append(f"bandwidth must be positive, got {scenario.bandwidth_hz}")
    if scenario.carrier_hz <= 0:
        diags.append(f"carrier frequency must be positive, got {scenario.carrier_hz}")
    if scenario.num_clusters < 1:
        diags.append(f"cluster count must be >= 1, got {scenario.num_clusters}")
    if scenario.rays_per_cluster < 1:
        diags.append(f"rays per cluster must be >= 1, got {scenario.rays_per_cluster}")
    if scenario.slots < 1:
        diags.append(f"slot count must be >= 1, got {scenario.slots}")
    if scenario.mobility_box_m < 0:
        diags.append(f"mobility box must be >= 0, got {scenario.mobility_box_m}")

    for bs in scenario.bs_list:
        u, v = bs.panel
        if u < 1 or v < 1:
            diags.append(f"BS {bs.id}: panel dimensions must be >= 1, got {bs.panel}")
        if bs.max_streams < 1:
            diags.append(f"BS {bs.id}: max_streams must be >= 1, got {bs.max_streams}")
        if bs.max_users < 1:
            diags.append(f"BS {bs.id}: max_users must be >= 1, got {bs.max_users}")
        if bs.max_streams > bs.num_antennas:
            diags.append(
                f"BS {bs.id}: max_streams {bs.max_streams} exceeds antenna count "
                f"{bs.num_antennas}"
            )
        x, y, _ = bs.position
        if not (0.0 <= x <= width and 0.0 <= y <= depth):
            diags.append(f"BS {bs.id}: position {bs.position} outside area {scenario.area}")

    min_bs_antennas = min((bs.num_antennas for bs in scenario.bs_list), default=0)
    for ue in scenario.ue_list:
        u, v = ue.panel
        if u < 1 or v < 1:
            diags.append(f"UE {ue.id}: panel dimensions must be >= 1, got {ue.panel}")
        if not (1 <= ue.n_streams <= ue.num_antennas):
            diags.append(
                f"UE {ue.id}: n_streams {ue.n_streams} not in [1, {ue.num_antennas}]"
            )
        if scenario.bs_list and ue.num_antennas > min_bs_antennas:
            diags.append(
                f"UE {ue.id}: antenna count {ue.num_antennas} exceeds smallest BS "
                f"panel {min_bs_antennas}"
            )
        if ue.position is not None:
            x, y, _ = ue.position
            if not (0.0 <= x <= width and 0.0 <= y <= depth):
                diags.append(f"UE {ue.id}: position {ue.position} outside area {scenario.area}")

    total_users = sum(bs.max_users for bs in scenario.bs_list)
    if total_users < scenario.num_ue:
        diags.append(
            f"total capacity {total_users} < {scenario.num_ue} UEs "
            f"(sum of max_users over BSs must cover all UEs)"
        )
    return diags


# ---------------------------------------------------------------------------
# scenario document (JSON) I/O
# ---------------------------------------------------------------------------

_CSI_VALUES = {m.value: m for m in CsiMode}
_INTERFERENCE_VALUES = {m.value: m for m in InterferenceMode}


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a Scenario from a parsed scenario document.

    Top-level keys: area, carrier_hz, bandwidth_hz, noise_psd_dbm_hz,
    clusters, rays, slots, mobility_box_m, csi_mode, interference_mode,
    bs[] and ue[].  See the README for the full field reference.
    """
    try:
        area = tuple(float(x) for x in doc["area"])
        if len(area) != 2:
            raise ScenarioError(f"area must have 2 entries, got {doc['area']}")
        bs_list = []
        for idx, b in enumerate(doc["bs"]):
            pos = [float(x) for x in b["pos"]]
            if len(pos) == 2:
                pos.append(BS_HEIGHT_M)
            bs_list.append(
                BsNode(
                    id=idx + 1,
                    position=tuple(pos),
                    tx_power_dbm=float(b["power_dbm"]),
                    panel=(int(b["panel"][0]), int(b["panel"][1])),
                    max_streams=int(b["max_streams"]),
                    max_users=int(b["max_users"]),
                )
            )
        ue_list = []
        for idx, u in enumerate(doc["ue"]):
            pos = None
            if u.get("pos") is not None:
                raw = [float(x) for x in u["pos"]]
                if len(raw) == 2:
                    raw.append(UE_HEIGHT_M)
                pos = tuple(raw)
            ue_list.append(
                UeNode(
                    id=idx + 1,
                    panel=(int(u["panel"][0]), int(u["panel"][1])),
                    n_streams=int(u["n_streams"]),
                    position=pos,
                )
            )
        csi = doc.get("csi_mode", CsiMode.INSTANTANEOUS.value)
        interference = doc.get("interference_mode",
                               InterferenceMode.ASSOCIATION_DEPENDENT.value)
        if csi not in _CSI_VALUES:
            raise ScenarioError(
                f"unknown csi_mode {csi!r}; expected one of {sorted(_CSI_VALUES)}"
            )
        if interference not in _INTERFERENCE_VALUES:
            raise ScenarioError(
                f"unknown interference_mode {interference!r}; expected one of "
                f"{sorted(_INTERFERENCE_VALUES)}"
            )
        spacing = doc.get("element_spacing_m")
        return Scenario(
            area=area,
            carrier_hz=float(doc["carrier_hz"]),
            bandwidth_hz=float(doc["bandwidth_hz"]),
            noise_psd_dbm_hz=float(doc["noise_psd_dbm_hz"]),
            bs_list=tuple(bs_list),
            ue_list=tuple(ue_list),
            num_clusters=int(doc.get("clusters", 5)),
            rays_per_cluster=int(doc.get("rays", 10)),
            element_spacing_m=None if spacing is None else float(spacing),
            slots=int(doc.get("slots", 1)),
            mobility_box_m=float(doc.get("mobility_box_m", 0.0)),
            csi_mode=_CSI_VALUES[csi],
            interference_mode=_INTERFERENCE_VALUES[interference],
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ScenarioError(f"malformed scenario document: {exc!r}") from exc


def scenario_to_dict(scenario: Scenario) -> dict:
    """Inverse of scenario_from_dict (canonical key order)."""
    return {
        "area": list(scenario.area),
        "carrier_hz": scenario.carrier_hz,
        "bandwidth_hz": scenario.bandwidth_hz,
        "noise_psd_dbm_hz": scenario.noise_psd_dbm_hz,
        "clusters": scenario.num_clusters,
        "rays": scenario.rays_per_cluster,
        "element_spacing_m": scenario.element_spacing_m,
        "slots": scenario.slots,
        "mobility_box_m": scenario.mobility_box_m,
        "csi_mode": scenario.csi_mode.value,
        "interference_mode": scenario.interference_mode.value,
        "bs": [
            {
                "pos": list(bs.position),
                "power_dbm": bs.tx_power_dbm,
                "panel": list(bs.panel),
                "max_streams": bs.max_streams,
                "max_users": bs.max_users,
            }
            for bs in scenario.bs_list
        ],
        "ue": [
            {
                "panel": list(ue.panel),
                "n_streams": ue.n_streams,
                "pos": None if ue.position is None else list(ue.position),
            }
            for ue in scenario.ue_list
        ],
    }


def load_scenario(path: str | Path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# scenario builders
# ---------------------------------------------------------------------------

def _ring_positions(num: int, center: tuple[float, float], radius: float,
                    height: float) -> list[tuple[float, float, float]]:
    """num points evenly spaced on a circle, starting due north of center."""
    out = []
    for i in range(num):
        ang = math.pi / 2.0 + 2.0 * math.pi * i / num
        out.append((center[0] + radius * math.cos(ang),
                    center[1] + radius * math.sin(ang), height))
    return out


def homogeneous_scenario(num_bs: int, num_ue: int, *,
                         bs_panel: tuple[int, int] = (8, 8),
                         ue_panel: tuple[int, int] = (2, 2),
                         n_streams: int = 2,
                         tx_power_dbm: float = 30.0,
                         area: tuple[float, float] = (300.0, 300.0),
                         carrier_hz: float = 73e9,
                         bandwidth_hz: float = 1e9,
                         noise_psd_dbm_hz: float = -174.0,
                         max_users: int | None = None,
                         max_streams: int | None = None,
                         **kwargs) -> Scenario:
    """Equal-power BSs on a ring around the area center, UEs placed at random.

    Per-BS user cap defaults to ceil(K/J)+1 so the network is feasible but
    load-constrained; the stream budget defaults to n_streams * max_users.
    """
    if max_users is None:
        max_users = math.ceil(num_ue / max(num_bs, 1)) + 1
    if max_streams is None:
        max_streams = min(n_streams * max_users, bs_panel[0] * bs_panel[1])
    center = (area[0] / 2.0, area[1] / 2.0)
    radius = 0.3 * min(area)
    if num_bs == 1:
        positions = [(center[0], center[1], BS_HEIGHT_M)]
    else:
        positions = _ring_positions(num_bs, center, radius, BS_HEIGHT_M)
    bs_list = tuple(
        BsNode(id=j + 1, position=positions[j], tx_power_dbm=tx_power_dbm,
               panel=bs_panel, max_streams=max_streams, max_users=max_users)
        for j in range(num_bs)
    )
    ue_list = tuple(
        UeNode(id=k + 1, panel=ue_panel, n_streams=n_streams) for k in range(num_ue)
    )
    return Scenario(area=area, carrier_hz=carrier_hz, bandwidth_hz=bandwidth_hz,
                    noise_psd_dbm_hz=noise_psd_dbm_hz, bs_list=bs_list,
                    ue_list=ue_list, **kwargs)


def hetnet_scenario(num_pico: int = 4, num_ue: int = 20, *,
                    macro_power_dbm: float = 30.0,
                    pico_power_dbm: float = 20.0,
                    macro_max_users: int = 8,
                    pico_max_users: int = 3,
                    bs_panel: tuple[int, int] = (8, 8),
                    ue_panel: tuple[int, int] = (2, 2),
                    n_streams: int = 2,
                    area: tuple[float, float] = (300.0, 300.0),
                    carrier_hz: float = 73e9,
                    bandwidth_hz: float = 1e9,
                    noise_psd_dbm_hz: float = -174.0,
                    **kwargs) -> Scenario:
    """Two-tier layout: one macro BS at the area center plus symmetric picos.

    Defaults follow the heterogeneous comparison setup: 30 dBm macro
    serving up to 8 UEs, 20 dBm picos serving up to 3 each; four picos
    make the capacity exactly cover the 20 default UEs.
    """
    center = (area[0] / 2.0, area[1] / 2.0)
    macro = BsNode(id=1, position=(center[0], center[1], BS_HEIGHT_M),
                   tx_power_dbm=macro_power_dbm, panel=bs_panel,
                   max_streams=min(n_streams * macro_max_users,
                                   bs_panel[0] * bs_panel[1]),
                   max_users=macro_max_users)
    pico_positions = _ring_positions(num_pico, center, 0.3 * min(area), BS_HEIGHT_M)
    picos = [
        BsNode(id=j + 2, position=pico_positions[j], tx_power_dbm=pico_power_dbm,
               panel=bs_panel,
               max_streams=min(n_streams * pico_max_users,
                               bs_panel[0] * bs_panel[1]),
               max_users=pico_max_users)
        for j in range(num_pico)
    ]
    ue_list = tuple(
        UeNode(id=k + 1, panel=ue_panel, n_streams=n_streams) for k in range(num_ue)
    )
    return Scenario(area=area, carrier_hz=carrier_hz, bandwidth_hz=bandwidth_hz,
                    noise_psd_dbm_hz=noise_psd_dbm_hz,
                    bs_list=(macro, *picos), ue_list=ue_list, **kwargs)


def resize_ue_list(scenario: Scenario, num_ue: int) -> Scenario:
    """Scenario with num_ue UEs cloned from the first UE template.

    Per-BS caps are recomputed with the homogeneous defaults so the resized
    scenario stays feasible; used by scaling studies.
    """
    if not scenario.ue_list:
        raise ScenarioError("cannot resize a scenario with no UE template")
    template = scenario.ue_list[0]
    ue_list = tuple(
        UeNode(id=k + 1, panel=template.panel, n_streams=template.n_streams)
        for k in range(num_ue)
    )
    max_users = math.ceil(num_ue / max(scenario.num_bs, 1)) + 1
    bs_list = tuple(
        replace(bs, max_users=max_users,
                max_streams=min(template.n_streams * max_users, bs.num_antennas))
        for bs in scenario.bs_list
    )
    return replace(scenario, ue_list=ue_list, bs_list=bs_list)
