"""Radio abstraction: link budget, range/sensitivity gating and slot collisions.

Every frame that overlaps a resolution slot interferes with every other frame
a receiver can hear in that slot. A frame is decoded only if it beats the
power sum of the others by the capture threshold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
REFERENCE_DISTANCE_M = 1.0


def free_space_ref_loss_db(freq_hz: float, d0_m: float = REFERENCE_DISTANCE_M) -> float:
    """Friis free-space loss at the reference distance."""
    return 20.0 * math.log10(4.0 * math.pi * d0_m * freq_hz / SPEED_OF_LIGHT)


DEFAULT_FREQ_HZ = 5.89e9
DEFAULT_REF_LOSS_DB = free_space_ref_loss_db(DEFAULT_FREQ_HZ)


class Verdict(str, enum.Enum):
    RECEIVED = "received"
    OUT_OF_RANGE = "out_of_range"
    BELOW_SENSITIVITY = "below_sensitivity"
    LOST_COLLISION = "lost_collision"


@dataclass(frozen=True)
class RadioConfig:
    tx_power_mw: float = 20.0
    bitrate_bps: float = 6_000_000.0
    min_power_dbm: float = -110.0
    noise_floor_dbm: float = -98.0
    range_m: float = 400.0
    path_loss_exponent: float = 2.0
    ref_loss_db: float = DEFAULT_REF_LOSS_DB
    capture_threshold_db: float = 10.0
    slot_s: float = 1.0
    antenna_gain_dbi: float = 0.0
    # Optional SNR gate against the noise floor; None disables it.
    snr_threshold_db: float | None = None

    def __post_init__(self) -> None:
        if not self.tx_power_mw > 0:
            raise ValueError("tx_power_mw must be > 0")
        if not self.bitrate_bps > 0:
            raise ValueError("bitrate_bps must be > 0")
        if not self.range_m > 0:
            raise ValueError("range_m must be > 0")
        if self.path_loss_exponent < 1:
            raise ValueError("path_loss_exponent must be >= 1")
        if not self.slot_s > 0:
            raise ValueError("slot_s must be > 0")

    @classmethod
    def from_dict(cls, d: Mapping) -> "RadioConfig":
        names = set(cls.__dataclass_fields__)
        kwargs = {k: v for k, v in d.items() if k in names}
        if "freq_hz" in d and "ref_loss_db" not in d:
            kwargs["ref_loss_db"] = free_space_ref_loss_db(float(d["freq_hz"]))
        return cls(**kwargs)

    def with_range(self, range_m: float) -> "RadioConfig":
        return replace(self, range_m=float(range_m))


@dataclass(frozen=True)
class Frame:
    msg_id: tuple[str, int]
    sender: str
    tx_pos: tuple[float, float]
    start_s: float
    airtime_s: float
    payload: object = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.airtime_s > 0:
            raise ValueError("airtime must be > 0")


@dataclass(frozen=True)
class ReceptionOutcome:
    receiver: str
    frame: tuple[str, int]
    sender: str
    distance_m: float
    verdict: Verdict


def airtime_s(payload_bytes: int, cfg: RadioConfig) -> float:
    return payload_bytes * 8 / cfg.bitrate_bps


def dbm_from_milliwatts(p_mw: float) -> float:
    if not p_mw > 0:
        raise ValueError("power must be > 0 mW")
    return 10.0 * math.log10(p_mw)


def path_loss_db(d: float, cfg: RadioConfig) -> float:
    d = max(d, REFERENCE_DISTANCE_M)
    return cfg.ref_loss_db + 10.0 * cfg.path_loss_exponent * math.log10(d / REFERENCE_DISTANCE_M)


def rx_power_dbm(cfg: RadioConfig, d: float) -> float:
    return dbm_from_milliwatts(cfg.tx_power_mw) + 2 * cfg.antenna_gain_dbi - path_loss_db(d, cfg)


def _passes_snr(cfg: RadioConfig, rx_dbm: float) -> bool:
    return cfg.snr_threshold_db is None or rx_dbm - cfg.noise_floor_dbm >= cfg.snr_threshold_db


def classify_reception(cfg: RadioConfig, d: float) -> Verdict:
    """Verdict for a lone frame at distance ``d`` (no concurrent transmissions)."""
    if d > cfg.range_m:
        return Verdict.OUT_OF_RANGE
    rx = rx_power_dbm(cfg, d)
    if rx < cfg.min_power_dbm or not _passes_snr(cfg, rx):
        return Verdict.BELOW_SENSITIVITY
    return Verdict.RECEIVED


def _rx_power_matrix(cfg: RadioConfig, dist: np.ndarray) -> np.ndarray:
    d = np.maximum(dist, REFERENCE_DISTANCE_M)
    tx = dbm_from_milliwatts(cfg.tx_power_mw) + 2 * cfg.antenna_gain_dbi
    return tx - (cfg.ref_loss_db + 10.0 * cfg.path_loss_exponent * np.log10(d / REFERENCE_DISTANCE_M))


# Integer verdict codes used by the vectorised path; SELF marks a node's own frame.
SELF, RECEIVED, OUT_OF_RANGE, BELOW_SENSITIVITY, LOST_COLLISION = -1, 0, 1, 2, 3
CODE_TO_VERDICT = {
    RECEIVED: Verdict.RECEIVED,
    OUT_OF_RANGE: Verdict.OUT_OF_RANGE,
    BELOW_SENSITIVITY: Verdict.BELOW_SENSITIVITY,
    LOST_COLLISION: Verdict.LOST_COLLISION,
}


def verdict_matrix(
    frame_pos: np.ndarray,
    frame_senders: Sequence[str],
    rx_pos: np.ndarray,
    rx_ids: Sequence[str],
    cfg: RadioConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Verdict codes and distances, shape (receivers, frames)."""
    dist = np.hypot(
        rx_pos[:, None, 0] - frame_pos[None, :, 0], rx_pos[:, None, 1] - frame_pos[None, :, 1]
    )
    own = np.asarray(rx_ids, dtype=object)[:, None] == np.asarray(frame_senders, dtype=object)[None, :]
    in_range = (dist <= cfg.range_m) & ~own
    rx_dbm = _rx_power_matrix(cfg, dist)
    audible = in_range & (rx_dbm >= cfg.min_power_dbm)
    if cfg.snr_threshold_db is not None:
        audible &= rx_dbm - cfg.noise_floor_dbm >= cfg.snr_threshold_db

    # Interference counts every in-range frame, decodable or not.
    rx_mw = np.where(in_range, 10.0 ** (rx_dbm / 10.0), 0.0)
    others = rx_mw.sum(axis=1, keepdims=True) - rx_mw
    captured = audible & (rx_mw >= others * 10.0 ** (cfg.capture_threshold_db / 10.0))

    codes = np.full(dist.shape, LOST_COLLISION, dtype=np.int8)
    codes[captured] = RECEIVED
    codes[in_range & ~audible] = BELOW_SENSITIVITY
    codes[~in_range] = OUT_OF_RANGE
    codes[own] = SELF
    return codes, dist


def resolve_slot(
    frames: Sequence[Frame],
    receivers: Mapping[str, tuple[float, float]],
    cfg: RadioConfig,
) -> list[ReceptionOutcome]:
    """Resolve every (receiver, frame) pair for frames sharing one slot.

    A node is never paired with its own frame; every other pair gets
    exactly one verdict. Output is ordered by receiver id, then frame order.
    """
    if not frames or not receivers:
        return []
    rx_ids = sorted(receivers)
    codes, dist = verdict_matrix(
        np.array([f.tx_pos for f in frames], dtype=float),
        [f.sender for f in frames],
        np.array([receivers[r] for r in rx_ids], dtype=float),
        rx_ids,
        cfg,
    )
    out: list[ReceptionOutcome] = []
    for i, r in enumerate(rx_ids):
        for j, f in enumerate(frames):
            code = int(codes[i, j])
            if code == SELF:
                continue
            out.append(ReceptionOutcome(r, f.msg_id, f.sender, float(dist[i, j]), CODE_TO_VERDICT[code]))
    return out
