"""Scenario synthesis: user drops, path statistics, and target geometry.

Draw order is fixed so that a seed pins the whole scenario bitwise: for each
user in index order we draw the disc position (2 uniforms), then the path
arrival angles (L uniforms on [0, pi]), then the complex path gains (2L
standard normals).  Nothing else consumes randomness here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


@dataclass
class UserChannel:
    """Statistical state of one downlink user.

    gains holds the diagonal of the path-response matrix; angles holds the
    arrival angle of each receive path at the array.
    """

    position: np.ndarray      # (2,) meters, array at the origin
    distance: float           # meters
    mean_gain: float          # expected channel power c^2 at this distance
    angles: np.ndarray        # (L,) radians in [0, pi]
    gains: np.ndarray         # (L,) complex path gains


@dataclass
class TargetGeometry:
    """Direction of the sensing target (also the warden's location)."""

    angle: float              # radians


@dataclass
class ChannelSet:
    """All random scenario state for one Monte-Carlo draw."""

    users: list[UserChannel]
    target: TargetGeometry
    seed: int


def mean_channel_gain(distance: float, config: SystemConfig) -> float:
    """Distance-law average channel power: reference loss times d^-exponent."""
    return config.path_loss_ref * distance ** (-config.path_loss_exponent)


def sample_channels(config: SystemConfig, seed: int | None = None) -> ChannelSet:
    """Draw one full scenario with the documented draw order.

    Users fall uniformly on a disc of radius ``user_radius`` centered
    ``user_center`` meters broadside from the array.  Each of the L receive
    paths gets an independent arrival angle uniform on [0, pi] and a
    circularly-symmetric complex gain with variance ``mean_gain / L``.
    """
    if seed is None:
        seed = config.rng_seed
    rng = np.random.default_rng(seed)
    center = np.array([config.user_center, 0.0])
    users = []
    for _ in range(config.num_users):
        u_r, u_th = rng.uniform(size=2)
        radius = config.user_radius * math.sqrt(u_r)
        theta = 2.0 * math.pi * u_th
        position = center + radius * np.array([math.cos(theta), math.sin(theta)])
        distance = float(np.hypot(*position))
        c2 = mean_channel_gain(distance, config)
        angles = rng.uniform(0.0, math.pi, size=config.num_paths)
        normals = rng.standard_normal(size=(config.num_paths, 2))
        gains = math.sqrt(c2 / (2.0 * config.num_paths)) * (normals[:, 0] + 1j * normals[:, 1])
        users.append(UserChannel(position=position, distance=distance,
                                 mean_gain=c2, angles=angles, gains=gains))
    return ChannelSet(users=users, target=TargetGeometry(angle=config.target_angle),
                      seed=seed)


def channels_to_json(channels: ChannelSet) -> str:
    """Serialize bitwise: floats via repr round-trip, complex as re/im pairs."""
    payload = {
        "seed": channels.seed,
        "target_angle": repr(channels.target.angle),
        "users": [
            {
                "position": [repr(float(v)) for v in u.position],
                "distance": repr(u.distance),
                "mean_gain": repr(u.mean_gain),
                "angles": [repr(float(v)) for v in u.angles],
                "gains": [[repr(float(g.real)), repr(float(g.imag))] for g in u.gains],
            }
            for u in channels.users
        ],
    }
    return json.dumps(payload, indent=1, sort_keys=True)


def channels_from_json(text: str) -> ChannelSet:
    payload = json.loads(text)
    users = []
    for u in payload["users"]:
        gains = np.array([float(re) + 1j * float(im) for re, im in u["gains"]])
        users.append(UserChannel(
            position=np.array([float(v) for v in u["position"]]),
            distance=float(u["distance"]),
            mean_gain=float(u["mean_gain"]),
            angles=np.array([float(v) for v in u["angles"]]),
            gains=gains,
        ))
    return ChannelSet(users=users,
                      target=TargetGeometry(angle=float(payload["target_angle"])),
                      seed=int(payload["seed"]))


def save_channels(channels: ChannelSet, path) -> None:
    from pathlib import Path

    Path(path).write_text(channels_to_json(channels) + "\n")


def load_channels(path) -> ChannelSet:
    from pathlib import Path

    return channels_from_json(Path(path).read_text())
