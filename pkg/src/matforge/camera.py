"""Orthographic multi-view camera rig.

The canonical rig is six axis-aligned orthographic cameras around the
normalized mesh; a four-view rig (quarter-turn azimuths, zero elevation) is
also supported. Camera depth is measured from an eye plane one world unit
behind the origin along the look direction, so all scene depths are
positive for meshes inside the half-extent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedViewCount

EYE_OFFSET = 1.0  # distance from eye plane to the world origin
DEFAULT_HALF_EXTENT = 0.6  # margin around the unit cube


@dataclass(frozen=True)
class Camera:
    """Orthographic camera.

    view_direction is the unit look vector (camera toward scene); up is the
    unit screen-up vector, orthogonal to it.
    """

    view_direction: np.ndarray
    up: np.ndarray
    ortho_half_extent: float = DEFAULT_HALF_EXTENT
    image_size: int = 512
    kind: str = "orthographic"

    def __post_init__(self):
        object.__setattr__(self, "view_direction", np.asarray(self.view_direction, dtype=np.float64))
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64))
        if abs(np.linalg.norm(self.view_direction) - 1.0) > 1e-6:
            raise ValueError("view_direction must be unit length")
        if abs(np.linalg.norm(self.up) - 1.0) > 1e-6:
            raise ValueError("up must be unit length")
        if abs(float(self.view_direction @ self.up)) > 1e-6:
            raise ValueError("view_direction and up must be orthogonal")
        if self.ortho_half_extent <= 0:
            raise ValueError("ortho_half_extent must be positive")

    @property
    def right(self) -> np.ndarray:
        return np.cross(self.view_direction, self.up)

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """World points (N,3) -> continuous pixel coords (N,2) and depth (N,).

        Pixel x grows along `right`, pixel y grows downward (against `up`).
        """
        points = np.asarray(points, dtype=np.float64)
        s = self.image_size
        x = points @ self.right / self.ortho_half_extent
        y = points @ self.up / self.ortho_half_extent
        px = (x + 1.0) * 0.5 * s
        py = (1.0 - y) * 0.5 * s
        depth = points @ self.view_direction + EYE_OFFSET
        return np.stack([px, py], axis=-1), depth

    def pixel_midplane_points(self, size: int | None = None) -> np.ndarray:
        """World point of each pixel ray on the plane through the origin.

        Shape (size, size, 3); used as the coordinate fallback for pixels
        that miss the mesh (normalized depth 0.5 of the visible range).
        """
        s = size or self.image_size
        js = (np.arange(s) + 0.5) / s * 2.0 - 1.0
        x_world = js * self.ortho_half_extent  # per column
        y_world = -js * self.ortho_half_extent  # per row (pixel y is down)
        return (
            x_world[None, :, None] * self.right[None, None, :]
            + y_world[:, None, None] * self.up[None, None, :]
        )


def look_at_direction(direction: np.ndarray) -> Camera:
    """Camera looking along `direction` with a deterministic up vector."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    world_up = np.array([0.0, 0.0, 1.0])
    if abs(d @ world_up) > 0.999:
        world_up = np.array([0.0, 1.0, 0.0])
    right = np.cross(d, world_up)
    right /= np.linalg.norm(right)
    up = np.cross(right, d)
    return Camera(view_direction=d, up=up)


def make_view_set(n_views: int, image_size: int, half_extent: float = DEFAULT_HALF_EXTENT) -> list[Camera]:
    """Canonical deterministic rigs: 6 axis views or 4 quarter-turn azimuths."""
    z = np.array([0.0, 0.0, 1.0])
    y = np.array([0.0, 1.0, 0.0])
    if n_views == 6:
        # cameras sit on +X,-X,+Y,-Y,+Z,-Z and look inward
        specs = [
            ((-1.0, 0.0, 0.0), z),
            ((1.0, 0.0, 0.0), z),
            ((0.0, -1.0, 0.0), z),
            ((0.0, 1.0, 0.0), z),
            ((0.0, 0.0, -1.0), y),
            ((0.0, 0.0, 1.0), y),
        ]
    elif n_views == 4:
        specs = []
        for k in range(4):
            a = np.pi / 2.0 * k
            d = -np.array([np.cos(a), np.sin(a), 0.0])
            d[np.abs(d) < 1e-15] = 0.0
            d /= np.linalg.norm(d)
            specs.append((tuple(d), z))
    else:
        raise UnsupportedViewCount(f"supported view counts are 4 and 6, got {n_views}")
    return [
        Camera(
            view_direction=np.array(d),
            up=u,
            ortho_half_extent=half_extent,
            image_size=image_size,
        )
        for d, u in specs
    ]


def camera_to_dict(camera: Camera) -> dict:
    return {
        "kind": camera.kind,
        "view_direction": [float(x) for x in camera.view_direction],
        "up": [float(x) for x in camera.up],
        "ortho_half_extent": float(camera.ortho_half_extent),
        "image_size": int(camera.image_size),
    }


def camera_from_dict(data: dict) -> Camera:
    return Camera(
        view_direction=np.array(data["view_direction"], dtype=np.float64),
        up=np.array(data["up"], dtype=np.float64),
        ortho_half_extent=float(data["ortho_half_extent"]),
        image_size=int(data["image_size"]),
        kind=data.get("kind", "orthographic"),
    )


def make_orbit_camera(
    azimuth_deg: float,
    elevation_deg: float,
    image_size: int,
    half_extent: float = DEFAULT_HALF_EXTENT,
) -> Camera:
    """Free orbit camera, used for reference renders and held-out views."""
    a = np.deg2rad(azimuth_deg)
    e = np.deg2rad(elevation_deg)
    pos = np.array([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)])
    cam = look_at_direction(-pos)
    return Camera(
        view_direction=cam.view_direction,
        up=cam.up,
        ortho_half_extent=half_extent,
        image_size=image_size,
    )
