"""Projection math for equirectangular (ERP) panoramas.

Conventions used everywhere in this package:

* An ERP image of extent ``W x H`` covers the full sphere.  The continuous
  column coordinate ``u`` lives in ``[-0.5, W-0.5)`` and wraps modulo ``W``
  (the left/right image edges meet at longitude pi).  The continuous row
  coordinate ``v`` lives in ``[-0.5, H-0.5]`` and clamps at the poles.
* The center of pixel ``(i, j)`` is at the integer coordinate ``(u=j, v=i)``.
* Longitude ``theta`` is in ``(-pi, pi]``, increasing eastward (toward larger
  ``u``), with ``theta = 0`` at the image center column.  Latitude ``phi`` is
  in ``[-pi/2, pi/2]``, increasing northward (toward smaller ``v``).
* Cube faces are ordered (front, right, back, left, top, bottom), where the
  front face looks along ``theta = 0``, right along ``theta = pi/2``, and the
  faces use y-down texel order.  The bottom row of the top face borders the
  top row of the front face (and symmetrically for the bottom face).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap_theta(theta):
    """Normalize longitude into (-pi, pi]."""
    t = np.asarray(theta, dtype=np.float64)
    out = t - TWO_PI * np.floor((t + np.pi) / TWO_PI)
    # floor rounding can leave exactly -pi; fold it to +pi
    out = np.where(out <= -np.pi, out + TWO_PI, out)
    return out if out.ndim else float(out)


def erp_to_sphere(u, v, width: int, height: int):
    """Map continuous ERP coordinates to (theta, phi) in radians."""
    if width < 2 or height < 1:
        raise ValueError("ERP extent must be at least 2x1")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("non-finite ERP coordinates")
    theta = ((u + 0.5) / width - 0.5) * TWO_PI
    phi = (0.5 - (v + 0.5) / height) * np.pi
    return wrap_theta(theta), np.clip(phi, -np.pi / 2, np.pi / 2)


def sphere_to_erp(theta, phi, width: int, height: int):
    """Map (theta, phi) to continuous ERP coordinates, u wrapped into [-0.5, W-0.5)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    u = (theta / TWO_PI + 0.5) * width - 0.5
    u = np.mod(u + 0.5, width) - 0.5
    v = (0.5 - phi / np.pi) * height - 0.5
    v = np.clip(v, -0.5, height - 0.5)
    return u, v


def angular_distance(theta1, phi1, theta2, phi2):
    """Great-circle distance between two sphere points, in radians."""
    s = (
        np.sin(phi1) * np.sin(phi2)
        + np.cos(phi1) * np.cos(phi2) * np.cos(theta1 - theta2)
    )
    return np.arccos(np.clip(s, -1.0, 1.0))


def gnomonic_forward(center, theta, phi):
    """Project sphere points onto the plane tangent at ``center``.

    x points along increasing longitude, y along increasing latitude; the
    tangent point maps to (0, 0).  Points at angular distance >= pi/2 from
    the tangent point have no image and are rejected.
    """
    theta0, phi0 = center
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    cos_c = np.sin(phi0) * np.sin(phi) + np.cos(phi0) * np.cos(phi) * np.cos(theta - theta0)
    if np.any(cos_c <= 1e-12):
        raise ValueError("point at or beyond pi/2 from the tangent point")
    x = np.cos(phi) * np.sin(theta - theta0) / cos_c
    y = (np.cos(phi0) * np.sin(phi) - np.sin(phi0) * np.cos(phi) * np.cos(theta - theta0)) / cos_c
    return x, y


def gnomonic_inverse(center, x, y):
    """Inverse of :func:`gnomonic_forward` about the same tangent point."""
    theta0, phi0 = center
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite tangent coordinates")
    rho = np.hypot(x, y)
    c = np.arctan(rho)
    sin_c, cos_c = np.sin(c), np.cos(c)
    with np.errstate(invalid="ignore"):
        frac = np.where(rho > 0.0, y * sin_c / np.where(rho > 0.0, rho, 1.0), 0.0)
    phi = np.arcsin(np.clip(cos_c * np.sin(phi0) + frac * np.cos(phi0), -1.0, 1.0))
    theta = theta0 + np.arctan2(
        x * sin_c, rho * np.cos(phi0) * cos_c - y * np.sin(phi0) * sin_c
    )
    theta = np.where(rho > 0.0, theta, theta0)
    return wrap_theta(theta), (phi if phi.ndim else float(phi))


@dataclass
class SamplingGrid:
    """Per-pixel 3x3 tangent-patch sampling positions in ERP coordinates.

    ``positions`` has shape (H, W, 9, 2) holding (u, v) pairs; token index 4
    is the pixel's own center.  Token order is row-major over the patch with
    north (smaller v) first: 0..2 = NW, N, NE; 3..5 = W, C, E; 6..8 = SW, S, SE.
    """

    width: int
    height: int
    positions: np.ndarray
    delta_theta: float
    delta_phi: float


def build_stlm_grid(width: int, height: int, delta_theta: float | None = None,
                    delta_phi: float | None = None) -> SamplingGrid:
    """Locate the 9 related-token positions of every pixel on the ERP image.

    The 8 surrounding tokens form a 3x3 lattice on the tangent plane at the
    pixel's direction, with steps ``tan(delta)`` so axis neighbors sit exactly
    ``delta`` radians away along the tangent great circles.  The lattice is
    mapped back to the sphere and then to ERP coordinates.  Defaults are one
    ERP pixel of angular pitch, capped at pi/8 so the lattice stays well clear
    of the pi/2 projection horizon on very coarse maps.
    """
    if width < 2 or height < 1:
        raise ValueError("grid needs at least a 2x1 image")
    if delta_theta is None:
        delta_theta = min(TWO_PI / width, np.pi / 8)
    if delta_phi is None:
        delta_phi = min(np.pi / height, np.pi / 8)
    for d in (delta_theta, delta_phi):
        if not (0.0 < d < np.pi / 4):
            raise ValueError("angular steps must lie in (0, pi/4)")

    tx = np.tan(delta_theta)
    ty = np.tan(delta_phi)
    rows_v = np.arange(height, dtype=np.float64)
    _, phi0 = erp_to_sphere(np.zeros(height), rows_v, width, height)

    positions = np.empty((height, width, 9, 2), dtype=np.float64)
    cols_u = np.arange(width, dtype=np.float64)
    # All pixels in a row share a latitude: compute the lattice once per row
    # at theta0 = 0, then shift longitudes per column (the construction is
    # longitude-equivariant).
    for k in range(9):
        ix = k % 3 - 1          # -1 west, +1 east
        iy = k // 3 - 1         # -1 north (y = +ty), +1 south
        if ix == 0 and iy == 0:
            positions[:, :, k, 0] = cols_u[None, :]
            positions[:, :, k, 1] = rows_v[:, None]
            continue
        theta_k, phi_k = gnomonic_inverse((0.0, phi0), ix * tx, -iy * ty)
        du = np.asarray(theta_k) / TWO_PI * width          # longitude offset in pixels
        _, v_k = sphere_to_erp(np.zeros(height), phi_k, width, height)
        u = np.mod(cols_u[None, :] + du[:, None] + 0.5, width) - 0.5
        positions[:, :, k, 0] = u
        positions[:, :, k, 1] = np.broadcast_to(np.asarray(v_k)[:, None], (height, width))
    return SamplingGrid(width, height, positions, float(delta_theta), float(delta_phi))


def sample_erp(image: np.ndarray, u, v) -> np.ndarray:
    """Bilinearly sample an ERP image (H,W) or (C,H,W) with horizontal wrap."""
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    _, h, w = img.shape
    u = np.mod(np.asarray(u, dtype=np.float64), w)
    v = np.clip(np.asarray(v, dtype=np.float64), -0.5, h - 0.5)
    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = u - u0
    fv = v - v0
    c0 = u0.astype(np.int64) % w
    c1 = (c0 + 1) % w
    r0 = np.clip(v0.astype(np.int64), 0, h - 1)
    r1 = np.clip(v0.astype(np.int64) + 1, 0, h - 1)
    out = (
        img[:, r0, c0] * (1 - fu) * (1 - fv)
        + img[:, r0, c1] * fu * (1 - fv)
        + img[:, r1, c0] * (1 - fu) * fv
        + img[:, r1, c1] * fu * fv
    )
    return out[0] if squeeze else out


FACE_NAMES = ("front", "right", "back", "left", "top", "bottom")


def face_directions(face_size: int, face: int) -> np.ndarray:
    """Unit direction vectors (S, S, 3) for every texel of one cube face."""
    if face_size < 2:
        raise ValueError("face_size must be >= 2")
    a = (2.0 * (np.arange(face_size) + 0.5) / face_size) - 1.0  # -1..1
    col, row = np.meshgrid(a, a)
    if face < 4:  # side faces at longitudes 0, pi/2, pi, -pi/2
        theta_c = (np.pi / 2) * face
        dx = np.cos(theta_c) - np.sin(theta_c) * col
        dy = np.sin(theta_c) + np.cos(theta_c) * col
        dz = -row  # y-down texels: top row looks up
    elif face == 4:  # top: bottom texel row borders the front face
        dx = row
        dy = col
        dz = np.ones_like(col)
    else:  # bottom: top texel row borders the front face
        dx = -row
        dy = col
        dz = -np.ones_like(col)
    d = np.stack([dx, dy, dz], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass
class CubeFaceSet:
    """Six square cube-face images in (front, right, back, left, top, bottom) order."""

    face_size: int
    faces: np.ndarray  # (6, S, S) or (6, C, S, S)


def erp_to_cube(image: np.ndarray, face_size: int | None = None) -> CubeFaceSet:
    """Resample an ERP image onto the six faces of a unit cube."""
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape[-2:]
    if h * 2 != w:
        raise ValueError("ERP image must have 2:1 aspect ratio")
    if face_size is None:
        face_size = w // 4
    if face_size < 2:
        raise ValueError("face_size must be >= 2")
    faces = []
    for face in range(6):
        d = face_directions(face_size, face)
        theta = np.arctan2(d[..., 1], d[..., 0])
        phi = np.arctan2(d[..., 2], np.hypot(d[..., 0], d[..., 1]))
        u, v = sphere_to_erp(theta, phi, w, h)
        faces.append(sample_erp(img, u, v))
    return CubeFaceSet(face_size, np.stack(faces))
