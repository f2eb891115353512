"""3D non-Cartesian k-space trajectory generation, metrics and file I/O.

Coordinates are normalized spatial frequencies in cycles/voxel, each
component in [-0.5, 0.5). Trajectories are stored shot-major as a
(n_shots, n_samples, 3) float32 array.
"""
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .base import ArgumentError, ConfigError, FormatError, MatrixSize

# Real root psi of x^3 = x^2 + 1; the 3D golden means are psi-1 and 1/psi.
PHI1 = 0.4655712318767680
PHI2 = 0.6823278038280193

KINDS = ("radial", "cones", "tpi", "golf", "imported")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}

_MAGIC = b"KTRJ"
_VERSION = 1


@dataclass(frozen=True)
class KTrajectory:
    """A set of k-space shots with optional Cartesian-sample flags."""

    coords: np.ndarray  # (n_shots, n_samples, 3) float32
    kind: str
    cartesian_mask: Optional[np.ndarray] = field(default=None)  # bool, per sample

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float32)
        if c.ndim != 3 or c.shape[2] != 3 or c.shape[0] < 1 or c.shape[1] < 1:
            raise ArgumentError(f"coords must be (n_shots, n_samples, 3), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ArgumentError("trajectory contains non-finite coordinates")
        if c.min() < -0.5 or c.max() >= 0.5:
            raise ArgumentError("coordinates must lie in [-0.5, 0.5)")
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown trajectory kind {self.kind!r}")
        if self.cartesian_mask is not None:
            m = np.asarray(self.cartesian_mask, dtype=bool)
            if m.shape != c.shape[:2]:
                raise ArgumentError("cartesian_mask shape must be (n_shots, n_samples)")
            object.__setattr__(self, "cartesian_mask", m)
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def n_shots(self) -> int:
        return self.coords.shape[0]

    @property
    def n_samples(self) -> int:
        return self.coords.shape[1]

    @property
    def n_total(self) -> int:
        return self.n_shots * self.n_samples

    def flat(self) -> np.ndarray:
        """Sample coordinates flattened shot-major, shape (n_total, 3)."""
        return self.coords.reshape(-1, 3)

    def cartesian_fraction(self) -> float:
        if self.cartesian_mask is None:
            return 0.0
        return float(self.cartesian_mask.mean())


def _check_sizes(n_shots, n_samples):
    if n_shots < 1:
        raise ArgumentError(f"n_shots must be >= 1, got {n_shots}")
    if n_samples < 2:
        raise ArgumentError(f"n_samples must be >= 2, got {n_samples}")


def _gm_directions(n_shots):
    """Unit directions from the 3D golden-means sequence, m = 1..n_shots."""
    m = np.arange(1, n_shots + 1, dtype=np.float64)
    z = 2.0 * np.mod(m * PHI1, 1.0) - 1.0
    az = 2.0 * np.pi * np.mod(m * PHI2, 1.0)
    st = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([st * np.cos(az), st * np.sin(az), z], axis=1)


def _radial_radii(n_samples):
    # equispaced 0 .. 0.5*(1 - 1/n_samples)
    return 0.5 * np.arange(n_samples, dtype=np.float64) / n_samples


def gen_radial_gm(n_shots: int, n_samples: int) -> KTrajectory:
    """Center-out radial spokes along 3D golden-means directions."""
    _check_sizes(n_shots, n_samples)
    dirs = _gm_directions(n_shots)
    radii = _radial_radii(n_samples)
    coords = radii[None, :, None] * dirs[:, None, :]
    return KTrajectory(coords.astype(np.float32), "radial")


def gen_cones(n_shots: int, n_samples: int, n_cone_angles: int = 16,
              twist: float = 2.0) -> KTrajectory:
    """Center-out shots winding on cones of fixed polar angle.

    Cone polar angles are spaced uniformly in cos(theta) (area uniform);
    shots visit the angles round-robin with golden-angle base rotations.
    `twist` is the number of azimuthal turns accumulated along one shot.
    """
    _check_sizes(n_shots, n_samples)
    if n_cone_angles < 1:
        raise ArgumentError(f"n_cone_angles must be >= 1, got {n_cone_angles}")
    if twist < 0:
        raise ArgumentError(f"twist must be >= 0, got {twist}")
    ct = 1.0 - 2.0 * (np.arange(n_cone_angles) + 0.5) / n_cone_angles
    thetas = np.arccos(ct)
    m = np.arange(n_shots)
    theta = thetas[m % n_cone_angles]
    base_az = 2.0 * np.pi * np.mod((m + 1) * PHI2, 1.0)
    radii = _radial_radii(n_samples)
    frac = radii / radii[-1] if radii[-1] > 0 else radii
    az = base_az[:, None] + 2.0 * np.pi * twist * frac[None, :]
    st = np.sin(theta)[:, None]
    ctv = np.cos(theta)[:, None]
    coords = np.stack([
        radii[None, :] * st * np.cos(az),
        radii[None, :] * st * np.sin(az),
        radii[None, :] * ctv * np.ones_like(az),
    ], axis=2)
    return KTrajectory(coords.astype(np.float32), "cones")


def _tpi_shot(direction, n_samples, p, r_max):
    """One twisted-projection shot: radial to p*r_max, then |k|^3 affine in arc length."""
    x, y, z = direction
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    base_az = np.arctan2(y, x)
    st = np.sin(theta)
    r0 = p * r_max
    if p >= 1.0 or st < 1e-8:
        # degenerate: pure radial spoke
        s = np.linspace(0.0, r_max, n_samples)
        return s[:, None] * np.asarray(direction)[None, :]
    # arc length: r0 radial, then r(s)^3 = r0^3 + 3 r0^2 (s - r0)
    s_total = r0 + (r_max**3 - r0**3) / (3.0 * r0**2)
    s = np.linspace(0.0, s_total, n_samples)
    pts = np.empty((n_samples, 3))
    radial = s <= r0
    pts[radial] = s[radial, None] * np.asarray(direction)[None, :]
    # integrate azimuth over fine substeps for the twisted part
    n_fine = 20 * n_samples
    sf = np.linspace(r0, s_total, n_fine)
    rf = np.cbrt(r0**3 + 3.0 * r0**2 * (sf - r0))
    drds = (r0 * r0) / (rf * rf)
    dphids = np.sqrt(np.maximum(0.0, 1.0 - drds * drds)) / (rf * st)
    phif = base_az + np.concatenate(
        [[0.0], np.cumsum(0.5 * (dphids[1:] + dphids[:-1]) * np.diff(sf))])
    tw = ~radial
    r_tw = np.cbrt(r0**3 + 3.0 * r0**2 * (s[tw] - r0))
    phi_tw = np.interp(s[tw], sf, phif)
    pts[tw, 0] = r_tw * st * np.cos(phi_tw)
    pts[tw, 1] = r_tw * st * np.sin(phi_tw)
    pts[tw, 2] = r_tw * np.cos(theta)
    return pts


def gen_tpi(n_shots: int, n_samples: int, p: float = 0.4) -> KTrajectory:
    """Twisted projection imaging: radial core, uniform-density twisted shell."""
    _check_sizes(n_shots, n_samples)
    if not (0.0 < p <= 1.0):
        raise ArgumentError(f"p must be in (0, 1], got {p}")
    dirs = _gm_directions(n_shots)
    r_max = 0.5 * (n_samples - 1) / n_samples
    coords = np.stack([_tpi_shot(d, n_samples, p, r_max) for d in dirs])
    return KTrajectory(coords.astype(np.float32), "tpi")


def gen_golf_hybrid(matrix: MatrixSize, af_target: float, center_radius: float,
                    n_samples: int, seed: int = 0) -> KTrajectory:
    """Hybrid pattern: Cartesian readout lines through the k-space center,
    plus twisted variable-density center-out shots covering the periphery.

    Samples of the outer shots that fall strictly inside the center ball are
    snapped to the Cartesian grid of `matrix`, so the whole ball is grid
    sampled. The realized shot budget discounts the redundant in-ball
    portion of each outer shot, so the realized acceleration factor can
    exceed `af_target`.
    """
    matrix = MatrixSize(*matrix).validate()
    if af_target <= 1:
        raise ArgumentError(f"af_target must be > 1, got {af_target}")
    if not (0.0 <= center_radius < 0.5):
        raise ArgumentError(f"center_radius must be in [0, 0.5), got {center_radius}")
    _check_sizes(1, n_samples)
    if n_samples > matrix.nx:
        raise ConfigError(
            f"n_samples={n_samples} exceeds nx={matrix.nx}; Cartesian lines cannot fit")

    nx, ny, nz = matrix
    budget = int(round(ny * nz / af_target))
    # Cartesian readout lines for every (ky, kz) grid node strictly inside the ball
    jj = np.arange(ny) - ny // 2
    kk = np.arange(nz) - nz // 2
    jg, kg = np.meshgrid(jj, kk, indexing="ij")
    rho = np.hypot(jg / ny, kg / nz)
    sel = np.argwhere(rho < center_radius)
    n_cart = len(sel)
    if n_cart > budget:
        raise ConfigError(
            f"center region needs {n_cart} Cartesian lines, "
            f"exceeding the shot budget {budget} at af_target={af_target}")

    ii = np.arange(n_samples) - n_samples // 2
    shots = []
    masks = []
    for j, k in sel:
        line = np.zeros((n_samples, 3))
        line[:, 0] = ii / nx
        line[:, 1] = jj[j] / ny
        line[:, 2] = kk[k] / nz
        shots.append(line)
        masks.append(np.ones(n_samples, dtype=bool))

    # outer budget, discounted by the in-ball fraction of a twisted shot
    r_max = 0.5 * (n_samples - 1) / n_samples
    p_twist = min(max(center_radius / r_max, 0.1), 1.0) if center_radius > 0 else 0.4
    proto = _tpi_shot(np.array([np.sqrt(0.5), 0.5, 0.5]), n_samples, p_twist, r_max)
    inside_frac = float(np.mean(np.linalg.norm(proto, axis=1) < center_radius))
    n_outer = int(round((budget - n_cart) * (1.0 - inside_frac)))
    if n_cart + n_outer == 0:
        raise ConfigError("configuration yields zero shots")

    rng = np.random.default_rng(seed)
    m_off = int(rng.integers(1, 10_000))
    dirs = _gm_directions(n_outer + m_off)[m_off:] if n_outer else np.zeros((0, 3))
    grid_n = np.array([nx, ny, nz], dtype=np.float64)
    half = np.array([nx // 2, ny // 2, nz // 2])
    for d in dirs:
        pts = _tpi_shot(d, n_samples, p_twist, r_max)
        r = np.linalg.norm(pts, axis=1)
        inside = r < center_radius
        snapped = np.round(pts[inside] * grid_n)
        snapped = np.clip(snapped, -half, (grid_n - 1) - half) / grid_n
        pts[inside] = snapped
        shots.append(pts)
        masks.append(inside)
    coords = np.stack(shots)
    mask = np.stack(masks)
    return KTrajectory(coords.astype(np.float32), "golf", cartesian_mask=mask)


def acceleration_factor(traj: KTrajectory, matrix: MatrixSize) -> float:
    """Shot-count acceleration: phase-encode plane size over acquired shots."""
    matrix = MatrixSize(*matrix).validate()
    return matrix.ny * matrix.nz / traj.n_shots


def save_trajectory(path, traj: KTrajectory) -> None:
    """Write a trajectory in the KTRJ binary format (little-endian)."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<IIIB", _VERSION, traj.n_shots, traj.n_samples,
                            _KIND_CODE[traj.kind]))
        f.write(np.ascontiguousarray(traj.coords, dtype="<f4").tobytes())


def load_trajectory(path) -> KTrajectory:
    """Read a KTRJ file; unknown kind codes map to 'imported'."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4 or blob[:4] != _MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {_MAGIC!r}", offset=0)
    if len(blob) < 17:
        raise FormatError("truncated header", offset=len(blob))
    version, n_shots, n_samples, kind_code = struct.unpack("<IIIB", blob[4:17])
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if n_shots < 1 or n_samples < 1:
        raise FormatError(f"invalid sizes {n_shots}x{n_samples}", offset=8)
    need = n_shots * n_samples * 3 * 4
    if len(blob) != 17 + need:
        raise FormatError(
            f"expected {17 + need} bytes, file has {len(blob)}", offset=len(blob))
    coords = np.frombuffer(blob, dtype="<f4", count=n_shots * n_samples * 3,
                           offset=17).reshape(n_shots, n_samples, 3)
    kind = KINDS[kind_code] if kind_code < len(KINDS) else "imported"
    return KTrajectory(coords.copy(), kind)


def full_cartesian(matrix: MatrixSize) -> KTrajectory:
    """All grid frequencies of `matrix`, one shot per (ky, kz) line."""
    matrix = MatrixSize(*matrix).validate()
    nx, ny, nz = matrix
    fx = (np.arange(nx) - nx // 2) / nx
    fy = (np.arange(ny) - ny // 2) / ny
    fz = (np.arange(nz) - nz // 2) / nz
    gx, gy, gz = np.meshgrid(fx, fy, fz, indexing="ij")
    coords = np.stack([gx, gy, gz], axis=-1).transpose(1, 2, 0, 3).reshape(ny * nz, nx, 3)
    return KTrajectory(coords.astype(np.float32), "imported")
