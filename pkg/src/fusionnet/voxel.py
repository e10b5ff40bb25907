"""Surface voxelization of normalized meshes into binary occupancy grids.

A voxel is occupied iff at least one triangle intersects its closed
axis-aligned box, decided by the 13-axis separating-axis test. Candidate
(triangle, voxel) pairs are pruned by triangle bounding boxes, padded by one
voxel so the pruning can never drop a grazing contact; pruning must not (and
does not) change results versus an exhaustive per-pair test. Triangle-side
projections onto the 10 non-trivial axes are tabulated once per face, so the
per-pair cost is the box-center projection plus interval comparisons.

Grid layout: ``occupancy[z, y, x]``; ``occupancy.ravel()`` is therefore
x-fastest row-major, the order used by the cache format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .mesh import TriangleMesh

GRID_LO = -0.5  # normalized meshes live in [-0.5, 0.5]^3
_MAGIC = b"VOXB"
_VERSION = 1
_HEADER = struct.Struct("<4sB3H5x")  # magic, version, dims (x, y, z), reserved
_PAIR_CHUNK = 1 << 21  # cap on simultaneously tested (triangle, voxel) pairs


class VoxelCacheError(ValueError):
    """Structurally invalid voxel cache bytes."""


@dataclass
class VoxelGrid:
    resolution: int
    occupancy: np.ndarray  # bool, shape (res, res, res), axes (z, y, x)

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.shape != (self.resolution,) * 3:
            raise ValueError(f"occupancy shape {self.occupancy.shape} does not match "
                             f"resolution {self.resolution}")

    @property
    def bits(self) -> np.ndarray:
        """Flat occupancy, x-fastest row-major."""
        return self.occupancy.ravel()

    def count(self) -> int:
        return int(self.occupancy.sum())

    def to_channels(self) -> np.ndarray:
        """Float32 (depth, height, width) tensor: z slices become channels."""
        return self.occupancy.astype(np.float32)


def _face_sat_tables(tri: np.ndarray, half: float
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-face tables for the non-trivial SAT axes: the plane normal plus
    the 9 edge/box-axis cross products (the 3 box face normals reduce to the
    triangle AABB test and are handled separately).

    Returns (axes (F, 10, 3), box radius (F, 10), projection min/max of the
    triangle vertices (F, 10)); per pair only the box-center projection
    remains to compute.
    """
    e0 = tri[:, 1] - tri[:, 0]
    e1 = tri[:, 2] - tri[:, 1]
    e2 = tri[:, 0] - tri[:, 2]
    count = len(tri)
    axes = np.empty((count, 10, 3))
    axes[:, 0] = np.cross(e0, e1)
    zeros = np.zeros(count)
    for ei, e in enumerate((e0, e1, e2)):
        b = 1 + 3 * ei
        # cross(x_axis, e), cross(y_axis, e), cross(z_axis, e)
        axes[:, b + 0, 0] = zeros
        axes[:, b + 0, 1] = -e[:, 2]
        axes[:, b + 0, 2] = e[:, 1]
        axes[:, b + 1, 0] = e[:, 2]
        axes[:, b + 1, 1] = zeros
        axes[:, b + 1, 2] = -e[:, 0]
        axes[:, b + 2, 0] = -e[:, 1]
        axes[:, b + 2, 1] = e[:, 0]
        axes[:, b + 2, 2] = zeros
    rad = half * np.abs(axes).sum(axis=2)
    proj = np.einsum("fai,fvi->fav", axes, tri)  # (F, 10, 3 verts)
    return axes, rad, proj.min(axis=2), proj.max(axis=2)


def voxelize_surface(mesh: TriangleMesh, resolution: int = 30) -> VoxelGrid:
    """Rasterize the triangle surface into a resolution^3 occupancy grid.

    The mesh must already be normalized into [-0.5, 0.5]^3.
    """
    mesh.validate()
    if len(mesh.faces) == 0:
        raise ValueError("mesh has no triangles")
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    if np.abs(mesh.vertices).max() > 0.5 + 1e-9:
        raise ValueError("mesh extends outside the unit cube; normalize it first")

    h = 1.0 / resolution
    half = h / 2.0
    tri = mesh.vertices[mesh.faces]  # (F, 3, 3)
    tmin = tri.min(axis=1)
    tmax = tri.max(axis=1)
    axes, rad, vpmin, vpmax = _face_sat_tables(tri, half)

    # inclusive candidate index ranges per triangle, padded one voxel
    lo_idx = np.floor((tmin - GRID_LO) / h).astype(np.int64) - 1
    hi_idx = np.floor((tmax - GRID_LO) / h).astype(np.int64) + 1
    np.clip(lo_idx, 0, resolution - 1, out=lo_idx)
    np.clip(hi_idx, 0, resolution - 1, out=hi_idx)

    spans = hi_idx - lo_idx + 1  # (F, 3) in (x, y, z)
    counts = spans.prod(axis=1)
    total = int(counts.sum())

    occ = np.zeros((resolution,) * 3, dtype=bool)
    flat = occ.ravel()

    chunk_faces: list[np.ndarray] = []
    face_order = np.argsort(counts)[::-1] if total > _PAIR_CHUNK else np.arange(len(counts))
    # greedy chunking keeps peak pair count under _PAIR_CHUNK
    acc, acc_n = [], 0
    for f in face_order:
        if acc_n + counts[f] > _PAIR_CHUNK and acc:
            chunk_faces.append(np.array(acc))
            acc, acc_n = [], 0
        acc.append(f)
        acc_n += int(counts[f])
    if acc:
        chunk_faces.append(np.array(acc))

    for faces in chunk_faces:
        c = counts[faces]
        pair_face = np.repeat(np.arange(len(faces)), c)
        rank = np.arange(int(c.sum())) - np.repeat(np.concatenate([[0], np.cumsum(c)])[:-1], c)
        sp = spans[faces][pair_face]
        lo = lo_idx[faces][pair_face]
        i = lo[:, 0] + rank % sp[:, 0]
        j = lo[:, 1] + (rank // sp[:, 0]) % sp[:, 1]
        k = lo[:, 2] + rank // (sp[:, 0] * sp[:, 1])
        centers = GRID_LO + (np.stack([i, j, k], axis=1) + 0.5) * h
        gf = faces[pair_face]
        # box face normals: triangle AABB vs box, closed (touch overlaps)
        sep = ((tmin[gf] - centers > half).any(axis=1)
               | (tmax[gf] - centers < -half).any(axis=1))
        live = np.flatnonzero(~sep)
        gf = gf[live]
        cen = centers[live]
        sep = np.zeros(len(live), dtype=bool)
        for a in range(10):
            ax = axes[gf, a]
            cp = np.einsum("pi,pi->p", ax, cen)
            sep |= ((vpmin[gf, a] - cp > rad[gf, a])
                    | (vpmax[gf, a] - cp < -rad[gf, a]))
        hit = live[~sep]
        flat_idx = i[hit] + resolution * (j[hit] + resolution * k[hit])
        flat[flat_idx] = True

    return VoxelGrid(resolution, occ)


def write_voxel_cache(grid: VoxelGrid) -> bytes:
    """Serialize to the bit-exact cache format (see module docstring)."""
    if grid.count() == 0:
        raise ValueError("refusing to cache an empty occupancy grid")
    if grid.resolution > 0xFFFF:
        raise ValueError(f"resolution {grid.resolution} overflows 16-bit dims")
    header = _HEADER.pack(_MAGIC, _VERSION, grid.resolution, grid.resolution, grid.resolution)
    payload = np.packbits(grid.bits, bitorder="little").tobytes()
    return header + payload


def read_voxel_cache(data: bytes) -> VoxelGrid:
    if len(data) < _HEADER.size:
        raise VoxelCacheError(f"truncated header: {len(data)} bytes")
    magic, version, nx, ny, nz = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise VoxelCacheError(f"bad magic {magic!r}")
    if version != _VERSION:
        raise VoxelCacheError(f"unsupported version {version}")
    if not (nx == ny == nz) or nx == 0:
        raise VoxelCacheError(f"unsupported dims {(nx, ny, nz)}")
    n_bits = nx * ny * nz
    n_bytes = (n_bits + 7) // 8
    payload = data[_HEADER.size:]
    if len(payload) != n_bytes:
        raise VoxelCacheError(f"payload is {len(payload)} bytes, expected {n_bytes}")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    if bits[n_bits:].any():
        raise VoxelCacheError("nonzero padding bits in final byte")
    occ = bits[:n_bits].astype(bool).reshape(nz, ny, nx)
    return VoxelGrid(nx, occ)
