"""Synthetic velocity models and randomized ocean-bottom acquisition.

Receivers sit on a dense random spread along the sea floor while sources
fire on a regular shallow grid; reciprocity re-sorts that acquisition into
one shot gather per physical receiver, which is what makes the per-shot
map phase embarrassingly parallel with few, large gathers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blobstore import KIND_VELOCITY, ImageBlob

V_MIN = 1000.0
V_MAX = 8000.0

# Fixed standoffs from the grid edge, in cells: receivers near the bottom,
# sources shallow, both clear of the absorbing boundary stencils.
RECEIVER_DEPTH_CELLS = 3
SOURCE_DEPTH_CELLS = 2
LATERAL_MARGIN_CELLS = 2


@dataclass(frozen=True)
class VelocityModel2D:
    """Gridded acoustic velocity; ``v`` is row-major (nz, nx) in m/s."""

    nz: int
    nx: int
    dz: float
    dx: float
    oz: float
    ox: float
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.nz < 3 or self.nx < 3:
            raise ValueError("model needs nz >= 3 and nx >= 3")
        if self.dz <= 0 or self.dx <= 0:
            raise ValueError("grid spacing must be positive")
        v = np.asarray(self.v, dtype=np.float64).reshape(self.nz, self.nx)
        if v.min() < V_MIN or v.max() > V_MAX:
            raise ValueError(
                f"velocities must lie in [{V_MIN:g}, {V_MAX:g}] m/s, "
                f"got [{v.min():g}, {v.max():g}]"
            )
        object.__setattr__(self, "v", v)

    @property
    def extent_z(self) -> tuple[float, float]:
        return (self.oz, self.oz + (self.nz - 1) * self.dz)

    @property
    def extent_x(self) -> tuple[float, float]:
        return (self.ox, self.ox + (self.nx - 1) * self.dx)

    def contains(self, x: float, z: float) -> bool:
        x0, x1 = self.extent_x
        z0, z1 = self.extent_z
        return x0 <= x <= x1 and z0 <= z <= z1

    def to_blob(self) -> ImageBlob:
        return ImageBlob(
            KIND_VELOCITY, self.nz, self.nx, self.dz, self.dx, self.oz, self.ox, 1, self.v
        )

    @classmethod
    def from_blob(cls, blob: ImageBlob) -> "VelocityModel2D":
        if blob.kind != KIND_VELOCITY:
            raise ValueError(f"expected a velocity blob, got kind={blob.kind!r}")
        return cls(blob.nz, blob.nx, blob.dz, blob.dx, blob.oz, blob.ox, blob.values)


@dataclass(frozen=True)
class Geometry:
    """Acquisition layout: (x, z) positions in meters plus recording params."""

    sources: tuple
    receivers: tuple
    record_time: float
    dt_record: float

    def __post_init__(self):
        if not self.sources or not self.receivers:
            raise ValueError("sources and receivers must be non-empty")
        if self.record_time <= 0 or self.dt_record <= 0:
            raise ValueError("record_time and dt_record must be positive")
        object.__setattr__(self, "sources", tuple(tuple(p) for p in self.sources))
        object.__setattr__(self, "receivers", tuple(tuple(p) for p in self.receivers))


@dataclass(frozen=True)
class ShotGatherPlan:
    """One unit of map-phase work: a source position and its receiver spread."""

    shot_id: int
    source: tuple
    receivers: tuple

    def __post_init__(self):
        if not self.receivers:
            raise ValueError("plan needs at least one receiver")


def make_layered_model(
    nz: int, nx: int, dz: float, dx: float, layer_velocities: list[float]
) -> VelocityModel2D:
    """Horizontally layered model, equal-thickness layers top to bottom.

    Remainder rows (when nz is not divisible by the layer count) go to the
    deepest layer.
    """
    if not layer_velocities:
        raise ValueError("need at least one layer velocity")
    n_layers = len(layer_velocities)
    if n_layers > nz:
        raise ValueError(f"{n_layers} layers do not fit in {nz} rows")
    v = np.empty((nz, nx), dtype=np.float64)
    thickness = nz // n_layers
    for i, vel in enumerate(layer_velocities):
        top = i * thickness
        bot = (i + 1) * thickness if i < n_layers - 1 else nz
        v[top:bot, :] = vel
    return VelocityModel2D(nz, nx, dz, dx, 0.0, 0.0, v)


def make_random_obn_geometry(
    model: VelocityModel2D,
    n_receivers: int,
    n_sources: int,
    seed: int,
    record_time: float,
    dt_record: float,
) -> Geometry:
    """Random ocean-bottom receivers plus a dense regular source grid.

    Receiver x positions are drawn uniformly over the model extent (minus a
    two-cell lateral margin) with numpy's PCG64 generator seeded by ``seed``,
    so the layout is a pure function of (model, counts, seed).  Receivers sit
    at z = (nz-3)*dz, sources at z = 2*dz.
    """
    if n_receivers < 1 or n_sources < 1:
        raise ValueError("receiver and source counts must be >= 1")
    x_lo = model.ox + LATERAL_MARGIN_CELLS * model.dx
    x_hi = model.ox + (model.nx - 1 - LATERAL_MARGIN_CELLS) * model.dx
    if x_hi <= x_lo:
        raise ValueError("model too narrow for the lateral margin")
    z_rec = model.oz + (model.nz - 1 - RECEIVER_DEPTH_CELLS) * model.dz
    z_src = model.oz + SOURCE_DEPTH_CELLS * model.dz

    rng = np.random.default_rng(seed)
    rec_x = x_lo + rng.random(n_receivers) * (x_hi - x_lo)
    receivers = tuple((float(x), z_rec) for x in rec_x)

    if n_sources == 1:
        src_x = np.array([(x_lo + x_hi) / 2.0])
    else:
        src_x = np.linspace(x_lo, x_hi, n_sources)
    sources = tuple((float(x), z_src) for x in src_x)
    return Geometry(sources, receivers, record_time, dt_record)


def apply_reciprocity(geometry: Geometry) -> list[ShotGatherPlan]:
    """Swap source and receiver roles, one shot gather per original receiver.

    All plans share one receiver tuple (the original source positions), so
    a 1,500-receiver / 638k-source survey stays cheap to represent.
    """
    virtual_receivers = geometry.sources
    return [
        ShotGatherPlan(shot_id=i, source=pos, receivers=virtual_receivers)
        for i, pos in enumerate(geometry.receivers)
    ]
