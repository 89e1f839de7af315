"""Single-shot acoustic modeling, migration, and the operator adjoint test.

Constant-density 2D acoustic wave equation, fourth-order centered stencil in
space, second-order leapfrog in time, sponge absorbing layers.  The adjoint
propagator is the exact discrete transpose of the forward one, which is what
makes the dot test pass at machine precision and the migration operator a
true adjoint of modeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..blobstore import KIND_IMAGE, KIND_SHOTREC, ImageBlob
from ..survey import ShotGatherPlan, VelocityModel2D
from ._backend import backend_name, impl

SPONGE_CELLS = 30
SPONGE_COEFF = 0.0035
HALO = 2
CFL_SAFETY = 0.9
_FINITE_CHECK_EVERY = 128


class CFLViolationError(ValueError):
    """Requested dt exceeds the stable step for this model/grid."""

    def __init__(self, dt: float, stable_dt: float):
        super().__init__(
            f"dt={dt:g} s violates the CFL bound; largest stable dt is {stable_dt:g} s"
        )
        self.stable_dt = stable_dt


class NumericalBlowupError(FloatingPointError):
    """Non-finite values appeared during time stepping."""


@dataclass(frozen=True)
class Wavelet:
    samples: np.ndarray = field(repr=False)
    dt: float
    peak_frequency: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size < 2:
            raise ValueError("wavelet needs at least 2 samples")
        if self.dt <= 0:
            raise ValueError("wavelet dt must be positive")
        object.__setattr__(self, "samples", s)

    def scaled(self, factor: float) -> "Wavelet":
        return Wavelet(self.samples * factor, self.dt, self.peak_frequency)


@dataclass(frozen=True)
class ShotRecord:
    shot_id: int
    receivers: tuple
    dt: float
    nt: int
    traces: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.traces, dtype=np.float64)
        if t.shape != (self.nt, len(self.receivers)):
            raise ValueError(
                f"traces shape {t.shape} != (nt={self.nt}, n_receivers={len(self.receivers)})"
            )
        if not np.isfinite(t).all():
            raise ValueError("shot record contains non-finite samples")
        object.__setattr__(self, "traces", t)
        object.__setattr__(self, "receivers", tuple(tuple(p) for p in self.receivers))

    def scaled(self, factor: float) -> "ShotRecord":
        return ShotRecord(self.shot_id, self.receivers, self.dt, self.nt, self.traces * factor)

    def to_blob(self) -> ImageBlob:
        # Trace panel rides in the grid payload: rows = time, cols = receivers.
        return ImageBlob(
            KIND_SHOTREC, self.nt, len(self.receivers), self.dt, 0.0, 0.0, 0.0, 1, self.traces
        )


@dataclass(frozen=True)
class ImageGrid:
    nz: int
    nx: int
    dz: float
    dx: float
    oz: float
    ox: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.nz, self.nx):
            raise ValueError(f"image shape {v.shape} != ({self.nz}, {self.nx})")
        if not np.isfinite(v).all():
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "values", v)

    def to_blob(self, leaf_count: int = 1) -> ImageBlob:
        return ImageBlob(
            KIND_IMAGE, self.nz, self.nx, self.dz, self.dx, self.oz, self.ox, leaf_count, self.values
        )

    @classmethod
    def from_blob(cls, blob: ImageBlob) -> "ImageGrid":
        return cls(blob.nz, blob.nx, blob.dz, blob.dx, blob.oz, blob.ox, blob.values)


def stable_dt(model: VelocityModel2D) -> float:
    """Largest accepted dt: 0.9 * min(dz, dx) / (sqrt(2) * v_max)."""
    return CFL_SAFETY * min(model.dz, model.dx) / (math.sqrt(2.0) * float(model.v.max()))


def default_dt(model: VelocityModel2D) -> float:
    """A comfortably stable dt for the fourth-order stencil (80% of the bound)."""
    return 0.8 * stable_dt(model)


def ricker(peak_frequency: float, dt: float, nt: int) -> Wavelet:
    """Ricker wavelet, peak amplitude 1 at t = 1.5/peak_frequency."""
    if peak_frequency <= 0:
        raise ValueError("peak_frequency must be positive")
    if nt * dt < 2.0 / peak_frequency:
        raise ValueError(
            f"wavelet span {nt * dt:g} s too short; need at least {2.0 / peak_frequency:g} s"
        )
    t = np.arange(nt) * dt
    tau = t - 1.5 / peak_frequency
    a = (math.pi * peak_frequency) ** 2
    w = (1.0 - 2.0 * a * tau**2) * np.exp(-a * tau**2)
    w /= np.abs(w).max()
    return Wavelet(w, dt, peak_frequency)


class _Propagator:
    """Padded grid, damping profile, and interpolation helpers for one model."""

    def __init__(self, model: VelocityModel2D, dt: float, free_surface: bool = False):
        limit = stable_dt(model)
        if dt > limit:
            raise CFLViolationError(dt, limit)
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.model = model
        self.dt = dt
        self.pad_top = HALO if free_surface else SPONGE_CELLS + HALO
        self.pad = SPONGE_CELLS + HALO
        self.nz_pad = model.nz + self.pad_top + self.pad
        self.nx_pad = model.nx + 2 * self.pad

        v_pad = np.pad(
            model.v, ((self.pad_top, self.pad), (self.pad, self.pad)), mode="edge"
        )
        self.vdt2 = (v_pad * dt) ** 2
        self.mask = self._sponge_mask(free_surface)
        self.inv_dz2 = 1.0 / model.dz**2
        self.inv_dx2 = 1.0 / model.dx**2

    def _sponge_taper(self, n: int, leading: bool) -> np.ndarray:
        taper = np.ones(n)
        for depth in range(1, SPONGE_CELLS + 1):
            val = math.exp(-SPONGE_COEFF * (depth / SPONGE_CELLS) ** 2)
            idx = HALO + SPONGE_CELLS - depth if leading else n - 1 - HALO - SPONGE_CELLS + depth
            taper[idx] = val
        return taper

    def _sponge_mask(self, free_surface: bool) -> np.ndarray:
        tz = np.ones(self.nz_pad)
        if not free_surface:
            tz *= self._sponge_taper(self.nz_pad, leading=True)
        tz *= self._sponge_taper(self.nz_pad, leading=False)
        tx = self._sponge_taper(self.nx_pad, leading=True) * self._sponge_taper(
            self.nx_pad, leading=False
        )
        mask = np.outer(tz, tx)
        # Halo cells are a Dirichlet rim; they never update, zero the mask
        # there so the array states the truth.
        mask[:HALO, :] = 0.0
        mask[-HALO:, :] = 0.0
        mask[:, :HALO] = 0.0
        mask[:, -HALO:] = 0.0
        return mask

    def interp_cells(self, positions) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bilinear cells/weights, arrays shaped (n_positions, 4)."""
        m = self.model
        iz = np.empty((len(positions), 4), dtype=np.intp)
        ix = np.empty((len(positions), 4), dtype=np.intp)
        wt = np.empty((len(positions), 4))
        for k, (x, z) in enumerate(positions):
            if not m.contains(x, z):
                raise ValueError(f"position (x={x:g}, z={z:g}) outside the model extent")
            gz = (z - m.oz) / m.dz + self.pad_top
            gx = (x - m.ox) / m.dx + self.pad
            i0, j0 = int(math.floor(gz)), int(math.floor(gx))
            i0 = min(i0, self.nz_pad - 2)
            j0 = min(j0, self.nx_pad - 2)
            fz, fx = gz - i0, gx - j0
            iz[k] = (i0, i0, i0 + 1, i0 + 1)
            ix[k] = (j0, j0 + 1, j0, j0 + 1)
            wt[k] = ((1 - fz) * (1 - fx), (1 - fz) * fx, fz * (1 - fx), fz * fx)
        return iz, ix, wt

    def alloc(self) -> np.ndarray:
        return np.zeros((self.nz_pad, self.nx_pad))

    def interior(self, a: np.ndarray) -> np.ndarray:
        return a[self.pad_top : self.pad_top + self.model.nz, self.pad : self.pad + self.model.nx]


def _check_finite(a: np.ndarray) -> None:
    if not np.isfinite(a).all():
        raise NumericalBlowupError(
            "wavefield went non-finite during stepping (unstable dt or bad inputs)"
        )


def _run_forward(prop, source, samples, receivers, nt, store_frames):
    iz_s, ix_s, w_s = prop.interp_cells([source])
    inj = prop.mask[iz_s, ix_s] * prop.vdt2[iz_s, ix_s] * w_s
    iz_r, ix_r, w_r = prop.interp_cells(receivers)

    q = np.zeros(nt)
    n_src = min(nt, len(samples))
    q[:n_src] = samples[:n_src]

    prv, cur, nxt = prop.alloc(), prop.alloc(), prop.alloc()
    traces = np.zeros((nt, len(receivers)))
    frames = np.zeros((nt, prop.model.nz, prop.model.nx)) if store_frames else None

    for n in range(nt):
        impl.forward_step(prv, cur, nxt, prop.vdt2, prop.mask, prop.inv_dz2, prop.inv_dx2)
        nxt[iz_s, ix_s] += inj * q[n]
        traces[n] = (nxt[iz_r, ix_r] * w_r).sum(axis=1)
        if frames is not None:
            frames[n] = prop.interior(nxt)
        prv, cur, nxt = cur, nxt, prv
        if n % _FINITE_CHECK_EVERY == 0:
            _check_finite(cur)
    _check_finite(traces)
    return traces, frames


def _run_adjoint(prop, receivers, data, source=None, frames=None, image_skip_until=-1):
    """Time-reversed transpose propagation.

    Injects the data with plain bilinear weights (transpose of extraction),
    optionally extracts the adjoint source series at ``source`` and/or
    accumulates the zero-lag correlation image against stored forward
    ``frames``.  Image contributions at steps <= ``image_skip_until`` are
    dropped (used to exclude the source's active window).  Returns
    (adjoint_source or None, image or None).
    """
    nt = data.shape[0]
    iz_r, ix_r, w_r = prop.interp_cells(receivers)
    flat_iz, flat_ix = iz_r.ravel(), ix_r.ravel()
    if source is not None:
        iz_s, ix_s, w_s = prop.interp_cells([source])
        ext = prop.mask[iz_s, ix_s] * prop.vdt2[iz_s, ix_s] * w_s
        q_star = np.zeros(nt)
    else:
        q_star = None
    image = np.zeros((prop.model.nz, prop.model.nx)) if frames is not None else None

    prv, cur, nxt = prop.alloc(), prop.alloc(), prop.alloc()
    w = prop.alloc()
    for k in range(nt, 0, -1):
        if q_star is None and image is not None and k - 1 <= image_skip_until:
            break  # remaining steps would only add skipped image terms
        impl.adjoint_step(prv, cur, nxt, w, prop.vdt2, prop.mask, prop.inv_dz2, prop.inv_dx2)
        np.add.at(nxt, (flat_iz, flat_ix), (w_r * data[k - 1][:, None]).ravel())
        if q_star is not None:
            q_star[k - 1] = (ext * nxt[iz_s, ix_s]).sum()
        if image is not None and k - 1 > image_skip_until:
            image += frames[k - 1] * prop.interior(nxt)
        cur, nxt = nxt, cur
        if k % _FINITE_CHECK_EVERY == 0:
            _check_finite(cur)
    if image is not None:
        _check_finite(image)
    return q_star, image


def _source_active_until(samples: np.ndarray, nt: int) -> int:
    """Last time index where the source still injects significant amplitude."""
    q = np.abs(samples[:nt])
    if q.size == 0 or q.max() == 0.0:
        return -1
    hot = np.nonzero(q > 1e-3 * q.max())[0]
    return int(hot.max()) if hot.size else -1


class SourceWavefield:
    """Handle to the stored forward wavefield (one interior frame per step)."""

    def __init__(self, frames: np.ndarray, dt: float):
        self.frames = frames
        self.dt = dt

    @property
    def nt(self) -> int:
        return self.frames.shape[0]


def forward_model(
    model: VelocityModel2D,
    source: tuple,
    wavelet: Wavelet,
    receivers,
    dt: float,
    nt: int,
    shot_id: int = 0,
    free_surface: bool = False,
    store_wavefield: bool = True,
) -> tuple[ShotRecord, SourceWavefield | None]:
    """Model one shot; returns receiver traces and the stored source wavefield."""
    if abs(wavelet.dt - dt) > 1e-15:
        raise ValueError(f"wavelet dt {wavelet.dt:g} != simulation dt {dt:g}")
    prop = _Propagator(model, dt, free_surface)
    traces, frames = _run_forward(prop, source, wavelet.samples, receivers, nt, store_wavefield)
    record = ShotRecord(shot_id, tuple(receivers), dt, nt, traces)
    handle = SourceWavefield(frames, dt) if store_wavefield else None
    return record, handle


def rtm_shot_image(
    model: VelocityModel2D,
    plan: ShotGatherPlan,
    observed: ShotRecord,
    wavelet: Wavelet,
    free_surface: bool = False,
) -> ImageGrid:
    """Migrate one shot: zero-lag cross-correlation of source and adjoint fields.

    Correlation starts once the source signature has died out, which keeps
    the sharp injection footprint at the shot location out of the image.
    """
    if tuple(observed.receivers) != tuple(plan.receivers):
        raise ValueError("observed record receivers do not match the shot plan")
    if abs(wavelet.dt - observed.dt) > 1e-15:
        raise ValueError("wavelet dt does not match the observed record dt")
    prop = _Propagator(model, observed.dt, free_surface)
    _, frames = _run_forward(
        prop, plan.source, wavelet.samples, plan.receivers, observed.nt, store_frames=True
    )
    _, image = _run_adjoint(
        prop,
        plan.receivers,
        observed.traces,
        frames=frames,
        image_skip_until=_source_active_until(wavelet.samples, observed.nt),
    )
    return ImageGrid(model.nz, model.nx, model.dz, model.dx, model.oz, model.ox, image)


def adjoint_dot_test(
    model: VelocityModel2D, plan: ShotGatherPlan, wavelet_length: int, seed: int
) -> float:
    """Relative error of <F q, d> vs <q, F* d> for random q, d.

    F maps a source time series to receiver data; F* is the time-reversed
    transpose propagation.  Should be << 1e-10 in 64-bit arithmetic.
    """
    if model.nz > 201 or model.nx > 201:
        raise ValueError("adjoint test is limited to grids of at most 201x201")
    prop = _Propagator(model, default_dt(model))
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(wavelet_length)
    d = rng.standard_normal((wavelet_length, len(plan.receivers)))

    traces, _ = _run_forward(prop, plan.source, q, plan.receivers, wavelet_length, False)
    q_star, _ = _run_adjoint(prop, plan.receivers, d, source=plan.source)

    forward_side = float(np.vdot(traces, d))
    adjoint_side = float(np.vdot(q, q_star))
    return abs(forward_side - adjoint_side) / abs(forward_side)


__all__ = [
    "CFLViolationError",
    "NumericalBlowupError",
    "Wavelet",
    "ShotRecord",
    "ImageGrid",
    "SourceWavefield",
    "stable_dt",
    "default_dt",
    "ricker",
    "forward_model",
    "rtm_shot_image",
    "adjoint_dot_test",
    "backend_name",
]
