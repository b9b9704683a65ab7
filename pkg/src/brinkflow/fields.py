"""Field containers on MAC grids and their flat-binary serialization.

Velocity components live on faces, pressure and density in cell centers.
Fields written to disk use a short text header followed by raw
little-endian float64 payloads (component order u, v, w for velocity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BrinkflowError
from .geometry import FACE_FLUID, GridMask

_MAGIC = b"brinkflow-field-v1"


@dataclass
class VelocityField:
    """Face-centered velocity, extended by zero into solids.

    Components are full face arrays; values on solid and domain-boundary
    faces are zero unless the field carries Dirichlet boundary data.
    """

    mask: GridMask
    components: list = field(default_factory=list)

    @classmethod
    def zeros(cls, mask):
        return cls(mask, [np.zeros(mask.face_shape(a)) for a in range(3)])

    @classmethod
    def from_callable(cls, mask, fn, restrict=True):
        """Sample ``fn(x, y, z) -> (fx, fy, fz)`` at face centers.

        With ``restrict`` the samples are zeroed on non-fluid faces (the
        zero-extension convention).
        """
        comps = []
        for a in range(3):
            xs = [mask.lo[ax] + mask.h * (np.arange(mask.n[ax]) + 0.5)
                  for ax in range(3)]
            xs[a] = mask.lo[a] + mask.h * np.arange(mask.n[a] + 1)
            X, Y, Z = np.meshgrid(*xs, indexing="ij")
            vals = np.asarray(fn(X, Y, Z)[a], dtype=float)
            vals = np.broadcast_to(vals, X.shape).copy()
            if restrict:
                vals[mask.face_class[a] != FACE_FLUID] = 0.0
            comps.append(vals)
        return cls(mask, comps)

    def copy(self):
        return VelocityField(self.mask, [c.copy() for c in self.components])

    def l2norm(self):
        """L2 norm over the full box (zero extension makes this exact)."""
        s = sum(float(np.sum(c * c)) for c in self.components)
        return np.sqrt(s * self.mask.cell_volume)

    def max_speed(self):
        return max(float(np.max(np.abs(c))) for c in self.components)

    def diff_l2(self, other):
        if self.mask.n != other.mask.n:
            raise BrinkflowError("velocity fields live on different grids")
        s = 0.0
        for a, b in zip(self.components, other.components):
            s += float(np.sum((a - b) ** 2))
        return np.sqrt(s * self.mask.cell_volume)


@dataclass
class PressureField:
    """Cell-centered pressure with zero mean over fluid cells."""

    mask: GridMask
    values: np.ndarray

    @classmethod
    def zeros(cls, mask):
        return cls(mask, np.zeros(mask.n))

    def demean(self):
        fluid = self.mask.cell_fluid
        if np.any(fluid):
            self.values[fluid] -= np.mean(self.values[fluid])
            self.values[~fluid] = 0.0
        return self

    def fluid_mean(self):
        return float(np.mean(self.values[self.mask.cell_fluid]))


class ForcingField(VelocityField):
    """Face-centered body force; restricted forcings vanish on solid faces."""


def dissipation(u: VelocityField, f: VelocityField) -> float:
    """Quadrature of ``f . u`` over fluid faces (the work pairing)."""
    if u.mask.n != f.mask.n:
        raise BrinkflowError("velocity and forcing live on different grids")
    s = 0.0
    for a in range(3):
        fluid = u.mask.face_class[a] == FACE_FLUID
        s += float(np.sum(u.components[a][fluid] * f.components[a][fluid]))
    return s * u.mask.cell_volume


# ---------------------------------------------------------------------------
# flat binary layout with a text header
#
#   line 1: magic
#   line 2: kind (velocity|cell) n1 n2 n3 h
#   payload: float64 little-endian, C order; velocity stores u then v then w
# ---------------------------------------------------------------------------

def save_velocity(u: VelocityField, path: str) -> None:
    with open(path, "wb") as fh:
        n = u.mask.n
        fh.write(_MAGIC + b"\n")
        fh.write(f"velocity {n[0]} {n[1]} {n[2]} {u.mask.h!r}\n".encode())
        for c in u.components:
            fh.write(np.ascontiguousarray(c, dtype="<f8").tobytes())


def save_cell_field(values: np.ndarray, h: float, path: str) -> None:
    with open(path, "wb") as fh:
        n = values.shape
        fh.write(_MAGIC + b"\n")
        fh.write(f"cell {n[0]} {n[1]} {n[2]} {h!r}\n".encode())
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_field(path: str, mask: GridMask | None = None):
    """Load a field file; velocity files need the matching mask."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != _MAGIC:
            raise BrinkflowError(f"{path} is not a brinkflow field file")
        kind, n1, n2, n3, h = fh.readline().split()
        n = (int(n1), int(n2), int(n3))
        h = float(h)
        if kind == b"cell":
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(n)
            return np.array(data)
        if kind != b"velocity":
            raise BrinkflowError(f"unknown field kind {kind!r}")
        if mask is None or mask.n != n:
            raise BrinkflowError("velocity files require the matching mask")
        comps = []
        for a in range(3):
            shape = mask.face_shape(a)
            cnt = int(np.prod(shape))
            data = np.frombuffer(fh.read(cnt * 8), dtype="<f8")
            comps.append(np.array(data).reshape(shape))
        return VelocityField(mask, comps)
