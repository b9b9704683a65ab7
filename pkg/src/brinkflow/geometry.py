"""Perforated-domain geometry: hole lattices and staggered-grid masks.

A perforated box is a lattice of identical tiny holes, one per cube cell of
side ``epsilon``, with hole diameter ``epsilon**alpha``.  The lattice is
rasterized onto a uniform MAC grid: cells carry a fluid/solid class, faces
carry fluid/solid/domain-boundary classes derived from the adjacent cells.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import BrinkflowError, UnresolvedHole

# face class codes
FACE_FLUID = 0
FACE_SOLID = 1
FACE_BOUNDARY = 2

_CONTAINMENT_TOL = 1e-12


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned box with no-slip walls."""

    lo: tuple = (0.0, 0.0, 0.0)
    hi: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("domain corners must be 3-vectors")
        if not np.all(hi > lo):
            raise ValueError("domain must have strictly positive side lengths")
        object.__setattr__(self, "lo", tuple(lo))
        object.__setattr__(self, "hi", tuple(hi))

    @property
    def sides(self):
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def volume(self):
        return float(np.prod(self.sides))


@dataclass(frozen=True)
class HoleShape:
    """Hole shape in rescaled cell units (unit scale = hole diameter).

    Admissible shapes contain the ball of radius 1/2 and stay inside the
    ball of radius 3/4 after rescaling; ``validate_lattice`` checks this by
    directional sampling.
    """

    kind: str
    params: tuple

    @staticmethod
    def ball(radius: float) -> "HoleShape":
        return HoleShape("ball", (float(radius),))

    @staticmethod
    def cube(half_width: float) -> "HoleShape":
        return HoleShape("cube", (float(half_width),))

    @staticmethod
    def ellipsoid(a: float, b: float, c: float) -> "HoleShape":
        return HoleShape("ellipsoid", (float(a), float(b), float(c)))

    def __post_init__(self):
        if self.kind not in ("ball", "cube", "ellipsoid"):
            raise ValueError(f"unknown hole shape kind {self.kind!r}")
        if any(p <= 0 for p in self.params):
            raise ValueError("shape parameters must be positive")

    def contains(self, pts):
        """Inclusive membership test for rescaled points, shape (..., 3).

        Boundary points count as inside: cell centers exactly on the hole
        boundary classify as solid (conservative no-slip).
        """
        pts = np.asarray(pts, dtype=float)
        if self.kind == "ball":
            (r,) = self.params
            return np.sum(pts * pts, axis=-1) <= r * r
        if self.kind == "cube":
            (w,) = self.params
            return np.max(np.abs(pts), axis=-1) <= w
        a, b, c = self.params
        q = (pts[..., 0] / a) ** 2 + (pts[..., 1] / b) ** 2 + (pts[..., 2] / c) ** 2
        return q <= 1.0

    def boundary_radius(self, directions):
        """Distance from the origin to the shape boundary per unit direction."""
        d = np.asarray(directions, dtype=float)
        if self.kind == "ball":
            (r,) = self.params
            return np.full(d.shape[:-1], r)
        if self.kind == "cube":
            (w,) = self.params
            return w / np.max(np.abs(d), axis=-1)
        a, b, c = self.params
        q = (d[..., 0] / a) ** 2 + (d[..., 1] / b) ** 2 + (d[..., 2] / c) ** 2
        return 1.0 / np.sqrt(q)

    @property
    def min_radius(self):
        """Inradius in rescaled units."""
        if self.kind == "ball":
            return self.params[0]
        if self.kind == "cube":
            return self.params[0]
        return min(self.params)

    @property
    def max_radius(self):
        """Circumradius in rescaled units."""
        if self.kind == "ball":
            return self.params[0]
        if self.kind == "cube":
            return self.params[0] * np.sqrt(3.0)
        return max(self.params)

    @property
    def volume(self):
        if self.kind == "ball":
            return 4.0 / 3.0 * np.pi * self.params[0] ** 3
        if self.kind == "cube":
            return (2.0 * self.params[0]) ** 3
        a, b, c = self.params
        return 4.0 / 3.0 * np.pi * a * b * c


@dataclass(frozen=True)
class HoleLattice:
    """Lattice of identical holes, one per admissible cube cell.

    ``hole_scale`` is the hole diameter epsilon**alpha; ``sigma`` the
    criticality ratio sqrt(epsilon**3 / hole_scale) (equal to 1 in the
    critical case alpha = 3).
    """

    domain: DomainSpec
    epsilon: float
    alpha: float
    shape: HoleShape
    centers: np.ndarray  # (K, 3) hole centers, physical coordinates
    k_index: np.ndarray  # (K, 3) integer lattice indices
    empty_warning: bool = False

    @property
    def hole_scale(self):
        return self.epsilon ** self.alpha

    @property
    def sigma(self):
        return float(np.sqrt(self.epsilon ** 3 / self.hole_scale))

    @property
    def hole_radius(self):
        """Physical inradius of one hole."""
        return self.hole_scale * self.shape.min_radius

    @property
    def n_holes(self):
        return len(self.centers)


def enumerate_holes(domain: DomainSpec, epsilon: float, alpha: float,
                    shape: HoleShape) -> HoleLattice:
    """Place one hole at the center of every cube cell fully inside the box.

    Cells are ``epsilon * ([0,1]^3 + k)`` measured from the box corner; a
    cell is admissible when its closure is contained in the closed box.
    Too-large ``epsilon`` yields an empty lattice with ``empty_warning``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    sides = domain.sides
    lo = np.asarray(domain.lo)
    ranges = []
    for ax in range(3):
        n_cells = int(np.floor(sides[ax] / epsilon + _CONTAINMENT_TOL))
        ranges.append(np.arange(n_cells))
    if any(len(r) == 0 for r in ranges):
        return HoleLattice(domain, epsilon, alpha, shape,
                           centers=np.zeros((0, 3)),
                           k_index=np.zeros((0, 3), dtype=int),
                           empty_warning=True)
    ki, kj, kk = np.meshgrid(*ranges, indexing="ij")
    k = np.stack([ki.ravel(), kj.ravel(), kk.ravel()], axis=1)
    centers = lo[None, :] + epsilon * (k + 0.5)
    # lexicographic order is already guaranteed by meshgrid(indexing="ij")
    return HoleLattice(domain, epsilon, alpha, shape, centers=centers,
                       k_index=k)


def fibonacci_directions(n: int) -> np.ndarray:
    """Deterministic quasi-uniform unit directions on the sphere."""
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=1)


def validate_lattice(lattice: HoleLattice, n_directions: int = 1024) -> list:
    """Check the hole-distribution inclusions by directional sampling.

    Returns a list of human-readable violations; empty iff every hole
    satisfies ball(1/2) inside hole inside ball(3/4) (rescaled) and the
    outer ball stays strictly inside its epsilon-cell and the box.
    """
    out = []
    d = fibonacci_directions(max(n_directions, 1024))
    r = lattice.shape.boundary_radius(d)
    rmin, rmax = float(np.min(r)), float(np.max(r))
    if rmax >= 0.75:
        out.append(
            f"outer inclusion: shape boundary reaches radius {rmax:.6g} "
            ">= 3/4 in rescaled units")
    if rmin < 0.5:
        out.append(
            f"inner inclusion: shape boundary comes down to radius {rmin:.6g} "
            "< 1/2 in rescaled units")
    if lattice.n_holes > 0:
        a = lattice.hole_scale
        if 0.75 * a >= 0.5 * lattice.epsilon:
            out.append(
                f"cell containment: guard ball radius {0.75 * a:.6g} is not "
                f"strictly inside the half-cell {0.5 * lattice.epsilon:.6g}")
    return out


@dataclass
class GridMask:
    """Uniform staggered-grid rasterization of a perforated box.

    ``cell_fluid`` marks fluid cells; ``face_class`` holds one int8 array
    per axis (u faces ``(nx+1, ny, nz)`` etc.) with codes FACE_FLUID,
    FACE_SOLID, FACE_BOUNDARY.
    """

    lo: np.ndarray
    h: float
    n: tuple  # cells per axis
    cell_fluid: np.ndarray
    face_class: list = field(default_factory=list)
    min_cells_per_radius: float = np.inf

    def __post_init__(self):
        if not self.face_class:
            self.face_class = _classify_faces(self.cell_fluid)

    @property
    def n_fluid_cells(self):
        return int(np.count_nonzero(self.cell_fluid))

    @property
    def n_solid_cells(self):
        return int(self.cell_fluid.size - self.n_fluid_cells)

    @property
    def cell_volume(self):
        return self.h ** 3

    def cell_centers(self):
        axes = [self.lo[a] + self.h * (np.arange(self.n[a]) + 0.5)
                for a in range(3)]
        return np.meshgrid(*axes, indexing="ij")

    def face_shape(self, axis):
        s = list(self.n)
        s[axis] += 1
        return tuple(s)


def _classify_faces(cell_fluid):
    """Faces touching a solid cell are solid; outermost faces are boundary."""
    out = []
    for axis in range(3):
        n = cell_fluid.shape
        s = list(n)
        s[axis] += 1
        fc = np.full(s, FACE_SOLID, dtype=np.int8)
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[axis] = slice(0, n[axis] - 1)
        sl_hi[axis] = slice(1, n[axis])
        interior = [slice(None)] * 3
        interior[axis] = slice(1, n[axis])
        both_fluid = cell_fluid[tuple(sl_lo)] & cell_fluid[tuple(sl_hi)]
        fc[tuple(interior)] = np.where(both_fluid, FACE_FLUID, FACE_SOLID)
        first = [slice(None)] * 3
        first[axis] = 0
        last = [slice(None)] * 3
        last[axis] = s[axis] - 1
        fc[tuple(first)] = FACE_BOUNDARY
        fc[tuple(last)] = FACE_BOUNDARY
        out.append(fc)
    return out


def _grid_dims(domain: DomainSpec, resolution: int):
    sides = domain.sides
    h = float(np.min(sides)) / resolution
    n = []
    for ax in range(3):
        cells = sides[ax] / h
        if abs(cells - round(cells)) > 1e-9:
            raise ValueError(
                f"side {sides[ax]:.6g} along axis {ax} is not an integer "
                f"multiple of the grid spacing {h:.6g}")
        n.append(int(round(cells)))
    return h, tuple(n)


def rasterize(lattice: HoleLattice, resolution: int) -> GridMask:
    """Rasterize the lattice: a cell is solid iff its center lies in a hole.

    Raises UnresolvedHole when the hole inradius is below 2h.
    """
    if resolution < 8:
        raise ValueError("resolution must be at least 8")
    domain = lattice.domain
    h, n = _grid_dims(domain, resolution)
    cell_fluid = np.ones(n, dtype=bool)
    mcpr = np.inf
    if lattice.n_holes > 0:
        a = lattice.hole_scale
        radius = lattice.hole_radius
        if radius < 2.0 * h:
            raise UnresolvedHole(radius, h)
        mcpr = radius / h
        reach = a * lattice.shape.max_radius
        lo = np.asarray(domain.lo)
        axes = [lo[ax] + h * (np.arange(n[ax]) + 0.5) for ax in range(3)]
        for c in lattice.centers:
            # restrict the membership test to the hole's bounding box
            idx = []
            for ax in range(3):
                i0 = int(np.floor((c[ax] - reach - lo[ax]) / h - 0.5))
                i1 = int(np.ceil((c[ax] + reach - lo[ax]) / h - 0.5))
                idx.append((max(i0, 0), min(i1 + 1, n[ax])))
            sub = np.meshgrid(*[axes[ax][idx[ax][0]:idx[ax][1]]
                                for ax in range(3)], indexing="ij")
            pts = (np.stack(sub, axis=-1) - c) / a
            inside = lattice.shape.contains(pts)
            view = cell_fluid[idx[0][0]:idx[0][1], idx[1][0]:idx[1][1],
                              idx[2][0]:idx[2][1]]
            view[inside] = False
    return GridMask(lo=np.asarray(domain.lo, dtype=float), h=h, n=n,
                    cell_fluid=cell_fluid, min_cells_per_radius=float(mcpr))


def hole_free_mask(domain: DomainSpec, resolution: int) -> GridMask:
    """All-fluid mask on the same grid the lattice rasterizer would use."""
    h, n = _grid_dims(domain, resolution)
    return GridMask(lo=np.asarray(domain.lo, dtype=float), h=h, n=n,
                    cell_fluid=np.ones(n, dtype=bool))


# ---------------------------------------------------------------------------
# serialization: documented structured text format
#
# lattice block: one "key = value" per line
# mask block:    header lines, then run-length-encoded cell classes
#                ("<count>x<class>" tokens, C order, class 1 = fluid)
# ---------------------------------------------------------------------------

def save_lattice(lattice: HoleLattice, fh) -> None:
    close = False
    if isinstance(fh, str):
        fh = open(fh, "w")
        close = True
    try:
        fh.write("format = brinkflow-lattice-v1\n")
        fh.write(f"domain_lo = {_vec(lattice.domain.lo)}\n")
        fh.write(f"domain_hi = {_vec(lattice.domain.hi)}\n")
        fh.write(f"epsilon = {lattice.epsilon!r}\n")
        fh.write(f"alpha = {lattice.alpha!r}\n")
        fh.write(f"shape = {lattice.shape.kind} {_vec(lattice.shape.params)}\n")
        fh.write(f"empty_warning = {int(lattice.empty_warning)}\n")
        fh.write(f"n_holes = {lattice.n_holes}\n")
        for k in lattice.k_index:
            fh.write(f"k = {k[0]} {k[1]} {k[2]}\n")
    finally:
        if close:
            fh.close()


def load_lattice(fh) -> HoleLattice:
    close = False
    if isinstance(fh, str):
        fh = open(fh)
        close = True
    try:
        kv = _read_kv(fh)
    finally:
        if close:
            fh.close()
    if kv.get("format") != ["brinkflow-lattice-v1"]:
        raise BrinkflowError("not a brinkflow lattice file")
    domain = DomainSpec(tuple(map(float, kv["domain_lo"][0].split())),
                        tuple(map(float, kv["domain_hi"][0].split())))
    epsilon = float(kv["epsilon"][0])
    alpha = float(kv["alpha"][0])
    kind, rest = kv["shape"][0].split(None, 1)
    shape = HoleShape(kind, tuple(map(float, rest.split())))
    k = np.array([[int(t) for t in line.split()] for line in kv.get("k", [])],
                 dtype=int).reshape(-1, 3)
    centers = np.asarray(domain.lo)[None, :] + epsilon * (k + 0.5)
    return HoleLattice(domain, epsilon, alpha, shape, centers=centers,
                       k_index=k, empty_warning=bool(int(kv["empty_warning"][0])))


def save_mask(mask: GridMask, fh) -> None:
    close = False
    if isinstance(fh, str):
        fh = open(fh, "w")
        close = True
    try:
        fh.write("format = brinkflow-mask-v1\n")
        fh.write(f"lo = {_vec(mask.lo)}\n")
        fh.write(f"h = {mask.h!r}\n")
        fh.write(f"n = {mask.n[0]} {mask.n[1]} {mask.n[2]}\n")
        fh.write(f"min_cells_per_radius = {mask.min_cells_per_radius!r}\n")
        flat = mask.cell_fluid.ravel().astype(np.int8)
        fh.write("cells = ")
        fh.write(" ".join(f"{n}x{v}" for n, v in _rle(flat)))
        fh.write("\n")
    finally:
        if close:
            fh.close()


def load_mask(fh) -> GridMask:
    close = False
    if isinstance(fh, str):
        fh = open(fh)
        close = True
    try:
        kv = _read_kv(fh)
    finally:
        if close:
            fh.close()
    if kv.get("format") != ["brinkflow-mask-v1"]:
        raise BrinkflowError("not a brinkflow mask file")
    n = tuple(int(t) for t in kv["n"][0].split())
    vals = []
    for tok in kv["cells"][0].split():
        cnt, v = tok.split("x")
        vals.append(np.full(int(cnt), int(v), dtype=np.int8))
    cells = np.concatenate(vals).reshape(n).astype(bool)
    return GridMask(lo=np.array([float(t) for t in kv["lo"][0].split()]),
                    h=float(kv["h"][0]), n=n, cell_fluid=cells,
                    min_cells_per_radius=float(kv["min_cells_per_radius"][0]))


def _vec(v):
    return " ".join(repr(float(x)) for x in v)


def _read_kv(fh):
    kv = {}
    for line in fh:
        line = line.strip()
        if not line or "=" not in line:
            continue
        key, val = line.split("=", 1)
        kv.setdefault(key.strip(), []).append(val.strip())
    return kv


def _rle(flat):
    edges = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], edges])
    ends = np.concatenate([edges, [len(flat)]])
    return [(int(e - s), int(flat[s])) for s, e in zip(starts, ends)]
