"""Grid-indicator planar domains, parametric shape families, and geometry.

A domain is a uniform grid of square cells with a boolean inside-flag per
cell.  Measures are cell counts times h^2; intersections with analytic
disks are measured per cell with 4x4 supersampling, with a fully-inside /
fully-outside fast path that is exact for cells away from the circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SHAPE_FAMILIES",
    "ShapeSpec",
    "GridDomain",
    "BallPair",
    "generate",
    "translate",
    "measure",
    "half_measure_radius",
    "centroid",
    "boundary_edge_length",
    "lens_area",
    "ball_pair_union_area",
    "union_coverage",
    "ball_coverage",
    "symdiff_ballpair",
    "symdiff_ball",
    "to_text",
    "from_text",
]

SHAPE_FAMILIES = ("disk", "two_disks", "rectangle", "ellipse", "dumbbell", "perturbed_disk")

MIN_CELLS_PER_DIAMETER = 32

# 4x4 supersampling: per-axis sample offsets within a cell, in units of h.
_SS = 4
_SS_OFFSETS = (np.arange(_SS) + 0.5) / _SS - 0.5
# Max distance of a sample point from the cell center, in units of h
# (0.375*sqrt(2)), padded slightly for the fast-path classification.
_SS_MARGIN = 0.531

# family -> {parameter name: (lower, upper, strict_lower)}
_FAMILY_PARAMS = {
    "disk": {"radius": (0.0, math.inf, True)},
    "two_disks": {"radius": (0.0, math.inf, True), "separation": (0.0, math.inf, False)},
    "rectangle": {"width": (0.0, math.inf, True), "height": (0.0, math.inf, True)},
    "ellipse": {"a": (0.0, math.inf, True), "b": (0.0, math.inf, True)},
    "dumbbell": {
        "radius": (0.0, math.inf, True),
        "separation": (0.0, math.inf, False),
        "neck_width": (0.0, math.inf, True),
    },
    "perturbed_disk": {
        "radius": (0.0, math.inf, True),
        "eps": (0.0, 0.5, False),
        "mode": (1.0, 8.0, False),
    },
}


@dataclass(frozen=True)
class ShapeSpec:
    """A parametric planar shape: family name plus named real parameters."""

    family: str
    parameters: dict

    def __post_init__(self):
        if self.family not in _FAMILY_PARAMS:
            raise ValueError(f"unknown family {self.family!r}; expected one of {SHAPE_FAMILIES}")
        schema = _FAMILY_PARAMS[self.family]
        missing = sorted(set(schema) - set(self.parameters))
        extra = sorted(set(self.parameters) - set(schema))
        if missing or extra:
            raise ValueError(
                f"family {self.family!r}: missing parameters {missing}, unexpected {extra}"
            )
        for name, (lo, hi, strict_lo) in schema.items():
            v = float(self.parameters[name])
            ok = (v > lo if strict_lo else v >= lo) and v <= hi
            if not ok:
                bound = ">" if strict_lo else ">="
                raise ValueError(
                    f"family {self.family!r}: parameter {name}={v} outside range "
                    f"({bound} {lo}, <= {hi})"
                )
        if self.family == "dumbbell" and self.parameters["neck_width"] >= self.parameters["radius"]:
            raise ValueError("dumbbell neck_width must be smaller than the disk radius")
        if self.family == "perturbed_disk":
            k = self.parameters["mode"]
            if k != int(k):
                raise ValueError(f"perturbed_disk mode must be an integer, got {k}")

    def __getitem__(self, name: str) -> float:
        return float(self.parameters[name])


def _shape_geometry(spec: ShapeSpec):
    """Half-extents of the analytic bounding box and a vectorized
    inside-predicate on coordinates centered at the shape's center."""
    fam = spec.family
    if fam == "disk":
        rho = spec["radius"]
        return rho, rho, lambda x, y: x * x + y * y < rho * rho
    if fam == "two_disks":
        rho, sep = spec["radius"], spec["separation"]
        cx = 0.5 * sep

        def inside(x, y):
            left = (x + cx) ** 2 + y * y < rho * rho
            right = (x - cx) ** 2 + y * y < rho * rho
            return left | right

        return cx + rho, rho, inside
    if fam == "rectangle":
        a, b = spec["width"], spec["height"]
        return 0.5 * a, 0.5 * b, lambda x, y: (np.abs(x) < 0.5 * a) & (np.abs(y) < 0.5 * b)
    if fam == "ellipse":
        a, b = spec["a"], spec["b"]
        return a, b, lambda x, y: (x / a) ** 2 + (y / b) ** 2 < 1.0
    if fam == "dumbbell":
        rho, sep, w = spec["radius"], spec["separation"], spec["neck_width"]
        cx = 0.5 * sep

        def inside(x, y):
            left = (x + cx) ** 2 + y * y < rho * rho
            right = (x - cx) ** 2 + y * y < rho * rho
            neck = (np.abs(x) <= cx) & (np.abs(y) < 0.5 * w)
            return left | right | neck

        return cx + rho, rho, inside
    if fam == "perturbed_disk":
        rho, eps, k = spec["radius"], spec["eps"], int(spec["mode"])

        def inside(x, y):
            r = np.hypot(x, y)
            theta = np.arctan2(y, x)
            return r < rho * (1.0 + eps * np.cos(k * theta))

        rmax = rho * (1.0 + eps)
        return rmax, rmax, inside
    raise AssertionError(fam)


@dataclass(frozen=True)
class GridDomain:
    """Uniform-grid boolean indicator of a planar domain.

    ``origin`` is the lower-left corner of cell (0, 0); the center of cell
    (i, j) sits at origin + ((i + 1/2) h, (j + 1/2) h).  ``cells[j, i]``
    is True when that center lies inside the domain.
    """

    origin: tuple
    h: float
    nx: int
    ny: int
    cells: np.ndarray

    def __post_init__(self):
        if self.h <= 0.0:
            raise ValueError(f"cell size must be positive, got {self.h}")
        if self.cells.shape != (self.ny, self.nx):
            raise ValueError(f"cells shape {self.cells.shape} != (ny={self.ny}, nx={self.nx})")
        if self.cells.dtype != np.bool_:
            raise ValueError("cells must be a boolean table")
        if not self.cells.any():
            raise ValueError("domain has no inside cells")
        rim = (
            self.cells[0, :].any()
            or self.cells[-1, :].any()
            or self.cells[:, 0].any()
            or self.cells[:, -1].any()
        )
        if rim:
            raise ValueError("inside cells touch the outer one-cell rim; regenerate with padding")
        self.cells.setflags(write=False)

    # --- coordinate helpers -------------------------------------------------

    def axis_centers(self) -> tuple:
        """Absolute x- and y-coordinates of all cell centers (1-D arrays)."""
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return xs, ys

    def inside_centers(self, relative: bool = False) -> tuple:
        """Coordinates of the inside-cell centers, as flat arrays.

        With ``relative=True`` the origin is not added, so the result is
        independent of whole-cell translations of the domain (bit-exact).
        """
        jj, ii = np.nonzero(self.cells)
        x = (ii + 0.5) * self.h
        y = (jj + 0.5) * self.h
        if not relative:
            x = self.origin[0] + x
            y = self.origin[1] + y
        return x, y

    def cell_area(self) -> float:
        return self.h * self.h


@dataclass(frozen=True)
class BallPair:
    """Two disjoint balls of equal radius (disjoint up to 1e-12 slack)."""

    c1: tuple
    c2: tuple
    r: float

    def __post_init__(self):
        if self.r <= 0.0:
            raise ValueError(f"radius must be positive, got {self.r}")
        if self.center_distance() < 2.0 * self.r - 1e-12:
            raise ValueError(
                f"balls overlap: center distance {self.center_distance()} < 2r = {2.0 * self.r}"
            )

    def center_distance(self) -> float:
        return math.hypot(self.c1[0] - self.c2[0], self.c1[1] - self.c2[1])


def generate(spec: ShapeSpec, h: float) -> GridDomain:
    """Rasterize a shape: a cell is inside iff its center satisfies the
    analytic predicate.  The shape is centered in a padded bounding box
    (two empty cells beyond the analytic extent on every side)."""
    if h <= 0.0:
        raise ValueError(f"cell size must be positive, got {h}")
    hw, hh, inside = _shape_geometry(spec)
    diameter = 2.0 * max(hw, hh)
    if diameter / h < MIN_CELLS_PER_DIAMETER:
        raise ValueError(
            f"resolution too coarse: {diameter / h:.1f} cells per diameter "
            f"(need >= {MIN_CELLS_PER_DIAMETER}); reduce h below {diameter / MIN_CELLS_PER_DIAMETER}"
        )
    half_nx = math.ceil(hw / h) + 2
    half_ny = math.ceil(hh / h) + 2
    nx, ny = 2 * half_nx, 2 * half_ny
    origin = (-half_nx * h, -half_ny * h)
    xs = origin[0] + (np.arange(nx) + 0.5) * h
    ys = origin[1] + (np.arange(ny) + 0.5) * h
    cells = inside(xs[None, :], ys[:, None])
    if not cells.any():
        raise ValueError(f"shape {spec.family} rasterized to zero cells at h={h}")
    return GridDomain(origin=origin, h=h, nx=nx, ny=ny, cells=cells)


def translate(d: GridDomain, di: int, dj: int) -> GridDomain:
    """Shift the domain by whole cells: (di, dj) cells in x and y."""
    origin = (d.origin[0] + di * d.h, d.origin[1] + dj * d.h)
    return GridDomain(origin=origin, h=d.h, nx=d.nx, ny=d.ny, cells=d.cells)


def measure(d: GridDomain) -> float:
    """Lebesgue measure approximation: inside-cell count times h^2."""
    return float(np.count_nonzero(d.cells)) * d.h * d.h


def half_measure_radius(d: GridDomain, n_dim: int = 2) -> float:
    """Radius of the ball with volume |domain|/2, i.e. (|Ω|/(2 ω_N))^{1/N}."""
    if n_dim != 2:
        raise ValueError("grid domains are two-dimensional; n_dim must be 2")
    return math.sqrt(measure(d) / (2.0 * math.pi))


def centroid(d: GridDomain) -> tuple:
    """Mean of the inside-cell centers."""
    x, y = d.inside_centers()
    return float(x.mean()), float(y.mean())


def boundary_edge_length(d: GridDomain) -> float:
    """Staircase perimeter: number of inside/outside cell edges times h."""
    c = d.cells
    edges = (
        np.count_nonzero(c[:, 1:] != c[:, :-1])
        + np.count_nonzero(c[1:, :] != c[:-1, :])
        + np.count_nonzero(c[0, :]) + np.count_nonzero(c[-1, :])
        + np.count_nonzero(c[:, 0]) + np.count_nonzero(c[:, -1])
    )
    return edges * d.h


def lens_area(dist: float, r1: float, r2: float) -> float:
    """Area of the intersection of two disks with center distance ``dist``.

    Distances within 1e-12 of exact tangency count as tangent: the true
    sliver area there is below 1e-18 while the closed form would amplify
    float rounding in the inputs to ~1e-9.
    """
    if dist >= r1 + r2 - 1e-12:
        return 0.0
    if dist <= abs(r1 - r2):
        rm = min(r1, r2)
        return math.pi * rm * rm
    d2 = dist * dist
    a1 = math.acos(max(-1.0, min(1.0, (d2 + r1 * r1 - r2 * r2) / (2.0 * dist * r1))))
    a2 = math.acos(max(-1.0, min(1.0, (d2 + r2 * r2 - r1 * r1) / (2.0 * dist * r2))))
    s = (-dist + r1 + r2) * (dist + r1 - r2) * (dist - r1 + r2) * (dist + r1 + r2)
    return r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * math.sqrt(max(0.0, s))


def ball_pair_union_area(c1, c2, r: float) -> float:
    """Analytic area of the union of two equal disks."""
    dist = math.hypot(c1[0] - c2[0], c1[1] - c2[1])
    return 2.0 * math.pi * r * r - lens_area(dist, r, r)


def coverage_subsample_count(x: np.ndarray, y: np.ndarray, h: float, centers, r: float) -> int:
    """Number of 4x4 subsamples (out of 16 per cell) of the given cell
    centers that fall inside the union of disks of radius r at ``centers``.

    Cells entirely inside/outside the union (by a conservative distance
    margin) are counted wholesale; only the uncertain ring is sampled.
    The return value is an exact integer, so the induced measures are
    reproducible bit-for-bit.
    """
    dmin_sq = np.full(x.shape, np.inf)
    for (cx, cy) in centers:
        dx = x - cx
        dy = y - cy
        np.minimum(dmin_sq, dx * dx + dy * dy, out=dmin_sq)
    inner = r - _SS_MARGIN * h
    full_inside = dmin_sq <= inner * inner if inner > 0.0 else np.zeros(x.shape, bool)
    outer = r + _SS_MARGIN * h
    ring = ~full_inside & (dmin_sq < outer * outer)
    count = 16 * int(np.count_nonzero(full_inside))
    if ring.any():
        sx = x[ring][:, None, None] + (_SS_OFFSETS * h)[None, :, None]
        sy = y[ring][:, None, None] + (_SS_OFFSETS * h)[None, None, :]
        hit = np.zeros((sx.shape[0], _SS, _SS), bool)
        for (cx, cy) in centers:
            dx = sx - cx
            dy = sy - cy
            hit |= dx * dx + dy * dy < r * r
        count += int(np.count_nonzero(hit))
    return count


def union_coverage(x: np.ndarray, y: np.ndarray, h: float, c1, c2, r: float) -> float:
    """Measure of {cells at (x, y)} ∩ (B(c1, r) ∪ B(c2, r)), supersampled."""
    return coverage_subsample_count(x, y, h, (c1, c2), r) * (h * h) / 16.0


def ball_coverage(x: np.ndarray, y: np.ndarray, h: float, c, r: float) -> float:
    """Measure of {cells at (x, y)} ∩ B(c, r), supersampled."""
    return coverage_subsample_count(x, y, h, (c,), r) * (h * h) / 16.0


def symdiff_ballpair(d: GridDomain, p: BallPair) -> float:
    """Measure of the symmetric difference between the domain and the
    union of the two balls: |Ω| + |B1 ∪ B2| - 2 |Ω ∩ (B1 ∪ B2)|."""
    x, y = d.inside_centers()
    cov = union_coverage(x, y, d.h, p.c1, p.c2, p.r)
    return measure(d) + ball_pair_union_area(p.c1, p.c2, p.r) - 2.0 * cov


def symdiff_ball(d: GridDomain, c, r: float) -> float:
    """Measure of the symmetric difference between the domain and one disk."""
    x, y = d.inside_centers()
    cov = ball_coverage(x, y, d.h, c, r)
    return measure(d) + math.pi * r * r - 2.0 * cov


def to_text(d: GridDomain) -> str:
    """Serialize: header ``GRID nx ny h ox oy`` then ny rows of '#'/'.'
    characters, top row first.  Floats use shortest round-trip decimals."""
    lines = [f"GRID {d.nx} {d.ny} {d.h!r} {d.origin[0]!r} {d.origin[1]!r}"]
    glyphs = np.where(d.cells, "#", ".")
    for j in range(d.ny - 1, -1, -1):
        lines.append("".join(glyphs[j]))
    return "\n".join(lines) + "\n"


def from_text(text: str) -> GridDomain:
    """Parse the ``to_text`` format; exact inverse of serialization."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("GRID "):
        raise ValueError("domain text must start with a 'GRID nx ny h ox oy' header")
    fields = lines[0].split()
    if len(fields) != 6:
        raise ValueError(f"malformed GRID header: {lines[0]!r}")
    nx, ny = int(fields[1]), int(fields[2])
    h, ox, oy = float(fields[3]), float(fields[4]), float(fields[5])
    rows = lines[1 : 1 + ny]
    if len(rows) != ny:
        raise ValueError(f"expected {ny} rows after the header, found {len(rows)}")
    cells = np.zeros((ny, nx), dtype=bool)
    for k, row in enumerate(rows):
        if len(row) != nx or set(row) - {"#", "."}:
            raise ValueError(f"row {k} malformed: {row!r}")
        cells[ny - 1 - k] = np.frombuffer(row.encode(), dtype="S1") == b"#"
    return GridDomain(origin=(ox, oy), h=h, nx=nx, ny=ny, cells=cells)
