"""
Mast cross-sections as signed-distance functions.

Distances are in metres, negative inside the body. Shapes are immutable and
are safe to share between sweep workers.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Tuple

import numpy as np

from exceptions import (
    GeometryOutsideDomainError,
    GeometryResolutionError,
    InvalidGeometryError,
    UnknownDesignError,
)
from utils import clean_design_tag

if TYPE_CHECKING:
    from config import Grid

logger = logging.getLogger(__name__)

Position = Tuple[float, float]

SUBCELL_SAMPLES = 4
ROOT_MAX_ITERATIONS = 32
ROOT_TOLERANCE = 1e-13


def _as_points(points) -> Tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    return arr[..., 0], arr[..., 1]


@dataclass(frozen=True)
class Shape:
    """Base class of a rigid 2D cross-section."""

    center: Position = (0.0, 0.0)

    kind = "shape"

    def sdf(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def support(self, normal: Tuple[float, float]) -> Tuple[float, float]:
        """Interval covered by the shape projected on a unit normal."""
        raise NotImplementedError

    @property
    def area(self) -> float:
        raise NotImplementedError

    @property
    def bounding_box(self) -> Tuple[float, float, float, float]:
        raise NotImplementedError

    @property
    def min_width(self) -> float:
        raise NotImplementedError

    @property
    def is_empty(self) -> bool:
        return False

    @property
    def frontal_width(self) -> float:
        """Cross-stream extent for flow along +x."""
        return frontal_width(self, (1.0, 0.0))


@dataclass(frozen=True)
class Circle(Shape):
    diameter: float = 0.1

    kind = "circle"

    def sdf(self, x, y):
        cx, cy = self.center
        return np.hypot(np.asarray(x) - cx, np.asarray(y) - cy) - 0.5 * self.diameter

    def support(self, normal):
        c = self.center[0] * normal[0] + self.center[1] * normal[1]
        return c - 0.5 * self.diameter, c + 0.5 * self.diameter

    @property
    def area(self):
        return math.pi * (0.5 * self.diameter) ** 2

    @property
    def bounding_box(self):
        r = 0.5 * self.diameter
        cx, cy = self.center
        return cx - r, cx + r, cy - r, cy + r

    @property
    def min_width(self):
        return self.diameter


@dataclass(frozen=True)
class Ellipse(Shape):
    short_diameter: float = 0.05
    long_diameter: float = 0.15
    orientation: float = 0.0

    kind = "ellipse"

    def _local(self, x, y):
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        return c * dx + s * dy, -s * dx + c * dy

    def sdf(self, x, y):
        a = 0.5 * self.long_diameter
        b = 0.5 * self.short_diameter
        lx, ly = self._local(x, y)
        x0 = np.abs(lx)
        y0 = np.abs(ly)

        if a == b:
            return np.hypot(x0, y0) - a

        # Points on the long axis up to the evolute: nearest point is off-axis.
        shift = a * a - b * b
        on_axis = (y0 == 0.0) & (x0 <= shift / a)
        ax0 = a * x0
        by0 = b * y0

        def residual(s):
            # F(s) = (a x0/(s+a²-b²))² + (b y0/s)² - 1 is convex and decreasing for s > 0
            ra = ax0 / (s + shift)
            rb = by0 / s
            return ra * ra + rb * rb - 1.0, -2.0 * ra * ra / (s + shift) - 2.0 * rb * rb / s

        # F(lo) >= 0 >= F(hi); on-axis points get a unit dummy bracket.
        lo = np.where(on_axis, 1.0, np.maximum(by0, ax0 - shift))
        hi = np.where(on_axis, 1.0, np.hypot(ax0, by0))
        for _ in range(ROOT_MAX_ITERATIONS):
            # geometric bisection bounds the iteration count whatever the bracket ratio
            mid = np.sqrt(lo * hi)
            f_mid, _ = residual(mid)
            lo, hi = np.where(f_mid >= 0.0, mid, lo), np.where(f_mid >= 0.0, hi, mid)
            # Newton from the left end never overshoots a convex decreasing F
            f_lo, df_lo = residual(lo)
            step = np.where(on_axis | (df_lo == 0.0), 0.0, -f_lo / np.where(df_lo == 0.0, -1.0, df_lo))
            candidate = lo + step
            useful = (candidate > lo) & (candidate < hi)
            f_c, _ = residual(np.where(useful, candidate, lo))
            lo = np.where(useful & (f_c >= 0.0), candidate, lo)
            hi = np.where(useful & (f_c < 0.0), candidate, hi)
            if np.all((hi - lo <= ROOT_TOLERANCE * hi) | (step <= ROOT_TOLERANCE * lo)):
                break

        qx = np.where(on_axis, a * a * x0 / shift, a * a * x0 / (lo + shift))
        qy = np.where(on_axis, b * np.sqrt(np.clip(1.0 - (qx / a) ** 2, 0.0, None)), b * b * y0 / lo)
        distance = np.hypot(x0 - qx, y0 - qy)
        inside = (x0 / a) ** 2 + (y0 / b) ** 2 < 1.0
        return np.where(inside, -distance, distance)

    def support(self, normal):
        c = self.center[0] * normal[0] + self.center[1] * normal[1]
        e1 = (math.cos(self.orientation), math.sin(self.orientation))
        n1 = normal[0] * e1[0] + normal[1] * e1[1]
        n2 = -normal[0] * e1[1] + normal[1] * e1[0]
        half = math.hypot(0.5 * self.long_diameter * n1, 0.5 * self.short_diameter * n2)
        return c - half, c + half

    @property
    def area(self):
        return math.pi * 0.25 * self.long_diameter * self.short_diameter

    @property
    def bounding_box(self):
        x_lo, x_hi = self.support((1.0, 0.0))
        y_lo, y_hi = self.support((0.0, 1.0))
        return x_lo, x_hi, y_lo, y_hi

    @property
    def min_width(self):
        return self.short_diameter


@dataclass(frozen=True)
class Composite(Shape):
    """Union of parts. Parts are assumed not to overlap when computing area."""

    parts: Tuple[Shape, ...] = field(default_factory=tuple)

    kind = "composite"

    def sdf(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        result = np.full(np.broadcast(x, y).shape, np.inf)
        for part in self.parts:
            result = np.minimum(result, part.sdf(x, y))
        return result

    def support(self, normal):
        if not self.parts:
            return 0.0, 0.0
        intervals = [part.support(normal) for part in self.parts]
        return min(lo for lo, _ in intervals), max(hi for _, hi in intervals)

    @property
    def area(self):
        return sum(part.area for part in self.parts)

    @property
    def bounding_box(self):
        if not self.parts:
            cx, cy = self.center
            return cx, cx, cy, cy
        boxes = [part.bounding_box for part in self.parts]
        return (min(b[0] for b in boxes), max(b[1] for b in boxes),
                min(b[2] for b in boxes), max(b[3] for b in boxes))

    @property
    def min_width(self):
        return min((part.min_width for part in self.parts), default=0.0)

    @property
    def is_empty(self):
        return not self.parts


def circle(center: Position, diameter: float) -> Circle:
    if not diameter > 0:
        raise InvalidGeometryError(f"Circle diameter must be positive, got {diameter}")
    return Circle(center=tuple(map(float, center)), diameter=float(diameter))


def ellipse(center: Position, short_diameter: float, long_diameter: float,
            orientation: float = 0.0) -> Ellipse:
    if not (0 < short_diameter <= long_diameter):
        raise InvalidGeometryError(
            f"Ellipse needs 0 < short_diameter <= long_diameter, got {short_diameter}, {long_diameter}"
        )
    return Ellipse(center=tuple(map(float, center)), short_diameter=float(short_diameter),
                   long_diameter=float(long_diameter), orientation=float(orientation))


def composite(*parts: Shape) -> Composite:
    return Composite(parts=tuple(parts))


# Initial design and the two modifications; the ellipse's long axis is streamwise.
DESIGNS: Dict[str, Dict[str, float]] = {
    "ID": {"kind": "circle", "diameter": 0.10},
    "MD1": {"kind": "circle", "diameter": 0.05},
    "MD2": {"kind": "ellipse", "short_diameter": 0.05, "long_diameter": 0.15, "orientation": 0.0},
}


def design(tag: str, center: Position = (0.0, 0.0)) -> Shape:
    """
    Build one of the three mast cross-sections.

    Args:
        tag: 'ID', 'MD1' or 'MD2'
        center: Position of the section centre in metres

    Returns:
        The corresponding Shape
    """
    key = clean_design_tag(tag)
    if key not in DESIGNS:
        raise UnknownDesignError(f"Unknown design '{tag}'. Known designs: {', '.join(DESIGNS)}")
    params = DESIGNS[key]
    if params["kind"] == "circle":
        return circle(center, params["diameter"])
    return ellipse(center, params["short_diameter"], params["long_diameter"], params["orientation"])


def sdf_eval(shape: Shape, point: Position) -> float:
    return float(shape.sdf(np.float64(point[0]), np.float64(point[1])))


def frontal_width(shape: Shape, flow_direction: Tuple[float, float] = (1.0, 0.0)) -> float:
    """Cross-stream projected extent of the shape for a unit flow direction."""
    dx, dy = flow_direction
    norm = math.hypot(dx, dy)
    if abs(norm - 1.0) > 1e-9:
        raise InvalidGeometryError(f"Flow direction must be a unit vector, got norm {norm}")
    lo, hi = shape.support((-dy, dx))
    return hi - lo


@dataclass(frozen=True)
class SolidMask:
    solid: np.ndarray
    fraction: np.ndarray
    dx: float
    dy: float

    @property
    def shape(self) -> Tuple[int, int]:
        return self.fraction.shape

    @property
    def solid_area(self) -> float:
        return float(self.fraction.sum()) * self.dx * self.dy

    def u_face_solid(self) -> np.ndarray:
        """Solid flags on x-faces, shape (nx+1, ny); outside cells count as fluid."""
        padded = np.pad(self.fraction, ((1, 1), (0, 0)))
        return 0.5 * (padded[:-1, :] + padded[1:, :]) > 0.5

    def v_face_solid(self) -> np.ndarray:
        """Solid flags on y-faces, shape (nx, ny+1)."""
        padded = np.pad(self.fraction, ((0, 0), (1, 1)))
        return 0.5 * (padded[:, :-1] + padded[:, 1:]) > 0.5


def rasterize(shape: Shape, grid: "Grid") -> SolidMask:
    """
    Rasterize a shape on the solver grid with 4x4 sub-cell sampling.

    Args:
        shape: The cross-section to rasterize
        grid: Target grid

    Returns:
        SolidMask with per-cell volume fractions and solid flags
    """
    nx, ny = grid.nx, grid.ny
    if shape.is_empty:
        fraction = np.zeros((nx, ny))
        return SolidMask(solid=fraction > 0.5, fraction=fraction, dx=grid.dx, dy=grid.dy)

    x_lo, x_hi, y_lo, y_hi = shape.bounding_box
    gx0, gy0 = grid.origin
    if not (gx0 < x_lo and x_hi < gx0 + grid.lx and gy0 < y_lo and y_hi < gy0 + grid.ly):
        raise GeometryOutsideDomainError(
            f"{shape.kind} with bounding box ({x_lo:.4g}, {x_hi:.4g}, {y_lo:.4g}, {y_hi:.4g}) "
            f"is not strictly inside the domain"
        )
    if max(grid.dx, grid.dy) > shape.min_width:
        raise GeometryResolutionError(
            f"Grid spacing {max(grid.dx, grid.dy):.4g} m exceeds the {shape.kind} width "
            f"{shape.min_width:.4g} m"
        )

    n = SUBCELL_SAMPLES
    offsets = (np.arange(n) + 0.5) / n
    xs = gx0 + (np.arange(nx)[:, None] + offsets[None, :]).ravel() * grid.dx
    ys = gy0 + (np.arange(ny)[:, None] + offsets[None, :]).ravel() * grid.dy
    inside = shape.sdf(xs[:, None], ys[None, :]) < 0.0
    fraction = inside.reshape(nx, n, ny, n).mean(axis=(1, 3))
    solid = fraction > 0.5
    if not solid.any():
        raise GeometryResolutionError(f"No cell of the grid is solid for the {shape.kind}")

    mask = SolidMask(solid=solid, fraction=fraction, dx=grid.dx, dy=grid.dy)
    logger.debug(f"Rasterized {shape.kind}: solid area {mask.solid_area:.4e} m² "
                 f"(analytic {shape.area:.4e} m²)")
    return mask
