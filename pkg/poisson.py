"""
Pressure Poisson solve by red-black relaxation.

The discrete operator is written as

    cE*p[i+1,j] + cW*p[i-1,j] + cN*p[i,j+1] + cS*p[i,j-1] - aP*p[i,j] = b[i,j]

with boundary conditions folded into the coefficient arrays, so the kernel
itself never looks at ghost cells.

Grids that halve cleanly are solved by multigrid V-cycles smoothed with
red-black Gauss-Seidel; other grids use red-black SOR on the fine grid alone.
Within one colour every update reads only the other colour, so the parallel
kernels give the same bits for any thread count.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numba import njit, prange

from exceptions import PoissonDivergenceError

logger = logging.getLogger(__name__)

MIN_COARSE_CELLS = 4
SMOOTHING_SWEEPS = 2


@njit(cache=True)
def _neighbour_sum(p, cE, cW, cN, cS, i, j, nx, ny, periodic):
    ie = i + 1
    iw = i - 1
    jn = j + 1
    js = j - 1
    if periodic:
        if ie == nx:
            ie = 0
        if iw < 0:
            iw = nx - 1
        if jn == ny:
            jn = 0
        if js < 0:
            js = ny - 1
    else:
        # coefficients are zero across a closed boundary; clamp only to stay in range
        if ie == nx:
            ie = nx - 1
        if iw < 0:
            iw = 0
        if jn == ny:
            jn = ny - 1
        if js < 0:
            js = 0
    return (cE[i, j] * p[ie, j] + cW[i, j] * p[iw, j]
            + cN[i, j] * p[i, jn] + cS[i, j] * p[i, js])


@njit(parallel=True, cache=True)
def _max_residual(p, b, cE, cW, cN, cS, aP, periodic):
    nx, ny = p.shape
    row_worst = np.zeros(nx)
    for i in prange(nx):
        worst = 0.0
        for j in range(ny):
            r = abs(b[i, j] - (_neighbour_sum(p, cE, cW, cN, cS, i, j, nx, ny, periodic) - aP[i, j] * p[i, j]))
            # NaN sticks
            if r > worst or r != r:
                worst = r
            if worst != worst:
                break
        row_worst[i] = worst
    worst = 0.0
    for i in range(nx):
        if row_worst[i] > worst or row_worst[i] != row_worst[i]:
            worst = row_worst[i]
        if worst != worst:
            break
    return worst


@njit(parallel=True, cache=True)
def _residual(p, b, cE, cW, cN, cS, aP, periodic, out):
    nx, ny = p.shape
    for i in prange(nx):
        for j in range(ny):
            out[i, j] = b[i, j] - (_neighbour_sum(p, cE, cW, cN, cS, i, j, nx, ny, periodic) - aP[i, j] * p[i, j])


@njit(parallel=True, cache=True)
def _relax(p, b, cE, cW, cN, cS, aP, omega, periodic, sweeps):
    nx, ny = p.shape
    for _ in range(sweeps):
        for color in range(2):
            for i in prange(nx):
                for j in range((i + color) % 2, ny, 2):
                    s = _neighbour_sum(p, cE, cW, cN, cS, i, j, nx, ny, periodic)
                    p[i, j] += omega * ((s - b[i, j]) / aP[i, j] - p[i, j])


@njit(parallel=True, cache=True)
def _restrict(fine, coarse):
    """Average of the four children."""
    ncx, ncy = coarse.shape
    for I in prange(ncx):
        for J in range(ncy):
            coarse[I, J] = 0.25 * (fine[2 * I, 2 * J] + fine[2 * I + 1, 2 * J]
                                   + fine[2 * I, 2 * J + 1] + fine[2 * I + 1, 2 * J + 1])


@njit(cache=True)
def _coarse_value(e, i, j, nx, ny, periodic):
    """Coarse correction with ghost values: wrap, mirror (Neumann) or odd mirror at the outlet (p = 0)."""
    if periodic:
        if i < 0:
            i += nx
        elif i >= nx:
            i -= nx
        if j < 0:
            j += ny
        elif j >= ny:
            j -= ny
        return e[i, j]
    sign = 1.0
    if j < 0:
        j = 0
    elif j >= ny:
        j = ny - 1
    if i < 0:
        i = 0
    elif i >= nx:
        i = nx - 1
        sign = -1.0
    return sign * e[i, j]


@njit(parallel=True, cache=True)
def _prolong_add(fine, coarse, periodic):
    """Bilinear interpolation of the coarse correction onto the cell-centred fine grid, added in place."""
    ncx, ncy = coarse.shape
    for Iu in prange(ncx):
        I = np.int64(Iu)
        for J in range(ncy):
            centre = coarse[I, J]
            for a in range(2):
                di = 2 * a - 1
                side_x = _coarse_value(coarse, I + di, J, ncx, ncy, periodic)
                for c in range(2):
                    dj = 2 * c - 1
                    side_y = _coarse_value(coarse, I, J + dj, ncx, ncy, periodic)
                    corner = _coarse_value(coarse, I + di, J + dj, ncx, ncy, periodic)
                    fine[2 * I + a, 2 * J + c] += 0.5625 * centre + 0.1875 * (side_x + side_y) + 0.0625 * corner


def _can_coarsen(nx: int, ny: int, periodic: bool) -> bool:
    if nx % 2 or ny % 2 or min(nx, ny) < 2 * MIN_COARSE_CELLS:
        return False
    # coarse periodic levels keep an even size so red-black colouring survives the wrap
    return not periodic or ((nx // 2) % 2 == 0 and (ny // 2) % 2 == 0)


@dataclass(frozen=True)
class PoissonOperator:
    """Five-point Laplacian on cell centres with its boundary conditions."""

    cE: np.ndarray
    cW: np.ndarray
    cN: np.ndarray
    cS: np.ndarray
    aP: np.ndarray
    periodic: bool
    omega: float
    coarse: Optional["PoissonOperator"] = None

    @classmethod
    def build(cls, nx: int, ny: int, dx: float, dy: float, boundary: str = "channel",
              omega: Optional[float] = None, multigrid: bool = True) -> "PoissonOperator":
        """
        Assemble coefficients for a grid, and for its coarser levels when multigrid is on.

        channel: Neumann on inlet, top and bottom; p = 0 on the outlet face
        (ghost value mirrored with opposite sign). periodic: wrap-around in
        both directions, solution defined up to a constant and kept at zero mean.

        Raises:
            ValueError: for a periodic grid with an odd cell count
        """
        periodic = boundary == "periodic"
        if periodic and (nx % 2 or ny % 2):
            raise ValueError(f"Periodic red-black ordering needs even cell counts, got {nx}x{ny}")
        ex, ey = 1.0 / dx ** 2, 1.0 / dy ** 2
        cE = np.full((nx, ny), ex)
        cW = np.full((nx, ny), ex)
        cN = np.full((nx, ny), ey)
        cS = np.full((nx, ny), ey)
        aP = np.full((nx, ny), 2.0 * ex + 2.0 * ey)
        if not periodic:
            cW[0, :] = 0.0
            aP[0, :] -= ex
            cE[-1, :] = 0.0
            aP[-1, :] += ex
            cS[:, 0] = 0.0
            aP[:, 0] -= ey
            cN[:, -1] = 0.0
            aP[:, -1] -= ey
        if omega is None:
            # slowest mode: a full wave when periodic, a quarter wave along the long side otherwise
            span = max(nx, ny) if periodic else 2 * max(nx, ny)
            omega = 2.0 / (1.0 + math.sin(math.pi / span))
        coarse = None
        if multigrid and _can_coarsen(nx, ny, periodic):
            coarse = cls.build(nx // 2, ny // 2, 2.0 * dx, 2.0 * dy, boundary)
        return cls(cE=cE, cW=cW, cN=cN, cS=cS, aP=aP, periodic=periodic, omega=float(omega), coarse=coarse)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.aP.shape

    @property
    def levels(self) -> int:
        return 1 if self.coarse is None else 1 + self.coarse.levels

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Discrete Laplacian of p, vectorized (used for checks, not in the solve)."""
        if self.periodic:
            east, west = np.roll(p, -1, axis=0), np.roll(p, 1, axis=0)
            north, south = np.roll(p, -1, axis=1), np.roll(p, 1, axis=1)
        else:
            padded = np.pad(p, 1, mode="edge")
            east, west = padded[2:, 1:-1], padded[:-2, 1:-1]
            north, south = padded[1:-1, 2:], padded[1:-1, :-2]
        return self.cE * east + self.cW * west + self.cN * north + self.cS * south - self.aP * p

    def _max_residual(self, p: np.ndarray, b: np.ndarray) -> float:
        return float(_max_residual(p, b, self.cE, self.cW, self.cN, self.cS, self.aP, self.periodic))

    def _relax(self, p: np.ndarray, b: np.ndarray, omega: float, sweeps: int) -> None:
        _relax(p, b, self.cE, self.cW, self.cN, self.cS, self.aP, omega, self.periodic, sweeps)

    def v_cycle(self, p: np.ndarray, b: np.ndarray) -> None:
        """One V-cycle in place; the coarsest level is relaxed with over-relaxation until nearly solved."""
        if self.coarse is None:
            self._relax(p, b, self.omega, max(32, 3 * max(self.shape)))
            return
        self._relax(p, b, 1.0, SMOOTHING_SWEEPS)
        residual = np.empty_like(p)
        _residual(p, b, self.cE, self.cW, self.cN, self.cS, self.aP, self.periodic, residual)
        coarse_rhs = np.empty(self.coarse.shape)
        _restrict(residual, coarse_rhs)
        correction = np.zeros_like(coarse_rhs)
        self.coarse.v_cycle(correction, coarse_rhs)
        _prolong_add(p, correction, self.periodic)
        self._relax(p, b, 1.0, SMOOTHING_SWEEPS)

    def solve(self, b: np.ndarray, p0: Optional[np.ndarray] = None, tol: float = 1e-6,
              max_iter: int = 10000) -> Tuple[np.ndarray, np.ndarray]:
        """
        Solve L p = b to an absolute max-norm residual tolerance.

        One iteration is a V-cycle while cycles keep reducing the residual,
        and a single SOR sweep after that or on grids without coarse levels.

        Args:
            b: Right-hand side at cell centres
            p0: Initial guess (copied); zero when omitted
            tol: Residual threshold on max |b - L p|
            max_iter: Iteration cap

        Returns:
            Tuple of (solution, residual history). The history is non-increasing:
            entry k is the smallest residual seen within the first k iterations.

        Raises:
            PoissonDivergenceError: when the cap is reached above tolerance
        """
        b = np.ascontiguousarray(b, dtype=np.float64)
        if self.periodic:
            b = b - b.mean()
        p = np.zeros_like(b) if p0 is None else np.array(p0, dtype=np.float64, copy=True)
        if self.periodic:
            p -= p.mean()

        history = [self._max_residual(p, b)]
        iterations = 0
        cycling = self.coarse is not None
        while history[-1] > tol and iterations < max_iter:
            if cycling:
                saved = p.copy()
                self.v_cycle(p, b)
                if self.periodic:
                    p -= p.mean()
                residual = self._max_residual(p, b)
                if not residual < history[-1]:
                    logger.debug(f"V-cycle stalled at residual {history[-1]:.3e}; continuing with SOR sweeps")
                    p[:] = saved
                    cycling = False
                    continue
                history.append(residual)
                iterations += 1
            else:
                self._relax(p, b, self.omega, 1)
                if self.periodic:
                    p -= p.mean()
                history.append(self._max_residual(p, b))
                iterations += 1

        history = np.minimum.accumulate(np.asarray(history))
        if not history[-1] <= tol:
            logger.error(f"Pressure solve stalled at residual {history[-1]:.3e} (tolerance {tol:.3e})")
            raise PoissonDivergenceError("Pressure solve did not converge", float(history[-1]), iterations)
        logger.debug(f"Pressure solve converged in {iterations} iterations, residual {history[-1]:.3e}")
        return p, history
