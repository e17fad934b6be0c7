"""Value iteration for the Lagrangian-relaxed on-off observation problem.

The Bellman operator on a uniform p-grid is

    J(p) = min{ lambda_f (1 - p),  p + min[B0(p), lambda_e (1 - p) + B1(p)] }

with B0(p) = J(phi_skip(p)) and B1(p) = E[J(phi_take(X, p))], X drawn from the
predictive mixture (1 - q) f0 + q f1, q = phi_skip(p). J is evaluated off-grid
by piecewise-linear interpolation; the expectation uses Gauss-Legendre nodes.
Sweeps are Jacobi-style: every update reads the previous iterate only.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .observation_model import GaussianMeanShiftModel, GeometricPrior, ObservationModel
from .policy import TabulatedDP

log = logging.getLogger(__name__)


class StructureError(RuntimeError):
    """No stopping region could be located on the grid."""


@dataclass(frozen=True)
class CostParams:
    lambda_f: float
    lambda_e: float

    def __post_init__(self):
        for name in ("lambda_f", "lambda_e"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")


@dataclass
class ValueGrid:
    p: np.ndarray
    J: np.ndarray
    B0: np.ndarray
    B1: np.ndarray
    d: np.ndarray
    AJ: np.ndarray
    costs: CostParams
    iterations_run: int
    sup_norm_delta: float
    converged: bool
    residuals: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    @property
    def tol_concave(self) -> float:
        return 1e-6 * max(float(self.J.max()), 1e-300)

    @property
    def tie_tol(self) -> float:
        # equality d = lambda_e (1 - p) up to quadrature/interpolation noise counts as a tie
        return self.tol_concave

    @property
    def stop_cost(self) -> np.ndarray:
        return self.costs.lambda_f * (1.0 - self.p)

    @property
    def lambda_e_line(self) -> np.ndarray:
        return self.costs.lambda_e * (1.0 - self.p)

    @property
    def continuation_cost(self) -> np.ndarray:
        return self.p + self.AJ


@dataclass(frozen=True)
class PolicyStructure:
    stop_threshold_A: float
    A_uncertainty: float
    take_region_boundaries: tuple[float, ...]
    classification: Literal["TwoThreshold", "MultiRegion"]
    B: float | None
    C: float | None

    def as_dict(self) -> dict:
        return {
            "classification": self.classification,
            "A": self.stop_threshold_A,
            "A_uncertainty": self.A_uncertainty,
            "B": self.B,
            "C": self.C,
            "take_region_boundaries": list(self.take_region_boundaries),
        }


def _quadrature(model: ObservationModel, nodes: int):
    theta = getattr(model, "theta", 0.0)
    lo, hi = 0.5 * theta - 8.0, 0.5 * theta + 8.0
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
    return x, 0.5 * (hi - lo) * wg


def _interp_plan(v: np.ndarray, m: int):
    pos = np.clip(v, 0.0, 1.0) * (m - 1)
    i = np.minimum(np.floor(pos).astype(np.intp), m - 2)
    return i, pos - i


def value_iterate(model: ObservationModel, prior: GeometricPrior, costs: CostParams,
                  grid_size: int = 2000, max_iters: int = 1500, quad_nodes: int = 129,
                  tol: float = 0.0) -> ValueGrid:
    """Iterate the Bellman operator from J = 0 until max_iters or sup-change < tol."""
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if quad_nodes < 16:
        raise ValueError("quad_nodes must be at least 16")
    m = grid_size
    p = np.linspace(0.0, 1.0, m)
    rho = prior.rho
    x, w = _quadrature(model, quad_nodes)
    f0 = model.density(x, post=False)
    f1 = model.density(x, post=True)
    q = p + (1.0 - p) * rho
    lr = np.exp(model.log_lr(x))
    qlr = q[:, None] * lr[None, :]
    post_take = qlr / (qlr + (1.0 - q)[:, None])
    weights = w[None, :] * ((1.0 - q)[:, None] * f0[None, :] + q[:, None] * f1[None, :])
    # interpolation positions never change across sweeps
    i1, fr1 = _interp_plan(post_take, m)
    i0, fr0 = _interp_plan(q, m)
    w_lo = weights * (1.0 - fr1)
    w_hi = weights * fr1
    stop = costs.lambda_f * (1.0 - p)
    obs = costs.lambda_e * (1.0 - p)

    def backups(J):
        B0 = J[i0] * (1.0 - fr0) + J[i0 + 1] * fr0
        B1 = (J[i1] * w_lo + J[i1 + 1] * w_hi).sum(axis=1)
        return B0, B1

    J = np.zeros(m)
    residuals = []
    delta = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        B0, B1 = backups(J)
        J_new = np.minimum(stop, p + np.minimum(B0, obs + B1))
        delta = float(np.max(np.abs(J_new - J)))
        residuals.append(delta)
        J = J_new
        if delta < tol:
            break
    converged = delta < tol if tol > 0 else delta == 0.0
    if tol > 0 and not converged:
        warnings.warn(f"value iteration stopped at {it} sweeps with sup-norm change {delta:.3g}",
                      RuntimeWarning, stacklevel=2)
    B0, B1 = backups(J)
    AJ = np.minimum(B0, obs + B1)
    return ValueGrid(p=p, J=J, B0=B0, B1=B1, d=B0 - B1, AJ=AJ, costs=costs,
                     iterations_run=it, sup_norm_delta=delta, converged=converged,
                     residuals=np.asarray(residuals))


def _sign_changes(p: np.ndarray, s: np.ndarray) -> list[float]:
    idx = np.nonzero(s[1:] != s[:-1])[0]
    return [0.5 * (p[k] + p[k + 1]) for k in idx]


def extract_structure(grid: ValueGrid, costs: CostParams | None = None) -> PolicyStructure:
    """Stopping threshold and observation-region boundaries of a solved grid."""
    costs = costs or grid.costs
    p = grid.p
    stop = costs.lambda_f * (1.0 - p) <= p + grid.AJ
    if not stop.any():
        raise StructureError("no stopping region on the grid; lambda_f too large for this grid")
    i_a = int(np.argmax(stop))
    if i_a == 0:
        A, width = 0.0, 0.0
    else:
        A, width = 0.5 * (p[i_a - 1] + p[i_a]), p[i_a] - p[i_a - 1]
    take = grid.d >= costs.lambda_e * (1.0 - p) - grid.tie_tol
    # the last cell is p = 1 where both sides vanish; its sign carries no information
    changes = _sign_changes(p[:-1], take[:-1])
    below = [c for c in changes if c < A]
    if take[0]:
        b_val = 0.0
        two = not below
    else:
        b_val = below[0] if below else None
        two = len(below) == 1
    # C: the take -> skip switch that follows B, wherever it falls relative to A
    after = [c for c in changes if b_val is not None and c > b_val]
    c_val = after[0] if after else None
    cls = "TwoThreshold" if two else "MultiRegion"
    log.debug("structure: A=%s boundaries=%s", A, changes)
    return PolicyStructure(stop_threshold_A=float(A), A_uncertainty=float(width),
                           take_region_boundaries=tuple(float(c) for c in below),
                           classification=cls, B=None if b_val is None else float(b_val),
                           C=None if c_val is None else float(c_val))


def to_tabulated_policy(grid: ValueGrid) -> TabulatedDP:
    return TabulatedDP(grid=grid, lambda_f=grid.costs.lambda_f, lambda_e=grid.costs.lambda_e)


GRID_COLUMNS = ("p", "J", "B0", "B1", "d", "lambda_e_line", "stop_cost")


def write_grid_csv(grid: ValueGrid, path, header_comment: str | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_COLUMNS)
        cols = (grid.p, grid.J, grid.B0, grid.B1, grid.d, grid.lambda_e_line, grid.stop_cost)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def solve(theta: float, rho: float, lambda_f: float, lambda_e: float, **kwargs):
    """Convenience wrapper for the Gaussian model: returns (grid, structure)."""
    grid = value_iterate(GaussianMeanShiftModel(theta), GeometricPrior(rho),
                         CostParams(lambda_f, lambda_e), **kwargs)
    return grid, extract_structure(grid)
