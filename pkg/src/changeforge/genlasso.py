"""Exact solution paths for l1-structured penalized least squares.

Solves min 0.5 ||y - mu||^2 + lambda ||D mu||_1 by tracing the dual box
problem min ||y - D^T nu||^2 s.t. ||nu||_inf <= lambda from lambda = inf
down to lambda_min.  The dual is piecewise affine in lambda; boundary-set
changes happen at hitting and leaving times, which are computed in closed
form at every step.  Designs with invertible X are absorbed into D.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import qr, qr_delete, qr_insert, solve_triangular

__all__ = [
    "PathNode",
    "SolutionPath",
    "solve_dual_path",
    "primal_from_dual",
    "coefficients_at_lambda",
    "AbsorbedDesign",
    "absorb_design",
]

_PINV_RCOND = 1e-10


def validate_structure_matrix(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2:
        raise ValueError("structure matrix must be two-dimensional")
    if not np.all(np.isfinite(D)):
        raise ValueError("structure matrix must be finite")
    if np.any(np.all(D == 0.0, axis=1)):
        raise ValueError("structure matrix has an all-zero row")
    return D


@dataclass(frozen=True)
class PathNode:
    """One knot of the solution path."""

    lam: float
    dual: np.ndarray
    boundary: tuple
    signs: tuple
    primal: np.ndarray
    event: str  # "init", "hit:<i>", "leave:<i>", "terminal"


@dataclass
class SolutionPath:
    nodes: list
    y: np.ndarray
    D: np.ndarray
    lambda_min: float

    @property
    def event_nodes(self) -> list:
        return [nd for nd in self.nodes
                if nd.event.startswith(("hit", "leave"))]

    @property
    def knot_lambdas(self) -> np.ndarray:
        return np.array([nd.lam for nd in self.event_nodes])

    def dump_records(self):
        """(lambda, event, boundary indices, ||D mu||_0) per node."""
        out = []
        for nd in self.nodes:
            dmu = self.D @ nd.primal
            tol = 1e-8 * max(1.0, float(np.max(np.abs(dmu))) if dmu.size else 0.0)
            out.append((nd.lam, nd.event, nd.boundary,
                        int(np.sum(np.abs(dmu) > tol))))
        return out


def primal_from_dual(y, D, nu) -> np.ndarray:
    """Recover the primal coefficients: mu = y - D^T nu."""
    y = np.asarray(y, dtype=float)
    D = np.asarray(D, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if D.shape[0] != nu.size or D.shape[1] != y.size:
        raise ValueError("dimension mismatch between y, D, and nu")
    return y - D.T @ nu


class _QrState:
    """Economic QR of D_interior^T with column delete/insert updates."""

    def __init__(self, A: np.ndarray):
        if A.shape[1] == 0:
            self.Q = np.zeros((A.shape[0], 0))
            self.R = np.zeros((0, 0))
        else:
            self.Q, self.R = qr(A, mode="economic")

    @property
    def width(self):
        return self.R.shape[0] if self.R.ndim == 2 else 0

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.width == 0:
            return np.zeros(0)
        return solve_triangular(self.R, self.Q.T @ rhs)

    def residual(self, rhs: np.ndarray) -> np.ndarray:
        if self.width == 0:
            return rhs
        return rhs - self.Q @ (self.Q.T @ rhs)

    def _trim(self):
        # qr_delete/qr_insert return full-form factors when Q was square;
        # fold back to the economic form the solves expect
        k = self.R.shape[1]
        if self.R.shape[0] != k:
            self.R = self.R[:k, :]
            self.Q = self.Q[:, :k]

    def delete_col(self, pos: int):
        if self.width == 1:
            n = self.Q.shape[0]
            self.Q = np.zeros((n, 0))
            self.R = np.zeros((0, 0))
        else:
            self.Q, self.R = qr_delete(self.Q, self.R, pos, which="col")
            self._trim()

    def insert_col(self, col: np.ndarray, pos: int):
        if self.width == 0:
            self.Q, self.R = qr(col[:, None], mode="economic")
        else:
            self.Q, self.R = qr_insert(self.Q, self.R, col, pos, which="col")
            self._trim()


class _LstsqState:
    """Pseudo-inverse fallback used when rows of D are linearly dependent."""

    def __init__(self, A: np.ndarray):
        self.A = A

    @property
    def width(self):
        return self.A.shape[1]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.width == 0:
            return np.zeros(0)
        return np.linalg.lstsq(self.A, rhs, rcond=_PINV_RCOND)[0]

    def residual(self, rhs: np.ndarray) -> np.ndarray:
        if self.width == 0:
            return rhs
        return rhs - self.A @ self.solve(rhs)

    def delete_col(self, pos: int):
        self.A = np.delete(self.A, pos, axis=1)

    def insert_col(self, col: np.ndarray, pos: int):
        self.A = np.insert(self.A, pos, col, axis=1)


def solve_dual_path(y, D, lambda_min: float = 0.0) -> SolutionPath:
    """Trace all hitting/leaving events of the dual path down to lambda_min.

    The initial node sits at lambda = inf with the unconstrained dual
    (DD^T)^+ D y.  At each step the next lambda is the larger of the best
    hitting and leaving times; ties process the hit.  Terminates when every
    coordinate is on the boundary with no further events, or when the next
    event falls below lambda_min.
    """
    y = np.asarray(y, dtype=float)
    D = validate_structure_matrix(D)
    p, n = D.shape
    if y.size != n:
        raise ValueError("y length must match the structure matrix columns")
    if lambda_min < 0:
        raise ValueError("lambda_min must be nonnegative")

    DT = D.T.copy()
    full_rank = (np.linalg.matrix_rank(DT, tol=None) == p) if p <= n else False
    state = _QrState(DT) if full_rank else _LstsqState(DT)

    inter = list(range(p))   # interior (off-boundary) coordinate indices
    bnd: list[int] = []
    signs: list[float] = []
    nodes: list[PathNode] = []

    a = state.solve(y)
    nu0 = np.zeros(p)
    nu0[inter] = a
    nodes.append(PathNode(math.inf, nu0, (), (), primal_from_dual(y, D, nu0), "init"))

    lam_k = math.inf
    just_left: int | None = None
    just_hit: int | None = None
    max_steps = max(20 * p, 1000)
    for _ in range(max_steps):
        v = DT[:, bnd] @ np.asarray(signs) if bnd else np.zeros(n)
        a = state.solve(y)
        b = state.solve(v)

        # hitting times for interior coordinates: a_i - lam b_i = +/- lam
        hit_t, hit_idx, hit_sign = -np.inf, -1, 0.0
        if inter:
            upper = lam_k * (1.0 + 1e-12) if math.isfinite(lam_k) else math.inf
            with np.errstate(divide="ignore", invalid="ignore"):
                tp = a / (b + 1.0)
                tm = a / (b - 1.0)
            tp = np.where(np.isfinite(tp) & (tp >= -1e-12) & (tp <= upper),
                          tp, -np.inf)
            tm = np.where(np.isfinite(tm) & (tm >= -1e-12) & (tm <= upper),
                          tm, -np.inf)
            if just_left in inter and math.isfinite(lam_k):
                # a coordinate that just left sits on the boundary; ignore
                # its immediate re-hit at the current lambda
                pos = inter.index(just_left)
                guard = lam_k * (1.0 - 1e-9)
                if tp[pos] >= guard:
                    tp[pos] = -np.inf
                if tm[pos] >= guard:
                    tm[pos] = -np.inf
            best = np.maximum(tp, tm)
            pos = int(np.argmax(best))
            if best[pos] > -np.inf:
                hit_t = float(best[pos])
                hit_idx = inter[pos]
                hit_sign = 1.0 if tp[pos] >= tm[pos] else -1.0

        # leaving times for boundary coordinates
        leave_t, leave_pos = -np.inf, -1
        if bnd:
            ry = state.residual(y)
            rv = state.residual(v)
            DB = D[bnd]
            c = np.asarray(signs) * (DB @ ry)
            d = np.asarray(signs) * (DB @ rv)
            for pos, i in enumerate(bnd):
                t = c[pos] / d[pos] if (c[pos] < 0.0 and d[pos] < 0.0) else 0.0
                if i == just_hit and math.isfinite(lam_k) \
                        and t >= lam_k * (1.0 - 1e-9):
                    continue
                if t > leave_t:
                    leave_t, leave_pos = t, pos

        hit_wins = hit_idx >= 0 and (leave_pos < 0 or hit_t >= leave_t)
        leave_wins = leave_pos >= 0 and not hit_wins
        lam_next = hit_t if hit_wins else (leave_t if leave_wins else -np.inf)

        if lam_next <= lambda_min or (not hit_wins and not leave_wins):
            lam_end = lambda_min
            nu = np.zeros(p)
            if inter:
                nu[inter] = a - lam_end * b
            if bnd:
                nu[bnd] = lam_end * np.asarray(signs)
            nodes.append(PathNode(lam_end, nu, tuple(bnd), tuple(signs),
                                  primal_from_dual(y, D, nu), "terminal"))
            break

        lam_next = min(lam_next, lam_k)
        nu = np.zeros(p)
        if inter:
            nu[inter] = a - lam_next * b
        if bnd:
            nu[bnd] = lam_next * np.asarray(signs)

        if hit_wins:
            pos = inter.index(hit_idx)
            nu[hit_idx] = hit_sign * lam_next
            nodes.append(PathNode(lam_next, nu, tuple(bnd), tuple(signs),
                                  primal_from_dual(y, D, nu), f"hit:{hit_idx}"))
            state.delete_col(pos)
            inter.pop(pos)
            bnd.append(hit_idx)
            signs.append(hit_sign)
            just_hit, just_left = hit_idx, None
        else:
            i = bnd[leave_pos]
            nodes.append(PathNode(lam_next, nu, tuple(bnd), tuple(signs),
                                  primal_from_dual(y, D, nu), f"leave:{i}"))
            bnd.pop(leave_pos)
            signs.pop(leave_pos)
            ins = int(np.searchsorted(inter, i))
            state.insert_col(DT[:, i], ins)
            inter.insert(ins, i)
            just_left, just_hit = i, None
        lam_k = lam_next
    else:
        raise RuntimeError("dual path failed to terminate")

    return SolutionPath(nodes, y, D, lambda_min)


def coefficients_at_lambda(path: SolutionPath, lam: float) -> np.ndarray:
    """Primal coefficients at an arbitrary lambda on the computed path."""
    if lam < path.lambda_min - 1e-12:
        raise ValueError(f"lambda {lam} below the computed range "
                         f"(lambda_min={path.lambda_min})")
    nodes = path.nodes
    for nd in nodes[1:]:
        if lam == nd.lam:
            return nd.primal.copy()
    if len(nodes) == 1 or lam >= nodes[1].lam:
        # above the first event the dual is constant at the init solution
        return nodes[0].primal.copy()
    for hi_node, lo_node in zip(nodes[1:], nodes[2:]):
        if lam >= lo_node.lam - 1e-15:
            hi, lo = hi_node, lo_node
            if math.isclose(lam, hi.lam, rel_tol=1e-15, abs_tol=1e-15):
                return hi.primal.copy()
            if hi.lam == lo.lam:
                return lo.primal.copy()
            w = (lam - lo.lam) / (hi.lam - lo.lam)
            nu = lo.dual + w * (hi.dual - lo.dual)
            return primal_from_dual(path.y, path.D, nu)
    return nodes[-1].primal.copy()


class AbsorbedDesign(NamedTuple):
    y: np.ndarray
    D: np.ndarray
    x_rcond: float


def absorb_design(y, X, D) -> AbsorbedDesign:
    """Fold an invertible design into the structure matrix.

    Solving the signal-approximator path on (y, D X^{-1}) in theta = X beta
    and mapping back beta = X^{-1} theta solves the penalized regression
    with design X.  Raises when X is singular beyond reciprocal condition
    1e-12 (estimated in the 1-norm).
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    D = np.asarray(D, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError("design matrix must be square")
    try:
        Xinv = np.linalg.inv(X)
    except np.linalg.LinAlgError as exc:
        raise ValueError("design matrix is singular") from exc
    rcond = 1.0 / (np.linalg.norm(X, 1) * np.linalg.norm(Xinv, 1))
    if rcond < 1e-12:
        raise ValueError(f"design matrix ill-conditioned: rcond={rcond:.3e}")
    return AbsorbedDesign(y, D @ Xinv, float(rcond))
