"""Condensed horizon prediction, tracking-cost assembly, and a box-QP solver.

The predicted state stack over a horizon of N samples with M free moves is

    X = Sx x0 + Su U + Sk,    X = [x(1); ...; x(N)],  U = [u(0); ...; u(M-1)]

with the last move held for stages M..N-1. A quadratic tracking cost with
per-stage state weight Q and per-move weight R condenses to

    min_U  0.5 U' H U + f' U,   H = Su' Qbar Su + Rbar,
                                f = Su' Qbar (Sx x0 + Sk - Xref)

subject to box bounds on U. The solver below handles exactly that problem
shape: dense, strictly convex, small (tens of variables), with the KKT
condition of a box QP as its termination test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linearize import AffineLtiModel, DeltaLtiModel


@dataclass(frozen=True)
class TrackingWeights:
    """Scalar tracking weights plus the aggressiveness factor alpha.

    w_y weights tracked outputs, w_u pulls the input toward its target, w_du
    suppresses input moves. Squaring and placement into (Q, R) happens in
    horizon_weights().
    """

    w_y: float = 10.0
    w_u: float = 0.0
    w_du: float = 0.1
    alpha: float = 1.0

    def __post_init__(self):
        if self.w_y < 0.0 or self.w_u < 0.0 or self.w_du < 0.0:
            raise ValueError(f"weights must be nonnegative, got ({self.w_y}, {self.w_u}, {self.w_du})")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def scale_tracking_weights(w: TrackingWeights) -> TrackingWeights:
    """Apply the aggressiveness factor: w_y*alpha, w_u/alpha, w_du*alpha.

    Raising alpha trades input-target adherence for tracking effort. The
    alpha field itself is passed through unchanged.
    """
    return TrackingWeights(
        w_y=w.w_y * w.alpha,
        w_u=w.w_u / w.alpha,
        w_du=w.w_du * w.alpha,
        alpha=w.alpha,
    )


@dataclass(frozen=True)
class HorizonWeights:
    """Per-stage state weight Q (PSD, 3x3), per-move weight r > 0, horizon sizes."""

    q: np.ndarray
    r: float
    n: int
    m: int

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (3, 3):
            raise ValueError(f"Q must be 3x3, got {q.shape}")
        if not np.allclose(q, q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        eig = np.linalg.eigvalsh(q)
        if eig.min() < -1e-12:
            raise ValueError(f"Q must be positive semidefinite, smallest eigenvalue {eig.min()}")
        if not self.r > 0.0:
            raise ValueError(f"move weight must be positive, got {self.r} (degenerate weights)")
        if self.n < 1 or not (1 <= self.m <= self.n):
            raise ValueError(f"need 1 <= M <= N, got N={self.n}, M={self.m}")


def horizon_weights(w: TrackingWeights, n: int, m: int, q_heading: float = 0.0) -> HorizonWeights:
    """Squared, alpha-scaled weights arranged for the condensed cost.

    Tracked outputs are the positions, so Q = diag(wy^2, wy^2, q_heading)
    with the heading unweighted by default; R = wdu^2 per move.
    """
    s = scale_tracking_weights(w)
    q = np.diag([s.w_y ** 2, s.w_y ** 2, float(q_heading)])
    return HorizonWeights(q=q, r=s.w_du ** 2, n=n, m=m)


@dataclass(frozen=True)
class PredictionMatrices:
    """Condensed prediction X = Sx x0 + Su U + Sk over N stages and M moves."""

    sx: np.ndarray  # (3N, 3)
    su: np.ndarray  # (3N, M)
    sk: np.ndarray  # (3N,)
    n: int
    m: int


def build_prediction(model: AffineLtiModel | DeltaLtiModel, n: int, m: int) -> PredictionMatrices:
    """Unroll a one-step model over the horizon with last-move hold.

    Block (i, j) of Su is A^(i-j) B for i >= j (1-indexed stages/moves); the
    final move column additionally accumulates the held contributions
    sum_p A^p B. Sk accumulates the drift, Sx stacks A^i.
    """
    if n < 1 or not (1 <= m <= n):
        raise ValueError(f"need 1 <= M <= N, got N={n}, M={m}")
    a = np.asarray(model.a, dtype=float)
    b = np.asarray(model.b, dtype=float).reshape(3)
    k = np.asarray(getattr(model, "k", np.zeros(3)), dtype=float).reshape(3)

    a_pow = [np.eye(3)]
    for _ in range(n):
        a_pow.append(a_pow[-1] @ a)

    sx = np.zeros((3 * n, 3))
    su = np.zeros((3 * n, m))
    sk = np.zeros(3 * n)
    drift = np.zeros(3)
    for i in range(1, n + 1):
        rows = slice(3 * (i - 1), 3 * i)
        sx[rows] = a_pow[i]
        drift = a @ drift + k
        sk[rows] = drift
        for j in range(1, m + 1):
            # Stage times at which move j acts: its own slot, plus every
            # later slot for the held final move.
            if j < m:
                if i >= j:
                    su[rows, j - 1] = a_pow[i - j] @ b
            else:
                col = np.zeros(3)
                for l in range(m - 1, i):
                    col += a_pow[i - 1 - l] @ b
                su[rows, j - 1] = col
    return PredictionMatrices(sx=sx, su=su, sk=sk, n=n, m=m)


@dataclass(frozen=True)
class QpProblem:
    """min 0.5 u'Hu + f'u subject to lb <= u <= ub, with H symmetric PD."""

    h: np.ndarray
    f: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        f = np.asarray(self.f, dtype=float).reshape(-1)
        nv = f.size
        if h.shape != (nv, nv):
            raise ValueError(f"H must be {nv}x{nv}, got {h.shape}")
        if not np.allclose(h, h.T, atol=1e-9 * max(1.0, float(np.abs(h).max()))):
            raise ValueError("H must be symmetric")
        try:
            np.linalg.cholesky(h)
        except np.linalg.LinAlgError:
            raise ValueError("H must be positive definite (degenerate weights?)") from None
        lb = np.asarray(self.lb, dtype=float).reshape(-1)
        ub = np.asarray(self.ub, dtype=float).reshape(-1)
        if lb.shape != (nv,) or ub.shape != (nv,):
            raise ValueError("bound shapes must match the variable count")
        if np.any(lb > ub):
            raise ValueError("need lb <= ub elementwise")
        # Normalize stored arrays (symmetric H, flat vectors).
        object.__setattr__(self, "h", 0.5 * (h + h.T))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    def add_cost(self, dh: np.ndarray, df: np.ndarray) -> "QpProblem":
        """New problem with an extra quadratic term 0.5 u'(dh)u + df'u."""
        return QpProblem(h=self.h + dh, f=self.f + df, lb=self.lb, ub=self.ub)

    def cost(self, u: np.ndarray) -> float:
        return float(0.5 * u @ self.h @ u + self.f @ u)


def build_tracking_qp(
    pred: PredictionMatrices,
    x0: np.ndarray,
    x_ref: np.ndarray,
    weights: HorizonWeights,
    du_bounds: tuple[float, float],
) -> QpProblem:
    """Condense the tracking cost over the horizon into a box QP.

    H = Su' Qbar Su + Rbar and f = Su' Qbar (Sx x0 + Sk - Xref), with Qbar the
    N-fold block diagonal of Q and Rbar = r I over the M moves. du_bounds is
    applied to every move variable.
    """
    if weights.n != pred.n or weights.m != pred.m:
        raise ValueError(
            f"weights sized for N={weights.n}, M={weights.m} but prediction has N={pred.n}, M={pred.m}")
    x0 = np.asarray(x0, dtype=float).reshape(3)
    x_ref = np.asarray(x_ref, dtype=float).reshape(-1)
    if x_ref.size != 3 * pred.n:
        raise ValueError(f"reference stack must have {3 * pred.n} entries, got {x_ref.size}")
    lo, hi = du_bounds
    if not lo <= hi:
        raise ValueError(f"need du_bounds low <= high, got ({lo}, {hi})")

    qbar = np.kron(np.eye(pred.n), weights.q)
    h = pred.su.T @ qbar @ pred.su + weights.r * np.eye(pred.m)
    h = 0.5 * (h + h.T)
    f = pred.su.T @ qbar @ (pred.sx @ x0 + pred.sk - x_ref)
    lb = np.full(pred.m, float(lo))
    ub = np.full(pred.m, float(hi))
    return QpProblem(h=h, f=f, lb=lb, ub=ub)


@dataclass(frozen=True)
class QpSolution:
    u: np.ndarray
    iterations: int
    status: str          # "converged" or "max_iter"
    kkt_residual: float


def kkt_residual(qp: QpProblem, u: np.ndarray) -> float:
    """Projected-gradient fixed-point residual; zero exactly at the optimum."""
    g = qp.h @ u + qp.f
    return float(np.max(np.abs(u - np.clip(u - g, qp.lb, qp.ub))))


def solve_box_qp(qp: QpProblem, tol: float = 1e-8, max_iter: int = 10000) -> QpSolution:
    """Deterministic box-QP solve to a KKT tolerance.

    The workhorse is principal pivoting on the bound partition: pinned
    coordinates sit on their bound, free coordinates solve the reduced
    normal equations exactly, and coordinates whose primal value or
    multiplier sign is wrong swap sides. Whole blocks are swapped while the
    infeasibility count keeps dropping; otherwise the method degrades to
    single least-index swaps, which terminate for positive definite H. The
    pivot loop lands on the exact active set, so the returned point
    satisfies the KKT condition to solver precision rather than crawling
    toward it, no matter how stiff H is. A monotone projected-gradient loop
    with exact segment line search mops up in the (not expected) event the
    pivot budget runs out.

    Returns the best iterate with status "max_iter" if the tolerance is not
    met within max_iter total iterations.
    """
    if not tol > 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be at least 1, got {max_iter}")
    h, f, lb, ub = qp.h, qp.f, qp.lb, qp.ub
    nv = f.size

    def clipped(z: np.ndarray) -> np.ndarray:
        return np.clip(z, lb, ub)

    def residual_at(z: np.ndarray) -> float:
        return float(np.max(np.abs(z - clipped(z - (h @ z + f)))))

    fixed = lb == ub  # equality-pinned coordinates never pivot
    # Partition per coordinate: -1 at lower bound, +1 at upper, 0 free.
    x_unc = np.linalg.solve(h, -f)
    part = np.zeros(nv, dtype=np.int8)
    part[x_unc <= lb] = -1
    part[x_unc >= ub] = 1
    part[fixed] = -1

    def assemble(p: np.ndarray) -> np.ndarray:
        z = np.where(p < 0, lb, ub)
        free = p == 0
        if free.any():
            idx = np.ix_(free, free)
            rhs = -(f[free] + h[free][:, ~free] @ z[~free])
            z[free] = np.linalg.solve(h[idx], rhs)
            # One step of iterative refinement keeps the free gradient at
            # solver precision even for badly scaled H.
            gf = h[free] @ z + f[free]
            z[free] -= np.linalg.solve(h[idx], gf)
        return z

    it = 0
    patience = 3
    best_infeas = nv + 1
    while it < max_iter:
        it += 1
        x = assemble(part)
        g = h @ x + f
        free = part == 0
        too_low = free & (x < lb)
        too_high = free & (x > ub)
        leave_lo = (part == -1) & ~fixed & (g < 0.0)
        leave_hi = (part == 1) & ~fixed & (g > 0.0)
        violations = too_low | too_high | leave_lo | leave_hi
        n_viol = int(np.count_nonzero(violations))
        if n_viol == 0:
            x = clipped(x)  # exact projection of roundoff
            return QpSolution(u=x, iterations=it, status="converged",
                              kkt_residual=residual_at(x))
        if n_viol < best_infeas:
            best_infeas = n_viol
            patience = 3
        elif patience > 0:
            patience -= 1
        if patience > 0:
            swap = violations
        else:
            swap = np.zeros(nv, dtype=bool)
            swap[int(np.argmax(violations))] = True  # least index violator
        part = part.copy()
        part[swap & too_low] = -1
        part[swap & too_high] = 1
        part[swap & (leave_lo | leave_hi)] = 0

    # Fallback: projected gradient with exact line search along the
    # projection segment, monotone from the clipped last iterate.
    x = clipped(assemble(part))
    lip = float(np.linalg.norm(h, 2))
    while it < max_iter:
        it += 1
        g = h @ x + f
        if residual_at(x) <= tol:
            return QpSolution(u=x, iterations=it, status="converged",
                              kkt_residual=residual_at(x))
        d = clipped(x - g / lip) - x
        dhd = float(d @ h @ d)
        if dhd > 0.0:
            alpha = min(1.0, max(0.0, -float(g @ d) / dhd))
            x = x + alpha * d
        else:
            x = x + d
    resid = residual_at(x)
    status = "converged" if resid <= tol else "max_iter"
    return QpSolution(u=x, iterations=it, status=status, kkt_residual=resid)
