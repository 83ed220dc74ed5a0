"""LQG in the space of input-output behaviors.

The behavioral state stacks the last n inputs, the last n+1 outputs and the
matching noise windows,

    z(t) = [U(t-1); Y(t); W(t-1); V(t)],
    U(t-1) = [u(t-n); ...; u(t-1)],   Y(t) = [y(t-n); ...; y(t)],
    W(t-1) = [w(t-n); ...; w(t-1)],   V(t) = [v(t-n); ...; v(t)],

and evolves as z(t+1) = calA z(t) + calBu u(t) + calBw w(t) + calBv v(t+1).
Only y_z = calC z = [U(t-1); Y(t)] is measurable, and the optimal LQG
controller is the static map u(t) = K y_z(t).
"""

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .classical_lqg import lqg_compensator
from .linalg import (UnstableError, as_matrix, batched_dlyap, pinv, rank, row_space_projector,
                     solve_dlyap, spectral_radius)


class RankDeficiencyError(ValueError):
    def __init__(self, message, rank=None, required=None):
        super().__init__(message)
        self.rank = rank
        self.required = required


@dataclass(frozen=True)
class BlockLayout:
    """Sizes and offsets of the U, Y, W, V blocks inside z."""

    n: int
    m: int
    p: int

    @property
    def sizes(self):
        n, m, p = self.n, self.m, self.p
        return {"U": n * m, "Y": (n + 1) * p, "W": n * n, "V": (n + 1) * p}

    @property
    def offsets(self):
        out, pos = {}, 0
        for name, size in self.sizes.items():
            out[name] = pos
            pos += size
        return out

    def slice(self, name):
        start = self.offsets[name]
        return slice(start, start + self.sizes[name])

    @property
    def dz(self):
        return sum(self.sizes.values())

    @property
    def dy(self):
        return self.sizes["U"] + self.sizes["Y"]

    def to_dict(self):
        return {"n": self.n, "m": self.m, "p": self.p,
                "blocks": [{"name": k, "offset": self.offsets[k], "size": v}
                           for k, v in self.sizes.items()]}


@dataclass(frozen=True)
class BehavioralSystem:
    calA: np.ndarray
    calBu: np.ndarray
    calBw: np.ndarray
    calBv: np.ndarray
    calC: np.ndarray
    Qz: np.ndarray
    H: np.ndarray  # x(t) = H z(t), t >= n
    layout: BlockLayout
    Qw: np.ndarray
    Rv: np.ndarray
    # sub-blocks of the y(t+1) row, kept for inspection
    Au: np.ndarray = None
    Ay: np.ndarray = None
    Aw: np.ndarray = None
    Av: np.ndarray = None

    @property
    def n(self):
        return self.layout.n

    @property
    def m(self):
        return self.layout.m

    @property
    def p(self):
        return self.layout.p

    @property
    def dz(self):
        return self.layout.dz

    @property
    def dy(self):
        return self.layout.dy

    @property
    def noise_covariance(self):
        """calBw Qw calBw' + calBv Rv calBv'."""
        return self.calBw @ self.Qw @ self.calBw.T + self.calBv @ self.Rv @ self.calBv.T

    def closed_loop(self, gain):
        K = gain.K if isinstance(gain, BehavioralGain) else np.asarray(gain)
        return self.calA + self.calBu @ K @ self.calC

    def to_dict(self):
        d = {k: getattr(self, k).tolist()
             for k in ("calA", "calBu", "calBw", "calBv", "calC", "Qz", "H", "Qw", "Rv")}
        d["layout"] = self.layout.to_dict()
        return d


@dataclass(frozen=True)
class BehavioralGain:
    """Static gain u(t) = K y_z(t) with K partitioned as [K1 | K2 | K3].

    K1 acts on U(t-1), K2 on the oldest output y(t-n), K3 on
    Ybar(t) = [y(t-n+1); ...; y(t)].
    """

    K: np.ndarray
    n: int
    m: int
    p: int

    def __post_init__(self):
        K = as_matrix(self.K, rows=self.m, cols=self.n * self.m + (self.n + 1) * self.p, name="K")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @property
    def K1(self):
        return self.K[:, :self.n * self.m]

    @property
    def K2(self):
        nm = self.n * self.m
        return self.K[:, nm:nm + self.p]

    @property
    def K3(self):
        return self.K[:, self.n * self.m + self.p:]

    def with_K(self, K):
        return BehavioralGain(K=K, n=self.n, m=self.m, p=self.p)

    def to_dict(self):
        return {"n": self.n, "m": self.m, "p": self.p, "K": self.K.tolist(),
                "K1": self.K1.tolist(), "K2": self.K2.tolist(), "K3": self.K3.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(K=np.asarray(d["K"], dtype=float), n=int(d["n"]), m=int(d["m"]), p=int(d["p"]))


@dataclass(frozen=True)
class RiccatiPair:
    M: np.ndarray
    P: np.ndarray
    S_M: np.ndarray
    S_P: np.ndarray
    residual_M: float
    residual_P: float
    stationarity: float
    cost: float


class StaticizationMap(NamedTuple):
    T1: np.ndarray
    T2: np.ndarray
    Mmat: np.ndarray
    T1_pinv: np.ndarray
    GEn: np.ndarray


class SparsityPartition(NamedTuple):
    K1: np.ndarray
    K2: np.ndarray
    K3: np.ndarray
    k2_is_zero: bool


def _powers(A, count):
    out = [np.eye(A.shape[0])]
    for _ in range(count - 1):
        out.append(out[-1] @ A)
    return out


def _observability_blocks(sys):
    """O = [C; CA; ...; CA^n], the Toeplitz maps F1..F4 and powers of A."""
    A, B, C = sys.A, sys.B, sys.C
    n, m, p = sys.n, sys.m, sys.p
    Ap = _powers(A, n + 2)
    O = np.vstack([C @ Ap[i] for i in range(n + 1)])
    F1 = np.zeros(((n + 1) * p, n * m))
    F3 = np.zeros(((n + 1) * p, n * n))
    for i in range(n + 1):
        for j in range(i):
            F1[i * p:(i + 1) * p, j * m:(j + 1) * m] = C @ Ap[i - 1 - j] @ B
            F3[i * p:(i + 1) * p, j * n:(j + 1) * n] = C @ Ap[i - 1 - j]
    F2 = np.hstack([C @ Ap[n - j] @ B for j in range(n)])
    F4 = np.hstack([C @ Ap[n - j] for j in range(n)])
    r = rank(O)
    if r < n:
        raise RankDeficiencyError(f"(A, C) is not observable: rank(O) = {r} < n = {n}", r, n)
    return O, F1, F2, F3, F4, Ap


def lift_system(sys, weights=None):
    """Behavioral representation of ``sys``; the cost weight Qz is filled in
    when ``weights`` is given (zeros otherwise)."""
    n, m, p = sys.n, sys.m, sys.p
    O, F1, F2, F3, F4, Ap = _observability_blocks(sys)
    O_pinv = pinv(O)
    CAn1 = sys.C @ Ap[n + 1]
    Ay = CAn1 @ O_pinv
    Au = F2 - Ay @ F1
    Aw = F4 - Ay @ F3
    Av = -Ay

    layout = BlockLayout(n, m, p)
    dz = layout.dz
    su, sy, sw, sv = (layout.slice(k) for k in "UYWV")
    ou, oy, ow, ov = (layout.offsets[k] for k in "UYWV")
    calA = np.zeros((dz, dz))
    # shift registers: block i of the new window is block i+1 of the old one
    calA[ou:ou + (n - 1) * m, ou + m:ou + n * m] = np.eye((n - 1) * m)
    calA[oy:oy + n * p, oy + p:oy + (n + 1) * p] = np.eye(n * p)
    calA[ow:ow + (n - 1) * n, ow + n:ow + n * n] = np.eye((n - 1) * n)
    calA[ov:ov + n * p, ov + p:ov + (n + 1) * p] = np.eye(n * p)
    last_y = slice(oy + n * p, oy + (n + 1) * p)
    calA[last_y, su] = Au
    calA[last_y, sy] = Ay
    calA[last_y, sw] = Aw
    calA[last_y, sv] = Av

    calBu = np.zeros((dz, m))
    calBu[ou + (n - 1) * m:ou + n * m] = np.eye(m)
    calBu[last_y] = sys.C @ sys.B
    calBw = np.zeros((dz, n))
    calBw[last_y] = sys.C
    calBw[ow + (n - 1) * n:ow + n * n] = np.eye(n)
    calBv = np.zeros((dz, p))
    calBv[last_y] = np.eye(p)
    calBv[ov + n * p:ov + (n + 1) * p] = np.eye(p)
    calC = np.hstack([np.eye(layout.dy), np.zeros((layout.dy, dz - layout.dy))])

    H = _reconstruction_matrix(sys, O_pinv, F1, F3, Ap)
    Qz = np.zeros((dz, dz)) if weights is None else _lifted_weight(H, weights.Qx)
    return BehavioralSystem(calA=calA, calBu=calBu, calBw=calBw, calBv=calBv, calC=calC,
                            Qz=Qz, H=H, layout=layout, Qw=sys.Qw, Rv=sys.Rv,
                            Au=Au, Ay=Ay, Aw=Aw, Av=Av)


def _reconstruction_matrix(sys, O_pinv, F1, F3, Ap):
    n = sys.n
    G1 = np.hstack([Ap[n - 1 - j] @ sys.B for j in range(n)])
    G2 = np.hstack([Ap[n - 1 - j] for j in range(n)])
    AnO = Ap[n] @ O_pinv
    return np.hstack([G1 - AnO @ F1, AnO, G2 - AnO @ F3, -AnO])


def _lifted_weight(H, Qx):
    Qz = H.T @ Qx @ H
    return (Qz + Qz.T) / 2


def lift_cost(sys, weights):
    """Lifted state weight Qz = H' Qx H, where x(t) = H z(t) for t >= n."""
    weights.check(sys)
    _, F1, _, F3, _, Ap = _observability_blocks(sys)
    O = np.vstack([sys.C @ Ap[i] for i in range(sys.n + 1)])
    return _lifted_weight(_reconstruction_matrix(sys, pinv(O), F1, F3, Ap), weights.Qx)


def staticization_map(ctrl, n):
    """T1 = [G; GE; ...; GE^{n-1}], T2 = [GE^{n-1}F ... GF H] and the
    Toeplitz matrix M with U(t-1) = T1 x_c(t-n) + M Y(t)."""
    E, F, G, H = ctrl.E, ctrl.F, ctrl.G, ctrl.H
    m, p = G.shape[0], F.shape[1]
    Ep = _powers(E, n + 1)
    GE = [G @ Ep[i] for i in range(n + 1)]
    T1 = np.vstack(GE[:n])
    T2 = np.hstack([GE[n - 1 - j] @ F for j in range(n)] + [H])
    Mmat = np.zeros((n * m, (n + 1) * p))
    for i in range(n):
        Mmat[i * m:(i + 1) * m, i * p:(i + 1) * p] = H
        for j in range(i):
            Mmat[i * m:(i + 1) * m, j * p:(j + 1) * p] = GE[i - 1 - j] @ F
    r = rank(T1)
    if r < ctrl.order:
        raise RankDeficiencyError(
            f"T1 = [G; GE; ...] has rank {r} < controller order {ctrl.order}", r, ctrl.order)
    return StaticizationMap(T1=T1, T2=T2, Mmat=Mmat, T1_pinv=pinv(T1), GEn=GE[n])


def staticize(ctrl, dims):
    """Static behavioral gain equivalent to the dynamic compensator ``ctrl``.

    Args:
        ctrl: DynamicController.
        dims: (n, m, p) of the plant, or any object with those attributes.
    """
    n, m, p = (dims.n, dims.m, dims.p) if hasattr(dims, "n") else dims
    smap = staticization_map(ctrl, n)
    left = smap.GEn @ smap.T1_pinv
    K = np.hstack([left, smap.T2 - left @ smap.Mmat])
    return BehavioralGain(K=K, n=n, m=m, p=p)


def _as_K(gain):
    return gain.K if isinstance(gain, BehavioralGain) else np.asarray(gain, dtype=float)


def _stable_closed_loop(bsys, K):
    Ac = bsys.calA + bsys.calBu @ K @ bsys.calC
    rho = spectral_radius(Ac)
    if not rho < 1:
        raise UnstableError(f"closed loop is not Schur stable (spectral radius {rho:.6g})", rho)
    return Ac


def _gain_weight(bsys, K, weights):
    KC = K @ bsys.calC
    return bsys.Qz + KC.T @ weights.Ru @ KC


def cost_of_gain(bsys, gain, weights):
    """Steady-state cost J_z(K) = Tr(Q_K P).

    P is the stationary covariance of z, P = Ac P Ac' + calBw Qw calBw' + calBv Rv calBv',
    and Q_K = Qz + calC' K' Ru K calC.

    Returns:
        (J_z, P)

    Raises:
        UnstableError: Ac = calA + calBu K calC is not Schur stable.
    """
    K = _as_K(gain)
    Ac = _stable_closed_loop(bsys, K)
    P = solve_dlyap(Ac, bsys.noise_covariance)
    return float(np.trace(_gain_weight(bsys, K, weights) @ P)), P


def cost_and_gradient(bsys, gain, weights):
    """J_z(K), dJ_z/dK and the two Lyapunov solutions (P, M)."""
    K = _as_K(gain)
    Ac = _stable_closed_loop(bsys, K)
    QK = _gain_weight(bsys, K, weights)
    P = solve_dlyap(Ac, bsys.noise_covariance)
    M = solve_dlyap(Ac.T, QK)
    CPC = bsys.calC @ P @ bsys.calC.T
    grad = 2 * (weights.Ru @ K @ CPC + bsys.calBu.T @ M @ Ac @ P @ bsys.calC.T)
    return float(np.trace(QK @ P)), grad, P, M


def gradient_of_gain(bsys, gain, weights):
    """dJ_z/dK = 2 (Ru K calC P calC' + calBu' M Ac P calC'), with
    M = Ac' M Ac + Q_K."""
    return cost_and_gradient(bsys, gain, weights)[1]


def step_cost_changes(bsys, gain, weights, direction, alphas, M=None):
    """J_z(K - a D) - J_z(K) for each step size ``a`` in ``alphas``.

    Uses the exact identity

        J(K') - J(K) = Tr((Q_K' - Q_K) P') + Tr(M (Ac' P' Ac'^T - Ac P' Ac^T)),

    with M the cost-to-go matrix at K and P' the covariance at K', so that
    tiny decreases are resolved without cancellation against J itself.
    Destabilising steps map to +inf.
    """
    K = _as_K(gain)
    D = np.asarray(direction, dtype=float)
    C, Bu, Ru = bsys.calC, bsys.calBu, weights.Ru
    Ac = bsys.calA + Bu @ K @ C
    if M is None:
        M = solve_dlyap(Ac.T, _gain_weight(bsys, K, weights))
    GD = Bu @ D @ C
    W1 = C.T @ (D.T @ Ru @ K + K.T @ Ru @ D) @ C + 2 * Ac.T @ M @ GD
    W2 = C.T @ D.T @ Ru @ D @ C + GD.T @ M @ GD
    alphas = np.asarray(alphas, dtype=float)
    trial = Ac[None] - alphas[:, None, None] * GD[None]
    P, stable = batched_dlyap(trial, bsys.noise_covariance)
    with np.errstate(invalid="ignore"):
        change = (-alphas * np.einsum("ij,bij->b", W1, P)
                  + alphas ** 2 * np.einsum("ij,bij->b", W2, P))
    return np.where(stable, change, np.inf)


def coupled_riccati_residuals(bsys, weights, M, P):
    """Relative Frobenius residuals of the coupled (M, P) Riccati pair.

    Returns (residual_M, residual_P, S_M, S_P).
    """
    A, Bu, C = bsys.calA, bsys.calBu, bsys.calC
    I = np.eye(bsys.dz)
    S_M = np.linalg.inv(weights.Ru + Bu.T @ M @ Bu)
    S_P = pinv(C @ P @ C.T)
    Pi_P = P @ C.T @ S_P @ C
    Pi_M = M @ Bu @ S_M @ Bu.T
    X = A.T @ M @ Bu @ S_M @ Bu.T @ M @ A
    Y = A @ P @ C.T @ S_P @ C @ P @ A.T
    rhs_M = A.T @ M @ A - X + bsys.Qz + (I - Pi_P).T @ X @ (I - Pi_P)
    rhs_P = (A @ P @ A.T - Y + bsys.noise_covariance + (I - Pi_M).T @ Y @ (I - Pi_M))
    res_M = np.linalg.norm(M - rhs_M) / max(np.linalg.norm(M), np.finfo(float).tiny)
    res_P = np.linalg.norm(P - rhs_P) / max(np.linalg.norm(P), np.finfo(float).tiny)
    return float(res_M), float(res_P), S_M, S_P


def riccati_gain(bsys, weights, M, P):
    """Minimum-norm stationary gain -S_M calBu' M calA P calC' (calC P calC')^+."""
    Bu, C = bsys.calBu, bsys.calC
    S_M = np.linalg.inv(weights.Ru + Bu.T @ M @ Bu)
    return -S_M @ Bu.T @ M @ bsys.calA @ P @ C.T @ pinv(C @ P @ C.T)


def solve_behavioral_lqg(sys, weights):
    """Optimal static behavioral gain and the certifying (M, P) pair.

    The gain is obtained from the separation-principle compensator through
    :func:`staticize`; M and P are the closed-loop Lyapunov solutions at that
    gain, and the coupled Riccati equations are checked by substitution.
    """
    ctrl = lqg_compensator(sys, weights)
    bsys = lift_system(sys, weights)
    gain = staticize(ctrl, sys)
    J, grad, P, M = cost_and_gradient(bsys, gain, weights)
    res_M, res_P, S_M, S_P = coupled_riccati_residuals(bsys, weights, M, P)
    part = sparsity_partition(gain)
    if not part.k2_is_zero:
        warnings.warn(f"optimal gain has nonzero K2 block (max |K2| = {np.abs(part.K2).max():.3e})")
    pair = RiccatiPair(M=M, P=P, S_M=S_M, S_P=S_P, residual_M=res_M, residual_P=res_P,
                       stationarity=float(np.linalg.norm(grad)), cost=J)
    return gain, pair


def gain_projector(bsys, P):
    """Projector onto the row space of calC P calC'; gains that agree after
    right-multiplication by it produce the same closed loop."""
    return row_space_projector(bsys.calC @ P @ bsys.calC.T)


def sparsity_partition(gain, tol=1e-8):
    """Split K into (K1, K2, K3) column blocks of widths (nm, p, np)."""
    K2 = gain.K2
    return SparsityPartition(gain.K1, K2, gain.K3,
                             bool(K2.size == 0 or np.abs(K2).max() <= tol))


def behavioral_state(traj, t):
    """(z(t), y_z(t)) assembled from a recorded trajectory, t >= n."""
    n = traj.x.shape[1]
    if t < n:
        raise ValueError(f"behavioral state needs t >= n = {n}, got t = {t}")
    if t > traj.T:
        raise ValueError(f"t = {t} is beyond the trajectory horizon {traj.T}")
    U = traj.u[t - n:t].reshape(-1)
    Y = traj.y[t - n:t + 1].reshape(-1)
    W = traj.w[t - n:t].reshape(-1)
    V = traj.v[t - n:t + 1].reshape(-1)
    return np.concatenate([U, Y, W, V]), np.concatenate([U, Y])


def lifted_rollout(bsys, z0, w, v, gain=None):
    """Propagate z(t+1) = calA z + calBu u + calBw w(t) + calBv v(t+1) from z(n) = z0.

    Args:
        z0: behavioral state at t = n.
        w: (T - n, n) process noise w(n), ..., w(T-1).
        v: (T - n, p) measurement noise v(n+1), ..., v(T).
        gain: BehavioralGain for u(t) = K y_z(t); zero input if None.

    Returns:
        (z, u) with z of shape (T - n + 1, dz) and u of shape (T - n, m).
    """
    steps = w.shape[0]
    z = np.empty((steps + 1, bsys.dz))
    u = np.zeros((steps, bsys.m))
    z[0] = z0
    K = None if gain is None else _as_K(gain)
    for k in range(steps):
        if K is not None:
            u[k] = K @ (bsys.calC @ z[k])
        z[k + 1] = bsys.calA @ z[k] + bsys.calBu @ u[k] + bsys.calBw @ w[k] + bsys.calBv @ v[k]
    return z, u


def current_output(bsys, z):
    """y(t) read from the newest block of Y(t) inside z (works on stacks)."""
    oy, n, p = bsys.layout.offsets["Y"], bsys.n, bsys.p
    return z[..., oy + n * p:oy + (n + 1) * p]
