"""Classical state-space LQG: Riccati solutions, LQR/Kalman gains and the
optimal dynamic compensator

    x_c(t+1) = E x_c(t) + F y(t)
    u(t)     = G x_c(t) + H y(t).
"""

from dataclasses import dataclass

import numpy as np

from .linalg import ConvergenceError, as_matrix, is_pd
from .lti_system import validate_assumptions


class AssumptionError(ValueError):
    """Standing controllability/observability assumptions do not hold."""


@dataclass(frozen=True)
class DynamicController:
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        E = as_matrix(self.E, name="E")
        nc = E.shape[0]
        if E.shape != (nc, nc):
            raise ValueError(f"E must be square, got {E.shape}")
        F = as_matrix(self.F, rows=nc, name="F")
        G = as_matrix(self.G, cols=nc, name="G")
        H = as_matrix(self.H, rows=G.shape[0], cols=F.shape[1], name="H")
        for name, mat in (("E", E), ("F", F), ("G", G), ("H", H)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def order(self):
        return self.E.shape[0]

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in "EFGH"}

    @classmethod
    def from_dict(cls, d):
        return cls(*(np.asarray(d[k], dtype=float) for k in "EFGH"))


@dataclass(frozen=True)
class AltController:
    """Compensator driven by the next measurement:

        xi(t+1) = Ebar xi(t) + Fbar y(t+1),   u(t) = Gbar xi(t).
    """

    Ebar: np.ndarray
    Fbar: np.ndarray
    Gbar: np.ndarray

    def __post_init__(self):
        E = as_matrix(self.Ebar, name="Ebar")
        nc = E.shape[0]
        if E.shape != (nc, nc):
            raise ValueError(f"Ebar must be square, got {E.shape}")
        F = as_matrix(self.Fbar, rows=nc, name="Fbar")
        G = as_matrix(self.Gbar, cols=nc, name="Gbar")
        for name, mat in (("Ebar", E), ("Fbar", F), ("Gbar", G)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)


@dataclass(frozen=True)
class DareSolution:
    X: np.ndarray
    gain: np.ndarray
    residual: float
    iterations: int


def riccati_map(X, A, B, Q, R):
    S = R + B.T @ X @ B
    return A.T @ X @ A - A.T @ X @ B @ np.linalg.solve(S, B.T @ X @ A) + Q


def dare_residual(X, A, B, Q, R):
    """Frobenius norm of the DARE residual relative to ||X||_F (absolute if X = 0)."""
    res = np.linalg.norm(X - riccati_map(X, A, B, Q, R))
    scale = np.linalg.norm(X)
    return res / scale if scale > 0 else res


def solve_dare(A, B, Q, R, *, tol=1e-13, max_iter=1_000_000, residual_tol=1e-11):
    """Solve X = A'XA - A'XB (R + B'XB)^-1 B'XA + Q by fixed-point iteration.

    Starts from X = Q and iterates the Riccati map until successive iterates
    differ by less than ``tol`` (relative Frobenius).  The returned gain is
    (R + B'XB)^-1 B'XA.

    Raises:
        ConvergenceError: iteration budget exhausted or residual above
            ``residual_tol`` at termination.
        ValueError: R + B'XB stops being positive definite.
    """
    A, B, Q, R = (as_matrix(a) for a in (A, B, Q, R))
    X = (Q + Q.T) / 2
    for k in range(1, max_iter + 1):
        S = R + B.T @ X @ B
        if not is_pd(S):
            raise ValueError("R + B'XB is not positive definite")
        X_next = A.T @ X @ A - A.T @ X @ B @ np.linalg.solve(S, B.T @ X @ A) + Q
        X_next = (X_next + X_next.T) / 2
        diff = np.linalg.norm(X_next - X)
        X = X_next
        if diff <= tol * np.linalg.norm(X):
            break
    else:
        raise ConvergenceError(f"DARE fixed-point iteration did not converge in {max_iter} steps")
    residual = dare_residual(X, A, B, Q, R)
    if residual > residual_tol:
        raise ConvergenceError(f"DARE residual {residual:.3e} exceeds {residual_tol:.1e}")
    gain = np.linalg.solve(R + B.T @ X @ B, B.T @ X @ A)
    return DareSolution(X=X, gain=gain, residual=residual, iterations=k)


@dataclass(frozen=True)
class LqgDesign:
    """Intermediate quantities of the separation-principle design."""

    controller: DynamicController
    K_lqr: np.ndarray
    K_kf: np.ndarray
    control: DareSolution
    filter: DareSolution


def lqg_design(sys, weights):
    """LQR + current-estimator Kalman filter, folded into (E, F, G, H).

    The filter update uses y(t+1), so K_kf = P C'(C P C' + Rv)^-1 with P the
    prediction-error covariance.  With Kbar = (I - K_kf C)(A - B K_lqr):

        E = Kbar, F = Kbar K_kf, G = -K_lqr, H = -K_lqr K_kf.
    """
    report = validate_assumptions(sys, weights)
    if not report.ok:
        raise AssumptionError("; ".join(report.failures()))
    A, B, C = sys.A, sys.B, sys.C
    control = solve_dare(A, B, weights.Qx, weights.Ru)
    filt = solve_dare(A.T, C.T, sys.Qw, sys.Rv)
    P = filt.X
    K_lqr = control.gain
    K_kf = P @ C.T @ np.linalg.inv(C @ P @ C.T + sys.Rv)
    alt = AltController(Ebar=(np.eye(sys.n) - K_kf @ C) @ (A - B @ K_lqr), Fbar=K_kf, Gbar=-K_lqr)
    return LqgDesign(controller=convert_alt_form(alt), K_lqr=K_lqr, K_kf=K_kf,
                     control=control, filter=filt)


def lqg_compensator(sys, weights):
    """Optimal LQG compensator (E, F, G, H) for ``sys`` under ``weights``."""
    return lqg_design(sys, weights).controller


def convert_alt_form(alt):
    """Map the y(t+1)-driven compensator to the standard (E, F, G, H) form.

    Both produce the same inputs for the same outputs provided y(0) = 0 and
    the two compensator states start equal.
    """
    E, F, G = alt.Ebar, alt.Fbar, alt.Gbar
    return DynamicController(E=E, F=E @ F, G=G, H=G @ F)


def compensator_closed_loop(sys, ctrl):
    """Augmented closed-loop matrix on [x; x_c]."""
    A, B, C = sys.A, sys.B, sys.C
    E, F, G, H = ctrl.E, ctrl.F, ctrl.G, ctrl.H
    return np.block([[A + B @ H @ C, B @ G], [F @ C, E]])
