"""Gradient descent on the static behavioral gain, with Armijo step sizes,
plus the baseline that descends on the compensator matrices (E, F, G, H)."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import place_poles

from .behavioral import (BehavioralGain, cost_and_gradient, cost_of_gain, lift_system,
                         staticize, step_cost_changes)
from .classical_lqg import DynamicController, compensator_closed_loop
from .linalg import UnstableError, batched_dlyap, ctrb, solve_dlyap, spectral_radius

GRADIENT_VANISHED = "gradient-vanished"
MAX_ITERATIONS = "max-iterations"
LINE_SEARCH_FAILED = "line-search-failed"


@dataclass(frozen=True)
class ArmijoParams:
    alpha0: float = 1.0
    beta: float = 0.8
    sigma: float = 0.7
    max_backtracks: int = 100

    def __post_init__(self):
        if not self.alpha0 > 0:
            raise ValueError("alpha0 must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")


class LineSearchError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass
class DescentTrace:
    """Per-iteration record of a descent run.

    Row i holds the cost and gradient norm at iterate i and the step that
    was accepted to leave it (NaN on the final row).
    """

    costs: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    status: str = None
    reference_cost: float = None
    final: object = None

    def record(self, cost, grad_norm):
        self.costs.append(cost)
        self.grad_norms.append(grad_norm)
        self.alphas.append(float("nan"))

    @property
    def iterations(self):
        """Number of accepted steps."""
        return max(len(self.costs) - 1, 0)

    @property
    def gaps(self):
        if self.reference_cost is None:
            return None
        return np.asarray(self.costs) - self.reference_cost

    def to_csv(self, path):
        gaps = self.gaps
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "cost", "grad_norm", "alpha", "subopt_gap"])
            for i, (c, g, a) in enumerate(zip(self.costs, self.grad_norms, self.alphas)):
                gap = "" if gaps is None else repr(float(gaps[i]))
                writer.writerow([i, repr(float(c)), repr(float(g)), repr(float(a)), gap])


def _safe_cost(cost_fn, K):
    try:
        value = cost_fn(K)
    except UnstableError:
        return np.inf
    return value if np.isfinite(value) else np.inf


def armijo_step(cost_fn, grad, K, params=ArmijoParams(), cost=None, change_fn=None, chunk=24):
    """Backtracking step along -grad satisfying the sufficient-decrease rule

        J(K - a g) <= J(K) - sigma a ||g||_F^2.

    The step restarts at ``alpha0`` and shrinks by ``beta``; a destabilising
    trial point counts as a failed decrease.

    ``change_fn``, if given, maps an array of step sizes to the cost changes
    J(K - a g) - J(K) (inf when destabilising).  Candidates are then screened
    ``chunk`` at a time; the first acceptable one is returned, exactly as in
    the one-at-a-time loop.

    Returns:
        (alpha, K_next)

    Raises:
        LineSearchError: no acceptable step within ``max_backtracks`` shrinks.
    """
    if change_fn is None:
        J0 = cost_fn(K) if cost is None else cost
        change_fn = lambda a: np.array([_safe_cost(cost_fn, K - x * grad) - J0 for x in a])
        chunk = 1
    g2 = float(np.sum(grad * grad))
    alphas = params.alpha0 * params.beta ** np.arange(params.max_backtracks + 1)
    for start in range(0, alphas.size, chunk):
        a = alphas[start:start + chunk]
        ok = change_fn(a) <= -params.sigma * a * g2
        if ok.any():
            alpha = float(a[np.argmax(ok)])
            return alpha, K - alpha * grad
    raise LineSearchError(f"Armijo rule failed after {params.max_backtracks} backtracks")


def k2_mask(gain):
    """Column mask that freezes the K2 block (oldest output) at its value."""
    mask = np.ones_like(gain.K)
    nm = gain.n * gain.m
    mask[:, nm:nm + gain.p] = 0.0
    return mask


def grad_descent_behavioral(bsys, K0, weights, params=ArmijoParams(), max_iters=15000,
                            grad_tol=1e-8, freeze_k2=False, reference_cost=None):
    """Minimise J_z(K) by K <- K - alpha grad J_z(K) with Armijo steps.

    Args:
        bsys: lifted system (with Qz).
        K0: stabilising BehavioralGain.
        freeze_k2: restrict the search to the K1 and K3 blocks.
        reference_cost: optimal cost, used for the suboptimality column.

    Returns:
        DescentTrace whose ``final`` attribute is the last BehavioralGain.

    Raises:
        LineSearchError: carries the trace accumulated so far.
    """
    mask = k2_mask(K0) if freeze_k2 else np.ones_like(K0.K)
    K = np.array(K0.K, dtype=float)
    cost_fn = lambda k: cost_of_gain(bsys, k, weights)[0]
    trace = DescentTrace(reference_cost=reference_cost)
    for i in range(max_iters + 1):
        J, grad, _, M = cost_and_gradient(bsys, K, weights)
        grad = grad * mask
        gnorm = float(np.linalg.norm(grad))
        trace.record(J, gnorm)
        trace.final = K0.with_K(K)
        if gnorm <= grad_tol:
            trace.status = GRADIENT_VANISHED
            return trace
        if i == max_iters:
            break
        try:
            alpha, K = armijo_step(
                cost_fn, grad, K, params, cost=J,
                change_fn=lambda a: step_cost_changes(bsys, K, weights, grad, a, M=M))
        except LineSearchError as exc:
            trace.status = LINE_SEARCH_FAILED
            exc.trace = trace
            raise
        trace.alphas[-1] = alpha
    trace.status = MAX_ITERATIONS
    return trace


# --- initialisation by pole placement -------------------------------------

def ackermann(A, b, poles):
    """State-feedback gain k with eig(A - b k) = poles, single input."""
    n = A.shape[0]
    W = ctrb(A, b)
    coeffs = np.real(np.poly(poles))
    phi = sum(c * np.linalg.matrix_power(A, n - i) for i, c in enumerate(coeffs))
    cond = np.linalg.cond(W)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(f"controllability matrix is near singular (cond {cond:.2e})")
    en = np.zeros((1, n))
    en[0, -1] = 1.0
    return en @ np.linalg.solve(W, phi)


def place(A, B, poles):
    """Gain K with eig(A - B K) = poles (Ackermann for one input, else YT robust placement)."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if B.shape[1] == 1:
        return ackermann(A, B, poles)
    return place_poles(A, B, poles).gain_matrix


def sample_poles(count, eig_low, eig_high, rng, min_sep=1e-6, max_tries=10000):
    for _ in range(max_tries):
        poles = rng.uniform(eig_low, eig_high, count)
        gaps = np.diff(np.sort(poles))
        if gaps.size == 0 or gaps.min() > min_sep:
            return poles
    raise ValueError("could not sample distinct poles in the requested range")


def observer_compensator(sys, control_poles, observer_poles):
    """Current-estimator observer compensator with the requested spectra.

    Places eig(A - B K) at ``control_poles`` and eig((I - L C) A) at
    ``observer_poles``; the closed loop then has the union of both.
    """
    A, B, C = sys.A, sys.B, sys.C
    K = place(A, B, control_poles)
    L = place(A.T, (C @ A).T, observer_poles).T
    E = (np.eye(sys.n) - L @ C) @ (A - B @ K)
    return DynamicController(E=E, F=E @ L, G=-K, H=-K @ L)


def stabilizing_compensator(sys, eig_low=0.45, eig_high=0.92, seed=0):
    if not 0 <= eig_low < eig_high < 1:
        raise ValueError("need 0 <= eig_low < eig_high < 1")
    rng = np.random.default_rng(seed)
    control = sample_poles(sys.n, eig_low, eig_high, rng)
    observer = sample_poles(sys.n, eig_low, eig_high, rng)
    return observer_compensator(sys, control, observer)


def stabilizing_init(sys, eig_low=0.45, eig_high=0.92, seed=0):
    """Random stabilising behavioral gain with closed-loop eigenvalues drawn
    uniformly from [eig_low, eig_high] (via an observer-based compensator)."""
    gain = staticize(stabilizing_compensator(sys, eig_low, eig_high, seed), sys)
    rho = spectral_radius(lift_system(sys).closed_loop(gain))
    if not rho < 1:
        raise UnstableError(f"initial gain is not stabilising (spectral radius {rho:.4g})", rho)
    return gain


# --- baseline: descent over (E, F, G, H) ----------------------------------

class CompensatorCost:
    """Steady-state cost of the plant under a dynamic compensator and its
    gradient with respect to (E, F, G, H).

    The closed loop on xi = [x; x_c] is xi(t+1) = Acl xi(t) + Bn [w(t); v(t)]
    with u(t) = Kxi xi(t) + H v(t), so

        J = Tr(Qxi Sigma) + Tr(H' Ru H Rv),
        Sigma = Acl Sigma Acl' + Bn N Bn',   Qxi = diag(Qx, 0) + Kxi' Ru Kxi.
    """

    def __init__(self, sys, weights, order=None):
        self.sys = sys
        self.weights = weights
        self.nc = sys.n if order is None else order

    def _split(self, theta):
        n, m, p, nc = self.sys.n, self.sys.m, self.sys.p, self.nc
        sizes = [nc * nc, nc * p, m * nc, m * p]
        parts = np.split(theta, np.cumsum(sizes)[:-1])
        return (parts[0].reshape(nc, nc), parts[1].reshape(nc, p),
                parts[2].reshape(m, nc), parts[3].reshape(m, p))

    def pack(self, ctrl):
        return np.concatenate([ctrl.E.ravel(), ctrl.F.ravel(), ctrl.G.ravel(), ctrl.H.ravel()])

    def unpack(self, theta):
        return DynamicController(*self._split(theta))

    def _matrices(self, theta):
        sys = self.sys
        A, B, C = sys.A, sys.B, sys.C
        E, F, G, H = self._split(theta)
        n, nc = sys.n, self.nc
        Acl = np.block([[A + B @ H @ C, B @ G], [F @ C, E]])
        Bn = np.block([[np.eye(n), B @ H], [np.zeros((nc, n)), F]])
        N = np.block([[sys.Qw, np.zeros((n, sys.p))], [np.zeros((sys.p, n)), sys.Rv]])
        Kxi = np.hstack([H @ C, G])
        Qxi = np.zeros((n + nc, n + nc))
        Qxi[:n, :n] = self.weights.Qx
        Qxi += Kxi.T @ self.weights.Ru @ Kxi
        return E, F, G, H, Acl, Bn, N, Kxi, Qxi

    def cost(self, theta):
        *_, H, Acl, Bn, N, _, Qxi = self._matrices(theta)
        rho = spectral_radius(Acl)
        if not rho < 1:
            raise UnstableError(f"compensator loop unstable (spectral radius {rho:.6g})", rho)
        Sigma = solve_dlyap(Acl, Bn @ N @ Bn.T)
        Ru, Rv = self.weights.Ru, self.sys.Rv
        return float(np.trace(Qxi @ Sigma) + np.trace(H.T @ Ru @ H @ Rv))

    def cost_and_gradient(self, theta):
        E, F, G, H, Acl, Bn, N, Kxi, Qxi = self._matrices(theta)
        rho = spectral_radius(Acl)
        if not rho < 1:
            raise UnstableError(f"compensator loop unstable (spectral radius {rho:.6g})", rho)
        sys, Ru = self.sys, self.weights.Ru
        B, C, n = sys.B, sys.C, sys.n
        Sigma = solve_dlyap(Acl, Bn @ N @ Bn.T)
        Lam = solve_dlyap(Acl.T, Qxi)
        J = float(np.trace(Qxi @ Sigma) + np.trace(H.T @ Ru @ H @ sys.Rv))

        dAcl = 2 * Lam @ Acl @ Sigma
        dBn = 2 * Lam @ Bn @ N
        dKxi = 2 * Ru @ Kxi @ Sigma
        dE = dAcl[n:, n:]
        dF = dAcl[n:, :n] @ C.T + dBn[n:, n:]
        dG = B.T @ dAcl[:n, n:] + dKxi[:, n:]
        dH = (B.T @ dAcl[:n, :n] @ C.T + B.T @ dBn[:n, n:] + dKxi[:, :n] @ C.T
              + 2 * Ru @ H @ sys.Rv)
        grad = np.concatenate([dE.ravel(), dF.ravel(), dG.ravel(), dH.ravel()])
        return J, grad

    def step_costs(self, theta, direction, alphas):
        """Costs at theta - a * direction for a batch of step sizes (inf if unstable)."""
        sys, Ru = self.sys, self.weights.Ru
        A, B, C = sys.A, sys.B, sys.C
        n, m, p, nc = sys.n, sys.m, sys.p, self.nc
        thetas = theta[None] - np.asarray(alphas)[:, None] * direction[None]
        bsz = thetas.shape[0]
        sizes = np.cumsum([nc * nc, nc * p, m * nc])
        E = thetas[:, :sizes[0]].reshape(bsz, nc, nc)
        F = thetas[:, sizes[0]:sizes[1]].reshape(bsz, nc, p)
        G = thetas[:, sizes[1]:sizes[2]].reshape(bsz, m, nc)
        H = thetas[:, sizes[2]:].reshape(bsz, m, p)
        Acl = np.empty((bsz, n + nc, n + nc))
        Acl[:, :n, :n] = A + B @ H @ C
        Acl[:, :n, n:] = B @ G
        Acl[:, n:, :n] = F @ C
        Acl[:, n:, n:] = E
        Bn = np.zeros((bsz, n + nc, n + p))
        Bn[:, :n, :n] = np.eye(n)
        Bn[:, :n, n:] = B @ H
        Bn[:, n:, n:] = F
        N = np.zeros((n + p, n + p))
        N[:n, :n] = sys.Qw
        N[n:, n:] = sys.Rv
        Kxi = np.concatenate([H @ C, G], axis=2)
        Qxi = Kxi.transpose(0, 2, 1) @ Ru @ Kxi
        Qxi[:, :n, :n] += self.weights.Qx
        noise = Bn @ N @ Bn.transpose(0, 2, 1)
        Sigma, stable = batched_dlyap(Acl, noise)
        with np.errstate(invalid="ignore"):
            J = (np.einsum("bij,bij->b", Qxi, Sigma)
                 + np.einsum("bij,ij->b", H.transpose(0, 2, 1) @ Ru @ H, sys.Rv))
        return np.where(stable, J, np.inf)

    def central_differences(self, theta, h):
        fd = np.empty_like(theta)
        for i in range(theta.size):
            e = np.zeros_like(theta)
            e[i] = h
            fd[i] = (self.cost(theta + e) - self.cost(theta - e)) / (2 * h)
        return fd

    def check_gradient(self, theta, h=1e-5, rtol=1e-5):
        """Compare the analytic gradient with finite differences.

        Central differences at steps ``h`` and ``h/2`` are combined by
        Richardson extrapolation, which removes the O(h^2) truncation term
        that otherwise dominates on steep parts of the cost surface.  Each
        entry must satisfy |g - fd| <= rtol |fd| + noise, where
        noise = 1e-12 |J| / h bounds the rounding error of differencing J.

        Returns the worst error relative to max(|fd|, noise / rtol); raises
        AssertionError if any entry fails.
        """
        J, grad = self.cost_and_gradient(theta)
        coarse = self.central_differences(theta, h)
        fd = (4 * self.central_differences(theta, h / 2) - coarse) / 3
        noise = 1e-12 * max(abs(J), 1.0) / h
        diff = np.abs(grad - fd)
        err = float(np.max(diff / np.maximum(np.abs(fd), noise / rtol)))
        if np.any(diff > rtol * np.abs(fd) + noise):
            raise AssertionError(f"compensator gradient self-check failed: rel. error {err:.2e}")
        return err


def grad_descent_dynamic(sys, weights, ctrl0, params=ArmijoParams(), max_iters=15000,
                         grad_tol=1e-8, reference_cost=None, self_check=True):
    """Armijo gradient descent on the compensator matrices (E, F, G, H).

    The analytic gradient is checked against extrapolated central finite
    differences at ``ctrl0`` before the first step.
    """
    if not spectral_radius(compensator_closed_loop(sys, ctrl0)) < 1:
        raise UnstableError("initial compensator is not internally stabilising")
    obj = CompensatorCost(sys, weights, order=ctrl0.order)
    theta = obj.pack(ctrl0)
    if self_check:
        obj.check_gradient(theta)
    trace = DescentTrace(reference_cost=reference_cost)
    for i in range(max_iters + 1):
        J, grad = obj.cost_and_gradient(theta)
        gnorm = float(np.linalg.norm(grad))
        trace.record(J, gnorm)
        trace.final = obj.unpack(theta)
        if gnorm <= grad_tol:
            trace.status = GRADIENT_VANISHED
            return trace
        if i == max_iters:
            break
        try:
            alpha, theta = armijo_step(
                obj.cost, grad, theta, params, cost=J,
                change_fn=lambda a: obj.step_costs(theta, grad, a) - J)
        except LineSearchError as exc:
            trace.status = LINE_SEARCH_FAILED
            exc.trace = trace
            raise
        trace.alphas[-1] = alpha
    trace.status = MAX_ITERATIONS
    return trace
