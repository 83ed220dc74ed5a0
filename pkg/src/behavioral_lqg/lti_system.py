"""Stochastic discrete-time LTI plant, seeded simulation and Monte Carlo cost.

The plant is

    x(t+1) = A x(t) + B u(t) + w(t)
    y(t)   = C x(t) + v(t)

with w ~ N(0, Qw), v ~ N(0, Rv) and x(0) ~ N(0, Sigma0).  Process noise
enters unmapped, so w has dimension n.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .linalg import (UnstableError, as_matrix, ctrb, is_pd, is_psd, is_symmetric,
                     obsv, psd_sqrt, rank)

DIVERGENCE_LIMIT = 1e9


@dataclass(frozen=True)
class LtiSystem:
    """State-space plant (A, B, C) with Gaussian noise statistics."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Qw: np.ndarray
    Rv: np.ndarray
    Sigma0: np.ndarray = None

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = as_matrix(self.B, rows=n, name="B")
        C = as_matrix(self.C, cols=n, name="C")
        p = C.shape[0]
        Qw = as_matrix(self.Qw, n, n, name="Qw")
        Rv = as_matrix(self.Rv, p, p, name="Rv")
        S0 = np.eye(n) if self.Sigma0 is None else as_matrix(self.Sigma0, n, n, name="Sigma0")
        for name, mat in (("Qw", Qw), ("Rv", Rv), ("Sigma0", S0)):
            if not is_symmetric(mat):
                raise ValueError(f"{name} is not symmetric")
            if not is_psd(mat):
                raise ValueError(f"{name} is not positive semidefinite")
        if not is_pd(Rv):
            raise ValueError("Rv must be positive definite")
        for name, mat in (("A", A), ("B", B), ("C", C), ("Qw", Qw), ("Rv", Rv), ("Sigma0", S0)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class LqgWeights:
    """Quadratic cost weights: state weight Qx (PSD) and input weight Ru (PD)."""

    Qx: np.ndarray
    Ru: np.ndarray

    def __post_init__(self):
        Qx = as_matrix(self.Qx, name="Qx")
        Ru = as_matrix(self.Ru, name="Ru")
        if Qx.shape[0] != Qx.shape[1] or Ru.shape[0] != Ru.shape[1]:
            raise ValueError("weights must be square")
        if not (is_symmetric(Qx) and is_psd(Qx)):
            raise ValueError("Qx must be symmetric positive semidefinite")
        if not (is_symmetric(Ru) and is_pd(Ru)):
            raise ValueError("Ru must be symmetric positive definite")
        for name, mat in (("Qx", Qx), ("Ru", Ru)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    def check(self, sys):
        if self.Qx.shape != (sys.n, sys.n) or self.Ru.shape != (sys.m, sys.m):
            raise ValueError(
                f"weights have shapes {self.Qx.shape}, {self.Ru.shape}; "
                f"plant needs ({sys.n}, {sys.n}) and ({sys.m}, {sys.m})")


@dataclass(frozen=True)
class AssumptionReport:
    controllable_AB: bool
    controllable_AQw: bool
    observable_AC: bool
    observable_AQx: bool

    @property
    def ok(self):
        return not self.failures()

    def failures(self):
        names = {
            "controllable_AB": "(A, B) is not controllable",
            "controllable_AQw": "(A, Qw^1/2) is not controllable",
            "observable_AC": "(A, C) is not observable",
            "observable_AQx": "(A, Qx^1/2) is not observable",
        }
        return [msg for key, msg in names.items() if not getattr(self, key)]


def validate_assumptions(sys, weights):
    """Rank tests for the standing controllability/observability assumptions.

    Report-only: solvers that need the assumptions refuse to run on a
    failing report.
    """
    weights.check(sys)
    n = sys.n
    return AssumptionReport(
        controllable_AB=rank(ctrb(sys.A, sys.B)) == n,
        controllable_AQw=rank(ctrb(sys.A, psd_sqrt(sys.Qw))) == n,
        observable_AC=rank(obsv(sys.A, sys.C)) == n,
        observable_AQx=rank(obsv(sys.A, psd_sqrt(weights.Qx))) == n,
    )


@dataclass(frozen=True)
class Trajectory:
    """One realisation of the plant over t = 0..T.

    Arrays are time-major: ``x[t]`` is x(t).  ``u`` and ``w`` have T rows,
    ``x``, ``y`` and ``v`` have T + 1.
    """

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    w: np.ndarray
    v: np.ndarray
    seed: int = None

    def __post_init__(self):
        T = self.u.shape[0]
        if not (self.x.shape[0] == self.y.shape[0] == self.v.shape[0] == T + 1
                and self.w.shape[0] == T):
            raise ValueError("inconsistent trajectory lengths")

    @property
    def T(self):
        return self.u.shape[0]

    def to_csv(self, path):
        """Write ``t,x1..xn,u1..um,y1..yp,w1..wn,v1..vp``; u, w are blank at t = T."""
        n, m, p = self.x.shape[1], self.u.shape[1], self.y.shape[1]
        header = (["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
                  + [f"y{i + 1}" for i in range(p)] + [f"w{i + 1}" for i in range(n)]
                  + [f"v{i + 1}" for i in range(p)])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.T + 1):
                u = [repr(float(a)) for a in self.u[t]] if t < self.T else [""] * m
                w = [repr(float(a)) for a in self.w[t]] if t < self.T else [""] * n
                writer.writerow([t] + [repr(float(a)) for a in self.x[t]] + u
                                + [repr(float(a)) for a in self.y[t]] + w
                                + [repr(float(a)) for a in self.v[t]])


def standard_normals(seed, count):
    """``count`` i.i.d. N(0, 1) draws via Box-Muller on a Philox stream.

    Philox is counter-based, so the stream for a given seed is identical on
    every platform, and the first k draws do not depend on ``count``.
    """
    gen = np.random.Generator(np.random.Philox(seed))
    pairs = (count + 1) // 2
    # uniforms consumed pairwise, so a longer request extends a shorter one
    uni = gen.random(2 * pairs)
    u1 = 1.0 - uni[0::2]  # (0, 1], keeps log finite
    u2 = uni[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2 * np.pi * u2)
    z[1::2] = r * np.sin(2 * np.pi * u2)
    return z[:count]


@dataclass
class NoiseRealization:
    x0: np.ndarray  # (n,)
    w: np.ndarray  # (T, n)
    v: np.ndarray  # (T + 1, p)


def draw_noise(sys, T, seed):
    """Sample x(0), v(0), then (w(t), v(t+1)) for t = 0..T-1, in that order."""
    n, p = sys.n, sys.p
    z = standard_normals(seed, n + p + T * (n + p))
    x0 = psd_sqrt(sys.Sigma0) @ z[:n]
    v0 = psd_sqrt(sys.Rv) @ z[n:n + p]
    steps = z[n + p:].reshape(T, n + p)
    w = steps[:, :n] @ psd_sqrt(sys.Qw)
    v = np.vstack([v0, steps[:, n:] @ psd_sqrt(sys.Rv)])
    return NoiseRealization(x0=x0, w=w, v=v)


def _controller_kind(sys, controller):
    from .behavioral import BehavioralGain
    from .classical_lqg import DynamicController

    if controller is None:
        return "zero"
    if isinstance(controller, DynamicController):
        if controller.F.shape[1] != sys.p or controller.G.shape[0] != sys.m:
            raise ValueError("compensator dimensions do not match the plant")
        return "dynamic"
    if isinstance(controller, BehavioralGain):
        if (controller.n, controller.m, controller.p) != (sys.n, sys.m, sys.p):
            raise ValueError(
                f"behavioral gain built for (n, m, p)={controller.n, controller.m, controller.p}, "
                f"plant is {sys.n, sys.m, sys.p}")
        return "behavioral"
    raise TypeError(f"unsupported controller type {type(controller).__name__}")


def rollout(sys, controller, x0, w, v, *, match_behavioral=False, check_divergence=False):
    """Closed-loop rollout over a batch of noise realisations.

    Args:
        x0: (batch, n) initial states.
        w: (batch, T, n) process noise.
        v: (batch, T + 1, p) measurement noise.
        match_behavioral: for a dynamic compensator, apply u = 0 for t < n and
            start the compensator at t = n from the state consistent with the
            recorded window, exactly as a behavioral gain would see it.

    Returns:
        (x, u, y) arrays of shapes (batch, T+1, n), (batch, T, m), (batch, T+1, p).
    """
    kind = _controller_kind(sys, controller)
    A, B, C = sys.A, sys.B, sys.C
    n, m, p = sys.n, sys.m, sys.p
    batch, T = w.shape[0], w.shape[1]
    x = np.empty((batch, T + 1, n))
    u = np.zeros((batch, T, m))
    y = np.empty((batch, T + 1, p))
    x[:, 0] = x0

    hold = n if (kind == "behavioral" or (kind == "dynamic" and match_behavioral)) else 0
    if kind == "dynamic":
        E, F, G, H = controller.E, controller.F, controller.G, controller.H
        xc = np.zeros((batch, E.shape[0]))
        if match_behavioral:
            from .behavioral import staticization_map
            smap = staticization_map(controller, n)
            T1_pinv = smap.T1_pinv
    elif kind == "behavioral":
        K = controller.K

    for t in range(T):
        y[:, t] = x[:, t] @ C.T + v[:, t]
        if t >= hold:
            if kind == "dynamic":
                if match_behavioral and t == hold:
                    U = u[:, t - n:t].reshape(batch, n * m)
                    Y = y[:, t - n:t + 1].reshape(batch, (n + 1) * p)
                    xc = (U - Y @ smap.Mmat.T) @ T1_pinv.T
                    for j in range(t - n, t):
                        xc = xc @ E.T + y[:, j] @ F.T
                u[:, t] = xc @ G.T + y[:, t] @ H.T
                xc = xc @ E.T + y[:, t] @ F.T
            elif kind == "behavioral":
                yz = np.concatenate([u[:, t - n:t].reshape(batch, n * m),
                                     y[:, t - n:t + 1].reshape(batch, (n + 1) * p)], axis=1)
                u[:, t] = yz @ K.T
        x[:, t + 1] = x[:, t] @ A.T + u[:, t] @ B.T + w[:, t]
        if check_divergence and (t & 63) == 63 and not np.all(np.abs(x[:, t + 1]) <= DIVERGENCE_LIMIT):
            raise UnstableError(f"rollout diverged at t={t + 1} (|x| > {DIVERGENCE_LIMIT:g})")
    y[:, T] = x[:, T] @ C.T + v[:, T]
    if check_divergence and not np.all(np.abs(x) <= DIVERGENCE_LIMIT):
        raise UnstableError(f"rollout diverged (|x| > {DIVERGENCE_LIMIT:g})")
    return x, u, y


def simulate(sys, controller=None, T=50, seed=0, *, x0=None, deterministic=False,
             match_behavioral=False):
    """Simulate the plant under ``controller`` with seeded Gaussian noise.

    ``controller`` is ``None`` (zero input), a ``DynamicController`` or a
    ``BehavioralGain``.  A behavioral gain needs the window of the last n
    inputs, so u(t) = 0 for t < n.  The noise realisation depends only on
    ``(sys, T, seed)``, never on the controller.

    Passing ``deterministic=True`` zeroes w and v; ``x0`` overrides the
    sampled initial state.
    """
    if T < 1:
        raise ValueError("horizon T must be >= 1")
    noise = draw_noise(sys, T, seed)
    x_init = noise.x0 if x0 is None else np.asarray(x0, dtype=float).reshape(sys.n)
    w, v = noise.w, noise.v
    if deterministic:
        w, v = np.zeros_like(w), np.zeros_like(v)
    x, u, y = rollout(sys, controller, x_init[None], w[None], v[None],
                      match_behavioral=match_behavioral)
    return Trajectory(x=x[0], u=u[0], y=y[0], w=w, v=v, seed=seed)


def monte_carlo_cost(sys, controller, weights, T, trials, seed, *, match_behavioral=False):
    """Empirical average cost over independent seeded trials.

    Trial ``i`` uses seed ``seed + i``.  Returns ``(mean, stderr)`` of the
    per-trial averages (1/T) sum_{t<T} x'Qx x + u'Ru u.
    """
    weights.check(sys)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    draws = [draw_noise(sys, T, seed + i) for i in range(trials)]
    x0 = np.stack([d.x0 for d in draws])
    w = np.stack([d.w for d in draws])
    v = np.stack([d.v for d in draws])
    x, u, _ = rollout(sys, controller, x0, w, v, match_behavioral=match_behavioral,
                      check_divergence=True)
    xs = x[:, :T]
    per_trial = (np.einsum("bti,ij,btj->b", xs, weights.Qx, xs)
                 + np.einsum("bti,ij,btj->b", u, weights.Ru, u)) / T
    mean = float(per_trial.mean())
    stderr = float(per_trial.std(ddof=1) / np.sqrt(trials)) if trials > 1 else float("nan")
    return mean, stderr
