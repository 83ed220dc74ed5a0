"""Learning a static behavioral gain from expert input-output demonstrations.

An expert acting through u(t) = K y_z(t) with K2 = 0 satisfies

    U_N = [K1 K3] Y_N,

where column j of U_N is u(t0 + j) and column j of Y_N stacks the input
window u(t0+j-n .. t0+j-1) over the output window y(t0+j-n+1 .. t0+j).  The
minimum-norm least-squares solution U_N Y_N^+ therefore recovers the gain on
the row space of Y_N.
"""

import csv
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .behavioral import BehavioralGain, cost_of_gain, gain_projector, lift_system
from .linalg import UnstableError, as_matrix, pinv, rank, spectral_radius
from .lti_system import simulate


class DemoFormatError(ValueError):
    """Malformed expert log; ``row`` is the 1-based line number in the file."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


def sufficient_samples(n, m, p):
    """Number of expert time samples n + nm + np that pins down [K1 K3]."""
    for name, d in (("n", n), ("m", m), ("p", p)):
        if int(d) != d or d < 1:
            raise ValueError(f"{name} must be a positive integer, got {d}")
    return n + n * m + n * p


def subspace_id_samples(n, m, p):
    """Sample count 2(n+1)(m+p+1) - 1 of identifying (E, F, G, H) first, for comparison."""
    sufficient_samples(n, m, p)
    return 2 * (n + 1) * (m + p + 1) - 1


def samples_used(n, k):
    """Distinct time indices touched by k regression columns: t0-n .. t0+k-1."""
    return n + k


@dataclass(frozen=True)
class ExpertLog:
    """Recorded expert inputs and outputs, ``u[i]`` and ``y[i]`` at time ``t_start + i``."""

    u: np.ndarray
    y: np.ndarray
    t_start: int = 0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if u.ndim != 2 or y.ndim != 2 or u.shape[0] != y.shape[0]:
            raise ValueError("u and y must be 2-D with the same number of rows")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class ExpertData:
    U_N: np.ndarray
    Y_N: np.ndarray
    t0: int
    k: int

    def __post_init__(self):
        U = as_matrix(self.U_N, name="U_N")
        Y = as_matrix(self.Y_N, cols=U.shape[1], name="Y_N")
        object.__setattr__(self, "U_N", U)
        object.__setattr__(self, "Y_N", Y)
        if self.k != U.shape[1]:
            raise ValueError(f"k = {self.k} but U_N has {U.shape[1]} columns")

    def overlap_consistent(self, n, m, atol=0.0):
        """True if each column's input window is the previous window shifted by
        one step with the previous expert input appended."""
        nm = n * m
        for j in range(1, self.k):
            prev, cur = self.Y_N[:nm, j - 1], self.Y_N[:nm, j]
            if not np.allclose(cur[:nm - m], prev[m:], rtol=0, atol=atol):
                return False
            if not np.allclose(cur[nm - m:], self.U_N[:, j - 1], rtol=0, atol=atol):
                return False
        return True


def assemble_expert_data(traj, n, t0, k=None):
    """Regression matrices from one contiguous demonstration.

    Args:
        traj: anything with time-major ``u`` and ``y`` arrays (a Trajectory
            or an ExpertLog); ``u[t]``, ``y[t]`` are the values at time t.
        n: plant order.
        t0: time of the first regression column, t0 >= n.
        k: number of columns, default nm + np.

    Raises:
        ValueError: t0 < n, k < 1 or the record is too short.
    """
    u = np.asarray(traj.u, dtype=float)
    y = np.asarray(traj.y, dtype=float)
    m, p = u.shape[1], y.shape[1]
    if k is None:
        k = n * m + n * p
    if t0 < n:
        raise ValueError(f"t0 = {t0} must be at least n = {n}")
    if k < 1:
        raise ValueError("k must be at least 1")
    last = t0 + k - 1
    if last >= u.shape[0] or last >= y.shape[0]:
        raise ValueError(
            f"demonstration too short: need u and y up to t = {last}, "
            f"have {u.shape[0]} inputs and {y.shape[0]} outputs")
    cols = [np.concatenate([u[t - n:t].reshape(-1), y[t - n + 1:t + 1].reshape(-1)])
            for t in range(t0, t0 + k)]
    return ExpertData(U_N=u[t0:t0 + k].T.copy(), Y_N=np.array(cols).T, t0=t0, k=k)


class LearnedGain(NamedTuple):
    gain: BehavioralGain
    rank: int        # rank of Y_N
    expected_rank: int
    input_rank: int  # rank of the input block of Y_N


def learn_gain(data, dims):
    """Least-squares gain [K1 K3] = U_N Y_N^+ with K2 = 0 inserted.

    ``dims`` is ``(n, m, p)`` or any object with those attributes.  Rank
    deficiency is reported through the result and a warning, never raised;
    the minimum-norm solution is returned in that case.
    """
    n, m, p = _dims(dims)
    nm = n * m
    if data.U_N.shape[0] != m or data.Y_N.shape[0] != nm + n * p:
        raise ValueError(
            f"expert data has shapes U_N {data.U_N.shape}, Y_N {data.Y_N.shape}; "
            f"expected ({m}, k) and ({nm + n * p}, k)")
    K13 = data.U_N @ pinv(data.Y_N)
    K = np.hstack([K13[:, :nm], np.zeros((m, p)), K13[:, nm:]])
    r = rank(data.Y_N)
    expected = min(nm + n * p, data.k)
    r_input = rank(data.Y_N[:nm]) if nm else 0
    if r_input < min(nm, data.k):
        warnings.warn(f"input block of Y_N is rank deficient ({r_input} < {min(nm, data.k)})")
    return LearnedGain(BehavioralGain(K=K, n=n, m=m, p=p), r, expected, r_input)


def _dims(dims):
    if hasattr(dims, "n"):
        return int(dims.n), int(dims.m), int(dims.p)
    n, m, p = dims
    return int(n), int(m), int(p)


def prediction_residual(gain, log, t0, T):
    """max_t |u(t) - K y_z(t)| over t0 <= t < t0 + T on a recorded log."""
    data = assemble_expert_data(log, gain.n, t0, T)
    K13 = np.hstack([gain.K1, gain.K3])
    resid = data.U_N - K13 @ data.Y_N - gain.K2 @ _oldest_outputs(log, gain.n, t0, T)
    return float(np.abs(resid).max())


def _oldest_outputs(log, n, t0, T):
    y = np.asarray(log.y)
    return y[t0 - n:t0 - n + T].T


@dataclass(frozen=True)
class RolloutReport:
    max_output_deviation: float
    max_input_deviation: float
    cost_learned: float
    cost_reference: float
    projector_distance: float
    T: int
    seed: int

    def to_dict(self):
        return dict(self.__dict__)


def validate_by_rollout(sys, learned, reference, T, seed, weights):
    """Closed-loop comparison of two behavioral gains under a shared seed.

    Returns a RolloutReport with the largest output and input differences
    over t = 0..T, the steady-state cost of each gain and the Frobenius norm
    of (learned - reference) restricted to the reference loop's relevant
    row space.

    Raises:
        UnstableError: either closed loop is unstable.
    """
    bsys = lift_system(sys, weights)
    for name, g in (("learned", learned), ("reference", reference)):
        rho = spectral_radius(bsys.closed_loop(g))
        if not rho < 1:
            raise UnstableError(f"{name} gain is not stabilising (spectral radius {rho:.6g})", rho)
    a = simulate(sys, learned, T=T, seed=seed)
    b = simulate(sys, reference, T=T, seed=seed)
    J_l, _ = cost_of_gain(bsys, learned, weights)
    J_r, P_r = cost_of_gain(bsys, reference, weights)
    dist = float(np.linalg.norm((learned.K - reference.K) @ gain_projector(bsys, P_r)))
    return RolloutReport(
        max_output_deviation=float(np.abs(a.y - b.y).max()),
        max_input_deviation=float(np.abs(a.u - b.u).max()),
        cost_learned=J_l, cost_reference=J_r, projector_distance=dist, T=T, seed=seed)


def load_expert_csv(path, m=None, p=None):
    """Read an expert log with header ``t,u1..um,y1..yp``.

    Rows must have consecutive integer t.  Errors carry the 1-based line
    number of the offending row.

    Raises:
        DemoFormatError: bad header, unparsable value or a gap in t.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DemoFormatError("empty expert log", row=1)
    header = [h.strip() for h in rows[0]]
    u_cols = [h for h in header if h.startswith("u")]
    y_cols = [h for h in header if h.startswith("y")]
    mm, pp = len(u_cols), len(y_cols)
    expected = ["t"] + [f"u{i + 1}" for i in range(mm)] + [f"y{i + 1}" for i in range(pp)]
    if header != expected or mm == 0 or pp == 0:
        raise DemoFormatError(f"header must be t,u1..um,y1..yp, got {','.join(header)}", row=1)
    if (m is not None and mm != m) or (p is not None and pp != p):
        raise DemoFormatError(f"log has m={mm}, p={pp}; expected m={m}, p={p}", row=1)
    times, values = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DemoFormatError(f"row {line}: expected {len(header)} fields, got {len(row)}", row=line)
        try:
            t = int(row[0])
            vals = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise DemoFormatError(f"row {line}: {exc}", row=line) from None
        if not np.all(np.isfinite(vals)):
            raise DemoFormatError(f"row {line}: non-finite value", row=line)
        if times and t != times[-1] + 1:
            raise DemoFormatError(f"row {line}: t = {t} does not follow t = {times[-1]}", row=line)
        times.append(t)
        values.append(vals)
    if not values:
        raise DemoFormatError("expert log has no data rows", row=2)
    arr = np.array(values)
    return ExpertLog(u=arr[:, :mm], y=arr[:, mm:], t_start=times[0])


def write_expert_csv(path, log):
    m, p = log.u.shape[1], log.y.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"u{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(p)])
        for i in range(log.u.shape[0]):
            writer.writerow([log.t_start + i] + [repr(float(a)) for a in log.u[i]]
                            + [repr(float(a)) for a in log.y[i]])


def expert_log_from_trajectory(traj):
    """Expert log over t = 0..T-1 (the last output has no matching input)."""
    return ExpertLog(u=traj.u, y=traj.y[:traj.T], t_start=0)
