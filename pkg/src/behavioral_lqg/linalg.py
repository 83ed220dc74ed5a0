"""Small dense linear-algebra helpers shared by the solvers.

Every rank decision in the package goes through :func:`svd_cutoff` so that
pseudo-inverses, rank tests and projectors agree with each other.
"""

import numpy as np


class UnstableError(ValueError):
    """Raised when a closed loop that must be Schur stable is not."""

    def __init__(self, message, rho=None):
        super().__init__(message)
        self.rho = rho


class ConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its budget."""


def as_matrix(a, rows=None, cols=None, name="matrix"):
    """Coerce scalars / vectors / nested lists to a 2-D float array."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if rows is not None and a.shape[0] != rows:
        raise ValueError(f"{name} has {a.shape[0]} rows, expected {rows}")
    if cols is not None and a.shape[1] != cols:
        raise ValueError(f"{name} has {a.shape[1]} columns, expected {cols}")
    return a


def svd_cutoff(s, shape):
    """Singular-value threshold max(rows, cols) * eps * sigma_max."""
    if s.size == 0:
        return 0.0
    return max(shape) * np.finfo(float).eps * s[0]


def rank(a):
    a = np.atleast_2d(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > svd_cutoff(s, a.shape)))


def pinv(a):
    """Moore-Penrose pseudo-inverse with the package-wide SVD cutoff.

    For a tall full-column-rank matrix this is the left inverse, for a fat
    full-row-rank matrix the right inverse.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return np.zeros(a.shape[::-1])
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > svd_cutoff(s, a.shape)
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def row_space_projector(a):
    """Orthogonal projector onto the row space of ``a`` (i.e. pinv(a) @ a)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    v = vt[s > svd_cutoff(s, a.shape)]
    return v.T @ v


def psd_sqrt(a):
    """Symmetric square root via eigendecomposition, negative eigenvalues clamped to 0."""
    a = np.asarray(a, dtype=float)
    sym = (a + a.T) / 2
    w, v = np.linalg.eigh(sym)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def spectral_radius(a):
    a = np.atleast_2d(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def is_symmetric(a, rtol=1e-10):
    a = np.asarray(a)
    scale = max(np.linalg.norm(a), 1.0)
    return np.linalg.norm(a - a.T) <= rtol * scale


def is_psd(a, tol=-1e-10):
    """Smallest eigenvalue of the symmetric part is >= tol (scaled by ||a||)."""
    a = np.asarray(a)
    if a.size == 0:
        return True
    scale = max(np.linalg.norm(a, 2), 1.0)
    return np.linalg.eigvalsh((a + a.T) / 2).min() >= tol * scale


def is_pd(a):
    a = np.asarray(a)
    w = np.linalg.eigvalsh((a + a.T) / 2)
    return w.min() > max(a.shape) * np.finfo(float).eps * max(abs(w).max(), 1.0)


def ctrb(A, B):
    """Controllability matrix [B, AB, ..., A^{n-1}B]."""
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def obsv(A, C):
    """Observability matrix [C; CA; ...; CA^{n-1}]."""
    return ctrb(A.T, C.T).T


def solve_dlyap(A, Q, max_doublings=200, tol=1e-13, direct_limit=50):
    """Solve X = A X A^T + Q for Schur-stable ``A``.

    Up to ``direct_limit`` states the Kronecker-vectorised linear system
    (I - A (x) A) vec(X) = vec(Q) is solved directly; above that the Smith
    doubling iteration is used.
    """
    A = np.atleast_2d(A)
    Q = np.atleast_2d(Q)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    if n <= direct_limit:
        lhs = np.eye(n * n) - np.kron(A, A)
        x = np.linalg.solve(lhs, Q.reshape(-1)).reshape(n, n)
        return (x + x.T) / 2 if np.allclose(Q, Q.T) else x

    x = Q.copy()
    ak = A.copy()
    for _ in range(max_doublings):
        step = ak @ x @ ak.T
        x = x + step
        ak = ak @ ak
        if np.linalg.norm(step) <= tol * max(np.linalg.norm(x), 1.0):
            return x
    raise ConvergenceError(f"Smith iteration did not converge in {max_doublings} doublings")


def batched_dlyap(A, Q, max_doublings=64, tol=1e-16):
    """Smith doubling for a stack of Lyapunov equations X_b = A_b X_b A_b' + Q_b.

    Returns ``(X, stable)``.  ``stable[b]`` is True once some power
    A_b^(2^k) has Frobenius norm below one, which certifies rho(A_b) < 1;
    entries of ``X`` for unstable members are NaN.

    Since every remaining doubling term is bounded by ||A^(2^k)||_F^2 ||X||_F,
    a member is finished once ||A^(2^k)||_F <= sqrt(tol).
    """
    A = np.asarray(A, dtype=float)
    batch, n = A.shape[0], A.shape[1]
    X = np.broadcast_to(Q, (batch, n, n)).copy()
    ak = A.copy()
    finished = np.zeros(batch, dtype=bool)
    diverged = np.zeros(batch, dtype=bool)
    small = np.sqrt(tol)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(max_doublings):
            norms = np.sqrt(np.einsum("bij,bij->b", ak, ak))
            finished |= norms <= small
            diverged |= ~(norms <= 1e150)  # also catches inf and nan
            if np.all(finished | diverged):
                break
            X += ak @ X @ ak.transpose(0, 2, 1)
            ak = ak @ ak
    stable = finished & ~diverged
    X[~stable] = np.nan
    return X, stable
