"""Small dense real linear algebra and ODE stepping shared by all modules.

Everything operates on plain ``numpy`` arrays.  Matrices handled here are
tiny (at most ~8x8), so the symmetric eigensolver is a cyclic Jacobi sweep:
it is exact on symmetry, has no complex branches, and is plenty fast at this
scale.  All numeric thresholds used across the package live here as named
constants so tests can reference them.
"""

from __future__ import annotations

import numpy as np

# Centralised tolerances.  EIG_ACCURACY is the guaranteed absolute accuracy of
# sym_eigvals scaled by (1 + ||m||); JACOBI_OFFDIAG_TOL is the relative
# off-diagonal norm at which the sweep stops.
EIG_ACCURACY = 1e-10
JACOBI_OFFDIAG_TOL = 1e-14
SOLVE_RESIDUAL_TOL = 1e-9
CONDITION_LIMIT = 1e12
HURWITZ_MARGIN = 1e-9
POSDEF_MIN_EIG = 1e-9
OBSERVABILITY_RANK_TOL = 1e-9


class InvalidInput(ValueError):
    """Raised when an argument violates a documented precondition."""


class SingularMatrix(ArithmeticError):
    """Raised when a linear solve faces an (effectively) singular matrix."""


class NumericalBlowup(ArithmeticError):
    """Raised when an integration step produces non-finite values."""


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


def check_finite(m, what: str = "matrix") -> np.ndarray:
    a = _as_matrix(m)
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{what} contains non-finite entries")
    return a


def symmetrize(m) -> np.ndarray:
    """Return 0.5*(m + m^T); the result is exactly symmetric in floats."""
    a = _as_matrix(m)
    return 0.5 * (a + a.T)


def sym_eigvals(m) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending, via cyclic Jacobi.

    Rotations are applied until the off-diagonal Frobenius norm drops below
    JACOBI_OFFDIAG_TOL * ||m||, which gives eigenvalues accurate to about
    EIG_ACCURACY * (1 + ||m||).
    """
    a = check_finite(m, "symmetric matrix")
    if a.shape[0] != a.shape[1]:
        raise InvalidInput("sym_eigvals requires a square matrix")
    if not np.array_equal(a, a.T):
        raise InvalidInput("matrix is not exactly symmetric; use symmetrize() first")
    n = a.shape[0]
    if n == 1:
        return a.diagonal().copy()
    a = a.copy()
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(64):  # cyclic sweeps; quadratic convergence, ~6 needed
        off = np.sqrt(max(0.0, np.sum(a * a) - np.sum(a.diagonal() ** 2)))
        if off < JACOBI_OFFDIAG_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 0.25 * JACOBI_OFFDIAG_TOL * scale / (n * n):
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
    return np.sort(a.diagonal())


def is_negative_semidefinite(m, tol: float) -> bool:
    """True iff lambda_max(m) <= tol for symmetric m."""
    if tol < 0:
        raise InvalidInput("tolerance must be nonnegative")
    return float(sym_eigvals(m)[-1]) <= tol


def is_positive_definite(m, min_eig: float = POSDEF_MIN_EIG) -> bool:
    return float(sym_eigvals(m)[0]) > min_eig


def spectral_norm(m) -> float:
    """Largest singular value, computed as sqrt(lambda_max(m^T m))."""
    a = check_finite(m)
    if a.size == 0:
        return 0.0
    g = a.T @ a
    return float(np.sqrt(max(0.0, sym_eigvals(symmetrize(g))[-1])))


def condition_estimate(a) -> float:
    """2-norm condition estimate through the Gram spectrum."""
    a = check_finite(a)
    ev = sym_eigvals(symmetrize(a.T @ a))
    lo, hi = float(ev[0]), float(ev[-1])
    if lo <= 0.0:
        return np.inf
    return np.sqrt(hi / lo)


def solve_linear(a, b) -> np.ndarray:
    """Solve a @ x = b by LU with partial pivoting.

    Raises SingularMatrix when the condition estimate exceeds
    CONDITION_LIMIT, which downstream signals a non-invertible fast block or
    a non-Hurwitz design rather than silently returning garbage.
    """
    a = check_finite(a, "lhs")
    b_arr = check_finite(b, "rhs")
    if a.shape[0] != a.shape[1]:
        raise InvalidInput("solve_linear needs a square lhs")
    if b_arr.shape[0] != a.shape[0]:
        raise InvalidInput("rhs row count does not match lhs")
    if condition_estimate(a) > CONDITION_LIMIT:
        raise SingularMatrix(
            f"condition estimate above {CONDITION_LIMIT:g}; matrix treated as singular"
        )
    x = np.linalg.solve(a, np.asarray(b, dtype=float))
    return x


def inv(a) -> np.ndarray:
    return solve_linear(a, np.eye(_as_matrix(a).shape[0]))


def rk4_step(f, state, t: float, h: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step of x' = f(t, x)."""
    if not h > 0:
        raise InvalidInput("step size must be positive")
    x = np.asarray(state, dtype=float)
    k1 = np.asarray(f(t, x), dtype=float)
    k2 = np.asarray(f(t + 0.5 * h, x + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(f(t + 0.5 * h, x + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(f(t + h, x + h * k3), dtype=float)
    out = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowup("non-finite state after RK4 step")
    return out


def lyapunov_solve(a, q) -> np.ndarray:
    """Solve A^T P + P A = -Q through the Kronecker linear system."""
    a = check_finite(a)
    q = check_finite(q)
    n = a.shape[0]
    eye = np.eye(n)
    k = np.kron(eye, a.T) + np.kron(a.T, eye)
    p = solve_linear(k, -q.reshape(n * n, 1))
    return symmetrize(p.reshape(n, n))


def is_hurwitz(a, margin: float = HURWITZ_MARGIN) -> bool:
    """True iff every eigenvalue of a has real part < -margin.

    Uses the Lyapunov test on the shifted matrix a + margin*I, which avoids
    a complex eigensolver: the shifted matrix is Hurwitz iff the Lyapunov
    solution for Q = I is positive definite.
    """
    a = check_finite(a)
    shifted = a + margin * np.eye(a.shape[0])
    try:
        p = lyapunov_solve(shifted, np.eye(a.shape[0]))
    except SingularMatrix:
        return False  # eigenvalue at exactly -margin
    return float(sym_eigvals(p)[0]) > 0.0
