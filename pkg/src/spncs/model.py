"""Plant, observer, error coordinates, and every derived matrix block.

The plant has a slow state x_p and a fast state z_p whose derivative is
scaled by 1/epsilon:

    x_p'         = A11 x_p + A12 z_p + B1 u_s
    eps * z_p'   = A21 x_p + A22 z_p + B2 u_s
    y_s          = C1s x_p + v1
    y_f          = C2s x_p + C2f z_p + v2

A Luenberger observer with gains (L1s, L1f, L2s, L2f) is driven by the
network-held copies of the measured outputs.  This module builds the
closed-loop error-coordinate blocks: the fast (boundary-layer) blocks, the
quasi-steady map of the fast estimation error, the shifted fast coordinate
delta_y, and the reduced (slow) blocks, plus the full flow field of the
hybrid closed loop in the documented state layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .numerics import (
    CONDITION_LIMIT,
    HURWITZ_MARGIN,
    OBSERVABILITY_RANK_TOL,
    InvalidInput,
)


class DesignInfeasible(ValueError):
    """Raised when gains fail a structural requirement (e.g. Hurwitz)."""


def _mat(x, rows, cols, name) -> np.ndarray:
    a = numerics.check_finite(np.asarray(x, dtype=float), name)
    if a.ndim == 1:
        a = a.reshape(rows, cols) if a.size == rows * cols else a.reshape(-1, 1)
    if a.shape != (rows, cols):
        raise InvalidInput(f"{name} must be {rows}x{cols}, got {a.shape}")
    return a


def observability_rank(a: np.ndarray, c: np.ndarray) -> int:
    """Rank of the stacked observability matrix of (a, c).

    The rank test thresholds singular values at OBSERVABILITY_RANK_TOL times
    the largest one, computed through the Gram spectrum to stay within the
    symmetric eigensolver.
    """
    n = a.shape[0]
    blocks = [c]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ a)
    obs = np.vstack(blocks)
    ev = numerics.sym_eigvals(numerics.symmetrize(obs.T @ obs))
    sv = np.sqrt(np.clip(ev, 0.0, None))[::-1]
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > OBSERVABILITY_RANK_TOL * sv[0]))


@dataclass(frozen=True)
class PlantParams:
    """System matrices plus the singular-perturbation parameter epsilon.

    Construction enforces: consistent dimensions, invertible A22 (condition
    estimate below CONDITION_LIMIT), observable (A11, C1s) and (A22, C2f),
    and 0 < epsilon < 1.
    """

    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C1s: np.ndarray
    C2s: np.ndarray
    C2f: np.ndarray
    epsilon: float

    def __post_init__(self):
        nx = np.asarray(self.A11).shape[0]
        nz = np.asarray(self.A22).shape[0]
        nu = np.asarray(self.B1).reshape(nx, -1).shape[1]
        nys = np.asarray(self.C1s).reshape(-1, nx).shape[0]
        nyf = np.asarray(self.C2f).reshape(-1, nz).shape[0]
        object.__setattr__(self, "A11", _mat(self.A11, nx, nx, "A11"))
        object.__setattr__(self, "A12", _mat(self.A12, nx, nz, "A12"))
        object.__setattr__(self, "A21", _mat(self.A21, nz, nx, "A21"))
        object.__setattr__(self, "A22", _mat(self.A22, nz, nz, "A22"))
        object.__setattr__(self, "B1", _mat(self.B1, nx, nu, "B1"))
        object.__setattr__(self, "B2", _mat(self.B2, nz, nu, "B2"))
        object.__setattr__(self, "C1s", _mat(self.C1s, nys, nx, "C1s"))
        object.__setattr__(self, "C2s", _mat(self.C2s, nyf, nx, "C2s"))
        object.__setattr__(self, "C2f", _mat(self.C2f, nyf, nz, "C2f"))
        if not (0.0 < self.epsilon < 1.0):
            raise InvalidInput("epsilon must lie in (0, 1)")
        if numerics.condition_estimate(self.A22) > CONDITION_LIMIT:
            raise InvalidInput("A22 is not invertible to working precision")
        if observability_rank(self.A11, self.C1s) < nx:
            raise InvalidInput("(A11, C1s) is not observable")
        if observability_rank(self.A22, self.C2f) < nz:
            raise InvalidInput("(A22, C2f) is not observable")

    @property
    def n_x(self) -> int:
        return self.A11.shape[0]

    @property
    def n_z(self) -> int:
        return self.A22.shape[0]

    @property
    def n_u(self) -> int:
        return self.B1.shape[1]

    @property
    def n_ys(self) -> int:
        return self.C1s.shape[0]

    @property
    def n_yf(self) -> int:
        return self.C2f.shape[0]


@dataclass(frozen=True)
class ObserverGains:
    L1s: np.ndarray
    L1f: np.ndarray
    L2s: np.ndarray
    L2f: np.ndarray

    def validated(self, plant: PlantParams) -> "ObserverGains":
        g = ObserverGains(
            L1s=_mat(self.L1s, plant.n_x, plant.n_ys, "L1s"),
            L1f=_mat(self.L1f, plant.n_x, plant.n_yf, "L1f"),
            L2s=_mat(self.L2s, plant.n_z, plant.n_ys, "L2s"),
            L2f=_mat(self.L2f, plant.n_z, plant.n_yf, "L2f"),
        )
        af11 = plant.A22 - g.L2f @ plant.C2f
        if not numerics.is_hurwitz(af11, HURWITZ_MARGIN):
            raise DesignInfeasible("A22 - L2f C2f must be Hurwitz")
        return g


@dataclass(frozen=True)
class FastBlocks:
    """Boundary-layer blocks: (d/dsigma)(delta_y, e_f) = [[Af11, Af12],[Af21, Af22]] (delta_y, e_f)."""

    Af11: np.ndarray
    Af12: np.ndarray
    Af21: np.ndarray
    Af22: np.ndarray


def build_fast_blocks(plant: PlantParams, gains: ObserverGains) -> FastBlocks:
    g = gains.validated(plant)  # raises DesignInfeasible if Af11 not Hurwitz
    af11 = plant.A22 - g.L2f @ plant.C2f
    return FastBlocks(
        Af11=af11,
        Af12=g.L2f.copy(),
        Af21=plant.C2f @ af11,
        Af22=plant.C2f @ g.L2f,
    )


@dataclass(frozen=True)
class HbarCoeffs:
    """Linear coefficients of the fast-error quasi-steady map.

    Hbar(delta_x, e_ys, e_us, vhat) = Gx delta_x + Ge (e_ys + vhat1)
                                      + Gu e_us + Gv2 vhat2
    is the unique zero of the frozen fast error field at e_f = 0.
    """

    Gx: np.ndarray
    Ge: np.ndarray
    Gu: np.ndarray
    Gv2: np.ndarray

    def value(self, delta_x, e_ys, e_us, vhat1, vhat2) -> np.ndarray:
        return (
            self.Gx @ np.atleast_1d(delta_x)
            + self.Ge @ (np.atleast_1d(e_ys) + np.atleast_1d(vhat1))
            + self.Gu @ np.atleast_1d(e_us)
            + self.Gv2 @ np.atleast_1d(vhat2)
        )


def build_hbar(plant: PlantParams, gains: ObserverGains, fast: FastBlocks) -> HbarCoeffs:
    """Solve -Af11 [Gx Ge Gu Gv2] = [coupling blocks] for the quasi-steady map."""
    p, g = plant, gains
    coupling = p.A21 - g.L2s @ p.C1s - g.L2f @ p.C2s
    rhs = np.hstack([coupling, g.L2s, p.B2, g.L2f])
    sol = numerics.solve_linear(-fast.Af11, rhs)
    nx, nys, nu = p.n_x, p.n_ys, p.n_u
    return HbarCoeffs(
        Gx=sol[:, :nx],
        Ge=sol[:, nx : nx + nys],
        Gu=sol[:, nx + nys : nx + nys + nu],
        Gv2=sol[:, nx + nys + nu :],
    )


def delta_y_shift(delta_z, hbar_value) -> np.ndarray:
    """delta_y = delta_z - Hbar(...): recentre the fast error on its quasi-steady value."""
    dz = np.atleast_1d(np.asarray(delta_z, dtype=float))
    hb = np.atleast_1d(np.asarray(hbar_value, dtype=float))
    if dz.shape != hb.shape:
        raise InvalidInput("delta_z and quasi-steady value must share a shape")
    return dz - hb


def quasi_steady_plant(plant: PlantParams, x_p, u_s) -> np.ndarray:
    """z_p quasi-steady value: the z solving A21 x_p + A22 z + B2 u_s = 0."""
    rhs = plant.A21 @ np.atleast_1d(x_p) + plant.B2 @ np.atleast_1d(u_s)
    return numerics.solve_linear(plant.A22, -rhs.reshape(-1, 1)).ravel()


@dataclass(frozen=True)
class ReducedBlocks:
    """Slow (reduced) system blocks with the fast error at quasi-steady state.

    The pair (delta_x, e_s) with e_s = (e_ys, e_us) flows as

        [delta_x'; e_s'] = [[As11, As12],[As21, As22]] [delta_x; e_s]
                           + [[As13],[As23]] [vhat1; vhat2] + (0, (0, -u_s')).

    Ar1* are the delta_x-row coefficients (of delta_x, e_ys, e_us, vhat1,
    vhat2 in that order) and Ar2* = C1s Ar1* their e_ys-row counterparts.
    D is the slow-to-fast coupling (A12 - L1f C2f)(A22 - L2f C2f)^-1.
    """

    D: np.ndarray
    Ar11: np.ndarray
    Ar12: np.ndarray
    Ar13: np.ndarray
    Ar14: np.ndarray
    Ar15: np.ndarray
    Ar21: np.ndarray
    Ar22: np.ndarray
    Ar23: np.ndarray
    Ar24: np.ndarray
    Ar25: np.ndarray
    As11: np.ndarray
    As12: np.ndarray
    As13: np.ndarray
    As21: np.ndarray
    As22: np.ndarray
    As23: np.ndarray


def build_reduced_blocks(
    plant: PlantParams, gains: ObserverGains, fast: FastBlocks
) -> ReducedBlocks:
    p, g = plant, gains
    d = numerics.solve_linear(fast.Af11.T, (p.A12 - g.L1f @ p.C2f).T).T
    ar11 = (p.A11 - g.L1s @ p.C1s - g.L1f @ p.C2s) - d @ (
        p.A21 - g.L2s @ p.C1s - g.L2f @ p.C2s
    )
    ar12 = g.L1s - d @ g.L2s
    ar13 = p.B1 - d @ p.B2
    ar14 = ar12
    ar15 = g.L1f - d @ g.L2f
    ar2 = [p.C1s @ m for m in (ar11, ar12, ar13, ar14, ar15)]
    nys, nu = p.n_ys, p.n_u
    zeros_u = np.zeros((nu, p.n_x))
    return ReducedBlocks(
        D=d,
        Ar11=ar11,
        Ar12=ar12,
        Ar13=ar13,
        Ar14=ar14,
        Ar15=ar15,
        Ar21=ar2[0],
        Ar22=ar2[1],
        Ar23=ar2[2],
        Ar24=ar2[3],
        Ar25=ar2[4],
        As11=ar11,
        As12=np.hstack([ar12, ar13]),
        As13=np.hstack([ar14, ar15]),
        As21=np.vstack([ar2[0], zeros_u]),
        As22=np.block(
            [[ar2[1], ar2[2]], [np.zeros((nu, nys)), np.zeros((nu, nu))]]
        ),
        As23=np.block(
            [[ar2[3], ar2[4]], [np.zeros((nu, nys)), np.zeros((nu, p.n_yf))]]
        ),
    )


# --------------------------------------------------------------------------
# Full hybrid state layout and flow field
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StateLayout:
    """Fixed ordering of the full closed-loop state vector.

    (delta_x, e_ys, e_us, tau_s, kappa_s, vhat1,   x_p, etil_ps,
     delta_y, e_f, tau_f, kappa_f, vhat2,          z_p, etil_pf)

    Counters are stored as reals with zero flow derivative.  Slices are
    precomputed; ``names`` lists one label per scalar coordinate and fixes
    the trajectory CSV column order.
    """

    n_x: int
    n_z: int
    n_u: int
    n_ys: int
    n_yf: int
    slices: dict = field(default_factory=dict, compare=False)
    names: tuple = field(default=(), compare=False)

    def __post_init__(self):
        spec = [
            ("delta_x", self.n_x),
            ("e_ys", self.n_ys),
            ("e_us", self.n_u),
            ("tau_s", 1),
            ("kappa_s", 1),
            ("vhat1", self.n_ys),
            ("x_p", self.n_x),
            ("etil_ps", self.n_ys),
            ("delta_y", self.n_z),
            ("e_f", self.n_yf),
            ("tau_f", 1),
            ("kappa_f", 1),
            ("vhat2", self.n_yf),
            ("z_p", self.n_z),
            ("etil_pf", self.n_yf),
        ]
        slices, names, at = {}, [], 0
        for name, width in spec:
            slices[name] = slice(at, at + width)
            if width == 1:
                names.append(name)
            else:
                names.extend(f"{name}_{i + 1}" for i in range(width))
            at += width
        object.__setattr__(self, "slices", slices)
        object.__setattr__(self, "names", tuple(names))
        object.__setattr__(self, "size", at)

    @classmethod
    def for_plant(cls, plant: PlantParams) -> "StateLayout":
        return cls(plant.n_x, plant.n_z, plant.n_u, plant.n_ys, plant.n_yf)

    def get(self, state: np.ndarray, name: str) -> np.ndarray:
        return state[self.slices[name]]

    def error_indices(self) -> np.ndarray:
        """Indices of (delta_x, e_ys, e_us, delta_y, e_f): the attractor coordinates."""
        idx = []
        for name in ("delta_x", "e_ys", "e_us", "delta_y", "e_f"):
            s = self.slices[name]
            idx.extend(range(s.start, s.stop))
        return np.asarray(idx, dtype=int)


@dataclass(frozen=True)
class FlowAffine:
    """Affine form of the closed-loop flow: x' = A x + c0 + u_s b_us + u_s' b_dus + v1' b_dv1 + v2' b_dv2."""

    layout: StateLayout
    A: np.ndarray
    c0: np.ndarray
    b_us: np.ndarray
    b_dus: np.ndarray
    b_dv1: np.ndarray
    b_dv2: np.ndarray
    hbar: HbarCoeffs
    f_dx_rows: np.ndarray  # delta_x' as a row map on the full state


def build_flow(plant: PlantParams, gains: ObserverGains) -> FlowAffine:
    """Assemble the affine flow of the full hybrid closed loop.

    The quasi-steady correction -(dHbar/dxi_s) F_xi_s inside the delta_y
    flow is formed analytically from the (linear) quasi-steady map rather
    than by numerical differentiation.
    """
    p = plant
    g = gains.validated(plant)
    fast = build_fast_blocks(p, g)
    hbar = build_hbar(p, g, fast)
    red = build_reduced_blocks(p, g, fast)
    lay = StateLayout.for_plant(p)
    n = lay.size
    sl = lay.slices
    eps = p.epsilon

    a = np.zeros((n, n))

    def put(rows: slice, cols: slice, block):
        a[rows, cols] += np.atleast_2d(block)

    # delta_x' = f_dx, expressed directly on raw coordinates.  The Hbar
    # substitution folds the quasi-steady coupling into the reduced blocks:
    # coefficient of delta_x is Ar11, of e_ys is Ar12, of e_us is Ar13,
    # of vhat1 is Ar14, of vhat2 is Ar15; delta_y and e_f enter through
    # (A12 - L1f C2f) and L1f.
    k_dy = p.A12 - g.L1f @ p.C2f
    f_dx = np.zeros((p.n_x, n))
    for name, block in (
        ("delta_x", red.Ar11),
        ("e_ys", red.Ar12),
        ("e_us", red.Ar13),
        ("delta_y", k_dy),
        ("e_f", g.L1f),
        ("vhat1", red.Ar14),
        ("vhat2", red.Ar15),
    ):
        f_dx[:, sl[name]] += block
    a[sl["delta_x"]] = f_dx
    a[sl["e_ys"]] = p.C1s @ f_dx

    # plant and held-output bookkeeping states
    put(sl["x_p"], sl["x_p"], p.A11)
    put(sl["x_p"], sl["z_p"], p.A12)
    xp_dot = a[sl["x_p"]].copy()
    a[sl["etil_ps"]] = -(p.C1s @ xp_dot)

    # fast error pair, 1/eps scaled, with the analytic quasi-steady correction
    mh = hbar.Gx + hbar.Ge @ p.C1s  # net delta_x sensitivity of Hbar along the flow
    put(sl["delta_y"], sl["delta_y"], fast.Af11 / eps)
    put(sl["delta_y"], sl["e_f"], fast.Af12 / eps)
    a[sl["delta_y"]] -= mh @ f_dx
    put(sl["e_f"], sl["delta_y"], (p.C2f @ fast.Af11) / eps)
    put(sl["e_f"], sl["e_f"], (p.C2f @ fast.Af12) / eps)
    a[sl["e_f"]] += p.C2s @ f_dx

    put(sl["z_p"], sl["x_p"], p.A21 / eps)
    put(sl["z_p"], sl["z_p"], p.A22 / eps)
    zp_dot = a[sl["z_p"]].copy()
    a[sl["etil_pf"]] = -(p.C2s @ xp_dot) - (p.C2f @ zp_dot)

    c0 = np.zeros(n)
    c0[sl["tau_s"]] = 1.0
    c0[sl["tau_f"]] = 1.0 / eps

    if p.n_u != 1:
        raise InvalidInput("affine flow assembly currently supports scalar u_s")
    b_us = np.zeros(n)
    b_us[sl["x_p"]] = p.B1.ravel()
    b_us[sl["z_p"]] = p.B2.ravel() / eps
    # u_s also enters etil_ps / etil_pf through the plant output derivatives
    b_us[sl["etil_ps"]] = -(p.C1s @ p.B1).ravel()
    b_us[sl["etil_pf"]] = -(p.C2s @ p.B1).ravel() - (p.C2f @ p.B2).ravel() / eps

    b_dus = np.zeros(n)
    b_dus[sl["e_us"]] = -1.0
    b_dus[sl["delta_y"]] = hbar.Gu.ravel()  # +Gu u_s' from -(dHbar/dxi_s) F_xi_s

    b_dv1 = np.zeros(n)
    b_dv1[sl["etil_ps"]] = -1.0
    b_dv2 = np.zeros(n)
    b_dv2[sl["etil_pf"]] = -1.0

    return FlowAffine(
        layout=lay,
        A=a,
        c0=c0,
        b_us=b_us,
        b_dus=b_dus,
        b_dv1=b_dv1,
        b_dv2=b_dv2,
        hbar=hbar,
        f_dx_rows=f_dx,
    )


def flow_field(flow: FlowAffine, state, u_s: float, du_s: float, v, dv) -> np.ndarray:
    """Evaluate the full state derivative at one point.

    ``v`` (the instantaneous noise pair) does not enter the flow, only the
    jump maps; it is accepted for signature symmetry with the jump side.
    ``dv`` is the pair (v1', v2').
    """
    del v
    x = np.asarray(state, dtype=float)
    dv1, dv2 = float(np.atleast_1d(dv[0])[0]), float(np.atleast_1d(dv[1])[0])
    out = (
        flow.A @ x
        + flow.c0
        + float(u_s) * flow.b_us
        + float(du_s) * flow.b_dus
        + dv1 * flow.b_dv1
        + dv2 * flow.b_dv2
    )
    if not np.all(np.isfinite(out)):
        raise numerics.NumericalBlowup("flow field produced non-finite derivative")
    return out
