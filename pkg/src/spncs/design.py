"""Observer-gain design: growth constants, the two design LMIs, and search.

Feasibility of each LMI is an eigenvalue sign test on a tiny symmetric
matrix, so no external SDP machinery is used: synthesis is an outer
bisection on the gain bound gamma over an inner derivative-free coordinate
descent (with restarts) on the free certificate variables and gain-template
parameters.  All searches are deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import model, numerics
from .model import FastBlocks, ObserverGains, PlantParams, ReducedBlocks
from .numerics import InvalidInput
from .protocols import ProtocolCertificate

LMI_TOL = 1e-8


class InfeasibleAtUpperBound(RuntimeError):
    """No feasible point found at the configured gamma ceiling."""


# --------------------------------------------------------------------------
# Growth constants of the error Lyapunov derivatives
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GrowthConstants:
    """Constants bounding network-error growth along slow / fast flows.

    L_s  = M_s |As22| / aW_lower_s     (self-growth of the slow error)
    A_Hs = M_s As21                    (slow-state injection)
    aws_v1 = M_s |Ar24|, aws_v2 = M_s |Ar25|  (held-noise injection)
    L_f  = M_f |Af22| / aW_lower_f,  A_Hf = M_f Af21  (fast channel)
    """

    L_s: float
    A_Hs: np.ndarray
    aws_v1: float
    aws_v2: float
    L_f: float
    A_Hf: np.ndarray


def build_growth_constants(
    reduced: ReducedBlocks,
    fast: FastBlocks,
    cert_s: ProtocolCertificate,
    cert_f: ProtocolCertificate,
) -> GrowthConstants:
    return GrowthConstants(
        L_s=cert_s.M * numerics.spectral_norm(reduced.As22) / cert_s.aW_lower,
        A_Hs=cert_s.M * reduced.As21,
        aws_v1=cert_s.M * numerics.spectral_norm(reduced.Ar24),
        aws_v2=cert_s.M * numerics.spectral_norm(reduced.Ar25),
        L_f=cert_f.M * numerics.spectral_norm(fast.Af22) / cert_f.aW_lower,
        A_Hf=cert_f.M * fast.Af21,
    )


# --------------------------------------------------------------------------
# LMI assembly
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LmiInstance:
    """One candidate certificate: which in {'boundary-layer', 'reduced'}."""

    which: str
    P: np.ndarray
    a_rho: float
    gamma: float
    eta1: float = 0.0

    def __post_init__(self):
        if self.which not in ("boundary-layer", "reduced"):
            raise InvalidInput("which must be 'boundary-layer' or 'reduced'")
        if self.a_rho <= 0 or self.gamma <= 0:
            raise InvalidInput("a_rho and gamma must be positive")
        if self.which == "reduced" and self.eta1 <= 0:
            raise InvalidInput("eta1 must be positive for the reduced LMI")
        p = numerics.symmetrize(np.asarray(self.P, dtype=float))
        if not numerics.is_positive_definite(p):
            raise InvalidInput("P must be positive definite")
        object.__setattr__(self, "P", p)


def _lmi_blocks(p, a11, a12, a_h, a_rho, gamma, cert, eta1=0.0):
    ul = p @ a11 + a11.T @ p + a_rho * np.eye(a11.shape[0]) + a_h.T @ a_h
    if eta1:
        ul = ul + eta1 * (p.T @ p)
    ur = p @ a12
    m = a12.shape[1]
    lr = (a_rho * cert.aW_upper**2 - gamma**2 * cert.aW_lower**2) * np.eye(m)
    return numerics.symmetrize(np.block([[ul, ur], [ur.T, lr]]))


def assemble_lmi_bl(
    fast: FastBlocks, cert_f: ProtocolCertificate, inst: LmiInstance
) -> np.ndarray:
    """Boundary-layer design LMI (negative semidefinite iff feasible)."""
    if inst.which != "boundary-layer":
        raise InvalidInput("instance is not tagged boundary-layer")
    a_hf = cert_f.M * fast.Af21
    return _lmi_blocks(inst.P, fast.Af11, fast.Af12, a_hf, inst.a_rho, inst.gamma, cert_f)


def assemble_lmi_reduced(
    reduced: ReducedBlocks, cert_s: ProtocolCertificate, inst: LmiInstance
) -> np.ndarray:
    """Reduced (slow) design LMI, including the eta1 P^T P term."""
    if inst.which != "reduced":
        raise InvalidInput("instance is not tagged reduced")
    a_hs = cert_s.M * reduced.As21
    return _lmi_blocks(
        inst.P, reduced.As11, reduced.As12, a_hs, inst.a_rho, inst.gamma, cert_s, inst.eta1
    )


# --------------------------------------------------------------------------
# Gain templates
# --------------------------------------------------------------------------


def _entry_term(entry):
    """Template entry -> (constant, {param: coeff}). Accepts 3, "n1", "-n2"."""
    if isinstance(entry, (int, float)):
        return float(entry), {}
    if isinstance(entry, str):
        name = entry.strip()
        coeff = 1.0
        if name.startswith("-"):
            coeff, name = -1.0, name[1:].strip()
        elif name.startswith("+"):
            name = name[1:].strip()
        if not name:
            raise InvalidInput(f"bad template entry {entry!r}")
        return 0.0, {name: coeff}
    raise InvalidInput(f"bad template entry {entry!r}")


@dataclass(frozen=True)
class GainTemplate:
    """Parametrised observer gains: each matrix entry is a number or ±param."""

    L1s: list
    L1f: list
    L2s: list
    L2f: list
    initial: dict  # param name -> starting value

    def param_names(self) -> tuple:
        names = []
        for mat in (self.L1s, self.L1f, self.L2s, self.L2f):
            for row in mat:
                for entry in row:
                    _, terms = _entry_term(entry)
                    for nm in terms:
                        if nm not in names:
                            names.append(nm)
        missing = [nm for nm in names if nm not in self.initial]
        if missing:
            raise InvalidInput(f"template parameters without initial values: {missing}")
        return tuple(names)

    def instantiate(self, values: dict) -> ObserverGains:
        def build(mat):
            out = np.zeros((len(mat), len(mat[0])))
            for i, row in enumerate(mat):
                for j, entry in enumerate(row):
                    const, terms = _entry_term(entry)
                    out[i, j] = const + sum(c * values[nm] for nm, c in terms.items())
            return out

        return ObserverGains(
            L1s=build(self.L1s), L1f=build(self.L1f), L2s=build(self.L2s), L2f=build(self.L2f)
        )


# --------------------------------------------------------------------------
# Derivative-free search
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchConfig:
    seed: int = 0
    restarts: int = 32
    sweeps: int = 200
    bisect_tol: float = 1e-3
    gamma_max: float = 50.0
    a_rho_floor: float = 1e-4
    a_rho_ceil: float = 1e3
    lmi_tol: float = LMI_TOL
    pipeline_samples: int = 4096


def _chol_unpack(theta, dim):
    """Lower-triangular Cholesky factor from free params (diag via exp)."""
    l = np.zeros((dim, dim))
    k = 0
    for i in range(dim):
        for j in range(i + 1):
            l[i, j] = np.exp(min(theta[k], 30.0)) if i == j else theta[k]
            k += 1
    return l


def _spd_from_theta(theta, dim):
    l = _chol_unpack(theta, dim)
    return numerics.symmetrize(l @ l.T)


def _coordinate_descent(
    fn, theta0, rng, sweeps, target=None, step0=0.7, frozen=None, reset_below=None
):
    """Minimise fn by cyclic coordinate moves with shrinking steps.

    ``frozen`` masks coordinates that must not move.  ``reset_below``
    restores the initial step sizes the first time the score drops under
    that threshold (used to re-open the search after a penalty phase).
    """
    theta = np.asarray(theta0, dtype=float).copy()
    best = fn(theta)
    step = np.full(theta.size, step0)
    active = np.arange(theta.size) if frozen is None else np.nonzero(~frozen)[0]
    order = active.copy()
    resetted = reset_below is None or best < reset_below
    for _ in range(sweeps):
        if target is not None and best <= target:
            break
        rng.shuffle(order)
        improved = False
        for i in order:
            for s in (+1.0, -1.0):
                cand = theta.copy()
                cand[i] += s * step[i]
                val = fn(cand)
                if val < best:
                    theta, best = cand, val
                    improved = True
                    break
        if not resetted and best < reset_below:
            step = np.full(theta.size, step0)
            resetted = True
            continue
        if not improved:
            step *= 0.5
            if step.max() < 1e-5:
                break
    return theta, best


def _feasibility_search(make_lmax, n_theta, cfg: SearchConfig, rng, warm=None, sweeps=None):
    """Multi-restart descent on lambda_max; returns (best value, best theta)."""
    sweeps = cfg.sweeps if sweeps is None else sweeps
    best_val, best_theta = np.inf, None
    starts = []
    if warm is not None:
        starts.append(np.asarray(warm, dtype=float))
    while len(starts) < cfg.restarts:
        starts.append(rng.normal(0.0, 1.5, n_theta))
    for theta0 in starts:
        theta, val = _coordinate_descent(make_lmax, theta0, rng, sweeps, target=cfg.lmi_tol)
        if val < best_val:
            best_val, best_theta = val, theta
        if best_val <= cfg.lmi_tol:
            break
    return best_val, best_theta


# The search loops evaluate tens of thousands of candidate LMIs; they use
# LAPACK's symmetric eigensolver for speed.  Every *reported* result is
# re-verified through numerics.sym_eigvals (verify_design / the assemble
# functions), so the Jacobi route stays the arbiter of feasibility.
def _fast_lmax(m) -> float:
    return float(np.linalg.eigvalsh(m)[-1])


def _bl_lmax(plant, template, cert_f, gamma, cfg):
    """lambda_max of the boundary-layer LMI as a function of free params."""
    names = [nm for nm in template.param_names() if _template_touches(template.L2f, nm)]
    n_p = plant.n_z * (plant.n_z + 1) // 2
    fixed_fast = None
    if not names:
        fixed_fast = model.build_fast_blocks(plant, template.instantiate(template.initial))

    def fn(theta):
        if fixed_fast is None:
            vals = dict(template.initial)
            vals.update({nm: theta[i] for i, nm in enumerate(names)})
            try:
                fast = model.build_fast_blocks(plant, template.instantiate(vals))
            except (model.DesignInfeasible, numerics.SingularMatrix):
                return 1e6
        else:
            fast = fixed_fast
        p = _spd_from_theta(theta[len(names) : len(names) + n_p], plant.n_z)
        a_rho = float(np.clip(np.exp(theta[-1]), cfg.a_rho_floor, cfg.a_rho_ceil))
        a_hf = cert_f.M * fast.Af21
        m = _lmi_blocks(p, fast.Af11, fast.Af12, a_hf, a_rho, gamma, cert_f)
        return _fast_lmax(m)

    return fn, len(names) + n_p + 1, names


def _reduced_lmax(plant, template, l2f_values, cert_s, gamma, cfg):
    names = [
        nm
        for nm in template.param_names()
        if any(_template_touches(m, nm) for m in (template.L1s, template.L1f, template.L2s))
    ]
    n_p = plant.n_x * (plant.n_x + 1) // 2
    # L2f is fixed during the reduced stage, so the fast block (and its
    # Hurwitz check) happens once; the reduced blocks are then plain matmuls.
    base_vals = dict(template.initial)
    base_vals.update(l2f_values)
    fast = model.build_fast_blocks(plant, template.instantiate(base_vals))
    af11_inv = numerics.inv(fast.Af11)
    p_, zeros_us = plant, np.zeros((plant.n_u, plant.n_x))

    def fn(theta):
        vals = dict(base_vals)
        vals.update({nm: theta[i] for i, nm in enumerate(names)})
        g = template.instantiate(vals)
        d = (p_.A12 - g.L1f @ p_.C2f) @ af11_inv
        ar11 = (p_.A11 - g.L1s @ p_.C1s - g.L1f @ p_.C2s) - d @ (
            p_.A21 - g.L2s @ p_.C1s - g.L2f @ p_.C2s
        )
        ar12 = g.L1s - d @ g.L2s
        ar13 = p_.B1 - d @ p_.B2
        as12 = np.hstack([ar12, ar13])
        a_hs = cert_s.M * np.vstack([p_.C1s @ ar11, zeros_us])
        p = _spd_from_theta(theta[len(names) : len(names) + n_p], plant.n_x)
        a_rho = float(np.clip(np.exp(theta[-2]), cfg.a_rho_floor, cfg.a_rho_ceil))
        eta1 = float(np.clip(np.exp(theta[-1]), 1e-9, 1e6))
        m = _lmi_blocks(p, ar11, as12, a_hs, a_rho, gamma, cert_s, eta1)
        return _fast_lmax(m)

    return fn, len(names) + n_p + 2, names


def _template_touches(mat, name) -> bool:
    for row in mat:
        for entry in row:
            _, terms = _entry_term(entry)
            if name in terms:
                return True
    return False


@dataclass
class StageResult:
    """Outcome of one min-gamma stage."""

    which: str
    gamma: float
    P: np.ndarray
    a_rho: float
    eta1: float
    param_values: dict
    lmax: float


def min_gamma(
    which: str,
    plant: PlantParams,
    template: GainTemplate,
    cert_s: ProtocolCertificate,
    cert_f: ProtocolCertificate,
    cfg: SearchConfig,
    l2f_values: dict | None = None,
) -> StageResult:
    """Bisection on gamma over a nested feasibility search.

    Returns the smallest gamma (within bisect_tol) for which the requested
    LMI admits a certificate; raises InfeasibleAtUpperBound when even
    cfg.gamma_max fails.
    """
    rng = np.random.default_rng(np.random.Philox(key=cfg.seed))
    if which == "boundary-layer":
        build = lambda gamma: _bl_lmax(plant, template, cert_f, gamma, cfg)
    elif which == "reduced":
        build = lambda gamma: _reduced_lmax(plant, template, l2f_values or {}, cert_s, gamma, cfg)
    else:
        raise InvalidInput("which must be 'boundary-layer' or 'reduced'")

    def feasible(gamma, warm):
        fn, n_theta, names = build(gamma)
        val, theta = _feasibility_search(fn, n_theta, cfg, rng, warm=warm)
        return val <= cfg.lmi_tol, val, theta, names

    ok, val, theta, names = feasible(cfg.gamma_max, None)
    if not ok:
        raise InfeasibleAtUpperBound(
            f"{which} LMI infeasible at gamma_max={cfg.gamma_max} (lambda_max={val:.3e})"
        )
    lo, hi, hi_state = 0.0, cfg.gamma_max, (val, theta)
    while hi - lo > cfg.bisect_tol:
        mid = 0.5 * (lo + hi)
        ok, val, th, _ = feasible(mid, hi_state[1])
        if ok:
            hi, hi_state = mid, (val, th)
        else:
            lo = mid
    val, theta = hi_state
    n_free = len(names)
    if which == "boundary-layer":
        dim = plant.n_z
        p = _spd_from_theta(theta[n_free : n_free + dim * (dim + 1) // 2], dim)
        a_rho = float(np.clip(np.exp(theta[-1]), cfg.a_rho_floor, cfg.a_rho_ceil))
        eta1 = 0.0
    else:
        dim = plant.n_x
        p = _spd_from_theta(theta[n_free : n_free + dim * (dim + 1) // 2], dim)
        a_rho = float(np.clip(np.exp(theta[-2]), cfg.a_rho_floor, cfg.a_rho_ceil))
        eta1 = float(np.clip(np.exp(theta[-1]), 1e-9, 1e6))
    values = {nm: float(theta[i]) for i, nm in enumerate(names)}
    return StageResult(which=which, gamma=hi, P=p, a_rho=a_rho, eta1=eta1,
                       param_values=values, lmax=val)


# --------------------------------------------------------------------------
# Full design result
# --------------------------------------------------------------------------


@dataclass
class DesignResult:
    gains: ObserverGains
    Pf: np.ndarray
    Ps: np.ndarray
    gamma_f: float
    gamma_s: float
    a_rho_f: float
    a_rho_s: float
    eta1: float
    objective: float | None = None
    template_params: dict = field(default_factory=dict)
    search_meta: dict = field(default_factory=dict)


def verify_design(
    plant: PlantParams,
    result: DesignResult,
    cert_s: ProtocolCertificate,
    cert_f: ProtocolCertificate,
    tol: float = LMI_TOL,
) -> dict:
    """Re-check every invariant of a DesignResult; returns margins + verdict."""
    report = {}
    try:
        gains = result.gains.validated(plant)
        report["fast_block_hurwitz"] = True
    except model.DesignInfeasible:
        report["fast_block_hurwitz"] = False
        report["passed"] = False
        return report
    fast = model.build_fast_blocks(plant, gains)
    red = model.build_reduced_blocks(plant, gains, fast)
    inst_f = LmiInstance("boundary-layer", result.Pf, result.a_rho_f, result.gamma_f)
    inst_s = LmiInstance("reduced", result.Ps, result.a_rho_s, result.gamma_s, result.eta1)
    m_f = assemble_lmi_bl(fast, cert_f, inst_f)
    m_s = assemble_lmi_reduced(red, cert_s, inst_s)
    report["lmax_boundary_layer"] = float(numerics.sym_eigvals(m_f)[-1])
    report["lmax_reduced"] = float(numerics.sym_eigvals(m_s)[-1])
    report["Pf_min_eig"] = float(numerics.sym_eigvals(result.Pf)[0])
    report["Ps_min_eig"] = float(numerics.sym_eigvals(result.Ps)[0])
    report["tol"] = tol
    report["passed"] = bool(
        report["lmax_boundary_layer"] <= tol
        and report["lmax_reduced"] <= tol
        and report["Pf_min_eig"] > numerics.POSDEF_MIN_EIG
        and report["Ps_min_eig"] > numerics.POSDEF_MIN_EIG
    )
    return report


def design_by_min_gamma(
    plant: PlantParams,
    template: GainTemplate,
    cert_s: ProtocolCertificate,
    cert_f: ProtocolCertificate,
    cfg: SearchConfig,
) -> DesignResult:
    """Two-stage synthesis: boundary-layer stage first, then the reduced stage."""
    bl = min_gamma("boundary-layer", plant, template, cert_s, cert_f, cfg)
    red = min_gamma(
        "reduced", plant, template, cert_s, cert_f, cfg, l2f_values=bl.param_values
    )
    values = dict(template.initial)
    values.update(bl.param_values)
    values.update(red.param_values)
    gains = template.instantiate(values)
    return DesignResult(
        gains=gains,
        Pf=bl.P,
        Ps=red.P,
        gamma_f=bl.gamma,
        gamma_s=red.gamma,
        a_rho_f=bl.a_rho,
        a_rho_s=red.a_rho,
        eta1=red.eta1,
        template_params=values,
        search_meta={
            "seed": cfg.seed,
            "restarts": cfg.restarts,
            "sweeps": cfg.sweeps,
            "bisect_tol": cfg.bisect_tol,
            "mode": "min-gamma",
        },
    )


def maximize_mati_objective(
    plant: PlantParams,
    template: GainTemplate,
    cert_s: ProtocolCertificate,
    cert_f: ProtocolCertificate,
    cfg: SearchConfig,
    pipeline_kwargs: dict,
    evaluate_only: bool = False,
) -> DesignResult:
    """Search gains and certificates maximising the product eps* x T*.

    ``pipeline_kwargs`` carries the timing / pipeline knobs (lambda stars,
    eta_s split, miati, fractions) forwarded to the constants pipeline; the
    objective of a candidate is eps* times T(L_f, gamma_f, lambda_f_star).
    Candidates whose LMIs fail are rejected.  With ``evaluate_only`` the
    template's initial parameter values are scored without searching.
    """
    from . import bounds  # local import; bounds depends on this module's types

    rng = np.random.default_rng(np.random.Philox(key=cfg.seed + 1))
    names = list(template.param_names())
    n_pf = plant.n_z * (plant.n_z + 1) // 2
    n_ps = plant.n_x * (plant.n_x + 1) // 2
    # layout: gains | chol Pf | log a_rho_f | log gamma_f | chol Ps | log a_rho_s | log eta1 | log gamma_s
    n_theta = len(names) + n_pf + 2 + n_ps + 3

    def unpack(theta):
        at = len(names)
        vals = dict(template.initial)
        vals.update({nm: float(theta[i]) for i, nm in enumerate(names)})
        pf = _spd_from_theta(theta[at : at + n_pf], plant.n_z)
        at += n_pf
        a_rho_f = float(np.clip(np.exp(theta[at]), cfg.a_rho_floor, cfg.a_rho_ceil))
        gamma_f = float(np.clip(np.exp(theta[at + 1]), 1e-4, cfg.gamma_max))
        at += 2
        ps = _spd_from_theta(theta[at : at + n_ps], plant.n_x)
        at += n_ps
        a_rho_s = float(np.clip(np.exp(theta[at]), cfg.a_rho_floor, cfg.a_rho_ceil))
        eta1 = float(np.clip(np.exp(theta[at + 1]), 1e-9, 1e6))
        gamma_s = float(np.clip(np.exp(theta[at + 2]), 1e-4, cfg.gamma_max))
        return vals, pf, a_rho_f, gamma_f, ps, a_rho_s, eta1, gamma_s

    _INFEASIBLE_OFFSET = 1e3  # any infeasible score dominates any feasible one

    def build_result(theta):
        """(result, violation): violation <= lmi_tol means feasible."""
        vals, pf, a_rho_f, gamma_f, ps, a_rho_s, eta1, gamma_s = unpack(theta)
        try:
            gains = template.instantiate(vals)
            fast = model.build_fast_blocks(plant, gains)
            red = model.build_reduced_blocks(plant, gains, fast)
        except (model.DesignInfeasible, numerics.SingularMatrix, InvalidInput):
            return None, np.inf
        m_f = _lmi_blocks(pf, fast.Af11, fast.Af12, cert_f.M * fast.Af21,
                          a_rho_f, gamma_f, cert_f)
        m_s = _lmi_blocks(ps, red.As11, red.As12, cert_s.M * red.As21,
                          a_rho_s, gamma_s, cert_s, eta1)
        violation = max(_fast_lmax(m_f), _fast_lmax(m_s))
        result = DesignResult(
            gains=gains, Pf=pf, Ps=ps, gamma_f=gamma_f, gamma_s=gamma_s,
            a_rho_f=a_rho_f, a_rho_s=a_rho_s, eta1=eta1, template_params=vals,
        )
        return result, violation

    def objective(theta) -> float:
        result, violation = build_result(theta)
        if result is None or violation > cfg.lmi_tol:
            # infeasible region: descend on the LMI violation itself
            return _INFEASIBLE_OFFSET + min(violation, 1e6)
        try:
            obj = bounds.mati_objective(
                plant, result, cert_s, cert_f,
                samples=cfg.pipeline_samples, **pipeline_kwargs,
            )
        except (bounds.InvalidConfig, numerics.SingularMatrix, InvalidInput):
            return _INFEASIBLE_OFFSET
        return -obj

    def seed_theta():
        theta = np.zeros(n_theta)
        for i, nm in enumerate(names):
            theta[i] = template.initial[nm]
        # neutral spd starts, mid-range scalars
        at = len(names)
        theta[at + n_pf] = np.log(1.0)
        theta[at + n_pf + 1] = np.log(2.0)
        theta[at + n_pf + 2 + n_ps] = np.log(0.1)
        theta[at + n_pf + 2 + n_ps + 1] = np.log(0.1)
        theta[at + n_pf + 2 + n_ps + 2] = np.log(4.0)
        return theta

    evaluations = 0

    def counted(theta):
        nonlocal evaluations
        evaluations += 1
        return objective(theta)

    base = seed_theta()
    if evaluate_only:
        # polish only the certificate variables so the fixed gains get a score
        gain_mask = np.zeros(n_theta, dtype=bool)
        gain_mask[: len(names)] = True

        def frozen(theta_free):
            theta = base.copy()
            theta[~gain_mask] = theta_free
            return counted(theta)

        theta_free, best = _coordinate_descent(
            frozen, base[~gain_mask], rng, max(40, cfg.sweeps // 4)
        )
        theta = base.copy()
        theta[~gain_mask] = theta_free
    else:
        best_theta, best = None, np.inf
        starts = [base]
        while len(starts) < cfg.restarts:
            t = base.copy()
            t[: len(names)] += rng.normal(0.0, 0.05, len(names))
            t[len(names) :] += rng.normal(0.0, 1.0, n_theta - len(names))
            starts.append(t)
        for t0 in starts:
            t, val = _coordinate_descent(counted, t0, rng, cfg.sweeps)
            if val < best:
                best_theta, best = t, val
        theta = best_theta
    if not np.isfinite(best) or best > 0.0:
        raise InfeasibleAtUpperBound("no feasible design found while maximising eps* T*")
    result, violation = build_result(theta)
    if not verify_design(plant, result, cert_s, cert_f, cfg.lmi_tol)["passed"]:
        raise InfeasibleAtUpperBound("search returned a point failing re-verification")
    result.objective = -best
    result.search_meta = {
        "seed": cfg.seed,
        "restarts": cfg.restarts,
        "sweeps": cfg.sweeps,
        "evaluations": evaluations,
        "mode": "evaluate" if evaluate_only else "maximize-mati",
        "pipeline_samples": cfg.pipeline_samples,
    }
    return result
