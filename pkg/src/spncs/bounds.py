"""Transmission-interval bounds and the stability-constants pipeline.

This module turns a verified design into quantitative guarantees:

* ``t_bound``     -- the closed-form upper bound on the slow MATI and on the
                     stretched-time fast budget T*.
* ``solve_phi``   -- the scalar Riccati comparison ODE whose transit time
                     from 1/lam to lam equals ``t_bound``.
* jump / interconnection constants -- bounds on how much the fast energy
  inflates at slow-channel resets and on the two-time-scale cross terms.
* ``constants_pipeline`` -- the end-to-end chain producing the admissible
  epsilon ceiling, the fast MATI, the exponential-envelope constants, and
  the derivative-input-to-state gains, with every scalar tagged by formula.

Randomised maximisations use a counter-based Philox stream keyed by the
seed, so results are reproducible regardless of batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model, numerics, protocols
from .design import DesignResult, GrowthConstants, build_growth_constants
from .model import PlantParams
from .numerics import InvalidInput
from .protocols import ProtocolCertificate, ProtocolState

SAMPLING_INFLATION = 1.05
VALIDATION_SLACK = 1e-9


class InvalidConfig(ValueError):
    """Pipeline knob outside its admissible interval."""


# --------------------------------------------------------------------------
# The MATI bound function and its comparison ODE
# --------------------------------------------------------------------------


def t_bound(L: float, gamma: float, lam: float) -> float:
    """Upper bound on the allowable transmission interval.

    Three branches depending on the sign of gamma - L, continuous across
    gamma = L; for L = 0 it reduces to (arctan(1/lam) - arctan(lam)) / gamma.
    """
    if not (0.0 <= lam < 1.0):
        raise InvalidInput("lam must lie in [0, 1)")
    if gamma <= 0.0 or L < 0.0:
        raise InvalidInput("need gamma > 0 and L >= 0")
    if L == 0.0:
        hi = math.atan(1.0 / lam) if lam > 0.0 else 0.5 * math.pi
        return (hi - math.atan(lam)) / gamma
    r = gamma / L
    if r == 1.0:
        return (1.0 - lam) / (L * (1.0 + lam))
    r1 = math.sqrt(abs(r * r - 1.0))
    r2 = r1 * (1.0 - lam) / (2.0 * (lam / (1.0 + lam)) * (r - 1.0) + 1.0 + lam)
    if gamma > L:
        return math.atan(r2) / (L * r1)
    return math.atanh(r2) / (L * r1)


def solve_phi(
    L: float, gamma: float, eta: float, lam_star: float, horizon: float, n: int = 10001
):
    """Integrate phi' = -2 L phi - gamma ((1+eta) phi^2 + 1), phi(0) = 1/lam_star.

    Returns (t, phi) sampled on n >= 10^4 points.  The right side is
    strictly negative for phi > 0, so the solution is strictly decreasing;
    this is asserted rather than assumed.
    """
    if lam_star <= 0.0 or lam_star >= 1.0:
        raise InvalidInput("lam_star must lie in (0, 1)")
    if horizon <= 0.0 or n < 10001:
        raise InvalidInput("need a positive horizon and at least 10001 samples")
    ts = np.linspace(0.0, horizon, n)
    h = ts[1] - ts[0]
    phi = np.empty(n)
    phi[0] = 1.0 / lam_star

    def f(p):
        return -2.0 * L * p - gamma * ((1.0 + eta) * p * p + 1.0)

    for i in range(n - 1):
        p = phi[i]
        k1 = f(p)
        k2 = f(p + 0.5 * h * k1)
        k3 = f(p + 0.5 * h * k2)
        k4 = f(p + h * k3)
        phi[i + 1] = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(phi)):
        raise numerics.NumericalBlowup("phi integration blew up")
    assert np.all(np.diff(phi) < 0.0), "phi must be strictly decreasing"
    return ts, phi


def phi_transit_time(L: float, gamma: float, lam: float, n: int = 200001) -> float:
    """Time for phi (eta = 0) to fall from 1/lam to lam; oracle for t_bound."""
    horizon = 2.0 * t_bound(L, gamma, lam)
    ts, phi = solve_phi(L, gamma, 0.0, lam, horizon, n)
    below = np.nonzero(phi <= lam)[0]
    if below.size == 0:
        raise numerics.NumericalBlowup("phi never reached lam on the horizon")
    i = below[0]
    # linear interpolation inside the bracketing step
    t0, t1, p0, p1 = ts[i - 1], ts[i], phi[i - 1], phi[i]
    return float(t0 + (p0 - lam) / (p0 - p1) * (t1 - t0))


@dataclass(frozen=True)
class SlowTimingCert:
    """Slow-channel timing certificate per the comparison lemma.

    Requires tau_miati_s <= tau_mati_s < t_bound(L_s, gamma_s, lam_s) and
    that phi started at 1/lam_star stays in [lam_star, 1/lam_star] over
    [0, tau_mati_s] with the chosen eta_s = sum(eta_s_parts).
    """

    tau_mati_s: float
    tau_miati_s: float
    lam_star: float
    eta_s_parts: tuple
    phi_end: float
    t_slow_bound: float


def make_slow_timing_cert(
    growth: GrowthConstants,
    gamma_s: float,
    lam_s: float,
    tau_mati_s: float,
    tau_miati_s: float,
    lam_star: float,
    eta_s_parts,
    verify: bool = True,
) -> SlowTimingCert:
    parts = tuple(float(v) for v in eta_s_parts)
    if len(parts) != 3 or any(v <= 0 for v in parts):
        raise InvalidConfig("eta_s must be three positive parts")
    if not (0.0 < tau_miati_s <= tau_mati_s):
        raise InvalidConfig("need 0 < tau_miati_s <= tau_mati_s")
    t_slow = t_bound(growth.L_s, gamma_s, lam_s)
    if not tau_mati_s < t_slow:
        raise InvalidConfig(
            f"tau_mati_s={tau_mati_s} must be below the slow bound {t_slow:.6g}"
        )
    if not (lam_s < lam_star < 1.0):
        raise InvalidConfig("lam_star must lie in (lam_s, 1)")
    phi_end = float("nan")
    if verify:
        _, phi = solve_phi(growth.L_s, gamma_s, sum(parts), lam_star, tau_mati_s)
        phi_end = float(phi[-1])
        if phi_end < lam_star or phi.max() > 1.0 / lam_star + 1e-12:
            raise InvalidConfig(
                f"phi certificate failed: phi(tau_mati_s)={phi_end:.6g} < lam_star={lam_star}"
            )
    return SlowTimingCert(tau_mati_s, tau_miati_s, lam_star, parts, phi_end, t_slow)


# --------------------------------------------------------------------------
# Lyapunov envelopes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Envelopes:
    aVs_lower: float
    aVs_upper: float
    aVf_lower: float
    aVf_upper: float
    aU_lower_s: float
    aU_upper_s: float
    aU_lower_f: float
    aU_upper_f: float
    a_s: float
    a_f: float


def lyapunov_envelopes(
    result: DesignResult,
    cert_s: ProtocolCertificate,
    cert_f: ProtocolCertificate,
    lam_s_star: float,
    lam_f_star: float,
) -> Envelopes:
    """Quadratic sandwich constants of the slow / fast energies.

    aU_lower = min(lambda_min(P), gamma * lam_star * aW_lower^2) and the
    mirrored max for the upper bound; the flow decay rates are
    a = a_rho * min(1, aW_lower^2).
    """
    evs = numerics.sym_eigvals(result.Ps)
    evf = numerics.sym_eigvals(result.Pf)
    aVs_lo, aVs_hi = float(evs[0]), float(evs[-1])
    aVf_lo, aVf_hi = float(evf[0]), float(evf[-1])
    return Envelopes(
        aVs_lower=aVs_lo,
        aVs_upper=aVs_hi,
        aVf_lower=aVf_lo,
        aVf_upper=aVf_hi,
        aU_lower_s=min(aVs_lo, result.gamma_s * lam_s_star * cert_s.aW_lower**2),
        aU_upper_s=max(aVs_hi, result.gamma_s / lam_s_star * cert_s.aW_upper**2),
        aU_lower_f=min(aVf_lo, result.gamma_f * lam_f_star * cert_f.aW_lower**2),
        aU_upper_f=max(aVf_hi, result.gamma_f / lam_f_star * cert_f.aW_upper**2),
        a_s=result.a_rho_s * min(1.0, cert_s.aW_lower**2),
        a_f=result.a_rho_f * min(1.0, cert_f.aW_lower**2),
    )


# --------------------------------------------------------------------------
# Randomised constants: fast-energy inflation at slow resets
# --------------------------------------------------------------------------


def _philox(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.uint64(seed) << np.uint64(16) | np.uint64(stream)))


def _unit_rows(rng, count, dim):
    x = rng.normal(size=(count, dim))
    n = np.linalg.norm(x, axis=1, keepdims=True)
    n[n == 0.0] = 1.0
    return x / n


def _slow_reset_variants(proto_y: ProtocolState, proto_u: ProtocolState):
    """All (node_y, node_u) reset patterns a slow transmission can produce."""
    variants = []
    for ny in range(proto_y.partition.count):
        for nu in range(proto_u.partition.count):
            variants.append((ny, nu))
    return variants


@dataclass(frozen=True)
class JumpInflation:
    lam1: float
    lam2: float
    lam3: float
    lam4: float
    lam5: float
    sampling: dict = field(default_factory=dict, compare=False)

    def as_tuple(self):
        return (self.lam1, self.lam2, self.lam3, self.lam4, self.lam5)


class _JumpGeometry:
    """Vectorised evaluation of the fast-coordinate shift at slow resets."""

    def __init__(self, plant, result, proto_y, proto_u):
        gains = result.gains.validated(plant)
        fast = model.build_fast_blocks(plant, gains)
        self.hbar = model.build_hbar(plant, gains, fast)
        self.pf = numerics.symmetrize(np.asarray(result.Pf, dtype=float))
        self.plant = plant
        self.proto_y = proto_y
        self.proto_u = proto_u
        self.variants = _slow_reset_variants(proto_y, proto_u)
        nys, nu = plant.n_ys, plant.n_u
        self.masks = []
        for ny, nu_ in self.variants:
            my = np.zeros(nys)
            my[proto_y.partition.block_slice(ny)] = 1.0
            mu_ = np.zeros(nu)
            mu_[proto_u.partition.block_slice(nu_)] = 1.0
            self.masks.append((my, mu_))
        # round-robin W weights vary with the counter; precompute the cycle
        self.wy_weights = self._weight_cycle(proto_y, nys)
        self.wu_weights = self._weight_cycle(proto_u, nu)

    @staticmethod
    def _weight_cycle(proto, dim):
        if proto.kind != "round-robin" or proto.partition.count == 1:
            return np.ones((1, dim))
        ell = proto.partition.count
        return np.stack([protocols._rr_weights(proto, k) for k in range(ell)])

    def ws(self, e_ys, e_us, kappas) -> np.ndarray:
        """Combined slow W over a batch: rows of e_ys/e_us, counter per row."""
        wy2 = np.einsum(
            "nd,nd->n", e_ys**2, self.wy_weights[kappas % self.wy_weights.shape[0]]
        )
        wu2 = np.einsum(
            "nd,nd->n", e_us**2, self.wu_weights[kappas % self.wu_weights.shape[0]]
        )
        return np.sqrt(wy2 + wu2)

    def shift_e(self, e_ys, e_us, variant) -> np.ndarray:
        my, mu_ = self.masks[variant]
        return (e_ys * my) @ self.hbar.Ge.T + (e_us * mu_) @ self.hbar.Gu.T

    def shift_v(self, vhat1, v1, variant) -> np.ndarray:
        my, _ = self.masks[variant]
        return ((vhat1 - v1) * my) @ self.hbar.Ge.T

    def qf(self, x) -> np.ndarray:
        return np.einsum("ni,ij,nj->n", x, self.pf, x)

    def bf(self, x, y) -> np.ndarray:
        return np.einsum("ni,ij,nj->n", x, self.pf, y)


def slow_jump_lambdas(
    plant: PlantParams,
    result: DesignResult,
    proto_y: ProtocolState,
    proto_u: ProtocolState,
    samples: int = 100_000,
    seed: int = 0,
    validate: bool = True,
    validation_samples: int = 1_000_000,
) -> JumpInflation:
    """Smallest constants bounding the fast-energy change at slow resets.

    The fast coordinate shifts by

        delta = Ge (e_ys - e_ys+ + vhat1 - vhat1+) + Gu (e_us - e_us+)

    and the bound fitted is, with m = max(|vhat1|, |vhat2|, |v1|),

        Vf(dy + delta) - Vf(dy) <= lam1 Ws^2 + lam2 Ws sqrt(Vf)
                                   + lam3 m^2 + lam4 sqrt(Vf) m + lam5 Ws m.

    Each constant is the sampled supremum of its exact term over random
    unit directions (worst reset pattern per sample), spread over four
    magnitude decades, inflated by 5%, then revalidated on fresh joint
    samples.  Validation failures raise: they mean the margin was too thin.
    The delta_y-cross terms use the exact Cauchy-Schwarz maximiser over
    delta_y, so only error/noise directions need sampling.
    """
    geo = _JumpGeometry(plant, result, proto_y, proto_u)
    nys, nu, nyf = plant.n_ys, plant.n_u, plant.n_yf
    rng = _philox(seed, 1)
    scale = 10.0 ** rng.integers(-2, 2, size=samples)  # four magnitude decades
    e_dirs = _unit_rows(rng, samples, nys + nu) * scale[:, None]
    v_dirs = _unit_rows(rng, samples, 2 * nys + nyf) * scale[:, None]
    kappas = rng.integers(
        0, 4 * max(geo.wy_weights.shape[0], geo.wu_weights.shape[0]), samples
    )
    e_ys, e_us = e_dirs[:, :nys], e_dirs[:, nys:]
    vhat1, v1 = v_dirs[:, :nys], v_dirs[:, nys : 2 * nys]
    vhat2 = v_dirs[:, 2 * nys :]
    w = geo.ws(e_ys, e_us, kappas)
    m = np.maximum.reduce(
        [
            np.linalg.norm(vhat1, axis=1),
            np.linalg.norm(vhat2, axis=1),
            np.linalg.norm(v1, axis=1),
        ]
    )
    sup = [0.0] * 5
    w_ok, m_ok = w > 0.0, m > 0.0
    for variant in range(len(geo.variants)):
        d_e = geo.shift_e(e_ys, e_us, variant)
        d_v = geo.shift_v(vhat1, v1, variant)
        qe, qv = geo.qf(d_e), geo.qf(d_v)
        if np.any(w_ok):
            sup[0] = max(sup[0], float(np.max(qe[w_ok] / w[w_ok] ** 2)))
            # sup over delta_y of 2 dy' Pf d / sqrt(Vf) equals 2 sqrt(d' Pf d)
            sup[1] = max(sup[1], float(np.max(2.0 * np.sqrt(qe[w_ok]) / w[w_ok])))
        if np.any(m_ok):
            sup[2] = max(sup[2], float(np.max(qv[m_ok] / m[m_ok] ** 2)))
            sup[3] = max(sup[3], float(np.max(2.0 * np.sqrt(qv[m_ok]) / m[m_ok])))
        both = w_ok & m_ok
        if np.any(both):
            cross = 2.0 * np.abs(geo.bf(d_e, d_v))
            sup[4] = max(sup[4], float(np.max(cross[both] / (w[both] * m[both]))))
    lams = [SAMPLING_INFLATION * v for v in sup]
    info = {
        "samples": samples,
        "seed": seed,
        "inflation": SAMPLING_INFLATION,
        "method": "randomised ratio maximisation over reset patterns",
    }
    out = JumpInflation(*lams, sampling=info)
    if validate:
        _validate_jump_inflation(out, geo, plant, seed, validation_samples)
        info["validation_samples"] = validation_samples
        info["validation_failures"] = 0
    return out


def _validate_jump_inflation(inf: JumpInflation, geo: _JumpGeometry, plant, seed, count):
    rng = _philox(seed, 2)
    nys, nu, nyf = plant.n_ys, plant.n_u, plant.n_yf
    batch = 200_000
    done = failures = 0
    while done < count:
        n = min(batch, count - done)
        scale = (10.0 ** rng.integers(-2, 2, size=n)) * rng.random(n)
        e = _unit_rows(rng, n, nys + nu) * scale[:, None]
        dy = _unit_rows(rng, n, plant.n_z) * (10.0 ** rng.integers(-2, 2, size=n))[:, None]
        v = _unit_rows(rng, n, 2 * nys + nyf) * scale[:, None]
        kap = rng.integers(0, 8, size=n)
        e_ys, e_us = e[:, :nys], e[:, nys:]
        vhat1, v1 = v[:, :nys], v[:, nys : 2 * nys]
        vhat2 = v[:, 2 * nys :]
        w = geo.ws(e_ys, e_us, kap)
        vf = np.sqrt(geo.qf(dy))
        m = np.maximum.reduce(
            [
                np.linalg.norm(vhat1, axis=1),
                np.linalg.norm(vhat2, axis=1),
                np.linalg.norm(v1, axis=1),
            ]
        )
        rhs = (
            inf.lam1 * w**2
            + inf.lam2 * w * vf
            + inf.lam3 * m**2
            + inf.lam4 * vf * m
            + inf.lam5 * w * m
        )
        for variant in range(len(geo.variants)):
            d = geo.shift_e(e_ys, e_us, variant) + geo.shift_v(vhat1, v1, variant)
            lhs = geo.qf(dy + d) - geo.qf(dy)
            failures += int(np.sum(lhs > rhs + VALIDATION_SLACK * (1.0 + np.abs(rhs))))
        done += n
    if failures:
        raise InvalidConfig(
            f"jump-inflation constants failed revalidation on {failures} of {count} samples"
        )


# --------------------------------------------------------------------------
# Interconnection constants (two-time-scale cross terms)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Interconnection:
    b1: float
    b2: float
    b3: float
    a_delta1: float
    a_delta2: float
    a_delta3: float
    sampling: dict = field(default_factory=dict, compare=False)


def interconnection_constants(
    plant: PlantParams,
    result: DesignResult,
    cert_s: ProtocolCertificate,
    cert_f: ProtocolCertificate,
    lam_s_star: float,
    lam_f_star: float,
    seed: int = 0,
    validate: bool = True,
    validation_samples: int = 100_000,
) -> Interconnection:
    """Spectral-norm bounds on the slow/fast cross terms of the energy flow.

    b1 bounds the slow-energy sensitivity to the fast pair; b2 and b3 bound
    the epsilon-linear remainder of the fast flow against the slow pair and
    the fast pair; the a_delta constants absorb the held-noise and input-
    derivative channels of that remainder by symmetric completion of
    squares (whose state-side halves are folded into b3).  All bounds are
    then revalidated against the exact expressions on random samples.
    """
    gains = result.gains.validated(plant)
    fast = model.build_fast_blocks(plant, gains)
    red = model.build_reduced_blocks(plant, gains, fast)
    hbar = model.build_hbar(plant, gains, fast)
    ps = numerics.symmetrize(np.asarray(result.Ps, dtype=float))
    pf = numerics.symmetrize(np.asarray(result.Pf, dtype=float))
    phis_max = 1.0 / lam_s_star
    phif_max = 1.0 / lam_f_star
    k_dy = plant.A12 - gains.L1f @ plant.C2f
    k_fast = np.hstack([k_dy, gains.L1f])
    k_slow = np.hstack([red.Ar11, red.Ar12, red.Ar13])
    mh = hbar.Gx + hbar.Ge @ plant.C1s
    norm = numerics.spectral_norm

    b1 = 2.0 * norm(ps) * norm(k_fast) + (
        2.0 * result.gamma_s * phis_max * cert_s.aW_upper * cert_s.M * norm(plant.C1s @ k_fast)
    )
    wf_coeff = 2.0 * result.gamma_f * phif_max * cert_f.aW_upper * cert_f.M
    b2 = 2.0 * norm(pf @ mh @ k_slow) + wf_coeff * norm(plant.C2s @ k_slow)
    b3_core = 2.0 * norm(pf @ mh @ k_fast) + wf_coeff * norm(plant.C2s @ k_fast)
    a_d1 = norm(pf @ mh @ red.Ar14) + 0.5 * wf_coeff * norm(plant.C2s @ red.Ar14)
    a_d2 = norm(pf @ mh @ red.Ar15) + 0.5 * wf_coeff * norm(plant.C2s @ red.Ar15)
    a_d3 = norm(pf @ hbar.Gu)
    b3 = b3_core + a_d1 + a_d2 + a_d3
    out = Interconnection(
        b1=b1, b2=b2, b3=b3, a_delta1=a_d1, a_delta2=a_d2, a_delta3=a_d3,
        sampling={"method": "spectral-norm bounds + completion of squares", "seed": seed},
    )
    if validate:
        _validate_interconnection(
            out, plant, result, cert_s, cert_f, lam_s_star, lam_f_star,
            fast, red, hbar, seed, validation_samples,
        )
        out.sampling["validation_samples"] = validation_samples
        out.sampling["validation_failures"] = 0
    return out


def _validate_interconnection(
    inter, plant, result, cert_s, cert_f, lam_s_star, lam_f_star,
    fast, red, hbar, seed, count,
):
    """Check the exact cross terms against the bounds on random samples.

    The exact gradients use the zeroing-protocol W = |e| form, which attains
    the generic M, aW constants used in the bounds; phi factors range over
    their admissible intervals.
    """
    rng = _philox(seed, 3)
    ps = numerics.symmetrize(np.asarray(result.Ps, dtype=float))
    pf = numerics.symmetrize(np.asarray(result.Pf, dtype=float))
    nx, nys, nu, nz, nyf = plant.n_x, plant.n_ys, plant.n_u, plant.n_z, plant.n_yf
    gains = result.gains
    k_dy = plant.A12 - gains.L1f @ plant.C2f
    mh = hbar.Gx + hbar.Ge @ plant.C1s

    n = count
    dx = rng.normal(size=(n, nx))
    eys = rng.normal(size=(n, nys))
    eus = rng.normal(size=(n, nu))
    dy = rng.normal(size=(n, nz))
    ef = rng.normal(size=(n, nyf))
    v1h = rng.normal(size=(n, nys))
    v2h = rng.normal(size=(n, nyf))
    dus = rng.normal(size=(n, nu))
    phis = lam_s_star + (1.0 / lam_s_star - lam_s_star) * rng.random((n, 1))
    phif = lam_f_star + (1.0 / lam_f_star - lam_f_star) * rng.random((n, 1))

    e_s = np.hstack([eys, eus])
    fast_pair = np.hypot(np.linalg.norm(dy, axis=1), np.linalg.norm(ef, axis=1))
    slow_pair = np.hypot(np.linalg.norm(dx, axis=1), np.linalg.norm(e_s, axis=1))
    diff_dx = dy @ k_dy.T + ef @ gains.L1f.T
    grad_ws = 2.0 * result.gamma_s * phis[:, 0] * np.einsum(
        "ni,ni->n", eys, diff_dx @ plant.C1s.T
    )
    lhs1 = 2.0 * np.einsum("ni,ij,nj->n", dx, ps, diff_dx) + grad_ws
    fails1 = int(
        np.sum(lhs1 > inter.b1 * slow_pair * fast_pair + VALIDATION_SLACK * (1 + np.abs(lhs1)))
    )
    fdx = (
        dx @ red.Ar11.T + eys @ red.Ar12.T + eus @ red.Ar13.T
        + dy @ k_dy.T + ef @ gains.L1f.T + v1h @ red.Ar14.T + v2h @ red.Ar15.T
    )
    rem_dy = -(fdx @ mh.T) + dus @ hbar.Gu.T
    rem_ef = fdx @ plant.C2s.T
    lhs2 = 2.0 * np.einsum("ni,ij,nj->n", dy, pf, rem_dy)
    lhs2 += 2.0 * result.gamma_f * phif[:, 0] * np.einsum("ni,ni->n", ef, rem_ef)
    rhs2 = (
        inter.b2 * slow_pair * fast_pair
        + inter.b3 * fast_pair**2
        + inter.a_delta1 * np.einsum("ni,ni->n", v1h, v1h)
        + inter.a_delta2 * np.einsum("ni,ni->n", v2h, v2h)
        + inter.a_delta3 * np.einsum("ni,ni->n", dus, dus)
    )
    fails2 = int(np.sum(lhs2 > rhs2 + VALIDATION_SLACK * (1 + np.abs(rhs2))))
    if fails1 or fails2:
        raise InvalidConfig(
            f"interconnection bounds failed revalidation ({fails1} slow, {fails2} fast)"
        )


# --------------------------------------------------------------------------
# The constants ledger and the epsilon* pipeline
# --------------------------------------------------------------------------


@dataclass
class ConstantsLedger:
    """Every scalar of the stability chain, with formula tags.

    ``formulas`` maps each field to the defining expression; ``sampling``
    records how the randomised constants were produced.
    """

    a_s: float
    a_f: float
    aU_lower_s: float
    aU_upper_s: float
    aU_lower_f: float
    aU_upper_f: float
    aU_lower: float
    aU_upper: float
    lam1: float
    lam2: float
    lam3: float
    lam4: float
    lam5: float
    b1: float
    b2: float
    b3: float
    a_delta1: float
    a_delta2: float
    a_delta3: float
    aVs_v1: float
    aVs_v2: float
    mu: float
    mu1: float
    lambda_tilde: float
    lambda_final: float
    quad_a: float
    quad_b: float
    quad_c: float
    d: float
    a_d: float
    a_v: float
    epsilon_star: float
    t_star: float
    t_slow_bound: float
    tau_mati_f: float
    gamma_v1: float
    gamma_v2: float
    gamma_dus: float
    decay_rate: float
    k_envelope: float
    tau_mati_s: float
    tau_miati_s: float
    lam_s_star: float
    lam_f_star: float
    eta_s_parts: tuple
    formulas: dict = field(default_factory=dict)
    sampling: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if k in ("formulas", "sampling"):
                out[k] = v
            elif isinstance(v, tuple):
                out[k] = list(v)
            else:
                out[k] = float(v)
        return out


_FORMULAS = {
    "a_s": "a_rho_s * min(1, aW_lower_s^2)",
    "a_f": "a_rho_f * min(1, aW_lower_f^2)",
    "aU_lower_s": "min(eigmin(Ps), gamma_s * lam_s_star * aW_lower_s^2)",
    "aU_upper_s": "max(eigmax(Ps), gamma_s / lam_s_star * aW_upper_s^2)",
    "aU_lower_f": "min(eigmin(Pf), gamma_f * lam_f_star * aW_lower_f^2)",
    "aU_upper_f": "max(eigmax(Pf), gamma_f / lam_f_star * aW_upper_f^2)",
    "aU_lower": "min(aU_lower_s, d * aU_lower_f)",
    "aU_upper": "max(aU_upper_s, d * aU_upper_f)",
    "lam1..lam5": "sampled suprema of the fast-energy jump terms, x1.05",
    "b1..b3, a_delta1..3": "spectral-norm cross-term bounds + completion of squares",
    "aVs_v1": "eigmax(Ar14^T Ar14) / eta1_1",
    "aVs_v2": "eigmax(Ar15^T Ar15) / eta1_2",
    "mu": "mu_frac * a_s * aU_lower_s",
    "mu1": "mu1_frac * a_s * aU_lower_s",
    "lambda_tilde": "default: geometric midpoint of (exp(-mu1*tau_miati_s), 1)",
    "lambda_final": "default: midpoint of (lambda_tilde, 1)",
    "quad_a": "max((lam1 + lam5/2)/(gamma_s*lam_s_star), lam4/2)",
    "quad_b": "(lam2/2) * max(lam1/(gamma_s*lam_s_star), 1)",
    "quad_c": "1 - lambda_tilde * exp(mu1 * tau_miati_s)",
    "d": "((-b + sqrt(b^2 - 4 a c)) / (2 a))^2",
    "a_d": "1 + quad_a * d + quad_b * sqrt(d)",
    "a_v": "d*lam3 + (lam4 + d*lam5)/2",
    "epsilon_star": "1 / ((1/(d a_f aU_lower_f)) ((b1+d b2)^2 aU_lower_s aU_lower_f / (4 (a_s aU_lower_s - mu)) + mu d) + b3/a_f)",
    "t_star": "t_bound(L_f, gamma_f, lam_f_star)",
    "tau_mati_f": "epsilon_star * t_star",
    "gamma_v1": "sqrt(a_d/aU_lower * max(a_v/(lambda_final-lambda_tilde), (aws_v1^2/eta_s1 + aVs_v1 + d a_delta1)/(mu-mu1)))",
    "gamma_v2": "sqrt(a_d/(aU_lower (mu-mu1)) * (aws_v2^2/eta_s2 + aVs_v2 + d a_delta2))",
    "gamma_dus": "sqrt(a_d/aU_lower * (M_s^2/eta_s3 + d a_delta3))",
    "decay_rate": "ln(1/lambda_final) / (2 tau_mati_s)",
    "k_envelope": "sqrt(a_d * aU_upper / (lambda_final * aU_lower))",
}


def constants_pipeline(
    growth: GrowthConstants,
    env: Envelopes,
    inflation: JumpInflation,
    inter: Interconnection,
    timing: SlowTimingCert,
    cert_s: ProtocolCertificate,
    gamma_s: float,
    gamma_f: float,
    lam_f_star: float,
    eta1: float,
    reduced: model.ReducedBlocks,
    mu_frac: float = 0.6,
    mu1_frac: float = 0.4,
    lambda_tilde: float | None = None,
    lambda_final: float | None = None,
    eta1_split: tuple | None = None,
) -> ConstantsLedger:
    """Run the full constants chain down to epsilon*, the fast MATI, and the gains.

    mu and mu1 are entered as fractions of the admissible ceiling
    a_s * aU_lower_s; lambda_tilde defaults to the geometric midpoint of its
    interval and lambda_final to the midpoint of (lambda_tilde, 1).  The
    eta1 budget of the reduced LMI splits evenly over the two held-noise
    channels unless an explicit split is given.
    """
    if not (0.0 < mu1_frac < mu_frac < 1.0):
        raise InvalidConfig("need 0 < mu1_frac < mu_frac < 1")
    mu = mu_frac * env.a_s * env.aU_lower_s
    mu1 = mu1_frac * env.a_s * env.aU_lower_s
    lam_lo = math.exp(-mu1 * timing.tau_miati_s)
    if lambda_tilde is None:
        lambda_tilde = math.sqrt(lam_lo)  # geometric midpoint of (lam_lo, 1)
    if not (lam_lo <= lambda_tilde < 1.0):
        raise InvalidConfig(
            f"lambda_tilde must lie in [exp(-mu1 tau_miati_s), 1) = [{lam_lo!r}, 1)"
        )
    if lambda_final is None:
        lambda_final = 0.5 * (lambda_tilde + 1.0)
    if not (lambda_tilde < lambda_final < 1.0):
        raise InvalidConfig("lambda_final must lie in (lambda_tilde, 1)")

    l1, l2, l3, l4, l5 = inflation.as_tuple()
    quad_a = max((l1 + 0.5 * l5) / (gamma_s * timing.lam_star), 0.5 * l4)
    quad_b = 0.5 * l2 * max(l1 / (gamma_s * timing.lam_star), 1.0)
    quad_c = 1.0 - lambda_tilde * math.exp(mu1 * timing.tau_miati_s)
    if quad_c > 0.0:
        raise InvalidConfig("slow-jump quadratic must have c <= 0")
    if quad_a > 0.0:
        root = (-quad_b + math.sqrt(quad_b * quad_b - 4.0 * quad_a * quad_c)) / (2.0 * quad_a)
    elif quad_b > 0.0:
        root = -quad_c / quad_b
    else:
        root = math.sqrt(-quad_c) if quad_c < 0.0 else 0.0
    d = root * root
    a_d = 1.0 + quad_a * d + quad_b * math.sqrt(d)
    a_v = d * l3 + 0.5 * (l4 + d * l5)

    if not mu < env.a_s * env.aU_lower_s:
        raise InvalidConfig("mu must stay below a_s * aU_lower_s")
    t_star = t_bound(growth.L_f, gamma_f, lam_f_star)
    if d > 0.0:
        inv_eps = (1.0 / (d * env.a_f * env.aU_lower_f)) * (
            ((inter.b1 + d * inter.b2) ** 2 * env.aU_lower_s * env.aU_lower_f)
            / (4.0 * (env.a_s * env.aU_lower_s - mu))
            + mu * d
        ) + inter.b3 / env.a_f
        epsilon_star = 1.0 / inv_eps
    else:
        epsilon_star = 0.0  # degenerate: no contraction margin at slow jumps

    aU_lower = min(env.aU_lower_s, d * env.aU_lower_f)
    aU_upper = max(env.aU_upper_s, d * env.aU_upper_f)

    if eta1_split is None:
        eta1_split = (0.5 * eta1, 0.5 * eta1)
    if len(eta1_split) != 2 or any(v <= 0 for v in eta1_split) or eta1 <= 0:
        raise InvalidConfig("eta1 split needs two positive parts")
    aVs_v1 = float(numerics.sym_eigvals(numerics.symmetrize(reduced.Ar14.T @ reduced.Ar14))[-1]) / eta1_split[0]
    aVs_v2 = float(numerics.sym_eigvals(numerics.symmetrize(reduced.Ar15.T @ reduced.Ar15))[-1]) / eta1_split[1]
    es1, es2, es3 = timing.eta_s_parts
    if aU_lower > 0.0 and mu > mu1:
        gamma_v1 = math.sqrt(
            (a_d / aU_lower)
            * max(
                a_v / (lambda_final - lambda_tilde),
                (growth.aws_v1**2 / es1 + aVs_v1 + d * inter.a_delta1) / (mu - mu1),
            )
        )
        gamma_v2 = math.sqrt(
            a_d / (aU_lower * (mu - mu1)) * (growth.aws_v2**2 / es2 + aVs_v2 + d * inter.a_delta2)
        )
        gamma_dus = math.sqrt(a_d / aU_lower * (cert_s.M**2 / es3 + d * inter.a_delta3))
        k_env = math.sqrt(a_d * aU_upper / (lambda_final * aU_lower))
    else:
        gamma_v1 = gamma_v2 = gamma_dus = k_env = math.inf
    ledger = ConstantsLedger(
        a_s=env.a_s,
        a_f=env.a_f,
        aU_lower_s=env.aU_lower_s,
        aU_upper_s=env.aU_upper_s,
        aU_lower_f=env.aU_lower_f,
        aU_upper_f=env.aU_upper_f,
        aU_lower=aU_lower,
        aU_upper=aU_upper,
        lam1=l1, lam2=l2, lam3=l3, lam4=l4, lam5=l5,
        b1=inter.b1, b2=inter.b2, b3=inter.b3,
        a_delta1=inter.a_delta1, a_delta2=inter.a_delta2, a_delta3=inter.a_delta3,
        aVs_v1=aVs_v1, aVs_v2=aVs_v2,
        mu=mu, mu1=mu1,
        lambda_tilde=lambda_tilde, lambda_final=lambda_final,
        quad_a=quad_a, quad_b=quad_b, quad_c=quad_c,
        d=d, a_d=a_d, a_v=a_v,
        epsilon_star=epsilon_star,
        t_star=t_star,
        t_slow_bound=timing.t_slow_bound,
        tau_mati_f=epsilon_star * t_star,
        gamma_v1=gamma_v1, gamma_v2=gamma_v2, gamma_dus=gamma_dus,
        decay_rate=math.log(1.0 / lambda_final) / (2.0 * timing.tau_mati_s),
        k_envelope=k_env,
        tau_mati_s=timing.tau_mati_s,
        tau_miati_s=timing.tau_miati_s,
        lam_s_star=timing.lam_star,
        lam_f_star=lam_f_star,
        eta_s_parts=timing.eta_s_parts,
        formulas=dict(_FORMULAS),
        sampling={"jump": dict(inflation.sampling), "interconnection": dict(inter.sampling)},
    )
    return ledger


def full_pipeline(
    plant: PlantParams,
    result: DesignResult,
    cert_s: ProtocolCertificate,
    cert_f: ProtocolCertificate,
    proto_y: ProtocolState,
    proto_u: ProtocolState,
    lam_s: float,
    lam_s_star: float,
    lam_f_star: float,
    eta_s_parts,
    tau_mati_s: float,
    tau_miati_s: float,
    mu_frac: float = 0.6,
    mu1_frac: float = 0.4,
    lambda_tilde: float | None = None,
    lambda_final: float | None = None,
    eta1_split: tuple | None = None,
    samples: int = 100_000,
    seed: int = 0,
    validate: bool = True,
    verify_lemma: bool = True,
) -> ConstantsLedger:
    """Convenience wrapper running the whole chain from a design result."""
    gains = result.gains.validated(plant)
    fast = model.build_fast_blocks(plant, gains)
    red = model.build_reduced_blocks(plant, gains, fast)
    growth = build_growth_constants(red, fast, cert_s, cert_f)
    timing = make_slow_timing_cert(
        growth, result.gamma_s, lam_s, tau_mati_s, tau_miati_s, lam_s_star,
        eta_s_parts, verify=verify_lemma,
    )
    env = lyapunov_envelopes(result, cert_s, cert_f, lam_s_star, lam_f_star)
    inflation = slow_jump_lambdas(
        plant, result, proto_y, proto_u, samples=samples, seed=seed, validate=validate,
        validation_samples=max(samples * 10, 1_000_000) if validate else 0,
    )
    inter = interconnection_constants(
        plant, result, cert_s, cert_f, lam_s_star, lam_f_star, seed=seed,
        validate=validate, validation_samples=max(samples, 100_000) if validate else 0,
    )
    return constants_pipeline(
        growth, env, inflation, inter, timing, cert_s,
        result.gamma_s, result.gamma_f, lam_f_star, result.eta1, red,
        mu_frac=mu_frac, mu1_frac=mu1_frac,
        lambda_tilde=lambda_tilde, lambda_final=lambda_final, eta1_split=eta1_split,
    )


def mati_objective(
    plant: PlantParams,
    result: DesignResult,
    cert_s: ProtocolCertificate,
    cert_f: ProtocolCertificate,
    proto_y: ProtocolState,
    proto_u: ProtocolState,
    lam_s: float,
    lam_s_star: float,
    lam_f_star: float,
    eta_s_parts,
    tau_mati_s: float,
    tau_miati_s: float,
    mu_frac: float = 0.6,
    mu1_frac: float = 0.4,
    lambda_tilde: float | None = None,
    lambda_final: float | None = None,
    samples: int = 4096,
    seed: int = 0,
) -> float:
    """eps* x T* for a candidate design; the synthesis search objective.

    Candidates whose slow MATI bound cannot cover tau_mati_s score zero
    rather than erroring, so the search can move through them.
    """
    gains = result.gains.validated(plant)
    fast = model.build_fast_blocks(plant, gains)
    red = model.build_reduced_blocks(plant, gains, fast)
    growth = build_growth_constants(red, fast, cert_s, cert_f)
    if t_bound(growth.L_s, result.gamma_s, lam_s) <= tau_mati_s:
        return 0.0
    ledger = full_pipeline(
        plant, result, cert_s, cert_f, proto_y, proto_u,
        lam_s, lam_s_star, lam_f_star, eta_s_parts, tau_mati_s, tau_miati_s,
        mu_frac=mu_frac, mu1_frac=mu1_frac,
        lambda_tilde=lambda_tilde, lambda_final=lambda_final,
        samples=samples, seed=seed, validate=False, verify_lemma=False,
    )
    return ledger.epsilon_star * ledger.t_star
