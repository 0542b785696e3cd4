"""Event-driven simulator of the networked observer closed loop.

Transmission instants are generated up front (they are schedule data, not
state-dependent), so integration lands exactly on event times and no
zero-crossing detection is needed.  Between events the full epsilon-coupled
state flows under classical RK4 with step h <= min(eps/50, tau_miati_f/20,
gap/4); at slow events the slow-channel protocol resets its node, the
held noise latches, and the shifted fast coordinate jumps by the
quasi-steady-map difference; at fast events the fast channel resets.

The flow is affine, so each RK4 step is evaluated through precomputed
step-transition polynomials in the flow matrix; for an affine field this
is algebraically the classical RK4 update.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import model, numerics, protocols
from .bounds import ConstantsLedger
from .model import FlowAffine, ObserverGains, PlantParams
from .numerics import InvalidInput
from .protocols import ProtocolState

_TIME_SLACK = 1e-9


class InfeasibleSchedule(RuntimeError):
    """No transmission pattern satisfies the interval constraints."""


# --------------------------------------------------------------------------
# Signals
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SignalSpec:
    """Scalar input or noise signal with an exact derivative.

    kinds: zero | constant (value) | ramp (slope, offset) |
    sinusoid (amplitude, omega).  Ramps and constants have constant
    derivative, matching the differentiable-with-bounded-derivative input
    assumption of the closed loop.
    """

    kind: str
    amplitude: float = 0.0
    omega: float = 0.0
    slope: float = 0.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "ramp", "sinusoid"):
            raise InvalidInput(f"unknown signal kind {self.kind!r}")

    def value(self, t: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.offset
        if self.kind == "ramp":
            return self.slope * t + self.offset
        return self.amplitude * math.sin(self.omega * t)

    def derivative(self, t: float) -> float:
        if self.kind in ("zero", "constant"):
            return 0.0
        if self.kind == "ramp":
            return self.slope
        return self.amplitude * self.omega * math.cos(self.omega * t)

    def sup_value(self, upto: float) -> float:
        """sup of |value| over [0, upto] (exact per kind)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return abs(self.offset)
        if self.kind == "ramp":
            return max(abs(self.offset), abs(self.slope * upto + self.offset))
        if self.omega == 0.0:
            return 0.0
        return abs(self.amplitude) if upto * abs(self.omega) >= 0.5 * math.pi else abs(
            self.amplitude * math.sin(self.omega * upto)
        )

    def sup_derivative(self, upto: float) -> float:
        if self.kind in ("zero", "constant"):
            return 0.0
        if self.kind == "ramp":
            return abs(self.slope)
        return abs(self.amplitude * self.omega)

    @classmethod
    def zero(cls) -> "SignalSpec":
        return cls("zero")


# --------------------------------------------------------------------------
# Transmission schedules
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SchedulePolicy:
    """Transmission-interval policy for the two channels.

    mode: ``periodic-at-mati`` places each instant at its channel MATI;
    ``uniform-random`` draws gaps uniformly from [miati, mati].  Slow
    instants that land closer than tau_miati_f to a fast instant shift to
    the nearest legal time (forward preferred) inside their own interval
    window; failure to place one raises InfeasibleSchedule.
    """

    mode: str
    tau_mati_s: float
    tau_miati_s: float
    tau_mati_f: float
    tau_miati_f: float
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("periodic-at-mati", "uniform-random"):
            raise InvalidInput(f"unknown schedule mode {self.mode!r}")
        if not (0.0 < self.tau_miati_f <= 0.5 * self.tau_mati_f):
            raise InvalidInput("need 0 < tau_miati_f <= tau_mati_f / 2")
        if not (0.0 < self.tau_miati_s <= self.tau_mati_s):
            raise InvalidInput("need 0 < tau_miati_s <= tau_mati_s")


@dataclass(frozen=True)
class Event:
    t: float
    channel: str  # 'slow' | 'fast'


def generate_schedule(policy: SchedulePolicy, horizon: float) -> list:
    """Merged event list satisfying the per-channel and cross-channel gaps."""
    if horizon <= 0.0:
        raise InvalidInput("horizon must be positive")
    rng = np.random.Generator(np.random.Philox(key=np.uint64(policy.seed)))
    fast = []
    t = 0.0
    while True:
        gap = (
            policy.tau_mati_f
            if policy.mode == "periodic-at-mati"
            else float(rng.uniform(policy.tau_miati_f, policy.tau_mati_f))
        )
        t += gap
        if t > horizon + _TIME_SLACK:
            break
        fast.append(t)
    fast_arr = np.asarray(fast)

    def legal(t_cand: float) -> bool:
        if fast_arr.size == 0:
            return True
        return bool(np.min(np.abs(fast_arr - t_cand)) >= policy.tau_miati_f - _TIME_SLACK)

    def shift(nominal: float, lo: float, hi: float) -> float:
        """Nearest legal instant to nominal in [lo, hi], forward preferred."""
        if legal(nominal):
            return nominal
        idx = np.searchsorted(fast_arr, nominal)
        forward = []
        for k in range(idx, min(idx + 4, fast_arr.size)):
            forward.append(fast_arr[k] + policy.tau_miati_f)
        if idx > 0:
            forward.insert(0, fast_arr[idx - 1] + policy.tau_miati_f)
        for cand in sorted(c for c in forward if c >= nominal - _TIME_SLACK):
            if lo - _TIME_SLACK <= cand <= hi + _TIME_SLACK and legal(cand):
                return cand
        backward = []
        for k in range(max(0, idx - 4), min(idx + 1, fast_arr.size)):
            backward.append(fast_arr[k] - policy.tau_miati_f)
        for cand in sorted((c for c in backward if c <= nominal + _TIME_SLACK), reverse=True):
            if lo - _TIME_SLACK <= cand <= hi + _TIME_SLACK and legal(cand):
                return cand
        raise InfeasibleSchedule(
            f"no legal slow instant near t={nominal:.6f} within [{lo:.6f}, {hi:.6f}]"
        )

    slow = []
    prev = 0.0
    lo_gap = max(policy.tau_miati_s, policy.tau_miati_f)  # cross-channel gap binds too
    if lo_gap > policy.tau_mati_s + _TIME_SLACK:
        raise InfeasibleSchedule("tau_mati_s below the minimum admissible gap")
    while True:
        gap = (
            policy.tau_mati_s
            if policy.mode == "periodic-at-mati"
            else float(rng.uniform(lo_gap, policy.tau_mati_s))
        )
        nominal = prev + gap
        if nominal > horizon + _TIME_SLACK:
            break
        placed = shift(nominal, prev + lo_gap, prev + policy.tau_mati_s)
        if placed > horizon + _TIME_SLACK:
            break
        slow.append(placed)
        prev = placed
    events = [Event(t, "fast") for t in fast] + [Event(t, "slow") for t in slow]
    events.sort(key=lambda e: e.t)
    for a, b in zip(events, events[1:]):
        if b.t - a.t < policy.tau_miati_f - _TIME_SLACK:
            raise InfeasibleSchedule("generated schedule violates the separation gap")
    return events


# --------------------------------------------------------------------------
# Trajectories
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EventRecord:
    t: float
    channel: str
    node: int
    kappa: int


@dataclass
class HybridTrajectory:
    layout: model.StateLayout
    t: np.ndarray
    j: np.ndarray
    states: np.ndarray  # one row per sample
    dist: np.ndarray  # distance to the attractor per sample
    events: list
    meta: dict = field(default_factory=dict)

    def column_names(self) -> list:
        return ["t", "j", *self.layout.names, "dist_to_E"]


def distance_to_attractor(layout: model.StateLayout, state: np.ndarray) -> float:
    """Euclidean norm of (delta_x, e_ys, e_us, delta_y, e_f).

    All remaining coordinates (timers, counters, plant state, held values)
    are free on the attractor and do not enter.
    """
    return float(np.linalg.norm(np.asarray(state)[layout.error_indices()]))


def hybrid_sup_norm(ts, js, values, upto: tuple | None = None) -> float:
    """Sup of |values| over samples with (t, j) lexicographically <= upto.

    The flow part is approximated by the recorded sample grid; jump-time
    samples are included exactly (they sit on the grid by construction).
    """
    ts = np.asarray(ts, dtype=float)
    js = np.asarray(js)
    vals = np.abs(np.asarray(values, dtype=float))
    if upto is None:
        mask = np.ones(ts.shape, dtype=bool)
    else:
        t1, j1 = upto
        mask = (ts < t1) | ((ts == t1) & (js <= j1))
    if not np.any(mask):
        return 0.0
    return float(np.max(vals[mask]))


# --------------------------------------------------------------------------
# Affine RK4 stepping
# --------------------------------------------------------------------------


class _AffineStepper:
    """RK4 transition operators for x' = A x + g(t), cached per step size."""

    def __init__(self, flow: FlowAffine):
        self.flow = flow
        self._cache = {}

    def _ops(self, h: float):
        ops = self._cache.get(h)
        if ops is None:
            a = self.flow.A
            a2 = a @ a
            a3 = a2 @ a
            a4 = a3 @ a
            eye = np.eye(a.shape[0])
            r = eye + h * a + (h * h / 2.0) * a2 + (h**3 / 6.0) * a3 + (h**4 / 24.0) * a4
            w1 = eye + h * a + (h * h / 2.0) * a2 + (h**3 / 4.0) * a3
            w2 = 4.0 * eye + 2.0 * h * a + (h * h / 2.0) * a2
            vecs = (self.flow.c0, self.flow.b_us, self.flow.b_dus, self.flow.b_dv1, self.flow.b_dv2)
            ops = (
                r,
                [w1 @ v for v in vecs],
                [w2 @ v for v in vecs],
                [v.copy() for v in vecs],
            )
            self._cache[h] = ops
        return ops

    def step(self, x, t, h, inputs):
        """inputs(t) -> (u_s, du_s, dv1, dv2)."""
        r, w1v, w2v, w3v = self._ops(h)
        out = r @ x
        acc = np.zeros_like(x)
        for wv, tt in ((w1v, t), (w2v, t + 0.5 * h), (w3v, t + h)):
            us, dus, dv1, dv2 = inputs(tt)
            acc += wv[0] + us * wv[1] + dus * wv[2] + dv1 * wv[3] + dv2 * wv[4]
        out += (h / 6.0) * acc
        if not np.all(np.isfinite(out)):
            raise numerics.NumericalBlowup("state blew up during flow")
        return out


# --------------------------------------------------------------------------
# The simulator
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialState:
    x_p: np.ndarray
    z_p: np.ndarray
    x_o: np.ndarray | None = None
    z_o: np.ndarray | None = None


def _initial_vector(flow: FlowAffine, init: InitialState) -> np.ndarray:
    lay = flow.layout
    x = np.zeros(lay.size)
    x_p = np.atleast_1d(np.asarray(init.x_p, dtype=float))
    z_p = np.atleast_1d(np.asarray(init.z_p, dtype=float))
    x_o = np.zeros_like(x_p) if init.x_o is None else np.atleast_1d(np.asarray(init.x_o, float))
    z_o = np.zeros_like(z_p) if init.z_o is None else np.atleast_1d(np.asarray(init.z_o, float))
    dx = x_o - x_p
    dz = z_o - z_p
    hb = flow.hbar.value(dx, np.zeros(lay.n_ys), np.zeros(lay.n_u), np.zeros(lay.n_ys), np.zeros(lay.n_yf))
    x[lay.slices["x_p"]] = x_p
    x[lay.slices["z_p"]] = z_p
    x[lay.slices["delta_x"]] = dx
    x[lay.slices["delta_y"]] = model.delta_y_shift(dz, hb)
    return x


def simulate(
    plant: PlantParams,
    gains: ObserverGains,
    protos: dict,
    policy: SchedulePolicy,
    signals: dict,
    init: InitialState,
    horizon: float,
    record_points: int = 2000,
    step_scale: float = 1.0,
    assert_sets: bool = True,
    debug_components: bool = False,
) -> HybridTrajectory:
    """Run the hybrid closed loop over [0, horizon].

    ``protos`` maps 'slow_output', 'slow_input', 'fast' to ProtocolState
    instances (fresh copies are used; counters start at the state vector's
    counter).  ``signals`` maps 'u_s', 'v1', 'v2' to SignalSpec.  Scalar
    noise specs broadcast over their channel dimension.  ``step_scale``
    scales the base step (0.5 halves it) for refinement studies;
    ``record_points`` sets the uniform recording grid, to which all event
    instants are added with pre- and post-jump samples.

    With ``debug_components`` the plant- and observer-side ideal errors
    e_ps, e_os are co-integrated so tests can check e_ys = e_ps - e_os.
    """
    flow = model.build_flow(plant, gains)
    lay = flow.layout
    sl = lay.slices
    proto_y = replace_counter(protos["slow_output"])
    proto_u = replace_counter(protos["slow_input"])
    proto_f = replace_counter(protos["fast"])
    u_s = signals.get("u_s", SignalSpec.zero())
    v1 = signals.get("v1", SignalSpec.zero())
    v2 = signals.get("v2", SignalSpec.zero())

    def inputs(tt: float):
        return (u_s.value(tt), u_s.derivative(tt), v1.derivative(tt), v2.derivative(tt))

    events = generate_schedule(policy, horizon)
    stepper = _AffineStepper(flow)
    h_base = step_scale * min(plant.epsilon / 50.0, policy.tau_miati_f / 20.0)

    record_grid = np.linspace(0.0, horizon, record_points + 1)
    x = _initial_vector(flow, init)

    comp = None
    if debug_components:
        # e_ps' = -C1s x_p' and e_os' = -C1s x_o', so both are exact
        # algebraic functions of the state increments between samples.
        comp = {
            "e_ps": np.zeros(lay.n_ys),
            "e_os": np.zeros(lay.n_ys),
            "xp_prev": None,
            "xo_prev": None,
            "history": [],
        }

    ts, js, rows, dists = [], [], [], []
    event_log = []
    j = 0

    def record(t, state):
        ts.append(t)
        js.append(j)
        rows.append(state.copy())
        dists.append(distance_to_attractor(lay, state))
        if comp is not None:
            xp = state[sl["x_p"]].copy()
            xo = xp + state[sl["delta_x"]]
            if comp["xp_prev"] is not None:
                comp["e_ps"] = comp["e_ps"] - plant.C1s @ (xp - comp["xp_prev"])
                comp["e_os"] = comp["e_os"] - plant.C1s @ (xo - comp["xo_prev"])
            comp["xp_prev"], comp["xo_prev"] = xp, xo
            comp["history"].append(
                (t, j, comp["e_ps"].copy(), comp["e_os"].copy(), state[sl["e_ys"]].copy())
            )

    def check_flow_invariants(t, state):
        if not assert_sets:
            return
        tau_s = float(state[sl["tau_s"]][0])
        tau_f = float(state[sl["tau_f"]][0])
        assert tau_s >= -_TIME_SLACK and tau_f >= -_TIME_SLACK, "timers must stay nonnegative"
        assert tau_s <= policy.tau_mati_s + 1e-6, f"slow timer past MATI at t={t}"
        assert plant.epsilon * tau_f <= policy.tau_mati_f + 1e-6, f"fast timer past MATI at t={t}"

    record(0.0, x)
    t_now = 0.0
    grid_idx = 1  # skip t=0, already recorded
    last_event = {"slow": 0.0, "fast": 0.0}

    for ev in events + [Event(horizon, "end")]:
        gap = ev.t - t_now
        if gap > _TIME_SLACK:
            h_gap = min(h_base, gap / 4.0)
            knots = [t_now]
            while grid_idx < record_grid.size and record_grid[grid_idx] < ev.t - _TIME_SLACK:
                if record_grid[grid_idx] > t_now + _TIME_SLACK:
                    knots.append(record_grid[grid_idx])
                grid_idx += 1
            knots.append(ev.t)
            for t0, t1 in zip(knots, knots[1:]):
                seg = t1 - t0
                n = max(1, int(math.ceil(seg / h_gap - 1e-12)))
                h = seg / n
                for k in range(n):
                    x = stepper.step(x, t0 + k * h, h, inputs)
                check_flow_invariants(t1, x)
                if t1 < ev.t - _TIME_SLACK:
                    record(t1, x)
        t_now = ev.t
        if ev.channel == "end":
            record(t_now, x)
            break
        record(t_now, x)  # pre-jump sample
        if ev.channel == "slow":
            if assert_sets:
                since_fast = t_now - last_event["fast"]
                assert since_fast >= policy.tau_miati_f - 1e-9, "slow event inside fast guard window"
                tau_s = float(x[sl["tau_s"]][0])
                lo = max(policy.tau_miati_s, policy.tau_miati_f)
                assert lo - 1e-9 <= tau_s <= policy.tau_mati_s + 1e-6, "slow jump outside its window"
            x, node, kappa = _apply_slow_jump(flow, plant, x, proto_y, proto_u, v1, t_now, comp)
            event_log.append(EventRecord(t_now, "slow", node, kappa))
            last_event["slow"] = t_now
        else:
            if assert_sets:
                tau_f = float(x[sl["tau_f"]][0])
                assert (
                    policy.tau_miati_f - 1e-9
                    <= plant.epsilon * tau_f
                    <= policy.tau_mati_f + 1e-6
                ), "fast jump outside its window"
            x, node, kappa = _apply_fast_jump(flow, plant, x, proto_f, v2, t_now)
            event_log.append(EventRecord(t_now, "fast", node, kappa))
            last_event["fast"] = t_now
        j += 1
        record(t_now, x)  # post-jump sample

    traj = HybridTrajectory(
        layout=lay,
        t=np.asarray(ts),
        j=np.asarray(js, dtype=int),
        states=np.asarray(rows),
        dist=np.asarray(dists),
        events=event_log,
        meta={
            "horizon": horizon,
            "h_base": h_base,
            "step_scale": step_scale,
            "record_points": record_points,
            "policy": policy,
        },
    )
    if comp is not None:
        traj.meta["components"] = comp["history"]
    return traj


def replace_counter(proto: ProtocolState) -> ProtocolState:
    return ProtocolState(kind=proto.kind, partition=proto.partition, counter=0)


def _apply_slow_jump(flow, plant, x, proto_y, proto_u, v1_spec, t, comp):
    lay = flow.layout
    sl = lay.slices
    x = x.copy()
    kappa = int(round(float(x[sl["kappa_s"]][0])))
    e_ys = x[sl["e_ys"]].copy()
    e_us = x[sl["e_us"]].copy()
    vhat1 = x[sl["vhat1"]].copy()
    vhat2 = x[sl["vhat2"]].copy()
    etps = x[sl["etil_ps"]].copy()
    # protocol jump on the measured error selects the node
    etps_plus, node = protocols.jump(proto_y, kappa, etps)
    e_us_plus, _ = protocols.jump(proto_u, kappa, e_us)
    v1_now = np.full(lay.n_ys, v1_spec.value(t))
    e_ys_plus, vhat1_plus = protocols.companion_jumps(
        kappa, e_ys, etps, vhat1, v1_now, node, proto_y.partition
    )
    hb_old = flow.hbar.value(x[sl["delta_x"]], e_ys, e_us, vhat1, vhat2)
    hb_new = flow.hbar.value(x[sl["delta_x"]], e_ys_plus, e_us_plus, vhat1_plus, vhat2)
    x[sl["delta_y"]] += hb_old - hb_new
    x[sl["e_ys"]] = e_ys_plus
    x[sl["e_us"]] = e_us_plus
    x[sl["vhat1"]] = vhat1_plus
    x[sl["etil_ps"]] = etps_plus
    x[sl["tau_s"]] = 0.0
    x[sl["kappa_s"]] = kappa + 1
    proto_y.counter = kappa + 1
    proto_u.counter = kappa + 1
    if comp is not None:
        slc = proto_y.partition.block_slice(node)
        comp["e_ps"] = comp["e_ps"].copy()
        comp["e_os"] = comp["e_os"].copy()
        comp["e_ps"][slc] = 0.0
        comp["e_os"][slc] = 0.0
    return x, node, kappa


def _apply_fast_jump(flow, plant, x, proto_f, v2_spec, t):
    lay = flow.layout
    sl = lay.slices
    x = x.copy()
    kappa = int(round(float(x[sl["kappa_f"]][0])))
    etpf = x[sl["etil_pf"]].copy()
    etpf_plus, node = protocols.jump(proto_f, kappa, etpf)
    v2_now = np.full(lay.n_yf, v2_spec.value(t))
    e_f_plus, vhat2_plus = protocols.companion_jumps(
        kappa, x[sl["e_f"]], etpf, x[sl["vhat2"]], v2_now, node, proto_f.partition
    )
    x[sl["e_f"]] = e_f_plus
    x[sl["vhat2"]] = vhat2_plus
    x[sl["etil_pf"]] = etpf_plus
    x[sl["tau_f"]] = 0.0
    x[sl["kappa_f"]] = kappa + 1
    proto_f.counter = kappa + 1
    return x, node, kappa


# --------------------------------------------------------------------------
# Derivative-input-to-state bound checking
# --------------------------------------------------------------------------


@dataclass
class DissReport:
    holds: bool
    margin: float
    k_envelope: float
    rate: float
    initial_distance: float
    ultimate_bound: float
    sup_v1: float
    sup_v2: float
    sup_dus: float
    preconditions: dict
    config_errors: list

    def to_dict(self) -> dict:
        return {
            "holds": bool(self.holds),
            "margin": float(self.margin),
            "k_envelope": float(self.k_envelope),
            "rate": float(self.rate),
            "initial_distance": float(self.initial_distance),
            "ultimate_bound": float(self.ultimate_bound),
            "sup_v1": float(self.sup_v1),
            "sup_v2": float(self.sup_v2),
            "sup_dus": float(self.sup_dus),
            "preconditions": self.preconditions,
            "config_errors": list(self.config_errors),
        }


def empirical_ultimate_bound(traj: HybridTrajectory, tail_fraction: float = 0.2) -> float:
    """Mean attractor distance over the final fraction of the horizon."""
    t_end = traj.t[-1]
    mask = traj.t >= (1.0 - tail_fraction) * t_end
    return float(np.mean(traj.dist[mask]))


def check_diss(
    traj: HybridTrajectory,
    ledger: ConstantsLedger,
    signals: dict,
    policy: SchedulePolicy,
    epsilon: float,
    k_overshoot: float | None = None,
    rate: float | None = None,
) -> DissReport:
    """Pointwise check of the exponential-plus-gains envelope.

    |xi(t,j)|_E <= k |xi(0,0)|_E exp(-rate (t+j)) + gamma_v1 ||v1||
                   + gamma_v2 ||v2|| + gamma_dus ||du_s||

    with running hybrid sup norms of the inputs.  Precondition failures
    (epsilon above the ceiling, MATIs above their bounds) are reported as
    configuration errors, never as bound failures.
    """
    k = ledger.k_envelope if k_overshoot is None else k_overshoot
    a = ledger.decay_rate if rate is None else rate
    u_s = signals.get("u_s", SignalSpec.zero())
    v1 = signals.get("v1", SignalSpec.zero())
    v2 = signals.get("v2", SignalSpec.zero())
    errors = []
    pre = {
        "epsilon_within_ceiling": epsilon <= ledger.epsilon_star,
        "tau_mati_s_below_bound": policy.tau_mati_s < ledger.t_slow_bound,
        "tau_mati_f_within_budget": policy.tau_mati_f <= epsilon * ledger.t_star,
    }
    for name, ok in pre.items():
        if not ok:
            errors.append(f"precondition failed: {name}")
    d0 = float(traj.dist[0])
    margin = math.inf
    holds = True
    for i in range(traj.t.size):
        t, jj = float(traj.t[i]), int(traj.j[i])
        rhs = k * d0 * math.exp(-a * (t + jj))
        rhs += ledger.gamma_v1 * v1.sup_value(t)
        rhs += ledger.gamma_v2 * v2.sup_value(t)
        rhs += ledger.gamma_dus * u_s.sup_derivative(t)
        gap = rhs - float(traj.dist[i])
        margin = min(margin, gap)
        if gap < 0.0:
            holds = False
    return DissReport(
        holds=holds,
        margin=margin,
        k_envelope=k,
        rate=a,
        initial_distance=d0,
        ultimate_bound=empirical_ultimate_bound(traj),
        sup_v1=v1.sup_value(float(traj.t[-1])),
        sup_v2=v2.sup_value(float(traj.t[-1])),
        sup_dus=u_s.sup_derivative(float(traj.t[-1])),
        preconditions=pre,
        config_errors=errors,
    )


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------


def write_trajectory_csv(traj: HybridTrajectory, path):
    """Delimited trajectory dump; column order is fixed by the state layout."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(traj.column_names())
        for i in range(traj.t.size):
            row = [f"{traj.t[i]:.17g}", str(int(traj.j[i]))]
            row.extend(f"{v:.17g}" for v in traj.states[i])
            row.append(f"{traj.dist[i]:.17g}")
            w.writerow(row)


def write_events_csv(traj: HybridTrajectory, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "channel", "node", "kappa"])
        for ev in traj.events:
            w.writerow([f"{ev.t:.17g}", ev.channel, str(ev.node), str(ev.kappa)])
