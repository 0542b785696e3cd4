"""Declarative experiment configuration: one JSON file drives everything.

The schema is documented in the README.  Validation is explicit and every
default is materialised into the resolved dictionary, so the config echoed
into reports contains no silent values.
"""

from __future__ import annotations

import copy
import hashlib
import json

import numpy as np

from . import hybridsim, model, protocols
from .design import GainTemplate, SearchConfig


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


_PLANT_KEYS = ("A11", "A12", "A21", "A22", "B1", "B2", "C1s", "C2s", "C2f")

_DEFAULTS = {
    "timing": {
        "schedule_mode": "periodic-at-mati",
        "schedule_seed": 0,
        "lambda_s_star": 0.33,
        "lambda_f_star": 0.456,
        "eta_s": [0.1, 0.1, 0.5],
    },
    "pipeline": {
        "mu_frac": 0.6,
        "mu1_frac": 0.4,
        "lambda_tilde": None,
        "lambda_final": None,
        "eta1_split": None,
        "samples": 100000,
        "seed": 0,
    },
    "search": {
        "seed": 0,
        "restarts": 32,
        "sweeps": 200,
        "bisect_tol": 1e-3,
        "gamma_max": 50.0,
        "mode": "min-gamma",
        "pipeline_samples": 4096,
    },
    "simulation": {
        "horizon": 10.0,
        "record_points": 2000,
        "tail_fraction": 0.2,
        "scenarios": [],
    },
}


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return cfg[key]


def _matrix(value, name: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} is not a numeric matrix: {exc}") from exc
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a finite 2-d matrix")
    return arr


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be an object")
    return resolve(raw)


def resolve(raw: dict) -> dict:
    """Fill every default and sanity-check cross-field consistency."""
    cfg = copy.deepcopy(raw)
    for section, defaults in _DEFAULTS.items():
        block = cfg.setdefault(section, {})
        if not isinstance(block, dict):
            raise ConfigError(f"section {section!r} must be an object")
        for key, val in defaults.items():
            block.setdefault(key, copy.deepcopy(val))
    _require(cfg, "plant", "config")
    _require(cfg, "protocols", "config")
    _require(cfg, "timing", "config")
    for key in _PLANT_KEYS:
        _require(cfg["plant"], key, "plant")
    _require(cfg["plant"], "epsilon", "plant")
    timing = cfg["timing"]
    for key in ("tau_mati_s", "tau_miati_s", "tau_mati_f", "tau_miati_f"):
        _require(timing, key, "timing")
        if not (isinstance(timing[key], (int, float)) and timing[key] > 0):
            raise ConfigError(f"timing.{key} must be a positive number")
    build_plant(cfg)  # dimension / invariant validation happens here
    for chan in ("slow_output", "slow_input", "fast"):
        _require(cfg["protocols"], chan, "protocols")
    build_protocols(cfg)
    if "observer" in cfg:
        obs = cfg["observer"]
        if "gains" not in obs and "template" not in obs:
            raise ConfigError("observer needs explicit gains and/or a template")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]


def build_plant(cfg: dict) -> model.PlantParams:
    p = cfg["plant"]
    try:
        return model.PlantParams(
            **{k: _matrix(p[k], f"plant.{k}") for k in _PLANT_KEYS},
            epsilon=float(p["epsilon"]),
        )
    except (model.InvalidInput, ValueError) as exc:
        raise ConfigError(f"invalid plant: {exc}") from exc


def build_gains(cfg: dict, plant: model.PlantParams) -> model.ObserverGains:
    obs = cfg.get("observer", {})
    if "gains" in obs:
        g = obs["gains"]
        try:
            return model.ObserverGains(
                L1s=_matrix(g["L1s"], "L1s"),
                L1f=_matrix(g["L1f"], "L1f"),
                L2s=_matrix(g["L2s"], "L2s"),
                L2f=_matrix(g["L2f"], "L2f"),
            ).validated(plant)
        except KeyError as exc:
            raise ConfigError(f"observer.gains missing {exc}") from exc
        except model.InvalidInput as exc:
            raise ConfigError(f"invalid gains: {exc}") from exc
    template = build_template(cfg)
    if template is None:
        raise ConfigError("config provides neither observer.gains nor observer.template")
    return template.instantiate(template.initial).validated(plant)


def build_template(cfg: dict) -> GainTemplate | None:
    obs = cfg.get("observer", {})
    if "template" not in obs:
        return None
    t = obs["template"]
    try:
        return GainTemplate(
            L1s=t["L1s"], L1f=t["L1f"], L2s=t["L2s"], L2f=t["L2f"],
            initial={k: float(v) for k, v in t["initial"].items()},
        )
    except KeyError as exc:
        raise ConfigError(f"observer.template missing {exc}") from exc


def build_protocols(cfg: dict) -> dict:
    out = {}
    for chan, spec in cfg["protocols"].items():
        if chan not in ("slow_output", "slow_input", "fast"):
            raise ConfigError(f"unknown protocol channel {chan!r}")
        try:
            out[chan] = protocols.ProtocolState(
                kind=spec["kind"],
                partition=protocols.NodePartition(tuple(spec["partition"])),
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad protocol spec for {chan}: {exc}") from exc
        except protocols.InvalidInput as exc:
            raise ConfigError(f"bad protocol spec for {chan}: {exc}") from exc
    plant = build_plant(cfg)
    dims = {"slow_output": plant.n_ys, "slow_input": plant.n_u, "fast": plant.n_yf}
    for chan, proto in out.items():
        if proto.partition.total != dims[chan]:
            raise ConfigError(
                f"protocol {chan} partition covers {proto.partition.total} dims, channel has {dims[chan]}"
            )
    return out


def build_policy(cfg: dict, seed_override: int | None = None) -> hybridsim.SchedulePolicy:
    t = cfg["timing"]
    try:
        return hybridsim.SchedulePolicy(
            mode=t["schedule_mode"],
            tau_mati_s=float(t["tau_mati_s"]),
            tau_miati_s=float(t["tau_miati_s"]),
            tau_mati_f=float(t["tau_mati_f"]),
            tau_miati_f=float(t["tau_miati_f"]),
            seed=int(t["schedule_seed"] if seed_override is None else seed_override),
        )
    except hybridsim.InvalidInput as exc:
        raise ConfigError(f"invalid timing policy: {exc}") from exc


def build_signal(spec, name: str) -> hybridsim.SignalSpec:
    if spec is None:
        return hybridsim.SignalSpec.zero()
    if isinstance(spec, (int, float)):
        return hybridsim.SignalSpec("constant", offset=float(spec))
    try:
        kind = spec["kind"]
        return hybridsim.SignalSpec(
            kind=kind,
            amplitude=float(spec.get("amplitude", 0.0)),
            omega=float(spec.get("omega", 0.0)),
            slope=float(spec.get("slope", 0.0)),
            offset=float(spec.get("offset", 0.0)),
        )
    except (KeyError, TypeError, hybridsim.InvalidInput) as exc:
        raise ConfigError(f"bad signal spec {name}: {exc}") from exc


def build_scenarios(cfg: dict) -> list:
    out = []
    for i, sc in enumerate(cfg["simulation"]["scenarios"]):
        name = sc.get("name", f"scenario_{i}")
        signals = {
            "u_s": build_signal(sc.get("u_s"), f"{name}.u_s"),
            "v1": build_signal(sc.get("v1"), f"{name}.v1"),
            "v2": build_signal(sc.get("v2"), f"{name}.v2"),
        }
        out.append((name, signals))
    if not out:
        out.append(("nominal", {k: hybridsim.SignalSpec.zero() for k in ("u_s", "v1", "v2")}))
    return out


def build_initial(cfg: dict, plant: model.PlantParams) -> hybridsim.InitialState:
    sim = cfg["simulation"]
    init = sim.get("initial", {})
    x_p = np.asarray(init.get("x_p", np.zeros(plant.n_x)), dtype=float)
    z_p = np.asarray(init.get("z_p", np.zeros(plant.n_z)), dtype=float)
    x_o = init.get("x_o")
    z_o = init.get("z_o")
    return hybridsim.InitialState(
        x_p=x_p,
        z_p=z_p,
        x_o=None if x_o is None else np.asarray(x_o, dtype=float),
        z_o=None if z_o is None else np.asarray(z_o, dtype=float),
    )


def build_search(cfg: dict, seed_override: int | None = None) -> SearchConfig:
    s = cfg["search"]
    return SearchConfig(
        seed=int(s["seed"] if seed_override is None else seed_override),
        restarts=int(s["restarts"]),
        sweeps=int(s["sweeps"]),
        bisect_tol=float(s["bisect_tol"]),
        gamma_max=float(s["gamma_max"]),
        pipeline_samples=int(s["pipeline_samples"]),
    )


def certificate_values(cfg: dict) -> dict:
    """Explicit certificate block (P matrices and scalars) for verify/mati."""
    cert = cfg.get("certificates")
    if cert is None:
        raise ConfigError("config has no 'certificates' section")
    out = {}
    for key in ("gamma_s", "gamma_f", "a_rho_s", "a_rho_f", "eta1"):
        val = _require(cert, key, "certificates")
        if not (isinstance(val, (int, float)) and val > 0):
            raise ConfigError(f"certificates.{key} must be positive")
        out[key] = float(val)
    out["Ps"] = _matrix(_require(cert, "Ps", "certificates"), "certificates.Ps")
    out["Pf"] = _matrix(_require(cert, "Pf", "certificates"), "certificates.Pf")
    return out
