"""Command-line front end: verify | design | mati | simulate.

All commands consume a single JSON experiment config (schema in the
README).  Exit codes: 0 on success, 1 on analytic failure (infeasible
certificate, failed verification), 2 on usage/config errors.  Reports
embed the fully resolved config and its hash so every number is
reproducible; reruns of the same config and seed are byte-identical.
The simulate command renders figures next to the CSV output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, bounds, config as cfgmod, design, hybridsim, model, numerics, protocols
from .config import ConfigError

EXIT_OK = 0
EXIT_ANALYTIC = 1
EXIT_USAGE = 2


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def _write_report(path: Path, payload: dict, cfg: dict):
    payload = dict(payload)
    payload["tool_version"] = __version__
    payload["config_hash"] = cfgmod.config_hash(cfg)
    payload["resolved_config"] = cfg
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _slow_fast_certs(protos: dict):
    """Certificates per channel; the slow channel combines output + input."""
    cert_y = protocols.certificate(protos["slow_output"])
    cert_u = protocols.certificate(protos["slow_input"])
    cert_s = protocols.combine_certificates(cert_y, cert_u)
    cert_f = protocols.certificate(protos["fast"])
    return cert_s, cert_f


def _protocol_lambda_s(cert_s) -> float:
    return cert_s.lam


def _design_from_certificates(cfg, plant) -> design.DesignResult:
    gains = cfgmod.build_gains(cfg, plant)
    cert = cfgmod.certificate_values(cfg)
    return design.DesignResult(
        gains=gains,
        Pf=cert["Pf"],
        Ps=cert["Ps"],
        gamma_f=cert["gamma_f"],
        gamma_s=cert["gamma_s"],
        a_rho_f=cert["a_rho_f"],
        a_rho_s=cert["a_rho_s"],
        eta1=cert["eta1"],
    )


def _pipeline_from_config(cfg, plant, result, protos, verify_lemma=True):
    cert_s, cert_f = _slow_fast_certs(protos)
    t = cfg["timing"]
    p = cfg["pipeline"]
    return bounds.full_pipeline(
        plant,
        result,
        cert_s,
        cert_f,
        protos["slow_output"],
        protos["slow_input"],
        lam_s=_protocol_lambda_s(cert_s),
        lam_s_star=float(t["lambda_s_star"]),
        lam_f_star=float(t["lambda_f_star"]),
        eta_s_parts=tuple(t["eta_s"]),
        tau_mati_s=float(t["tau_mati_s"]),
        tau_miati_s=float(t["tau_miati_s"]),
        mu_frac=float(p["mu_frac"]),
        mu1_frac=float(p["mu1_frac"]),
        lambda_tilde=p["lambda_tilde"],
        lambda_final=p["lambda_final"],
        eta1_split=None if p["eta1_split"] is None else tuple(p["eta1_split"]),
        samples=int(p["samples"]),
        seed=int(p["seed"]),
        verify_lemma=verify_lemma,
    )


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------


def cmd_verify(cfg: dict, out_dir: Path) -> int:
    plant = cfgmod.build_plant(cfg)
    protos = cfgmod.build_protocols(cfg)
    cert_s, cert_f = _slow_fast_certs(protos)  # certificate construction self-validates
    result = _design_from_certificates(cfg, plant)
    report = design.verify_design(plant, result, cert_s, cert_f)
    report["protocol_certificates"] = {
        "slow": cert_s.__dict__,
        "fast": cert_f.__dict__,
    }
    _write_report(out_dir / "verify_report.json", report, cfg)
    print(f"fast-block Hurwitz: {report['fast_block_hurwitz']}")
    if "lmax_boundary_layer" in report:
        print(f"boundary-layer LMI lambda_max = {report['lmax_boundary_layer']:.6e}")
        print(f"reduced        LMI lambda_max = {report['lmax_reduced']:.6e}")
        print(f"P margins: Pf {report['Pf_min_eig']:.6e}, Ps {report['Ps_min_eig']:.6e}")
    print("PASS" if report["passed"] else "FAIL")
    return EXIT_OK if report["passed"] else EXIT_ANALYTIC


# --------------------------------------------------------------------------
# design
# --------------------------------------------------------------------------


def _result_payload(result: design.DesignResult) -> dict:
    return {
        "gains": {
            "L1s": result.gains.L1s,
            "L1f": result.gains.L1f,
            "L2s": result.gains.L2s,
            "L2f": result.gains.L2f,
        },
        "Pf": result.Pf,
        "Ps": result.Ps,
        "gamma_f": result.gamma_f,
        "gamma_s": result.gamma_s,
        "a_rho_f": result.a_rho_f,
        "a_rho_s": result.a_rho_s,
        "eta1": result.eta1,
        "objective": result.objective,
        "template_params": result.template_params,
        "search_meta": result.search_meta,
    }


def cmd_design(cfg: dict, out_dir: Path, seed: int | None) -> int:
    plant = cfgmod.build_plant(cfg)
    protos = cfgmod.build_protocols(cfg)
    cert_s, cert_f = _slow_fast_certs(protos)
    template = cfgmod.build_template(cfg)
    if template is None:
        raise ConfigError("design command needs observer.template")
    search = cfgmod.build_search(cfg, seed)
    mode = cfg["search"]["mode"]
    t, p = cfg["timing"], cfg["pipeline"]
    pipeline_kwargs = dict(
        proto_y=protos["slow_output"],
        proto_u=protos["slow_input"],
        lam_s=_protocol_lambda_s(cert_s),
        lam_s_star=float(t["lambda_s_star"]),
        lam_f_star=float(t["lambda_f_star"]),
        eta_s_parts=tuple(t["eta_s"]),
        tau_mati_s=float(t["tau_mati_s"]),
        tau_miati_s=float(t["tau_miati_s"]),
        mu_frac=float(p["mu_frac"]),
        mu1_frac=float(p["mu1_frac"]),
        lambda_tilde=p["lambda_tilde"],
        lambda_final=p["lambda_final"],
        seed=int(p["seed"]),
    )
    try:
        if mode == "min-gamma":
            result = design.design_by_min_gamma(plant, template, cert_s, cert_f, search)
        elif mode in ("maximize-mati", "evaluate"):
            result = design.maximize_mati_objective(
                plant, template, cert_s, cert_f, search, pipeline_kwargs,
                evaluate_only=(mode == "evaluate"),
            )
        else:
            raise ConfigError(f"unknown search.mode {mode!r}")
    except design.InfeasibleAtUpperBound as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_ANALYTIC
    _write_report(out_dir / "design_result.json", _result_payload(result), cfg)
    ledger = _pipeline_from_config(cfg, plant, result, protos, verify_lemma=False)
    _write_report(out_dir / "constants_ledger.json", {"ledger": ledger.to_dict()}, cfg)
    print(f"gamma_f = {result.gamma_f:.6g}, gamma_s = {result.gamma_s:.6g}")
    if result.objective is not None:
        print(f"objective eps* x T* = {result.objective:.6g}")
    return EXIT_OK


# --------------------------------------------------------------------------
# mati
# --------------------------------------------------------------------------


def cmd_mati(cfg: dict, out_dir: Path) -> int:
    plant = cfgmod.build_plant(cfg)
    protos = cfgmod.build_protocols(cfg)
    result = _design_from_certificates(cfg, plant)
    ledger = _pipeline_from_config(cfg, plant, result, protos)
    _write_report(out_dir / "mati_ledger.json", {"ledger": ledger.to_dict()}, cfg)
    print(f"slow MATI bound T(L_s, gamma_s, lam_s) = {ledger.t_slow_bound:.6g} s")
    print(f"fast budget T* = {ledger.t_star:.6g}")
    print(f"epsilon ceiling = {ledger.epsilon_star:.6g}")
    print(f"fast MATI = {ledger.tau_mati_f:.6g} s")
    print(
        "gains: v1 {0:.6g}, v2 {1:.6g}, du_s {2:.6g}".format(
            ledger.gamma_v1, ledger.gamma_v2, ledger.gamma_dus
        )
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _render_figures(out_dir: Path, runs: list, reports: dict):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.2, 4.2))
    for name, traj, _ in runs:
        ax.semilogy(traj.t, np.maximum(traj.dist, 1e-16), label=name, linewidth=0.9)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("distance to attractor")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_dir / "distance_overlay.png", dpi=150)
    plt.close(fig)

    for name, traj, diss in runs:
        fig, ax = plt.subplots(figsize=(7.2, 4.2))
        ax.semilogy(traj.t, np.maximum(traj.dist, 1e-16), label="|xi|_E", linewidth=0.9)
        envelope = [
            diss.k_envelope * diss.initial_distance * np.exp(-diss.rate * (t + jj))
            + reports[name]["rhs_offset"]
            for t, jj in zip(traj.t, traj.j)
        ]
        ax.semilogy(traj.t, envelope, label="envelope", linestyle="--", linewidth=0.9)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("distance / bound")
        ax.set_title(name)
        ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        fig.savefig(out_dir / f"{name}_diss.png", dpi=150)
        plt.close(fig)


def cmd_simulate(cfg: dict, out_dir: Path, seed: int | None) -> int:
    plant = cfgmod.build_plant(cfg)
    protos = cfgmod.build_protocols(cfg)
    gains = cfgmod.build_gains(cfg, plant)
    policy = cfgmod.build_policy(cfg, seed)
    scenarios = cfgmod.build_scenarios(cfg)
    init = cfgmod.build_initial(cfg, plant)
    sim = cfg["simulation"]
    result = _design_from_certificates(cfg, plant)
    ledger = _pipeline_from_config(cfg, plant, result, protos, verify_lemma=False)

    def run_one(item):
        name, signals = item
        traj = hybridsim.simulate(
            plant, gains, protos, policy, signals, init,
            horizon=float(sim["horizon"]),
            record_points=int(sim["record_points"]),
        )
        diss = hybridsim.check_diss(traj, ledger, signals, policy, plant.epsilon)
        return name, traj, diss

    workers = max(1, int(os.environ.get("SPNCS_THREADS", "1")))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(run_one, scenarios))
    else:
        runs = [run_one(item) for item in scenarios]

    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    for name, traj, diss in runs:
        hybridsim.write_trajectory_csv(traj, out_dir / f"{name}_trajectory.csv")
        hybridsim.write_events_csv(traj, out_dir / f"{name}_events.csv")
        reports[name] = {
            "diss": diss.to_dict(),
            "ultimate_bound": diss.ultimate_bound,
            "rhs_offset": (
                ledger.gamma_v1 * diss.sup_v1
                + ledger.gamma_v2 * diss.sup_v2
                + ledger.gamma_dus * diss.sup_dus
            ),
            "files": [f"{name}_trajectory.csv", f"{name}_events.csv"],
        }
    payload = {"scenarios": reports, "ledger": ledger.to_dict()}
    _write_report(out_dir / "simulation_report.json", payload, cfg)
    _render_figures(out_dir, runs, reports)
    all_hold = all(r["diss"]["holds"] for r in reports.values())
    for name in reports:
        print(
            f"{name}: ultimate bound {reports[name]['ultimate_bound']:.6g}, "
            f"DISS margin {reports[name]['diss']['margin']:.6g}"
        )
    return EXIT_OK if all_hold else EXIT_ANALYTIC


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spncs",
        description="Networked-observer design and simulation for two-time-scale plants",
    )
    parser.add_argument("command", choices=["verify", "design", "mati", "simulate"])
    parser.add_argument("config", help="experiment config (JSON)")
    parser.add_argument("--out", default=None, help="output directory (default: config's output_dir or ./out)")
    parser.add_argument("--seed", type=int, default=None, help="override schedule/search seed")
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out or cfg.get("output_dir", "out"))
    try:
        if args.command == "verify":
            return cmd_verify(cfg, out_dir)
        if args.command == "design":
            return cmd_design(cfg, out_dir, args.seed)
        if args.command == "mati":
            return cmd_mati(cfg, out_dir)
        return cmd_simulate(cfg, out_dir, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (bounds.InvalidConfig, numerics.InvalidInput, model.DesignInfeasible) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (design.InfeasibleAtUpperBound, hybridsim.InfeasibleSchedule, numerics.SingularMatrix) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_ANALYTIC


if __name__ == "__main__":
    sys.exit(main())
