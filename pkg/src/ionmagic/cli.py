"""Command-line front end.

Commands ``modes``, ``couple``, ``field`` and ``ground-state`` read a
configuration file (see :mod:`ionmagic.config`), optionally scan one
parameter and write a JSON or CSV artifact that embeds the resolved
configuration.

Exit codes: 0 success, 2 configuration error, 3 numerical failure
(non-convergence, soft mode, field null). A failing scan point is recorded
in the artifact and turns the exit code to 3.
"""

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    apply_scan_value,
    build_gradient,
    build_trap,
    geometry_from,
    load_config,
    parse_scan_option,
    scan_values,
    trap_summary,
)
from .constants import TWO_PI
from .coupling import coupling_matrix_general
from .crystal import build_crystal, stability_report
from .exceptions import ConvergenceError, DomainError, SoftModeError
from .magnetics import gradient_profile
from .spin import classify_order, frustration_report, ground_state

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
NUMERIC_ERRORS = (ConvergenceError, SoftModeError, DomainError, np.linalg.LinAlgError)
SIG_DIGITS = 12


def _clean(obj, digits=SIG_DIGITS):
    """JSON-ready copy: arrays to lists, floats rounded to ``digits`` significant digits.

    ``digits=None`` keeps full precision (used for the embedded config so that
    re-running it reproduces the artifact).
    """
    if isinstance(obj, dict):
        return {str(k): _clean(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x + 0.0 if digits is None else float(f"{x:.{digits}g}") + 0.0
    if isinstance(obj, complex):
        return [_clean(obj.real, digits), _clean(obj.imag, digits)]
    return obj


def index_legend(spec):
    return [{"index": k, "chain": c + 1, "ion": n + 1} for k, (c, n) in enumerate(
        (c, n) for c in range(spec.chains) for n in range(spec.ions_per_chain))]


# -- per-point computations ----------------------------------------------------------


def _chain_parity(vec, spec):
    """+1 if both chains move alike in a mode, -1 if opposite (two chains only)."""
    n, N = spec.n_ions, spec.ions_per_chain
    V = vec.reshape(3, n)
    return int(np.sign(np.sum(V[:, :N] * V[:, N:])))


def compute_modes(cfg):
    spec = build_trap(cfg)
    state = build_crystal(spec, **cfg["solver"])
    nu = state.mode_frequencies
    rec = {
        "trap": trap_summary(spec),
        "positions_m": state.positions,
        "is_stable": state.is_stable,
        "is_saddle": state.is_saddle,
        "frequencies_hz": nu,
        "frequencies_omega_z": nu / (spec.omega_z / TWO_PI),
        "eigenvectors": state.mode_vectors.T,
        "component_legend": [f"{a}{k + 1}" for a in "xyz" for k in range(spec.n_ions)],
    }
    if spec.chains == 2:
        rec["chain_parity"] = [_chain_parity(v, spec) for v in state.mode_vectors.T]
    return rec


def compute_couple(cfg):
    spec = build_trap(cfg)
    state = build_crystal(spec, **cfg["solver"])
    grad = build_gradient(cfg, state)
    cm = coupling_matrix_general(state, grad, cond_max=cfg["cond_max"])
    rec = {
        "trap": trap_summary(spec),
        "gradient_t_per_m": grad.b_vector,
        "b0_t": grad.b0,
        "J_hz": cm.J_hz,
        "max_abs_J_hz": cm.max_abs() / TWO_PI,
        "sign_pattern": cm.sign_pattern(),
        "index_legend": index_legend(spec),
        "lowest_mode_hz": float(state.mode_frequencies.min()),
        "zigzag_frequency_hz": stability_report(spec, state).zigzag_frequency,
    }
    if spec.chains == 2:
        rec["blocks"] = {k: {"max_abs_J_hz": v["max_abs"] / TWO_PI, "sign": v["sign"]} for k, v in cm.block_summary().items()}
    return rec


def compute_ground_state(cfg):
    spec = build_trap(cfg)
    if spec.n_ions > 26:
        raise ConfigError(f"trap: {spec.n_ions} spins exceed the exhaustive-search bound of 26")
    state = build_crystal(spec, **cfg["solver"])
    grad = build_gradient(cfg, state)
    cm = coupling_matrix_general(state, grad, cond_max=cfg["cond_max"])
    gs = ground_state(cm)
    rec = {
        "trap": trap_summary(spec),
        "energy_hz": gs.energy / TWO_PI,
        "ground_states": gs.configurations,
        "degeneracy": gs.degeneracy,
        "truncated": gs.truncated,
        "order": classify_order(gs.configurations[0], spec.chains, spec.ions_per_chain),
        "index_legend": index_legend(spec),
    }
    if spec.chains == 2:
        fr = frustration_report(cm, spec, state=state)
        rec["frustration"] = {
            "intra_max_hz": fr.intra_max / TWO_PI,
            "inter_max_hz": fr.inter_max / TWO_PI,
            "ratio": fr.ratio,
            "degenerate_ground_state_count": fr.degenerate_ground_state_count,
            "unsatisfied_bond_fraction": fr.unsatisfied_bond_fraction,
            "unsatisfied_weight_fraction": fr.unsatisfied_weight_fraction,
            "triple_asymmetry": fr.triple_asymmetry,
        }
    return rec


def compute_field(cfg):
    if "field" not in cfg:
        raise ConfigError("field: section required for this command")
    f = cfg["field"]
    geo = geometry_from(f)
    prof = gradient_profile(f["axis"], f["range_m"], f["samples"], geo, origin=f["origin_m"], on_null="zero")
    return {
        "axis": prof.axis,
        "coordinate_m": prof.coordinate,
        "B_t": prof.field,
        "B_abs_t": np.linalg.norm(prof.field, axis=1),
        "grad_abs_b_t_per_m": prof.gradient,
        "field_null": prof.null,
    }


COMMANDS = {
    "modes": compute_modes,
    "couple": compute_couple,
    "field": compute_field,
    "ground-state": compute_ground_state,
}


def _run_point(func, cfg, key=None, value=None):
    rec = {} if key is None else {"scan": {"key": key, "value": value}}
    point_cfg = cfg if key is None else apply_scan_value(cfg, key, value)
    try:
        rec.update(func(point_cfg))
        rec["status"] = "ok"
    except NUMERIC_ERRORS as exc:
        rec["status"] = "numerical_error"
        rec["error"] = f"{type(exc).__name__}: {exc}"
        if "trap" in point_cfg:
            # name the anisotropy at which the crystal went soft
            rec["alpha_x"] = build_trap(point_cfg).alpha_x
    return rec


def run(command, cfg, jobs=1):
    """Run a command on a resolved configuration and return the artifact."""
    func = COMMANDS[command]
    scan = cfg.get("scan")
    if scan is not None and command == "field":
        raise ConfigError("scan: not supported by the field command")
    if scan is None:
        results = [_run_point(func, cfg)]
    else:
        values = scan_values(scan)
        # validate once up front so config errors are not reported per point
        apply_scan_value(cfg, scan["key"], values[0])
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            results = list(pool.map(lambda v: _run_point(func, cfg, scan["key"], v), values))
    return {"command": command, "version": __version__, "config": cfg, "results": results}


# -- output ------------------------------------------------------------------------------


def to_json(artifact):
    out = _clean({k: v for k, v in artifact.items() if k != "config"})
    out["config"] = _clean(artifact["config"], None)
    return json.dumps(out, sort_keys=True, indent=2) + "\n"


def _fmt(x):
    x = _clean(x)
    return x if isinstance(x, str) else repr(x)


def _csv_rows(artifact):
    cmd = artifact["command"]
    for k, rec in enumerate(artifact["results"]):
        base = {"point": k}
        if "scan" in rec:
            base["scan_key"] = rec["scan"]["key"]
            base["scan_value"] = rec["scan"]["value"]
        base["status"] = rec["status"]
        if rec["status"] != "ok":
            yield {**base, "error": rec["error"]}
            continue
        if cmd == "modes":
            legend = rec["component_legend"]
            for m, (f, fz, v) in enumerate(zip(rec["frequencies_hz"], rec["frequencies_omega_z"], rec["eigenvectors"])):
                row = {**base, "mode": m, "frequency_hz": f, "frequency_omega_z": fz}
                if "chain_parity" in rec:
                    row["chain_parity"] = rec["chain_parity"][m]
                row.update(dict(zip(legend, v)))
                yield row
        elif cmd == "couple":
            J = np.asarray(rec["J_hz"])
            for i, li in enumerate(rec["index_legend"]):
                for j, lj in enumerate(rec["index_legend"]):
                    yield {**base, "n": i, "m": j, "chain_n": li["chain"], "ion_n": li["ion"],
                           "chain_m": lj["chain"], "ion_m": lj["ion"], "J_hz": J[i, j]}
        elif cmd == "field":
            for s in range(len(rec["coordinate_m"])):
                B, G = rec["B_t"][s], rec["grad_abs_b_t_per_m"][s]
                yield {**base, "coordinate_m": rec["coordinate_m"][s], "Bx_t": B[0], "By_t": B[1], "Bz_t": B[2],
                       "B_abs_t": rec["B_abs_t"][s], "dB_dx_t_per_m": G[0], "dB_dy_t_per_m": G[1],
                       "dB_dz_t_per_m": G[2], "field_null": bool(rec["field_null"][s])}
        elif cmd == "ground-state":
            for c, spins in enumerate(rec["ground_states"]):
                yield {**base, "state": c, "energy_hz": rec["energy_hz"], "degeneracy": rec["degeneracy"],
                       "order": rec["order"], "spins": " ".join(f"{int(s):+d}" for s in spins)}


def to_csv(artifact):
    rows = list(_csv_rows(artifact))
    fields = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    buf = io.StringIO()
    buf.write("# " + json.dumps({"command": artifact["command"], "config": _clean(artifact["config"], None)}, sort_keys=True) + "\n")
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    return buf.getvalue()


def build_parser():
    p = argparse.ArgumentParser(
        prog="ionmagic",
        description="Design magnetic-gradient spin-spin couplings for trapped-ion crystals.",
        epilog="exit codes: 0 success, 2 configuration error, 3 numerical failure "
        "(non-convergence, soft mode or field null; also when any scan point fails)",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "modes": "equilibrium and normal modes",
        "couple": "spin-spin coupling matrix J",
        "field": "chip field and gradient profile",
        "ground-state": "exact Ising ground state and frustration report",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text, description=text)
        s.add_argument("--config", required=True, help="YAML or JSON configuration file")
        s.add_argument("--out", default="-", help="output file ('-' for stdout)")
        s.add_argument("--format", choices=("json", "csv"), default="json")
        s.add_argument("--scan", help="override the scan: key=start:stop:steps with key in alpha_x, d, b, omega_z")
        s.add_argument("--jobs", type=int, default=1, help="scan points evaluated concurrently")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.scan:
            cfg["scan"] = parse_scan_option(args.scan)
        artifact = run(args.command, cfg, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    text = to_json(artifact) if args.format == "json" else to_csv(artifact)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    failed = any(r["status"] != "ok" for r in artifact["results"])
    if failed:
        print("numerical error at one or more points; see the artifact", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
