"""Experiment configuration files for the command-line tool.

A configuration is a YAML (or JSON) mapping. Units are part of the key names;
frequencies given in Hz are ordinary frequencies ``omega / 2 pi``::

    species: Ca40
    trap:
      omega_z_hz: 310.0e+3
      alpha_x: 0.0097819          # or omega_x_hz
      alpha_y: 0.00939            # or omega_y_hz; defaults to alpha_x
      chains: 2
      ions_per_chain: 10
      d_m: 50.0e-6                # two chains only
      axial_shift_m: 0.0          # or axial_shift_spacing_fraction
    gradient:                     # either a direct gradient ...
      b_t_per_m: [0.0, 0.0, 40.0] # or a scalar together with axis: x|y|z
      b0_t: 0.0
    # gradient:                   # ... or a chip geometry
    #   geometry: ../geometries/loop_chip.yaml
    #   currents_a: {W1: 4.0, W2: -10.0}
    #   point_m: [0.0, 164.0e-6, 0.0]
    field:                        # used by the `field` command
      geometry: ../geometries/loop_chip.yaml
      currents_a: {W1: 4.0, W2: -10.0}
      axis: z
      range_m: [-1.0e-3, 1.0e-3]
      samples: 201
      origin_m: [0.0, 164.0e-6, 0.0]
    scan: {key: alpha_x, start: 0.01, stop: 0.04, steps: 7}
    solver: {tol: 1.0e-10, max_iter: 200}
    cond_max: 1.0e+12

Relative geometry paths are resolved against the configuration file and
then inlined, so the resolved configuration is self-contained.
"""

import copy
import math
import numbers
from pathlib import Path

import numpy as np
import yaml

from ._yaml import load_yaml
from .constants import TWO_PI, get_species
from .crystal import TrapSpec, anisotropy_from_frequencies, linear_chain_positions
from .coupling import GradientSpec
from .magnetics import CircuitGeometry

SCAN_KEYS = {
    "alpha_x": "alpha_x",
    "d": "d",
    "d_m": "d",
    "b": "b",
    "b_t_per_m": "b",
    "omega_z": "omega_z",
    "omega_z_hz": "omega_z",
}

TOP_KEYS = {"species", "trap", "gradient", "field", "scan", "solver", "cond_max", "description"}
TRAP_KEYS = {
    "omega_z_hz",
    "alpha_x",
    "omega_x_hz",
    "alpha_y",
    "omega_y_hz",
    "chains",
    "ions_per_chain",
    "d_m",
    "axial_shift_m",
    "axial_shift_spacing_fraction",
}
GRADIENT_KEYS = {"b_t_per_m", "axis", "b0_t", "geometry", "currents_a", "point_m", "per_ion"}
FIELD_KEYS = {"geometry", "currents_a", "axis", "range_m", "samples", "origin_m"}
DEFAULT_POINT = [0.0, 164e-6, 0.0]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _real(value, key, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real) or not math.isfinite(value):
        raise ConfigError(f"{key}: expected a finite number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{key}: must be positive, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(f"{key}: must be non-negative, got {value!r}")
    return float(value)


def _int(value, key, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < minimum:
        raise ConfigError(f"{key}: expected an integer >= {minimum}, got {value!r}")
    return int(value)


def _vec3(value, key):
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{key}: expected a list of three numbers, got {value!r}")
    return [_real(v, f"{key}[{i}]") for i, v in enumerate(value)]


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}; allowed: {sorted(allowed)}")


def _load_geometry(value, key, base):
    if isinstance(value, dict):
        data = value
    elif isinstance(value, str):
        path = Path(value)
        if not path.is_absolute() and base is not None:
            path = base / path
        try:
            data = load_yaml(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{key}: cannot read geometry file: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{key}: {path}: {exc}") from None
    else:
        raise ConfigError(f"{key}: expected a file path or an inline geometry mapping")
    try:
        geo = CircuitGeometry.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}") from None
    return geo.to_dict()


def _currents(value, key, geometry):
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"{key}: expected a mapping of conductor name to current")
    out = {str(k): _real(v, f"{key}.{k}") for k, v in value.items()}
    names = set(CircuitGeometry.from_dict(geometry).names)
    unknown = set(out) - names
    if unknown:
        raise ConfigError(f"{key}: no conductor named {sorted(unknown)}; available: {sorted(names)}")
    return out


def _normalize_trap(t):
    _check_keys(t, TRAP_KEYS, "trap")
    out = {}
    if "omega_z_hz" not in t:
        raise ConfigError("trap.omega_z_hz: required")
    out["omega_z_hz"] = _real(t["omega_z_hz"], "trap.omega_z_hz", positive=True)
    for axis in ("x", "y"):
        a, w = f"alpha_{axis}", f"omega_{axis}_hz"
        if a in t and w in t:
            raise ConfigError(f"trap: give either {a} or {w}, not both")
        if a in t:
            out[a] = _real(t[a], f"trap.{a}", positive=True)
        elif w in t:
            out[w] = _real(t[w], f"trap.{w}", positive=True)
        elif axis == "x":
            raise ConfigError("trap: one of alpha_x or omega_x_hz is required")
    out["chains"] = _int(t.get("chains", 1), "trap.chains")
    if out["chains"] not in (1, 2):
        raise ConfigError(f"trap.chains: must be 1 or 2, got {out['chains']}")
    out["ions_per_chain"] = _int(t.get("ions_per_chain", 1), "trap.ions_per_chain")
    if out["chains"] == 2:
        if "d_m" not in t:
            raise ConfigError("trap.d_m: required for two chains")
        out["d_m"] = _real(t["d_m"], "trap.d_m", positive=True)
        if "axial_shift_m" in t and "axial_shift_spacing_fraction" in t:
            raise ConfigError("trap: give either axial_shift_m or axial_shift_spacing_fraction")
        if "axial_shift_spacing_fraction" in t:
            out["axial_shift_spacing_fraction"] = _real(t["axial_shift_spacing_fraction"], "trap.axial_shift_spacing_fraction")
        else:
            out["axial_shift_m"] = _real(t.get("axial_shift_m", 0.0), "trap.axial_shift_m")
    else:
        for k in ("d_m", "axial_shift_m", "axial_shift_spacing_fraction"):
            if k in t:
                raise ConfigError(f"trap.{k}: only meaningful for two chains")
    return out


def _normalize_gradient(g, base):
    _check_keys(g, GRADIENT_KEYS, "gradient")
    direct = "b_t_per_m" in g
    chip = "geometry" in g
    if direct == chip:
        raise ConfigError("gradient: give exactly one of b_t_per_m or geometry")
    out = {"b0_t": _real(g.get("b0_t", 0.0), "gradient.b0_t", nonneg=True)}
    if direct:
        for k in ("currents_a", "point_m", "per_ion"):
            if k in g:
                raise ConfigError(f"gradient.{k}: only valid with a geometry")
        b = g["b_t_per_m"]
        if isinstance(b, (list, tuple)):
            if "axis" in g:
                raise ConfigError("gradient.axis: not allowed with a vector b_t_per_m")
            out["b_t_per_m"] = _vec3(b, "gradient.b_t_per_m")
        else:
            axis = g.get("axis", "z")
            if axis not in ("x", "y", "z"):
                raise ConfigError(f"gradient.axis: must be x, y or z, got {axis!r}")
            v = [0.0, 0.0, 0.0]
            v["xyz".index(axis)] = _real(b, "gradient.b_t_per_m")
            out["b_t_per_m"] = v
        return out
    if "axis" in g:
        raise ConfigError("gradient.axis: only valid with a scalar b_t_per_m")
    out["geometry"] = _load_geometry(g["geometry"], "gradient.geometry", base)
    out["currents_a"] = _currents(g.get("currents_a"), "gradient.currents_a", out["geometry"])
    out["point_m"] = _vec3(g.get("point_m", DEFAULT_POINT), "gradient.point_m")
    per_ion = g.get("per_ion", False)
    if not isinstance(per_ion, bool):
        raise ConfigError("gradient.per_ion: expected true or false")
    out["per_ion"] = per_ion
    return out


def _normalize_field(f, base):
    _check_keys(f, FIELD_KEYS, "field")
    if "geometry" not in f:
        raise ConfigError("field.geometry: required")
    out = {"geometry": _load_geometry(f["geometry"], "field.geometry", base)}
    out["currents_a"] = _currents(f.get("currents_a"), "field.currents_a", out["geometry"])
    axis = f.get("axis", "z")
    if axis not in ("x", "y", "z"):
        raise ConfigError(f"field.axis: must be x, y or z, got {axis!r}")
    out["axis"] = axis
    rng = f.get("range_m")
    if not isinstance(rng, (list, tuple)) or len(rng) != 2:
        raise ConfigError("field.range_m: expected [start, stop] in metres")
    lo, hi = _real(rng[0], "field.range_m[0]"), _real(rng[1], "field.range_m[1]")
    if not lo < hi:
        raise ConfigError("field.range_m: start must be below stop")
    out["range_m"] = [lo, hi]
    out["samples"] = _int(f.get("samples", 101), "field.samples", minimum=2)
    out["origin_m"] = _vec3(f.get("origin_m", DEFAULT_POINT), "field.origin_m")
    return out


def normalize_scan(s):
    _check_keys(s, {"key", "start", "stop", "steps"}, "scan")
    key = s.get("key")
    if key not in SCAN_KEYS:
        raise ConfigError(f"scan.key: must be one of {sorted(set(SCAN_KEYS.values()))}, got {key!r}")
    start = _real(s.get("start"), "scan.start")
    stop = _real(s.get("stop"), "scan.stop")
    steps = _int(s.get("steps"), "scan.steps")
    if steps > 1 and not start < stop:
        raise ConfigError("scan: start must be below stop")
    if steps == 1 and start != stop:
        raise ConfigError("scan: a single step needs start == stop")
    return {"key": SCAN_KEYS[key], "start": start, "stop": stop, "steps": steps}


def parse_scan_option(text):
    """Parse ``key=start:stop:steps``."""
    try:
        key, rng = text.split("=", 1)
        start, stop, steps = rng.split(":")
        return normalize_scan({"key": key.strip(), "start": float(start), "stop": float(stop), "steps": int(steps)})
    except ConfigError:
        raise
    except ValueError:
        raise ConfigError(f"--scan: expected key=start:stop:steps, got {text!r}") from None


def normalize_config(raw, base=None):
    """Validate a raw mapping and return the resolved configuration."""
    _check_keys(raw, TOP_KEYS, "config")
    cfg = {}
    species = raw.get("species", "Ca40")
    try:
        get_species(species)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"species: {exc}") from None
    cfg["species"] = species
    if "description" in raw:
        cfg["description"] = str(raw["description"])
    if "trap" in raw:
        cfg["trap"] = _normalize_trap(raw["trap"])
    if "gradient" in raw:
        cfg["gradient"] = _normalize_gradient(raw["gradient"], base)
    if "field" in raw:
        cfg["field"] = _normalize_field(raw["field"], base)
    if raw.get("scan") is not None:
        cfg["scan"] = normalize_scan(raw["scan"])
    solver = raw.get("solver", {}) or {}
    _check_keys(solver, {"tol", "max_iter"}, "solver")
    cfg["solver"] = {
        "tol": _real(solver.get("tol", 1e-10), "solver.tol", positive=True),
        "max_iter": _int(solver.get("max_iter", 200), "solver.max_iter"),
    }
    cfg["cond_max"] = _real(raw.get("cond_max", 1e12), "cond_max", positive=True)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        raw = load_yaml(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if raw is None:
        raise ConfigError(f"{path}: empty configuration")
    return normalize_config(raw, base=path.parent)


# -- building objects from a resolved config --------------------------------------------


def build_trap(cfg):
    if "trap" not in cfg:
        raise ConfigError("trap: section required for this command")
    t = cfg["trap"]
    wz = TWO_PI * t["omega_z_hz"]
    ax = t["alpha_x"] if "alpha_x" in t else anisotropy_from_frequencies(wz, TWO_PI * t["omega_x_hz"])
    if "alpha_y" in t:
        ay = t["alpha_y"]
    elif "omega_y_hz" in t:
        ay = anisotropy_from_frequencies(wz, TWO_PI * t["omega_y_hz"])
    else:
        ay = ax
    kw = {}
    if t["chains"] == 2:
        kw["chain_separation"] = t["d_m"]
        if "axial_shift_spacing_fraction" in t:
            spec1 = TrapSpec(get_species(cfg["species"]), wz, ax, ay, 1, t["ions_per_chain"])
            z = linear_chain_positions(t["ions_per_chain"]) * spec1.scale_length
            spacing = float(np.mean(np.diff(z))) if len(z) > 1 else 0.0
            kw["axial_shift"] = t["axial_shift_spacing_fraction"] * spacing
        else:
            kw["axial_shift"] = t["axial_shift_m"]
    try:
        return TrapSpec(get_species(cfg["species"]), wz, ax, ay, t["chains"], t["ions_per_chain"], **kw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"trap: {exc}") from None


def trap_summary(spec):
    """Both anisotropies and frequencies, echoed in every artifact."""
    wx, wy = spec.radial_frequencies
    return {
        "alpha_x": spec.alpha_x,
        "alpha_y": spec.alpha_y,
        "omega_x_hz": wx / TWO_PI,
        "omega_y_hz": wy / TWO_PI,
        "omega_z_hz": spec.omega_z / TWO_PI,
        "scale_length_m": spec.scale_length,
        "axial_shift_m": spec.axial_shift,
        "n_ions": spec.n_ions,
    }


def geometry_from(section):
    geo = CircuitGeometry.from_dict(section["geometry"])
    if section.get("currents_a"):
        geo = geo.with_currents(section["currents_a"])
    return geo


def build_gradient(cfg, state=None):
    """GradientSpec for the crystal; samples the chip field when a geometry is given."""
    from .magnetics import field_at, gradient_of_magnitude

    if "gradient" not in cfg:
        raise ConfigError("gradient: section required for this command")
    g = cfg["gradient"]
    if "b_t_per_m" in g:
        return GradientSpec(tuple(g["b_t_per_m"]), g["b0_t"])
    geo = geometry_from(g)
    p = np.asarray(g["point_m"])
    b = gradient_of_magnitude(p, geo)
    b0 = float(np.linalg.norm(field_at(p, geo)))
    if g["per_ion"]:
        if state is None:
            raise ValueError("per-ion gradient sampling needs the crystal state")
        over = np.array([gradient_of_magnitude(p + r, geo) for r in state.positions])
        return GradientSpec(tuple(b), b0, over)
    return GradientSpec(tuple(b), b0)


def apply_scan_value(cfg, key, value):
    """Copy of ``cfg`` with one scanned parameter set."""
    c = copy.deepcopy(cfg)
    c.pop("scan", None)
    if key == "alpha_x":
        c["trap"].pop("omega_x_hz", None)
        c["trap"]["alpha_x"] = value
    elif key == "d":
        if c["trap"]["chains"] != 2:
            raise ConfigError("scan d: needs two chains")
        c["trap"]["d_m"] = value
    elif key == "omega_z":
        c["trap"]["omega_z_hz"] = value
    elif key == "b":
        g = c.get("gradient")
        if g is None or "b_t_per_m" not in g:
            raise ConfigError("scan b: needs a direct gradient (b_t_per_m)")
        v = np.asarray(g["b_t_per_m"], float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ConfigError("scan b: gradient direction undefined for a zero vector")
        g["b_t_per_m"] = (v / n * value).tolist()
    return c


def scan_values(scan):
    return np.linspace(scan["start"], scan["stop"], scan["steps"]).tolist()
