"""Experiment configuration: YAML file + ``key=value`` overrides, validated
against a typed default tree. Errors carry the dotted path of the field."""

import copy
import hashlib
import json

import yaml

from .errors import ConfigError

EXPERIMENTS = ("ber_sweep", "cpl_sweep", "scaling_gain", "sinr_bounds", "complexity_report",
               "asymptotics")

REQUIRED = object()

DEFAULTS = {
    "experiment": REQUIRED,
    "seed": 0,
    "workers": 1,
    "output": "results.csv",
    "system": {
        "N": 4,
        "L": 4,
        "Q": 2,
        "snr_db": [6.0],
        "iterations": 7,
        "info_bits": 200000,
        "frame_coded_bits": 12000,
        "detectors": ["issma"],
        "fading": "fast",
        "channel": {"kind": "iid_gaussian", "rho": 0.8},
    },
    "search": {
        "M": None,
        "J": 16,
        "N_l": 5,
        "metric": "lela",
        "llr_clip": 8.0,
        "ordering": "vblast",
        "clip_mode": "fallback",
    },
    "analysis": {
        "sizes": [5, 10, 15, 20],
        "snr_db": [0.0, 5.0, 10.0, 15.0, 20.0],
        "trials": 100000,
        "bound_channels": 2000,
        "mc_samples": 20000,
        "instances": 1000,
        "N_l_values": [2, 3, 5, 8],
        "vectors": 200,
        "gamma_beta": [0.1, 0.3, 0.5, 0.7, 0.9],
        "lambda_min": 1.0,
        "lambda_max": 1.0,
        "finite_N": 0,
        "finite_channels": 200,
    },
}

# fields excluded from the reproducibility hash
NON_SEMANTIC = ("output", "workers")

_FLOAT_LIST = {"system.snr_db", "analysis.snr_db", "analysis.gamma_beta"}
_INT_LIST = {"analysis.sizes", "analysis.N_l_values"}
_STR_LIST = {"system.detectors"}


def _check_type(path, default, value):
    if path in _FLOAT_LIST or path in _INT_LIST or path in _STR_LIST:
        if not isinstance(value, (list, tuple)):
            value = [value]
        kind = float if path in _FLOAT_LIST else int if path in _INT_LIST else str
        out = []
        for v in value:
            if kind is str:
                if not isinstance(v, str):
                    raise ConfigError(path, f"expected a list of strings, got {v!r}")
                out.append(v)
            elif isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(path, f"expected a list of numbers, got {v!r}")
            elif kind is int and float(v) != int(v):
                raise ConfigError(path, f"expected integers, got {v!r}")
            else:
                out.append(kind(v))
        if not out:
            raise ConfigError(path, "must not be empty")
        return out
    if default is REQUIRED or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


def _merge(default, user, prefix=""):
    if not isinstance(user, dict):
        raise ConfigError(prefix or "<root>", "expected a mapping")
    out = {}
    for key in user:
        if key not in default:
            raise ConfigError(f"{prefix}{key}", "unknown field")
    for key, dval in default.items():
        path = f"{prefix}{key}"
        if isinstance(dval, dict):
            out[key] = _merge(dval, user.get(key, {}) or {}, path + ".")
        elif key in user:
            out[key] = _check_type(path, dval, user[key])
        elif dval is REQUIRED:
            raise ConfigError(path, "required field is missing")
        else:
            out[key] = copy.deepcopy(dval)
    return out


def apply_override(tree, assignment):
    """Apply one ``dotted.key=value`` override (value parsed as YAML)."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like key=value")
    key, raw = assignment.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(key, f"cannot parse value: {exc}") from None
    node = tree
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(key, "cannot override inside a scalar")
    node[parts[-1]] = value
    return tree


def load_config(path, overrides=(), seed=None, workers=None, output=None):
    """Read, override and validate a configuration file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("--config", f"invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    for o in overrides:
        apply_override(raw, o)
    if seed is not None:
        raw["seed"] = seed
    if workers is not None:
        raw["workers"] = workers
    if output is not None:
        raw["output"] = output
    return resolve(raw)


def resolve(raw):
    cfg = _merge(DEFAULTS, raw)
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {EXPERIMENTS}, got {cfg['experiment']!r}")
    if cfg["seed"] < 0 or cfg["seed"] >= 1 << 64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if cfg["workers"] < 1:
        raise ConfigError("workers", "must be >= 1")
    s = cfg["system"]
    se = cfg["search"]
    for name in ("N", "L", "iterations", "info_bits", "frame_coded_bits"):
        if s[name] < 1:
            raise ConfigError(f"system.{name}", "must be >= 1")
    if s["L"] < s["N"]:
        raise ConfigError("system.L", "must be >= system.N")
    if s["Q"] < 2 or s["Q"] % 2:
        raise ConfigError("system.Q", "must be even and >= 2")
    if s["frame_coded_bits"] % 2:
        raise ConfigError("system.frame_coded_bits", "must be even")
    for d in s["detectors"]:
        if d not in ("issma", "conventional_ma", "mmse_pic"):
            raise ConfigError("system.detectors", f"unknown detector {d!r}")
    if s["fading"] not in ("fast", "block"):
        raise ConfigError("system.fading", "must be 'fast' or 'block'")
    if s["channel"]["kind"] not in ("iid_gaussian", "kronecker_correlated"):
        raise ConfigError("system.channel.kind", "must be 'iid_gaussian' or 'kronecker_correlated'")
    if not 0 <= s["channel"]["rho"] < 1:
        raise ConfigError("system.channel.rho", "must lie in [0, 1)")

    needs_search = cfg["experiment"] == "complexity_report" or (
        cfg["experiment"] == "ber_sweep" and any(d != "mmse_pic" for d in s["detectors"]))
    if needs_search and se["M"] is None:
        raise ConfigError("search.M", "required for M-algorithm detectors")
    if se["M"] is not None:
        if isinstance(se["M"], bool) or not isinstance(se["M"], int) or se["M"] < 1:
            raise ConfigError("search.M", "must be an integer >= 1")
        if se["J"] > (1 << s["Q"]) * se["M"]:
            raise ConfigError("search.J", f"J <= 2^Q*M violated: J={se['J']}, 2^Q*M={(1 << s['Q']) * se['M']}")
    if se["J"] < 0:
        raise ConfigError("search.J", "must be >= 0")
    if not 0 <= se["N_l"]:
        raise ConfigError("search.N_l", "must be >= 0")
    if se["metric"] not in ("causal", "lela", "genie"):
        raise ConfigError("search.metric", "must be 'causal', 'lela' or 'genie'")
    if se["ordering"] not in ("vblast", "none"):
        raise ConfigError("search.ordering", "must be 'vblast' or 'none'")
    if se["clip_mode"] not in ("fallback", "always"):
        raise ConfigError("search.clip_mode", "must be 'fallback' or 'always'")
    if not se["llr_clip"] > 0:
        raise ConfigError("search.llr_clip", "must be > 0")

    a = cfg["analysis"]
    for name in ("trials", "bound_channels", "mc_samples", "instances", "vectors", "finite_channels"):
        if a[name] < 1:
            raise ConfigError(f"analysis.{name}", "must be >= 1")
    if any(n < 2 for n in a["sizes"]):
        raise ConfigError("analysis.sizes", "sizes must be >= 2")
    if any(not 0 < g < 1 for g in a["gamma_beta"]):
        raise ConfigError("analysis.gamma_beta", "values must lie in (0, 1)")
    if a["lambda_min"] <= 0 or a["lambda_max"] < a["lambda_min"]:
        raise ConfigError("analysis.lambda_min", "need 0 < lambda_min <= lambda_max")
    if any(n < 0 for n in a["N_l_values"]):
        raise ConfigError("analysis.N_l_values", "must be >= 0")
    return cfg


def config_hash(cfg):
    body = {k: v for k, v in cfg.items() if k not in NON_SEMANTIC}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def dump(cfg):
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None)
