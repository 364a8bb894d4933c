"""Experiment configuration: strict TOML loading, canonical hashing.

The schema is deliberately rigid.  Every key is typed, unknown keys are
rejected, and all problems found in one file are reported together so a
user fixes the config in one pass.  A loaded config normalizes to a plain
dict with every default materialized; the hash of that dict identifies
the experiment, and emitting it back to TOML and reloading reproduces the
same hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

try:
    import tomllib
except ModuleNotFoundError:                     # Python 3.10
    import tomli as tomllib

from .fracop import SpaceConfig
from .galerkin import SchemeConfig
from .model import Q_RANGE_MESSAGE, DriftF, DriftH, NoiseModel, default_model

KINDS = ("check", "eig", "simulate", "moments", "aldous", "converge")
OPERATOR_MODES = ("SpectralPower", "IntegralFEM")
INITIAL_PROFILES = ("sine", "hat", "flat")

_MISSING = object()


class ConfigError(ValueError):
    """Carries every problem found in a config file at once."""

    def __init__(self, problems):
        self.problems = tuple(problems)
        super().__init__("\n".join(self.problems))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    master_seed: int
    output_dir: str
    space_mode: str
    space: SpaceConfig
    drift_f: DriftF
    drift_h: DriftH
    noise: NoiseModel
    scheme: SchemeConfig
    experiment: dict
    raw: dict

    def config_hash(self) -> str:
        # where the artifacts land has no bearing on what was computed
        payload = {k: v for k, v in self.raw.items() if k != "output_dir"}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _coerce(value, expect):
    """Return (ok, coerced) for one typed value."""
    if expect == "int":
        return _is_int(value), value
    if expect == "float":
        if _is_int(value) or isinstance(value, float):
            return True, float(value)
        return False, value
    if expect == "bool":
        return isinstance(value, bool), value
    if expect == "str":
        return isinstance(value, str), value
    if expect.startswith("list["):
        if not isinstance(value, list):
            return False, value
        inner = expect[5:-1]
        out = []
        for item in value:
            ok, coerced = _coerce(item, inner)
            if not ok:
                return False, value
            out.append(coerced)
        return True, out
    raise AssertionError(expect)


class _Reader:
    """Typed key extraction from one TOML table, recording problems."""

    def __init__(self, table, label, problems):
        self.table = dict(table)
        self.label = label
        self.problems = problems

    def take(self, key, expect, default=_MISSING):
        if key not in self.table:
            if default is _MISSING:
                self.problems.append(
                    f"[{self.label}] missing required key '{key}'")
                return None
            return default
        value = self.table.pop(key)
        ok, coerced = _coerce(value, expect)
        if not ok:
            self.problems.append(
                f"[{self.label}] key '{key}' must be a {expect}, "
                f"got {value!r}")
            return None
        return coerced

    def finish(self):
        for key in self.table:
            self.problems.append(f"[{self.label}] unknown key '{key}'")


def _build(label, ctor, problems, /, **kwargs):
    if any(v is None for v in kwargs.values()):
        return None
    try:
        return ctor(**kwargs)
    except ValueError as exc:
        problems.append(f"[{label}] {exc}")
        return None


def _parse_space(table, problems):
    r = _Reader(table, "space", problems)
    mode = r.take("mode", "str", "SpectralPower")
    kwargs = dict(
        a=r.take("a", "float", 0.0), b=r.take("b", "float", 1.0),
        N=r.take("N", "int"), s=r.take("s", "float"),
        p=r.take("p", "float", 4.0),
    )
    r.finish()
    if mode is not None and mode not in OPERATOR_MODES:
        problems.append(f"[space] mode must be one of {OPERATOR_MODES}, "
                        f"got {mode!r}")
        mode = None
    return mode, _build("space", SpaceConfig, problems, **kwargs)


def _parse_drift_f(table, space, problems):
    if table is None:
        p = space.p if space is not None else 4.0
        return DriftF(family="PowerDecay", p=p, delta1=1.0, delta2=1.0,
                      delta3=0.5)
    r = _Reader(table, "drift_f", problems)
    kwargs = dict(
        family=r.take("family", "str", "PowerDecay"),
        p=r.take("p", "float", space.p if space is not None else 4.0),
        delta1=r.take("delta1", "float"),
        delta2=r.take("delta2", "float"),
        phi1=r.take("phi1", "float", 0.0),
        phi2=r.take("phi2", "float", 0.0),
        delta3=r.take("delta3", "float", None),
        phi4=r.take("phi4", "float", 0.0),
    )
    r.finish()
    if kwargs["family"] not in (None, "PowerDecay"):
        problems.append("[drift_f] only the PowerDecay family can be "
                        "configured from a file")
        return None
    delta3 = kwargs.pop("delta3")
    built = _build("drift_f", DriftF, problems, **kwargs)
    return replace(built, delta3=delta3) if built is not None else None


def _parse_drift_h(table, problems):
    if table is None:
        return DriftH(family="BoundedSine", kappa=0.5, phi3=0.5)
    r = _Reader(table, "drift_h", problems)
    kwargs = dict(
        family=r.take("family", "str", "BoundedSine"),
        kappa=r.take("kappa", "float"),
        phi3=r.take("phi3", "float"),
    )
    r.finish()
    return _build("drift_h", DriftH, problems, **kwargs)


def _parse_noise(table, problems):
    if table is None:
        return default_model()[2]
    r = _Reader(table, "noise", problems)
    kwargs = dict(
        m=r.take("m", "int"),
        q=r.take("q", "float"),
        sigma1_coeffs=r.take("sigma1_coeffs", "list[float]"),
        beta=r.take("beta", "list[float]"),
        gamma=r.take("gamma", "list[float]"),
        sigma1_profile=r.take("sigma1_profile", "str", "sine"),
        beta_tail=r.take("beta_tail", "float", 0.0),
        gamma_tail=r.take("gamma_tail", "float", 0.0),
    )
    alpha = r.take("alpha", "list[float]", None)
    r.finish()
    for key in ("sigma1_coeffs", "beta", "gamma"):
        if kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    if alpha is not None:
        kwargs["alpha"] = tuple(alpha)
    return _build("noise", NoiseModel, problems, **kwargs)


def _parse_scheme(table, master_seed, problems):
    r = _Reader(table if table is not None else {}, "scheme", problems)
    kwargs = dict(
        scheme=r.take("scheme", "str", "ExponentialTamed"),
        dt=r.take("dt", "float", 0.01),
        T=r.take("T", "float", 1.0),
        tame_diffusion=r.take("tame_diffusion", "bool", True),
        stability_guard=r.take("stability_guard", "float", 2.0),
    )
    r.finish()
    if master_seed is None:
        return None
    return _build("scheme", SchemeConfig, problems,
                  master_seed=master_seed, **kwargs)


def _parse_experiment(table, kind, problems):
    """Kind-specific keys, every default materialized."""
    r = _Reader(table, "experiment", problems)
    out = {}

    def grab(key, expect, default=_MISSING):
        out[key] = r.take(key, expect, default)

    if kind == "check":
        grab("n_states", "int", 200)
        grab("n_u", "int", 181)
    elif kind == "eig":
        grab("count", "int", 0)            # 0 means all
    elif kind == "simulate":
        grab("n_modes", "int")
        grab("initial_profile", "str", "sine")
        grab("initial_scale", "float", 1.0)
        grab("path_index", "int", 0)
    elif kind == "moments":
        grab("levels", "list[int]")
        grab("p_exp", "list[float]", [1.0])
        grab("initial_scales", "list[float]", [0.5, 1.0])
        grab("initial_profile", "str", "sine")
        grab("n_paths", "int")
        grab("beta_exp", "float", 0.0)
        grab("spread_limit", "float", 1.25)
    elif kind == "aldous":
        grab("n_modes", "int")
        grab("delta_grid", "list[float]")
        grab("theta_grid", "list[float]")
        grab("n_paths", "int")
        grab("initial_profile", "str", "sine")
        grab("initial_scale", "float", 1.0)
        grab("h_mode", "int", 1)
        grab("excursion_quantile", "float", 0.999)
        grab("excursion_limit", "float", 5.0)
    elif kind == "converge":
        grab("levels", "list[int]")
        grab("n_paths", "int")
        grab("initial_profile", "str", "hat")
        grab("initial_scale", "float", 1.0)
    r.finish()

    profile = out.get("initial_profile")
    if profile is not None and profile not in INITIAL_PROFILES:
        problems.append(f"[experiment] initial_profile must be one of "
                        f"{INITIAL_PROFILES}, got {profile!r}")
    if out.get("n_paths") is not None and out["n_paths"] < 2:
        problems.append("[experiment] n_paths must be at least 2")
    if out.get("h_mode") is not None and out["h_mode"] < 1:
        problems.append("[experiment] h_mode counts modes from 1")
    for key in ("levels", "p_exp", "initial_scales", "delta_grid",
                "theta_grid"):
        if out.get(key) is not None and len(out[key]) == 0:
            problems.append(f"[experiment] {key} must be nonempty")
    if kind == "converge" and out.get("levels") is not None \
            and len(out["levels"]) < 2:
        problems.append("[experiment] converge needs at least two levels")
    if kind == "aldous" and out.get("h_mode") is not None \
            and out.get("n_modes") is not None \
            and out["h_mode"] > out["n_modes"]:
        problems.append("[experiment] h_mode exceeds n_modes")
    return out


def _raw_section(obj, fields):
    out = {}
    for name in fields:
        value = getattr(obj, name)
        if value is None:
            continue
        if isinstance(value, tuple):
            value = [float(v) for v in value]
        elif isinstance(value, bool):
            pass
        elif isinstance(value, float):
            value = float(value)
        elif isinstance(value, int):
            value = int(value)
        out[name] = value
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment config, reporting every
    problem found."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"not valid TOML: {exc}"]) from None

    problems: list[str] = []
    r = _Reader(data, "top level", problems)
    kind = r.take("kind", "str")
    master_seed = r.take("master_seed", "int", 2026)
    output_dir = r.take("output_dir", "str", "out")
    space_tbl = r.table.pop("space", None)
    f_tbl = r.table.pop("drift_f", None)
    h_tbl = r.table.pop("drift_h", None)
    noise_tbl = r.table.pop("noise", None)
    scheme_tbl = r.table.pop("scheme", None)
    exp_tbl = r.table.pop("experiment", None)
    r.finish()

    if kind is not None and kind not in KINDS:
        problems.append(f"kind must be one of {KINDS}, got {kind!r}")
        kind = None
    if master_seed is not None and master_seed < 0:
        problems.append("master_seed must be nonnegative")
        master_seed = None
    if space_tbl is None:
        problems.append("missing required table [space]")
        mode, space = None, None
    else:
        mode, space = _parse_space(space_tbl, problems)

    f = _parse_drift_f(f_tbl, space, problems)
    h = _parse_drift_h(h_tbl, problems)
    noise = _parse_noise(noise_tbl, problems)
    scheme = _parse_scheme(scheme_tbl, master_seed, problems)
    if exp_tbl is None and kind in ("check", "eig"):
        exp_tbl = {}          # every key for these kinds has a default
    experiment = (_parse_experiment(exp_tbl, kind, problems)
                  if exp_tbl is not None and kind is not None else None)
    if exp_tbl is None:
        problems.append("missing required table [experiment]")

    if f is not None and space is not None and f.p != space.p:
        problems.append("[drift_f] growth exponent p must match [space] p")
    if f is not None and noise is not None and not 2.0 <= noise.q < f.p:
        problems.append(f"[noise] {Q_RANGE_MESSAGE}")
    if experiment is not None and space is not None:
        cap = space.N
        for level in (experiment.get("levels") or []):
            if not 1 <= level <= cap:
                problems.append(f"[experiment] level {level} outside the "
                                f"operator dimension range 1..{cap}")
        n_modes = experiment.get("n_modes")
        if n_modes is not None and not 1 <= n_modes <= cap:
            problems.append(f"[experiment] n_modes {n_modes} outside the "
                            f"operator dimension range 1..{cap}")

    if problems:
        raise ConfigError(problems)

    raw = {
        "kind": kind,
        "master_seed": master_seed,
        "output_dir": output_dir,
        "space": {"mode": mode,
                  **_raw_section(space, ("a", "b", "N", "s", "p"))},
        "drift_f": _raw_section(
            f, ("family", "p", "delta1", "delta2", "phi1", "phi2",
                "delta3", "phi4")),
        "drift_h": _raw_section(h, ("family", "kappa", "phi3")),
        "noise": _raw_section(
            noise, ("m", "q", "sigma1_coeffs", "beta", "gamma", "alpha",
                    "sigma1_profile", "beta_tail", "gamma_tail")),
        "scheme": _raw_section(
            scheme, ("scheme", "dt", "T", "tame_diffusion",
                     "stability_guard")),
        "experiment": dict(sorted(experiment.items())),
    }
    return ExperimentConfig(
        kind=kind, master_seed=master_seed, output_dir=output_dir,
        space_mode=mode, space=space, drift_f=f, drift_h=h, noise=noise,
        scheme=scheme, experiment=experiment, raw=raw,
    )


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode()
    return parse_config(text)


def with_overrides(cfg: ExperimentConfig, seed: int | None = None,
                   output_dir: str | None = None) -> ExperimentConfig:
    """Apply command-line overrides, keeping the normalized dict and the
    hash consistent with the effective values."""
    if seed is None and output_dir is None:
        return cfg
    raw = json.loads(json.dumps(cfg.raw))
    scheme = cfg.scheme
    master_seed = cfg.master_seed
    if seed is not None:
        if seed < 0:
            raise ConfigError(["master_seed must be nonnegative"])
        master_seed = seed
        scheme = replace(scheme, master_seed=seed)
        raw["master_seed"] = seed
    out = cfg.output_dir if output_dir is None else output_dir
    raw["output_dir"] = out
    return replace(cfg, master_seed=master_seed, output_dir=out,
                   scheme=scheme, raw=raw)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot emit {type(value).__name__} to TOML")


def to_toml(cfg: ExperimentConfig) -> str:
    """Emit the normalized config; reloading it reproduces the hash."""
    lines = []
    for key in ("kind", "master_seed", "output_dir"):
        lines.append(f"{key} = {_toml_value(cfg.raw[key])}")
    for section in ("space", "drift_f", "drift_h", "noise", "scheme",
                    "experiment"):
        lines.append("")
        lines.append(f"[{section}]")
        for key, value in cfg.raw[section].items():
            lines.append(f"{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"
