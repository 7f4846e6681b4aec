"""Strict parsing of run-configuration files.

Files are INI-style key-value documents::

    [model]
    alpha = 0.75
    kappa = 1.0

    [grid]
    N = 32
    dt = 1e-3
    T = 1.0

    [noise]
    variant = ergodic     ; none | additive | multiplicative | ergodic
    s = 1.0
    q_min = 1.0
    q_max = 1.0
    seed = 0

Unknown sections or keys are errors, reported with their line number.
"""

from __future__ import annotations

import configparser
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .integrator import SimConfig
from .noise import AdditiveDiagonal, LinearMultiplicative, NoiseModel, make_ergodic_covariance
from .operators import OperatorParams
from .reporting import describe_config, digest

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "EXPERIMENTS"]

log = logging.getLogger(__name__)

EXPERIMENTS = ("converge", "uniqueness", "lp-monitor", "markov", "ergodic", "mixing")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")
        self.line = line


def _float(v: str) -> float:
    x = float(v)
    if math.isnan(x):
        raise ValueError("nan not allowed")
    return x


def _int(v: str) -> int:
    return int(v)


def _bool(v: str) -> bool:
    t = v.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _int_list(v: str) -> list[int]:
    return [int(x) for x in re.split(r"[,\s]+", v.strip()) if x]


def _float_list(v: str) -> list[float]:
    """Comma list, or ``start:stop:step`` (stop inclusive)."""
    v = v.strip()
    if ":" in v:
        a, b, h = (float(x) for x in v.split(":"))
        if h <= 0 or b < a:
            raise ValueError("range needs step > 0 and stop >= start")
        n = int(math.floor((b - a) / h + 1e-9))
        return [a + i * h for i in range(n + 1)]
    return [float(x) for x in re.split(r"[,\s]+", v) if x]


def _modes(v: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in v.split(";"):
        part = part.strip()
        if part:
            k1, k2 = (int(x) for x in part.split(","))
            out.append((k1, k2))
    if not out:
        raise ValueError("empty mode list")
    return tuple(out)


def _str(v: str) -> str:
    return v.strip()


SCHEMA: dict[str, dict[str, Callable[[str], Any]]] = {
    "model": {"alpha": _float, "kappa": _float, "nonlinear": _bool},
    "grid": {"N": _int, "dt": _float, "T": _float},
    "noise": {"variant": _str, "sigma": _float, "s": _float, "q_min": _float, "q_max": _float,
              "amplitude": _float, "decay": _float, "kmax": _float, "modes": _modes, "seed": _int},
    "init": {"kind": _str, "seed": _int},
    "output": {"directory": _str, "cadence": _int, "snapshot_every": _int},
    "experiment": {"name": _str, "resolutions": _int_list, "p": _float, "s": _float, "t": _float,
                   "m": _int, "T_long": _float, "burn_in": _float, "delta": _float,
                   "t_grid": _float_list, "ceiling": _float, "coupled": _bool, "n_batches": _int,
                   "start0": _str, "start1": _str},
}
REQUIRED = {"model": ("alpha", "kappa"), "grid": ("N", "dt", "T")}
NOISE_KEYS = {
    "none": (),
    "additive": ("amplitude", "decay", "kmax", "modes"),
    "multiplicative": ("sigma",),
    "ergodic": ("s", "q_min", "q_max"),
}


@dataclass
class RunConfig:
    """Validated configuration: the simulation, output layout and experiment selection."""

    sim: SimConfig
    values: dict[str, dict[str, Any]]
    output_dir: Path = Path("out")
    snapshot_every: int | None = None
    experiment: str | None = None
    experiment_args: dict[str, Any] = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return digest(self.values, describe_config(self.sim))

    @property
    def regime(self) -> str:
        return self.sim.params.regime


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    """Line numbers of section headers and keys."""
    idx: dict[tuple[str, str | None], int] = {}
    section = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            idx.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:\s]+)\s*[=:]", line)
        if m and section is not None:
            idx.setdefault((section, m.group(1).strip()), no)
    return idx


def _noise_model(noise: dict, alpha: float, kappa: float, line: Callable[[str], int | None],
                 source: str) -> NoiseModel | None:
    variant = noise.get("variant", "none")
    if variant not in NOISE_KEYS:
        raise ConfigError(f"unknown noise variant {variant!r}; expected one of {sorted(NOISE_KEYS)}",
                          line("variant"), source)
    for key in noise:
        if key not in ("variant", "seed") and key not in NOISE_KEYS[variant]:
            raise ConfigError(f"key {key!r} does not apply to noise variant {variant!r}", line(key), source)
    try:
        if variant == "none":
            return None
        if variant == "additive":
            return AdditiveDiagonal(amplitude=noise.get("amplitude", 1.0), decay=noise.get("decay", 0.0),
                                    kmax=noise.get("kmax"), modes=noise.get("modes"))
        if variant == "multiplicative":
            if "sigma" not in noise:
                raise ConfigError("multiplicative noise needs sigma", line("variant"), source)
            return LinearMultiplicative(noise["sigma"])
        q_min, q_max = noise.get("q_min", 1.0), noise.get("q_max", noise.get("q_min", 1.0))
        if q_min == q_max:
            return make_ergodic_covariance(alpha, kappa, noise.get("s", 1.0), q_min)

        # q(k) interpolates from q_max on the unit shell towards q_min
        def q(k1, k2, lo=q_min, hi=q_max):
            k2sum = k1.astype(float) ** 2 + k2.astype(float) ** 2
            return lo + (hi - lo) / k2sum.clip(min=1.0)

        return make_ergodic_covariance(alpha, kappa, noise.get("s", 1.0), q, q_min, q_max)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid noise: {exc}", line("variant"), source) from None


def parse_config_text(text: str, *, source: str = "<config>", seed: int | None = None,
                      base_dir: Path | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"),
                                       strict=True)
    parser.optionxform = str  # keys are case sensitive (N, T)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed configuration: {exc.message.splitlines()[0]}", line, source) from None
    lines = _line_index(text)

    values: dict[str, dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)), source)
        values[section] = {}
        for key, raw in parser.items(section):
            ln = lines.get((section, key))
            if key not in SCHEMA[section]:
                known = ", ".join(sorted(SCHEMA[section]))
                raise ConfigError(f"unknown key {key!r} in [{section}] (known: {known})", ln, source)
            try:
                values[section][key] = SCHEMA[section][key](raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"cannot parse {key} = {raw!r}: {exc}", ln, source) from None
    for section, keys in REQUIRED.items():
        if section not in values:
            raise ConfigError(f"missing required section [{section}]", None, source)
        for key in keys:
            if key not in values[section]:
                raise ConfigError(f"missing required key {key!r}", lines.get((section, None)), source)

    if seed is not None:
        values.setdefault("noise", {})["seed"] = seed

    def line_of(section):
        return lambda key: lines.get((section, key), lines.get((section, None)))

    model, grid = values["model"], values["grid"]
    try:
        params = OperatorParams(model["alpha"], model["kappa"])
    except ValueError as exc:
        key = "alpha" if "alpha" in str(exc) else "kappa"
        raise ConfigError(str(exc), line_of("model")(key), source) from None

    noise = _noise_model(values.get("noise", {}), params.alpha, params.kappa, line_of("noise"), source)
    init = values.get("init", {})
    kind = init.get("kind", "zero")
    if kind.startswith("snapshot:") and base_dir is not None:
        p = Path(kind.partition(":")[2])
        kind = f"snapshot:{p if p.is_absolute() else base_dir / p}"
    output = values.get("output", {})
    try:
        sim = SimConfig(params=params, N=grid["N"], dt=grid["dt"], T=grid["T"],
                        seed=values.get("noise", {}).get("seed", 0), noise=noise, initial=kind,
                        init_seed=init.get("seed", 0), cadence=output.get("cadence", 1),
                        nonlinear=model.get("nonlinear", True))
        sim.initial_state()
    except (ValueError, OSError) as exc:
        key = "kind" if "initial" in str(exc) or "snapshot" in str(exc) else None
        sec = "init" if key else "grid"
        raise ConfigError(str(exc), line_of(sec)(key) if key else lines.get((sec, None)), source) from None

    exp = dict(values.get("experiment", {}))
    name = exp.pop("name", None)
    if name is not None and name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {list(EXPERIMENTS)}",
                          line_of("experiment")("name"), source)

    cfg = RunConfig(sim=sim, values=values, output_dir=Path(output.get("directory", "out")),
                    snapshot_every=output.get("snapshot_every"), experiment=name, experiment_args=exp)
    log.info("configuration %s: alpha=%g (%s), kappa=%g, N=%d", cfg.digest, params.alpha,
             params.regime, params.kappa, sim.N)
    return cfg


def parse_config(path: str | Path, *, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", None, str(path)) from None
    return parse_config_text(text, source=str(path), seed=seed, base_dir=path.parent)
