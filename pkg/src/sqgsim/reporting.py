"""Experiment reports, configuration digests and output file conventions."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .spectral import SpectralField


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, SpectralField):
        return {"spectral_field_sha256": hashlib.sha256(obj.coeffs.tobytes()).hexdigest()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return repr(x) if not math.isfinite(x) else x
    if callable(obj):
        return f"callable:{getattr(obj, '__qualname__', type(obj).__name__)}"
    return obj


def describe_config(cfg) -> dict:
    """Canonical, JSON-serializable description of a :class:`SimConfig`."""
    return _jsonable({
        "alpha": cfg.params.alpha,
        "kappa": cfg.params.kappa,
        "N": cfg.N,
        "dt": cfg.dt,
        "T": cfg.T,
        "seed": cfg.seed,
        "noise": None if cfg.noise is None else cfg.noise.describe(),
        "initial": cfg.initial,
        "init_seed": cfg.init_seed,
        "cadence": cfg.cadence,
        "nonlinear": cfg.nonlinear,
        "path_resolution": cfg.path_resolution,
        "refine": cfg.refine,
        "stream": cfg.stream,
    })


def digest(*parts: Any) -> str:
    text = json.dumps(_jsonable(list(parts)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def header_line(config_digest: str) -> str:
    return f"# config_digest={config_digest} version={__version__}"


def _fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@dataclass
class ExperimentReport:
    """Metric table plus verdicts; each verdict is ``True``, ``False`` or ``None`` (not evaluated)."""

    name: str
    digest: str
    rows: list[dict] = field(default_factory=list)
    verdicts: dict[str, bool | None] = field(default_factory=dict)
    constants: dict[str, Any] = field(default_factory=dict)
    regime: dict[str, Any] = field(default_factory=dict)
    in_regime: bool = True
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """All evaluated verdicts hold (outside-regime verdicts are not counted)."""
        return all(v for v in self.verdicts.values() if v is not None)

    @property
    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            cols.extend(c for c in row if c not in cols)
        return cols

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows])

    def write(self, outdir: str | Path) -> Path:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.csv", "w", newline="") as fh:
            fh.write(header_line(self.digest) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            cols = self.columns
            writer.writerow(cols)
            for row in self.rows:
                writer.writerow([_fmt(row.get(c, "")) for c in cols])
        with open(out / "report.txt", "w") as fh:
            fh.write(header_line(self.digest) + "\n")
            fh.write(self.summary())
            fh.write(f"written {_dt.datetime.now().isoformat(timespec='seconds')}\n")
        return out

    def summary(self) -> str:
        lines = [f"experiment: {self.name}"]
        lines.append("regime: " + ", ".join(f"{k}={_fmt(v)}" for k, v in self.regime.items()))
        if not self.in_regime:
            lines.append("outside-theorem-regime: theorem-level verdicts not evaluated")
        for k, v in self.constants.items():
            lines.append(f"{k} = {_fmt(v)}")
        for k, v in self.verdicts.items():
            state = "n/a (outside regime)" if v is None else ("PASS" if v else "FAIL")
            lines.append(f"verdict {k}: {state}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"
