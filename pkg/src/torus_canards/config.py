"""Run configuration: a JSON document with fixed sections and no unknown keys."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any

from . import __version__
from .errors import ConfigError
from .flow import IntegratorConfig
from .retmap import Tolerances
from .system import CosineOval, SectionGeometry, SlowFastSystem, make_geometry, validate_genericity

DEFAULTS: dict[str, Any] = {
    "family": "cosine_oval",
    "k": 1.5,
    "g_amp": 0.0,
    "f1_amp": 0.0,
    "delta_plus": None,
    "delta_minus": None,
    "seed": 0,
    "out": "out",
    "tolerances": {
        "rel_tol": 1e-10,
        "abs_tol": 1e-12,
        "max_steps": 10_000_000,
        "tol_fix": 1e-9,
        "tol_hyp": 1e-3,
        "tol_slope": 1e-6,
        "tol_tangent": 1e-6,
        "n_scan": 256,
        "n_refine": 256,
    },
    "graph": {"eps": 0.1, "n_uniform": 256},
    "windows": {"eps_lo": 0.04, "eps_hi": 0.3, "n_min": None, "n_max": None,
                "n_census": 5, "n_grid": 60},
    "verify": {"checks": None},
    "balance": {"eps": [0.2, 0.14, 0.1, 0.07, 0.05], "b": 0.1},
    "sweep": {"eps_lo": 0.05, "eps_hi": 0.3, "n": 40, "n_iter": 200},
}

FAMILIES = ("cosine_oval",)


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{where}' must be an object")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = val
    return out


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw: dict | None = None) -> "RunConfig":
        cfg = cls(_merge(DEFAULTS, raw or {}))
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls.from_dict({})
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                              f"{exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(raw)

    def check(self):
        d = self.data
        if d["family"] not in FAMILIES:
            raise ConfigError(f"unknown family {d['family']!r}; available: {FAMILIES}")
        for key in ("k", "g_amp", "f1_amp"):
            if not isinstance(d[key], (int, float)) or not math.isfinite(d[key]):
                raise ConfigError(f"'{key}' must be a finite number")
        for key in ("delta_plus", "delta_minus"):
            if d[key] is not None and not (isinstance(d[key], (int, float)) and d[key] > 0):
                raise ConfigError(f"'{key}' must be positive or null")
        t = d["tolerances"]
        try:
            IntegratorConfig(t["rel_tol"], t["abs_tol"], int(t["max_steps"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"tolerances: {exc}") from exc
        w = d["windows"]
        if not 0 < w["eps_lo"] < w["eps_hi"]:
            raise ConfigError("windows: need 0 < eps_lo < eps_hi")

    def __getitem__(self, key):
        return self.data[key]

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def stamp(self) -> dict:
        return {"config_hash": self.hash, "version": __version__}

    # builders -------------------------------------------------------------

    def raw_system(self) -> SlowFastSystem:
        d = self.data
        return CosineOval(k=float(d["k"]), g_amp=float(d["g_amp"]), f1_amp=float(d["f1_amp"]))

    def system(self) -> SlowFastSystem:
        """The normalised system; raises ``GeometryError`` if validation fails."""
        from .errors import GeometryError

        rep = validate_genericity(self.raw_system())
        if not rep.ok or rep.normalized is None:
            bad = [k for k, v in rep.conditions.items() if not v]
            raise GeometryError(f"system fails genericity conditions: {bad}")
        return rep.normalized

    def geometry(self, sys: SlowFastSystem) -> SectionGeometry:
        return make_geometry(sys, self.data["delta_plus"], self.data["delta_minus"])

    def integrator(self) -> IntegratorConfig:
        t = self.data["tolerances"]
        return IntegratorConfig(float(t["rel_tol"]), float(t["abs_tol"]), int(t["max_steps"]))

    def tolerances(self) -> Tolerances:
        t = self.data["tolerances"]
        return Tolerances(tol_fix=t["tol_fix"], tol_hyp=t["tol_hyp"], tol_slope=t["tol_slope"],
                          tol_tangent=t["tol_tangent"], n_scan=int(t["n_scan"]),
                          n_refine=int(t["n_refine"]))
