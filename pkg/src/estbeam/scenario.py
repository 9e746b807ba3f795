"""Scenario files.

A scenario is a JSON object with five sections.  Units are part of every
field name (``_deg``, ``_db``, ``_dbm``, ``_dbw``, ``_m``, ``_s``, ``_hz``).
Logarithmic quantities are stored as written in the file and converted to
linear units once, when the scenario is parsed.

Missing fields take the defaults below, which describe a 16-element array
serving four users while sensing a car-sized target 27 m away.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import warnings
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from .array import ArrayGeometry, ChannelSet, Multipath, generate_channels
from .crb import SensingParams, Z1_ORIENTATION, Z1_SUBSECTION
from .design import (COEF_NUMERIC, COEF_Z1, EIGENVECTOR, GAUSSIAN, DesignConstraints)
from .echo import SimConfig
from .errors import ScenarioError
from .geometry import APPROXIMATE, EXACT, ContourModel, TargetPose

CRB_MIN = "crb-min"
VARIANTS = (CRB_MIN, "bp1", "bp2")

DEFAULT_M = [2.05, -0.002, 0.5, 0.0, 0.056, 0.001, -0.125, 0.003]
DEFAULT_N = [1.24, -0.001, 0.335, -0.001, 0.124, -0.001, 0.018, 0.0]

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "array": {"n_t": 16, "n_r": 16},
    "users": {
        "angles_deg": [-60.0, -35.0, 35.0, 60.0],
        "gamma_db": 5.0,
        "noise_dbm": -80.0,
        "channel_model": "los-only",
        "multipath_paths": 3,
        "multipath_decay": 0.5,
        "channel_seed": 0,
    },
    "power": {"pt_dbw": 0.0},
    "sensing": {
        "d_o_m": 27.0,
        "phi_o_deg": 0.0,
        "varphi_deg": 0.0,
        "k": 8,
        "q": 8,
        "m": DEFAULT_M,
        "n": DEFAULT_N,
        "t_s_s": 1.0,
        "noise_dbm": -80.0,
        "bandwidth_hz": 100e6,
        "jacobian_mode": APPROXIMATE,
        "z1_mode": Z1_SUBSECTION,
        "los_samples": 4096,
    },
    "design": {
        "variant": CRB_MIN,
        "n_e": 100,
        "seed": 0,
        "tolerance": 1e-8,
        "max_iterations": 200,
        "coverage": True,
        "power_fill": True,
        "randomization": GAUSSIAN,
        "pk_coefficient": COEF_NUMERIC,
        "beamwidth_deg": 10.0,
        "grid_step_deg": 1.0,
    },
    "sim": {
        "sample_rate_hz": 200e6,
        "num_samples": 512,
        "runs": 200,
        "seed": 0,
        "grid_halfwidth_deg": 2.0,
        "grid_step_deg": 0.02,
    },
}

_CHOICES = {
    ("users", "channel_model"): ("los-only", "multipath"),
    ("sensing", "jacobian_mode"): (APPROXIMATE, EXACT),
    ("sensing", "z1_mode"): (Z1_SUBSECTION, Z1_ORIENTATION),
    ("design", "variant"): VARIANTS,
    ("design", "randomization"): (GAUSSIAN, EIGENVECTOR),
    ("design", "pk_coefficient"): (COEF_NUMERIC, COEF_Z1),
}


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def dbw_to_watts(dbw: float) -> float:
    return 10.0 ** (dbw / 10.0)


def _check_type(section: str, key: str, value, default):
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ScenarioError(f"{where} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ScenarioError(f"{where} must be an integer")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ScenarioError(f"{where} must be a finite number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ScenarioError(f"{where} must be a string")
        choices = _CHOICES.get((section, key))
        if choices and value not in choices:
            raise ScenarioError(f"{where} must be one of {', '.join(choices)}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or any(
                isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v)
                for v in value):
            raise ScenarioError(f"{where} must be a list of finite numbers")
        return [float(v) for v in value]
    raise AssertionError(where)


@dataclasses.dataclass(frozen=True)
class Scenario:
    """Validated scenario; ``raw`` keeps the file values, the rest is derived."""

    raw: Dict[str, Dict[str, Any]]
    gamma: float
    sigma_c2: float
    sigma_s2: float
    P_t: float

    # -- construction -----------------------------------------------------
    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> "Scenario":
        data = {} if data is None else data
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a JSON object")
        unknown = set(data) - set(DEFAULTS)
        if unknown:
            raise ScenarioError(f"unknown scenario sections: {', '.join(sorted(unknown))}")
        raw: Dict[str, Dict[str, Any]] = {}
        for section, defaults in DEFAULTS.items():
            given = data.get(section, {})
            if not isinstance(given, dict):
                raise ScenarioError(f"section {section} must be a JSON object")
            extra = set(given) - set(defaults)
            if extra:
                raise ScenarioError(f"unknown fields in {section}: {', '.join(sorted(extra))}")
            raw[section] = {k: _check_type(section, k, given[k], d) if k in given else copy.deepcopy(d)
                            for k, d in defaults.items()}
        scn = cls(raw,
                  gamma=db_to_linear(raw["users"]["gamma_db"]),
                  sigma_c2=dbm_to_watts(raw["users"]["noise_dbm"]),
                  sigma_s2=dbm_to_watts(raw["sensing"]["noise_dbm"]),
                  P_t=dbw_to_watts(raw["power"]["pt_dbw"]))
        scn._validate()
        return scn

    @classmethod
    def default(cls) -> "Scenario":
        return cls.from_dict({})

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Scenario":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return copy.deepcopy(self.raw)

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True) + "\n"

    def with_changes(self, **sections: Dict[str, Any]) -> "Scenario":
        """New scenario with some fields replaced, e.g. ``with_changes(array={"n_t": 12})``."""
        data = self.to_dict()
        for section, fields in sections.items():
            if section not in data:
                raise ScenarioError(f"unknown scenario section {section}")
            data[section].update(fields)
        return Scenario.from_dict(data)

    def _validate(self) -> None:
        a, u, s, d, sim = (self.raw[k] for k in ("array", "users", "sensing", "design", "sim"))
        if a["n_t"] < 1 or a["n_r"] < 1:
            raise ScenarioError("array sizes must be positive")
        C = len(u["angles_deg"])
        if C > a["n_t"]:
            raise ScenarioError(f"{C} users exceed n_t={a['n_t']} antennas")
        if a["n_t"] > a["n_r"]:
            warnings.warn(f"n_t={a['n_t']} exceeds n_r={a['n_r']}", UserWarning, stacklevel=3)
        if any(abs(v) >= 90.0 for v in u["angles_deg"]):
            raise ScenarioError("user angles must lie strictly between -90 and 90 degrees")
        if u["multipath_paths"] < 0 or not 0 < u["multipath_decay"] <= 1:
            raise ScenarioError("multipath needs paths >= 0 and 0 < decay <= 1")
        if not s["d_o_m"] > 0:
            raise ScenarioError("sensing.d_o_m must be positive")
        if not abs(s["phi_o_deg"]) < 90.0:
            raise ScenarioError("sensing.phi_o_deg must lie strictly between -90 and 90")
        if s["k"] < 1:
            raise ScenarioError("sensing.k must be at least 1")
        if len(s["m"]) != len(s["n"]) or len(s["m"]) == 0:
            raise ScenarioError("sensing.m and sensing.n must be nonempty and of equal length")
        if s["q"] != len(s["m"]):
            raise ScenarioError(f"sensing.q={s['q']} does not match {len(s['m'])} coefficients")
        if not (s["t_s_s"] > 0 and s["bandwidth_hz"] > 0):
            raise ScenarioError("t_s_s and bandwidth_hz must be positive")
        if s["los_samples"] < 1000:
            raise ScenarioError("sensing.los_samples must be at least 1000")
        if d["n_e"] < 1 or d["max_iterations"] < 1:
            raise ScenarioError("design.n_e and design.max_iterations must be positive")
        if not 0 < d["tolerance"] <= 1e-2:
            raise ScenarioError("design.tolerance must lie in (0, 0.01]")
        if not (d["beamwidth_deg"] > 0 and d["grid_step_deg"] > 0):
            raise ScenarioError("benchmark beamwidth and grid step must be positive")
        if not (sim["sample_rate_hz"] > 0 and sim["num_samples"] >= 1 and sim["runs"] >= 1):
            raise ScenarioError("sim needs positive sample rate, samples and runs")
        if not (sim["grid_halfwidth_deg"] > 0 and sim["grid_step_deg"] > 0):
            raise ScenarioError("sim grid half-width and step must be positive")

    # -- derived objects --------------------------------------------------
    @property
    def C(self) -> int:
        return len(self.raw["users"]["angles_deg"])

    @property
    def K(self) -> int:
        return self.raw["sensing"]["k"]

    @property
    def variant(self) -> str:
        return self.raw["design"]["variant"]

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.raw["array"]["n_t"], self.raw["array"]["n_r"])

    def contour(self) -> ContourModel:
        return ContourModel(tuple(self.raw["sensing"]["m"]), tuple(self.raw["sensing"]["n"]))

    def pose(self) -> TargetPose:
        s = self.raw["sensing"]
        return TargetPose(s["d_o_m"], math.radians(s["phi_o_deg"]), math.radians(s["varphi_deg"]))

    def sensing_params(self) -> SensingParams:
        s = self.raw["sensing"]
        return SensingParams.for_range(s["d_o_m"], self.sigma_s2, s["t_s_s"], s["bandwidth_hz"])

    def channels(self) -> ChannelSet:
        u = self.raw["users"]
        model = None
        if u["channel_model"] == "multipath":
            model = Multipath(u["multipath_paths"], u["multipath_decay"])
        return generate_channels(self.geometry(), np.deg2rad(u["angles_deg"]), self.sigma_c2,
                                 model, seed=u["channel_seed"])

    def constraints(self) -> DesignConstraints:
        return DesignConstraints(self.P_t, self.gamma, self.channels(),
                                 self.raw["design"]["coverage"])

    def sim_config(self) -> SimConfig:
        sim = self.raw["sim"]
        return SimConfig(sim["sample_rate_hz"], sim["num_samples"], sim["seed"])

    def estimator_grid(self) -> Tuple[float, float, float]:
        sim = self.raw["sim"]
        phi = math.radians(self.raw["sensing"]["phi_o_deg"])
        half = math.radians(sim["grid_halfwidth_deg"])
        step = math.radians(sim["grid_step_deg"])
        n = int(round(half / step))
        return phi - n * step, phi + n * step, step
