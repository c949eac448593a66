"""Parametric stochastic-device models.

Each device is a Bernoulli coin whose heads probability is tuned by bias,
plus a per-flip energy cost in femtojoules.  Three energy models exist:

``linear_heads_tails``
    outcome-dependent cost; expected cost ``E_tails + (E_heads - E_tails) * p``.
``base_plus_bias``
    ``E0 + E_bias * |2p - 1| ** gamma`` per flip, whatever the outcome.
``constant``
    ``E0`` per flip.

The MTJ constants shipped in ``device_configs/`` are placeholders chosen so
that SHE costs orders of magnitude less than VCMA; only the tunnel-diode
constants (50 fJ heads, 20 fJ tails) are measured values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Union

import numpy as np

LINEAR_HEADS_TAILS = "linear_heads_tails"
BASE_PLUS_BIAS = "base_plus_bias"
CONSTANT = "constant"

MODEL_PARAMETERS = {
    LINEAR_HEADS_TAILS: ("energy_heads_fj", "energy_tails_fj"),
    BASE_PLUS_BIAS: ("e0_fj", "e_bias_fj", "gamma"),
    CONSTANT: ("e0_fj",),
}

SHIPPED_DEVICES = ("td", "mtj_she", "mtj_vcma")


class DeviceConfigError(ValueError):
    """Raised for malformed, unknown or physically invalid device configs."""


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    model: str
    parameters: tuple  # sorted (key, value) pairs

    def __post_init__(self):
        if self.model not in MODEL_PARAMETERS:
            raise DeviceConfigError(
                f"unknown energy model {self.model!r}; expected one of {sorted(MODEL_PARAMETERS)}")
        params = dict(self.parameters)
        required = set(MODEL_PARAMETERS[self.model])
        missing = required - params.keys()
        extra = params.keys() - required
        if missing:
            raise DeviceConfigError(f"{self.name}: missing parameters {sorted(missing)} for {self.model}")
        if extra:
            raise DeviceConfigError(f"{self.name}: unexpected parameters {sorted(extra)} for {self.model}")
        clean = {}
        for key, value in params.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise DeviceConfigError(f"{self.name}: {key} must be a number, got {value!r}")
            value = float(value)
            if not math.isfinite(value) or value < 0:
                raise DeviceConfigError(f"{self.name}: {key} must be a finite non-negative number, got {value!r}")
            clean[key] = value
        if self.model == BASE_PLUS_BIAS and clean["gamma"] <= 0:
            raise DeviceConfigError(f"{self.name}: gamma must be positive")
        object.__setattr__(self, "parameters", tuple(sorted(clean.items())))

    @classmethod
    def create(cls, name: str, model: str, **parameters) -> "DeviceSpec":
        return cls(name, model, tuple(parameters.items()))

    def __getitem__(self, key: str) -> float:
        return dict(self.parameters)[key]

    def to_dict(self) -> dict:
        return {"name": self.name, "model": self.model, **dict(self.parameters)}


@dataclass(frozen=True)
class FlipRecord:
    face: int  # 1 = heads, 0 = tails
    energy: float


def expected_energy_per_flip(device: DeviceSpec, p):
    """Expected energy (fJ) of one flip at heads probability ``p``.

    Works elementwise on arrays.
    """
    prm = dict(device.parameters)
    if device.model == LINEAR_HEADS_TAILS:
        e_h, e_t = prm["energy_heads_fj"], prm["energy_tails_fj"]
        return e_t + (e_h - e_t) * p
    if device.model == BASE_PLUS_BIAS:
        bias = np.abs(2.0 * p - 1.0) if isinstance(p, np.ndarray) else abs(2.0 * p - 1.0)
        return prm["e0_fj"] + prm["e_bias_fj"] * bias ** prm["gamma"]
    if device.model == CONSTANT:
        if isinstance(p, np.ndarray):
            return np.full(p.shape, prm["e0_fj"])
        return prm["e0_fj"]
    raise DeviceConfigError(f"unknown energy model {device.model!r}")


def flip_energy(device: DeviceSpec, p, heads):
    """Energy charged for realized flip(s) at bias ``p``.

    Only the linear heads/tails model is outcome-dependent; the other
    models charge the expected bias cost.
    """
    if device.model == LINEAR_HEADS_TAILS:
        return np.where(heads, device["energy_heads_fj"], device["energy_tails_fj"])
    return np.broadcast_to(expected_energy_per_flip(device, p), np.shape(heads)).astype(float)


def flip(device: DeviceSpec, p: float, rng: np.random.Generator) -> FlipRecord:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p!r}")
    face = 1 if rng.random() < p else 0
    if device.model == LINEAR_HEADS_TAILS:
        energy = device["energy_heads_fj"] if face else device["energy_tails_fj"]
    else:
        energy = float(expected_energy_per_flip(device, p))
    return FlipRecord(face, energy)


def generate_bitstream(device: DeviceSpec, p: float, n: int, rng: np.random.Generator):
    """Flip the device ``n`` times; returns ``(bits, total_energy_fj)``.

    Consumes the generator exactly as ``n`` successive :func:`flip` calls.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p!r}")
    bits = (rng.random(n) < p).astype(np.uint8)
    total = math.fsum(flip_energy(device, p, bits.astype(bool)))
    return bits, total


def load_device_config(source: Union[str, Mapping]) -> DeviceSpec:
    """Build a validated :class:`DeviceSpec` from a JSON document or mapping."""
    if isinstance(source, str):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise DeviceConfigError(f"cannot parse device config: {exc}") from exc
    else:
        doc = dict(source)
    if not isinstance(doc, dict):
        raise DeviceConfigError("device config must be a JSON object")
    doc = dict(doc)
    name = doc.pop("name", None)
    model = doc.pop("model", None)
    if not isinstance(name, str) or not name:
        raise DeviceConfigError("device config needs a non-empty 'name'")
    if not isinstance(model, str):
        raise DeviceConfigError(f"{name}: device config needs a 'model'")
    return DeviceSpec(name, model, tuple(doc.items()))


def load_device(name_or_path: str) -> DeviceSpec:
    """Resolve a shipped device name (td, mtj_she, mtj_vcma) or a config path."""
    if name_or_path in SHIPPED_DEVICES:
        text = resources.files("coinflips").joinpath("device_configs").joinpath(
            f"{name_or_path}.json").read_text()
        return load_device_config(text)
    path = Path(name_or_path)
    if not path.is_file():
        raise DeviceConfigError(
            f"unknown device {name_or_path!r}: not one of {list(SHIPPED_DEVICES)} and no such file")
    return load_device_config(path.read_text())
