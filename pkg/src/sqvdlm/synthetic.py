"""Simulate observation panels with known latent paths."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .dlm import DlmParams
from .io import write_panel_csv
from .series import MonthStamp, ObservationPanel, month_numbers

# RNG stream ids: one per noise series so extra replicates never shift earlier draws
_STATE_STREAMS = (0, 1)
_TARGET_STREAM = 2
_REPLICATE_STREAM0 = 3


@dataclass(frozen=True)
class SimConfig:
    params: DlmParams
    a: int = 11
    T: int = 117
    start: MonthStamp = MonthStamp(2004, 1)
    seed: int = 0

    def __post_init__(self):
        if self.T < 2:
            raise ValueError(f"T must be >= 2, got {self.T}")
        if self.a < 1:
            raise ValueError(f"a must be >= 1, got {self.a}")


@dataclass(frozen=True, eq=False)
class SimulatedTruth:
    states: np.ndarray
    state_noise: np.ndarray
    obs_noise: np.ndarray

    def to_dict(self) -> dict:
        return {
            "states": self.states.tolist(),
            "state_noise": self.state_noise.tolist(),
            "obs_noise": self.obs_noise.tolist(),
        }


def _stream(seed, k):
    return np.random.default_rng([seed, k])


def simulate(config: SimConfig):
    """Run the state equation forward and add observation noise.

    Returns (panel, truth); ``panel`` has the target in column 0 and ``a``
    replicate columns, ``truth`` carries the hidden states and every noise draw.
    """
    p = config.params
    T, a = config.T, config.a
    months = month_numbers(config.start, T)
    G = np.array([[1.0, p.beta], [0.0, 1.0]])
    sd_x = np.sqrt([p.sigma2_x1, p.sigma2_x2])
    w = np.column_stack([_stream(config.seed, k).standard_normal(T) for k in _STATE_STREAMS]) * sd_x
    v = np.empty((T, a + 1))
    v[:, 0] = _stream(config.seed, _TARGET_STREAM).standard_normal(T) * np.sqrt(p.sigma2_y1)
    for j in range(a):
        v[:, j + 1] = _stream(config.seed, _REPLICATE_STREAM0 + j).standard_normal(T) * np.sqrt(p.sigma2_y2)
    x = np.empty((T, 2))
    prev = np.asarray(p.x0, dtype=float)
    for t in range(T):
        prev = G @ prev + p.C[:, months[t] - 1] + w[t]
        x[t] = prev
    F = np.zeros((a + 1, 2))
    F[0, 0] = 1.0
    F[1:, 1] = 1.0
    y = x @ F.T + v
    panel = ObservationPanel.from_array(config.start, y)
    return panel, SimulatedTruth(x, w, v)


def load_scenario(name_or_path="paper-like") -> dict:
    """Scenario dict with ``params`` (DlmParams), ``a`` and ``start``."""
    if name_or_path == "paper-like":
        raw = json.loads(resources.files("sqvdlm.data").joinpath("paper_like.json").read_text())
    else:
        raw = json.loads(Path(name_or_path).read_text())
    return {
        "params": DlmParams.from_dict(raw["params"]),
        "a": int(raw.get("a", 11)),
        "start": MonthStamp.parse(raw.get("start", "2004-01")),
        "raw": raw,
    }


def paper_like_config(T=117, seed=0, a=None) -> SimConfig:
    sc = load_scenario("paper-like")
    return SimConfig(sc["params"], sc["a"] if a is None else a, T, sc["start"], seed)


def write_simulation(panel: ObservationPanel, truth: SimulatedTruth, config: SimConfig,
                     panel_path, extra=None) -> Path:
    """Write the panel CSV plus a ``.truth.json`` sidecar; returns the sidecar path."""
    panel_path = Path(panel_path)
    write_panel_csv(panel, panel_path)
    sidecar = panel_path.with_suffix(".truth.json")
    doc = {
        "params": config.params.to_dict(),
        "a": config.a,
        "T": config.T,
        "start": str(config.start),
        "seed": config.seed,
        **(extra or {}),
        "latent": truth.to_dict(),
    }
    sidecar.write_text(json.dumps(doc, indent=2) + "\n")
    return sidecar
