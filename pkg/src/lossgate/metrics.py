"""Analytic cost and trade-off metrics for a training run.

Training time is modelled from per-pass costs and the measured skip
fractions instead of wall clocks, so results are hardware independent and
exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TimingModel:
    """Cost of one forward / backward pass per batch, in any fixed unit."""

    t_forward: float = 1.0
    t_backward: float = 2.0

    def __post_init__(self):
        if self.t_forward <= 0 or self.t_backward <= 0:
            raise ValueError("pass times must be positive")


@dataclass(frozen=True)
class SkipFractions:
    """alpha_b: only backward skipped; alpha_fb: both passes skipped."""

    alpha_b: float
    alpha_fb: float

    def __post_init__(self):
        if not 0.0 <= self.alpha_b <= 1.0 or not 0.0 <= self.alpha_fb <= 1.0:
            raise ValueError("skip fractions must lie in [0, 1]")
        if self.alpha_b + self.alpha_fb > 1.0 + 1e-12:
            raise ValueError("alpha_b + alpha_fb must not exceed 1")


@dataclass(frozen=True)
class AgotParams:
    """epsilon in [0, 1] weighs accuracy against time; 1 ignores time."""

    epsilon: float = 0.95
    a_base: float = 0.5
    a_full: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.a_full == self.a_base:
            raise ValueError("a_full must differ from a_base")


@dataclass(frozen=True)
class EnergyParams:
    """Average power draws (watts), GPU count, and training time in hours."""

    p_cpu: float = 100.0
    p_dram: float = 50.0
    p_gpu: float = 250.0
    gpu_count: int = 1
    hours: float = 0.0
    pue: float = 1.58
    co2_lb_per_kwh: float = 0.954

    def __post_init__(self):
        if min(self.p_cpu, self.p_dram, self.p_gpu, self.hours) < 0 or self.gpu_count < 0:
            raise ValueError("energy parameters must be non-negative")


def total_time(fractions: SkipFractions, timing: TimingModel, num_batches: int) -> float:
    """Modelled run time: skipped backwards pay only the forward, fully
    skipped batches pay nothing."""
    if num_batches <= 0:
        raise ValueError("num_batches must be positive")
    full = 1.0 - fractions.alpha_b - fractions.alpha_fb
    per_batch = fractions.alpha_b * timing.t_forward + full * (timing.t_forward + timing.t_backward)
    return num_batches * per_batch


def t_norm(t_ours: float, t_all: float) -> float:
    """Run time normalized to the train-everything baseline."""
    if t_all <= 0:
        raise ValueError("t_all must be positive")
    return t_ours / t_all


def agot(accuracy: float, time_norm: float, params: AgotParams) -> float:
    """Accuracy gain over time: normalized gain divided by time_norm**(1-eps)."""
    if time_norm <= 0:
        raise ValueError("time_norm must be positive")
    gain = (accuracy - params.a_base) / (params.a_full - params.a_base)
    return gain / time_norm ** (1.0 - params.epsilon)


def energy_co2(params: EnergyParams) -> tuple[float, float]:
    """Total energy in kWh and its CO2-equivalent in pounds."""
    kwh = params.pue * params.hours * (params.p_cpu + params.p_dram + params.gpu_count * params.p_gpu) / 1000.0
    return kwh, params.co2_lb_per_kwh * kwh
