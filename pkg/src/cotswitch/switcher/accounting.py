"""Parameter and FLOP accounting for the switcher."""

from __future__ import annotations

from dataclasses import dataclass

from .net import SwitcherArchitecture


@dataclass(frozen=True)
class ParamCount:
    weights_and_biases: int
    norm_params: int

    @property
    def total(self) -> int:
        return self.weights_and_biases + self.norm_params


def count_params(arch: SwitcherArchitecture) -> ParamCount:
    # normalization scale/shift reported separately, not in the headline count
    wb = sum(fan_in * fan_out + fan_out for fan_in, fan_out in arch.layer_dims)
    return ParamCount(wb, 2 * sum(arch.hidden_dims))


def estimate_flops(arch: SwitcherArchitecture) -> int:
    """Per-query forward cost, one multiply plus one add per weight/bias."""
    return 2 * count_params(arch).weights_and_biases


def human(n: int) -> str:
    return f"{n / 1e6:.2f}M"
