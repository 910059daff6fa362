"""Small convolutional feature extractor producing the N x N x C cell grid."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor, bias_add, conv2d, maxpool2x2, relu
from .diffcore.errors import ShapeError


@dataclass(frozen=True)
class BackboneConfig:
    input_size: int = 32
    channels: tuple[int, ...] = (8, 16, 32)
    output_grid: int = 8
    output_channels: int = 32
    kernel_size: int = 3
    standardize_input: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        self.stage_plan()  # validate eagerly

    def stage_plan(self) -> list[bool]:
        """Per stage, whether it ends with a 2x2 max pool.

        Stages pool while the grid is still larger than ``output_grid``, so the
        first stages downsample and the last ones refine at full grid size.
        """
        if not self.channels:
            raise ValueError("backbone needs at least one stage")
        if self.output_channels != self.channels[-1]:
            raise ValueError(f"output_channels={self.output_channels} must equal the last stage "
                             f"width {self.channels[-1]}")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd (same padding)")
        size, plan = self.input_size, []
        for _ in self.channels:
            pool = size > self.output_grid
            if pool:
                if size % 2:
                    raise ValueError(f"cannot halve odd grid {size} on the way to "
                                     f"{self.output_grid}")
                size //= 2
            plan.append(pool)
        if size != self.output_grid:
            raise ValueError(f"stages reduce {self.input_size} to {size}, not to "
                             f"output_grid={self.output_grid}")
        return plan


def param_names(cfg: BackboneConfig) -> list[str]:
    return [f"backbone.stage{i}.{kind}" for i in range(len(cfg.channels))
            for kind in ("kernel", "bias")]


def init_params(cfg: BackboneConfig, seed) -> dict[str, Tensor]:
    """He-normal kernels (std = sqrt(2 / fan_in)) and zero biases."""
    rng = np.random.default_rng(seed)
    params, cin, k = {}, 1, cfg.kernel_size
    for i, cout in enumerate(cfg.channels):
        fan_in = k * k * cin
        params[f"backbone.stage{i}.kernel"] = Tensor(
            rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(k, k, cin, cout)), requires_grad=True)
        params[f"backbone.stage{i}.bias"] = Tensor(np.zeros(cout), requires_grad=True)
        cin = cout
    return params


def _standardize(x: Tensor) -> Tensor:
    """Per-image zero mean, unit variance; constant images map to zero."""
    axes = (-3, -2, -1)
    centered = dc.sub(x, dc.mean(x, axis=axes, keepdims=True))
    var = dc.mean(dc.mul(centered, centered), axis=axes, keepdims=True)
    return dc.div(centered, dc.sqrt(dc.add(var, 1e-6)))


def backbone_forward(image, cfg: BackboneConfig, params, train: bool = False) -> Tensor:
    """Map ``[H, W, 1]`` (or a batch ``[B, H, W, 1]``) to the ``[.., N, N, C]`` grid.

    ``train`` is accepted for interface symmetry; the backbone has no
    train-only behaviour.
    """
    x = image if isinstance(image, Tensor) else Tensor(image)
    h, w, c = x.shape[-3:]
    if (h, w, c) != (cfg.input_size, cfg.input_size, 1):
        raise ShapeError("backbone_forward", x.shape,
                         (cfg.input_size, cfg.input_size, 1),
                         detail="expected [.., input_size, input_size, 1]")
    if cfg.standardize_input:
        x = _standardize(x)
    pad = cfg.kernel_size // 2
    for i, pool in enumerate(cfg.stage_plan()):
        x = conv2d(x, params[f"backbone.stage{i}.kernel"], stride=1, pad=pad)
        x = relu(bias_add(x, params[f"backbone.stage{i}.bias"]))
        if pool:
            x = maxpool2x2(x)
    return x
