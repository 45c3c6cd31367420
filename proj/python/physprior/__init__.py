"""Python access to the physics-prior models: presets, reproductions, checkpoints and oracles."""

from ._core import (
    __version__,
    conservation_checks,
    detection_checks,
    integrator_order_checks,
    load_checkpoint,
    metric_eps_u,
    preset,
    preset_names,
    reproduce,
    roe_sod,
    sod_exact,
    symplectic_checks,
)

__all__ = [
    "conservation_checks",
    "detection_checks",
    "integrator_order_checks",
    "load_checkpoint",
    "metric_eps_u",
    "preset",
    "preset_names",
    "reproduce",
    "roe_sod",
    "sod_exact",
    "symplectic_checks",
]
