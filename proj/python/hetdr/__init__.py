"""Heterogeneous dynamic distribution regression for panel data."""

from ._hetdr import (
    HetdrError,
    Model,
    Panel,
    distributions,
    ergodic,
    fit,
    load_panel,
    parse_panel,
    project,
    quantile_effect,
    quantile_effect_band,
    rearranged_inverse,
    simulate_panel,
    stationary_laws,
    theta_band,
    theta_curve,
    toy_experiment,
    true_quantile_effect,
)

__all__ = [
    "HetdrError",
    "Model",
    "Panel",
    "distributions",
    "ergodic",
    "fit",
    "load_panel",
    "parse_panel",
    "project",
    "quantile_effect",
    "quantile_effect_band",
    "rearranged_inverse",
    "simulate_panel",
    "stationary_laws",
    "theta_band",
    "theta_curve",
    "toy_experiment",
    "true_quantile_effect",
]
