"""Reaction-diffusion-ODE models with hysteresis: simulation, jump-pattern construction, stability checks."""

__version__ = "0.1.0"
