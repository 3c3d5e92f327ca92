"""Contact-wave construction, time integration, and stability diagnostics
for a one-dimensional viscous heat-conducting plasma half-space model."""

from . import (
    cli,
    config,
    diagnostics,
    electron_density,
    fd,
    harness,
    nsp_solver,
    quadrature,
    wave_profile,
)

__version__ = "0.1.0"

__all__ = [
    "cli",
    "config",
    "diagnostics",
    "electron_density",
    "fd",
    "harness",
    "nsp_solver",
    "quadrature",
    "wave_profile",
    "__version__",
]
