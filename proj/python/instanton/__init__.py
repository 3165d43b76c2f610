"""Most likely transition paths for SDEs with Gaussian or Levy noise.

Thin wrappers over the C++ core. Paths are dicts with ``times`` (n,) and
``states`` (d, n) numpy arrays.
"""

from ._core import (
    AdmissibilityError,
    ConfigError,
    ExperimentConfig,
    NumericalError,
    ParseError,
    QuadratureGrid,
    RangeError,
    drift,
    estimate_msd,
    gaussian_action,
    hausdorff_distance,
    load_config,
    oracle,
    parse_config,
    read_path_csv,
    run,
    train,
    write_path_csv,
)

__all__ = [
    "AdmissibilityError",
    "ConfigError",
    "ExperimentConfig",
    "NumericalError",
    "ParseError",
    "QuadratureGrid",
    "RangeError",
    "drift",
    "estimate_msd",
    "gaussian_action",
    "hausdorff_distance",
    "load_config",
    "oracle",
    "parse_config",
    "read_path_csv",
    "run",
    "train",
    "write_path_csv",
]
