"""Numerical Finsler geometry: curvature, geodesics, Jacobi fields and Myers-type bounds."""
import os

import jax

jax.config.update("jax_enable_x64", True)
if not os.environ.get("FINSLER_MYERS_NO_JAX_CACHE"):
    _cache = os.environ.get("FINSLER_MYERS_JAX_CACHE", os.path.expanduser("~/.cache/finsler_myers/jax"))
    jax.config.update("jax_compilation_cache_dir", _cache)
    jax.config.update("jax_persistent_cache_min_compile_time_secs", 0.5)

__version__ = "0.1.0"

from .metric import (  # noqa: E402
    Chart,
    FinslerMetric,
    chart_switch,
    eval_F,
    euclidean,
    fundamental_tensor,
    metric_from_spec,
    randers,
    sphere,
    warped_surface,
)
from .connection import (  # noqa: E402
    chern_coefficients,
    curvature_operator,
    flag_curvature,
    ricci_scalar,
    spray,
)
