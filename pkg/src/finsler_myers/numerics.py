"""Central tolerance record shared by the library and its tests."""
from dataclasses import dataclass


@dataclass(frozen=True)
class NumericsPolicy:
    h: float = 1e-3
    h_max: float = 1e-2
    # metric_core
    homogeneity_rel: float = 1e-9
    tensor_rel: float = 1e-8
    chart_invariance: float = 1e-9
    # geodesic
    speed_error: float = 1e-5
    speed_invariant: float = 1e-6
    frame_repair_every: int = 1000
    frame_repair_max: float = 1e-5
    # variational
    jacobi_residual: float = 1e-5
    conjugate_bracket: float = 1e-6
    trial_sum_agreement: float = 1e-6
    ambrose_agreement: float = 1e-5
    continuity_jump: float = 1e-8
    # myers
    strict_margin: float = 1e-9
    quadrature_abs: float = 1e-6
    derivative_tol: float = 1e-6
    confirm_slack: float = 1e-3


POLICY = NumericsPolicy()
