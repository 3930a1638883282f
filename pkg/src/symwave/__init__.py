"""Symplectic index calculus, capacities, and semiclassical waveforms."""

__version__ = "0.1.0"

from .symplectic import (  # noqa: F401
    PhasePoint,
    LagrangianFrame,
    form_matrix,
    symplectic_form,
    is_symplectic_matrix,
    is_lagrangian_frame,
    orthonormalize_frame,
    souriau_w,
    transversal,
    intersection_dim,
    signature,
)
from .maslov import (  # noqa: F401
    LagrangianLift,
    deck_act,
    vertical_lift,
    lift_from_frame,
    lift_path,
    lift_path_adaptive,
    transport_lift,
    principal_log_trace,
    leray_index_transversal,
    inert,
    leray_index,
    maslov_loop_index,
    maslov_loop_index_adaptive,
    argument_index,
)
from .capacity import (  # noqa: F401
    EllipsoidSpec,
    TorusSpec,
    ellipsoid_capacity,
    ellipsoid_volume,
    shadow_area,
    nonsqueezing_experiment,
    keller_maslov_check,
    oscillator_levels,
)
from .flows import (  # noqa: F401
    HamiltonianSpec,
    Trajectory,
    quadratic_hamiltonian,
    harmonic_hamiltonian,
    quartic_hamiltonian,
    magnetic_hamiltonian,
    integrate,
    flow_map,
    action_integral,
    phase_transport,
)
from .waveforms import (  # noqa: F401
    CircleManifold,
    TorusManifold,
    GradientGraphManifold,
    CoverPoint,
    Waveform,
    Shadow,
    circle_phase,
    cover_phase,
    circle_argument_index,
    argument_index_on_manifold,
    sqrt_de_rham,
    is_quantized,
    evolve,
    shadow,
    van_vleck_propagate,
    morse_index,
    oscillator_spectrum_from_waveforms,
)
