"""brinkflow: viscous flow in critically perforated boxes and its Brinkman limit."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    BrinkflowError,
    CFLViolation,
    ConfigError,
    ExtrapolationUnstable,
    NonConvergence,
    UnresolvedHole,
)
from .geometry import (  # noqa: F401
    DomainSpec,
    GridMask,
    HoleLattice,
    HoleShape,
    enumerate_holes,
    hole_free_mask,
    rasterize,
    validate_lattice,
)
from .fields import (  # noqa: F401
    ForcingField,
    PressureField,
    VelocityField,
)
from .stokes import (  # noqa: F401
    SteadyStokesSolver,
    solid_drag,
    solve_brinkman_steady,
    solve_stokes_perforated,
)
from .capacity import (  # noqa: F401
    BrinkmanMatrix,
    CapacityMatrix,
    brinkman_matrix,
    capacity_matrix,
    extrapolate_friction,
    solve_cell_problem,
)
from .evolution import (  # noqa: F401
    EnergyLedger,
    Evolver,
    FlowState,
    InitialData,
    advect_density,
    run,
)
from .harness import (  # noqa: F401
    ExperimentConfig,
    ExperimentReport,
    emit_report,
    run_capacity_study,
    run_evolution_homogenization,
    run_stationary_homogenization,
)
