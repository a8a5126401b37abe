"""esikit: EEG/MEG source imaging with surface eigenmode bases.

The package covers the full synthetic-benchmark loop: triangulated
cortical surfaces (`mesh`), their Laplacian eigenmodes (`lbo`), spatial
basis families (`basis`), lead fields (`forward`), SNR-controlled trial
generation (`simulate`), estimator-style inverse solvers (`inverse`),
reconstruction metrics (`metrics`), and a deterministic benchmark harness
with a CLI (`benchmark`, `cli`).
"""

__version__ = "0.1.0"

from .basis import BasisSet, gbf_basis, harmonic_basis, identity_basis, msp_basis
from .errors import (
    ConvergenceError,
    DegenerateError,
    DimensionError,
    EsiError,
    FormatError,
    GeometryError,
    LimitError,
    LinAlgError,
    NumericalError,
    ParseError,
    SchemaError,
    ShapeError,
    TopologyError,
)
from .forward import ForwardModel, analytic_leadfield, fibonacci_sensors, load_leadfield, project
from .inverse import (
    BasisMAP,
    DSPM,
    ELORETA,
    InverseSolution,
    METHOD_CHOICES,
    MinimumNorm,
    PriorSpec,
    SLORETA,
    build_prior,
    make_solver,
)
from .lbo import DiscreteLBO, EigenmodeResult, assemble_lbo, eigenmodes
from .mesh import TriMesh, geodesic_distances, load_mesh, make_icosphere, save_mesh
from .metrics import (
    EvaluationReport,
    evaluate,
    localization_error,
    mean_corr,
    shape_error,
    source_divergence,
)
from .simulate import (
    NoiseSpec,
    SourceEstimate,
    TrialRecord,
    gaussian_noise,
    import_source_map,
    make_trial,
    mix_at_snr,
    patch_source,
    realistic_noise,
    structured_covariance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
