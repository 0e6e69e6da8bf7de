"""Local unitary simulation of a Bell-EPR measurement with decohering detectors."""
from .chain import (
    BranchSet,
    PointerConfiguration,
    ReducedDensityMatrix,
    build_branches,
    offdiagonal_norm,
    ready_state,
    reduced_density_dense_oracle,
    reduced_density_structured,
)
from .correlate import (
    CorrelationEstimate,
    TrialBatch,
    TrialRecord,
    check_eigen_identity,
    chsh,
    correlation,
    nosignal_audit,
    sample_trial,
    sample_trials,
    z_encode,
)
from .detector import (
    DetectorId,
    DetectorModel,
    InternalDistribution,
    decoherence_factor,
    make_array,
    make_detector,
    overlap,
    sample_internal,
)
from .kernels import BACKEND
from .photon import (
    MeasurementSetting,
    PhotonPairState,
    basis_rotation,
    expand_in_settings,
    make_singlet,
)

__version__ = "0.1.0"
