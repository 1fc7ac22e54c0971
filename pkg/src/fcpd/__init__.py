"""Fast canonical polyadic decomposition through tensor unfoldings."""
from .als import (
    AlsOptions,
    FitReport,
    best_rank_one,
    cp_als,
    fast_relative_error,
    relative_error,
    tucker_hooi,
)
from .crib import (
    CollinearityProfile,
    CribReport,
    advise_unfolding,
    crib4_full,
    crib4_orthomode_rankR,
    crib4_unfold_23,
    crib4_unfold_34,
    crib5_full,
    crib5_unfold_23_45,
    crib5_unfold_345,
    crib6_family,
    crib_numeric,
    crib_ortho_two_modes,
    crib_rank2_general,
    crib_rank2_unfolded,
    estimate_collinearity,
    noise_variance,
    to_db,
)
from .errors import (
    DegenerateComponentError,
    FcpdError,
    InvalidArgumentError,
    InvalidStateError,
    NumericError,
    SingularConfigurationError,
)
from .fcp import FcpOptions, FcpTrace, error_ordering_check, fcp, fcp_low_rank, fcp_rank_one
from .io import read_kruskal, read_tensor, write_kruskal, write_tensor
from .structured import StructuredKruskal, structured_als, structured_gradient, structured_mttkrp
from .synth import SaeReport, SynthSpec, generate, match_components, realized_snr, sae
from .tensor import (
    DenseTensor,
    KruskalTensor,
    TuckerTensor,
    UnfoldingRule,
    khatri_rao,
    kruskal_to_dense,
    kruskal_unfold,
    matricize,
    mttkrp,
    normalize,
    reshape,
    transpose,
    unfold,
)

__version__ = "0.1.0"
