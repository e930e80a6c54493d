"""Modal clustering on negentropy projection-pursuit subspaces of Gaussian mixtures."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    LabeledDataset,
    adjusted_rand_index,
    gen_block_clusters,
    gen_two_group,
    load_csv,
    standardize,
)
from .em import EmConfig, FitReport, em_fit, fit_grid, select_model  # noqa: E402
from .mixture import (  # noqa: E402
    CovarianceFamily,
    EigenDecomposedCovariance,
    MixtureModel,
    log_density,
    project_model,
    responsibilities,
    sample,
)
from .modal import (  # noqa: E402
    MemConfig,
    ModalResult,
    map_assign,
    mem_ascend,
    mem_proposal,
    merge_modes,
    modal_cluster,
)
from .pursuit import (  # noqa: E402
    AngleGenotype,
    GaConfig,
    PpResult,
    ProjectionBasis,
    basis_from_angles,
    entropy_mc,
    entropy_ut,
    ga_optimize,
    gaussian_entropy,
    negentropy,
)
