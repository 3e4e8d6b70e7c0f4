"""Low L-rank tensor sensing for RF tomographic imaging."""
from .tensor import (
    DCT,
    FFT,
    TransformSpec,
    identity_tensor,
    l_product,
    l_qr,
    l_rank,
    l_svd,
    l_transpose,
)
from .circulant import circ_tensor, squeeze_product, squeeze_tensor, uncirc_tensor, unsqueeze
from .rf_sim import (
    ChannelParams,
    SensingEnsemble,
    VoxelGrid,
    build_sensing_ensemble,
    enumerate_links,
    place_nodes,
    sample_links,
)
from .solver import SolverConfig, alt_min, ls_solve_U, ls_solve_V
from .phantom import PhantomSpec, make_phantom
from .harness import ExperimentConfig, convergence_fit, rse, run_recovery, sweep_sampling

__version__ = "0.1.0"
