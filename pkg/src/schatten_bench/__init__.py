"""Online and batch learning of linear operators under Schatten-norm constraints."""

__version__ = "0.1.0"

from .hilbert import (
    DimensionError,
    RankOne,
    adjoint,
    apply,
    basis,
    compose,
    inner,
    norm1,
    norm2,
    tensor,
    trace,
    trace_pairing,
)
from .learners import (
    ConvergenceError,
    ExpertsConfig,
    ExpertsLearner,
    OgdConfig,
    OgdLearner,
    ZeroLearner,
    binary_index_operator,
    erm_batch,
    experts_learner,
    ogd_learner,
    online_to_batch,
    zero_learner,
)
from .spectral import (
    BallSpec,
    SvdFactors,
    project_lp_ball,
    project_schatten_ball,
    schatten_norm,
    singular_values,
    svd,
)
from .streams import (
    BatchLowerBoundConfig,
    KernelSpec,
    Stream,
    StreamSpec,
    batch_b1_sample,
    batch_b2_sample,
    file_stream,
    kernel_operator,
    schatten_lower_stream,
    separation_stream,
)
