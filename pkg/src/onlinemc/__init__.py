"""Online nuclear-norm matrix completion with randomized SVDs."""

from .errors import CompletionError, DataError, DimensionError, NumericalError
from .metrics import rmse, sigma_drift, subspace_drift
from .online import MatrixSequence, RestartMode, SequenceResult, run_sequence
from .rsvd import RsvdParams, gaussian_block, orthonormalize, randomized_svd, seeded_svd_update
from .softimpute import Backend, CompletionSolution, SolverConfig, shrink, solve, solve_path
from .sparse import PartialSVD, SparseMatrix, SparsePlusLowRank, matvec, matvec_t, pad, project

__version__ = "0.1.0"
