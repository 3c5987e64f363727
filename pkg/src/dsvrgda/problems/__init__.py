from .auc import DEFAULT_GAMMA, AUCProblem, auc_build, auc_score
from .base import (DegenerateProblemError, FiniteSumMinimaxProblem, OracleError,
                   ProblemConstants, UnboundedError)
from .plgame import (PLGameProblem, estimate_constants, generate_pl_game,
                     pl_best_response_value, saddle_point)
