"""Triple simplex matrix completion for budget-constrained expense forecasting.

Monthly project expenses are stacked into a months x projects matrix and
normalised by budget.  A rank-F factorisation ``W H^T`` with simplex
constraints on the columns of ``W`` (expense patterns), the rows of ``H``
(project mixtures) and the columns of the completed matrix ``Z`` fills in
future months so that every project's forecast spends exactly its budget.

Basic example
-------------

.. code:: python

    from tsmc import FitConfig, fit, denormalize, synthesize

    inst = synthesize(M=36, N=200, F=3, missing_rate=0.4, seed=0)
    result = fit(inst.X, inst.mask, inst.budgets, FitConfig(rank=3))
    forecast = denormalize(result.Z, inst.budgets)   # columns sum to budgets
"""

from .data import (
    DataError,
    ExpenseMatrix,
    ExpenseRecord,
    ProjectMeta,
    assemble,
    month_index,
    read_expenses_csv,
    read_projects_csv,
    residual_fraction,
)
from .evaluation import (
    EvalReport,
    SyntheticInstance,
    budget_rescale,
    cluster_assign,
    cumulative_patterns,
    evaluate,
    knn_baseline,
    median_baseline,
    relative_rmse,
    rmse,
    synthesize,
)
from .simplex import ScaledSimplex, project_onto_scaled_simplex, project_rows, projection_oracle
from .solver import (
    BudgetError,
    CompletionState,
    FactorModel,
    FitConfig,
    FitResult,
    SolverError,
    denormalize,
    fit,
    initialize,
    nesterov_step,
    objective,
    update_h,
    update_w,
    update_z,
)

__version__ = "0.1.0"
