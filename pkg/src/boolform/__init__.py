"""Short Boolean formula classifiers for tabular data.

Learn classifiers of the form ``¬(bare_nuclei≥6 ∨ clump_thickness≥7)``:
exact anytime search over reverse-Polish formula space with dynamically
discretized numeric attributes, an early-stopping length loop, and a
cross-validation harness.
"""

__version__ = "0.1.0"

from .dataset import (
    AttributeSchema,
    DatasetSpec,
    DataTable,
    EncodedDataset,
    FoldPlan,
    Provenance,
    clean,
    load_csv,
    load_schema,
    load_table,
    make_folds,
    one_hot_encode,
    scale_to_integers,
    split_train_validation,
)
from .errors import (
    BoolformError,
    EmptyDatasetError,
    FoldError,
    FormulaFormatError,
    NoIncumbentError,
    ScalingError,
    SchemaError,
    SplitError,
    TargetError,
)
from .estimator import FormulaSizeClassifier
from .formula import (
    Accuracy,
    Formula,
    Op,
    accuracy,
    eval_at,
    eval_mask,
    is_canonical,
    parse,
    render,
    size,
    to_json,
)
from .fsm import FsmConfig, FsmResult, LengthTrace, TraceEntry, early_stop_check, run_fsm, select_length
from .propositions import (
    CandidateGrid,
    PropKind,
    Proposition,
    Scheme,
    bool_attr,
    candidate_grid,
    eval_prop,
    interval,
    median_of,
    pivot,
    prop_mask,
    scheme_leaf_space,
)
from .report import CvReport, RunConfig, cross_validate, holdout_accuracy, summarize
from .search import (
    Budget,
    FreeSlot,
    SearchConfig,
    SearchOutcome,
    Skeleton,
    accuracy_upper_bound,
    best_formula,
    enumerate_skeletons,
    optimize_thresholds,
)

__all__ = [
    "__version__",
    "Accuracy",
    "AttributeSchema",
    "BoolformError",
    "Budget",
    "CandidateGrid",
    "CvReport",
    "DataTable",
    "DatasetSpec",
    "EmptyDatasetError",
    "EncodedDataset",
    "FoldError",
    "FoldPlan",
    "Formula",
    "FormulaFormatError",
    "FormulaSizeClassifier",
    "FreeSlot",
    "FsmConfig",
    "FsmResult",
    "LengthTrace",
    "NoIncumbentError",
    "Op",
    "PropKind",
    "Proposition",
    "Provenance",
    "RunConfig",
    "ScalingError",
    "SchemaError",
    "Scheme",
    "SearchConfig",
    "SearchOutcome",
    "Skeleton",
    "SplitError",
    "TargetError",
    "TraceEntry",
    "accuracy",
    "accuracy_upper_bound",
    "best_formula",
    "bool_attr",
    "candidate_grid",
    "clean",
    "cross_validate",
    "early_stop_check",
    "enumerate_skeletons",
    "eval_at",
    "eval_mask",
    "eval_prop",
    "holdout_accuracy",
    "interval",
    "is_canonical",
    "load_csv",
    "load_schema",
    "load_table",
    "make_folds",
    "median_of",
    "one_hot_encode",
    "optimize_thresholds",
    "parse",
    "pivot",
    "prop_mask",
    "render",
    "run_fsm",
    "scale_to_integers",
    "scheme_leaf_space",
    "select_length",
    "size",
    "split_train_validation",
    "summarize",
    "to_json",
]
