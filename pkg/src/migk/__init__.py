"""Multi-instance learning with bag-level graph kernels.

Bags of instances are compared with three kernels: a plain instance
cross-sum ("MI-Kernel"), a node-plus-edge kernel over per-bag epsilon-graphs
("MIGraph"), and an affinity-weighted cross-sum that discounts cliques of
near-duplicate instances ("miGraph"). On top sit kernel machines (a
sequential-minimal-optimization SVM, one-vs-one multiclass voting, kernel
ridge regression) and an evaluation harness (repeated stratified
cross-validation with inner parameter selection, leave-one-out regression
scoring, paired t-tests, confidence intervals).
"""

from .bags import (
    KIND_CATEGORICAL,
    KIND_CONTINUOUS,
    TASK_CLASSIFY,
    TASK_MULTICLASS,
    TASK_REGRESS,
    AttributeSchema,
    Bag,
    Dataset,
    Finding,
    ValidationError,
    apply_normalization,
    fit_normalization,
    normalize_continuous,
    validate,
)
from .distances import (
    VdmTable,
    build_vdm_table,
    mixed_distance,
    pairwise_sq_dists,
    vdm,
)
from .graphs import (
    AFFINITY_MODES,
    AFFINITY_RBF,
    AFFINITY_SQEUCLID,
    AffinityStructure,
    BagGraph,
    affinity_from_sq_dists,
    affinity_weights_from_matrix,
    build_affinity,
    build_epsilon_graph,
    dump_edges,
    edge_features,
    epsilon_graph_from_dists,
    mean_pairwise,
)
from .kernels import (
    KERNEL_NAMES,
    MI_KERNEL,
    MIGRAPH,
    MIGRAPH_AFFINITY,
    EvalCounter,
    GramBatch,
    GramMatrix,
    KernelConfig,
    canonical_kernel_name,
    clique_kernel,
    config_digest,
    gamma_grid,
    gram,
    gram_cross,
    graph_kernel,
    k_edge,
    k_node,
    mi_kernel,
)
from .learners import (
    KrrModel,
    OvoModel,
    SvmModel,
    krr_predict,
    krr_train,
    ovo_predict,
    ovo_train,
    svm_decision,
    svm_predict,
    svm_train,
)
from .evaluation import (
    ComparisonResult,
    CvPlan,
    FoldRecord,
    RunResult,
    SearchSpace,
    TTestResult,
    compare_methods,
    confidence_interval_95,
    cross_validate,
    leave_one_out,
    make_folds,
    paired_t_test,
)
from .io import (
    FormatError,
    convert_musk_c45,
    export_gram_csv,
    export_run_csv,
    load_bags_csv,
    load_gram,
    load_model,
    load_run_result,
    load_schema,
    run_result_document,
    save_bags_csv,
    save_gram,
    save_model,
    save_run_result,
    save_schema,
    schema_from_dict,
    schema_to_dict,
)
from .cli import build_parser, cli_run

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
