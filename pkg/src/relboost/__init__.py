"""relboost: boosted regression trees trained directly on relational data.

Training runs over grouped SumProd queries evaluated on a join tree, never
materializing the join; a tensor-sketch path approximates residual norms; a
design-matrix oracle backs everything differentially.
"""

from .errors import (
    ConfigError,
    CyclicSchemaError,
    DimensionError,
    ModelFormatError,
    ParseError,
    QueryError,
    RelboostError,
    ResourceCapError,
    SchemaError,
)
from .intervals import Interval, intersect_gates
from .model import (
    Ensemble,
    RegressionTree,
    SplitCriterion,
    TreeNode,
    deserialize,
    ensembles_equal,
    max_leaf_deviation,
    predict_ensemble,
    predict_tree,
    residual,
    serialize,
    trees_equal,
)
from .oracle import (
    OracleReport,
    predict_matrix,
    predict_matrix_ensemble,
    ssr_oracle,
    train_boosted_oracle,
    train_tree_oracle,
)
from .relational import (
    Dataset,
    DesignMatrix,
    JoinHypergraph,
    JoinSpec,
    JoinTree,
    Table,
    build_hypergraph,
    build_join_tree,
    check_acyclic,
    load_table,
    load_table_path,
    make_table,
    materialize_join,
)
from .semiring import (
    REAL,
    GroupedResult,
    Semiring,
    SumProdQuery,
    eval_bruteforce,
    eval_sumprod,
    eval_sumprod_grouped,
)
from .sketch import (
    DomainIndex,
    HashFamily,
    SketchHashes,
    poly_mul_mod,
    sketch_inner,
    sketch_norm_sq,
    sketch_semiring,
    table_factor_monomial,
)
from .split import SplitCandidate, SplitChoice, select_best_split
from .trainer import (
    NodeStats,
    QueryCounter,
    ResidualStats,
    TrainConfig,
    approx_residual_sq,
    best_split_boosted,
    best_split_single,
    cross_pair_sums,
    default_sketch_width,
    leaf_sum_queries,
    node_statistics,
    residual_node_statistics,
    residual_sq_exact,
    sketch_residual_vectors,
    train_boosted,
    train_tree,
)

__version__ = "0.1.0"
