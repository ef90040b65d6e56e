"""Geometric vote aggregation for online ensembles.

Votes live on the probability simplex; an ensemble's votes form a score
polytope whose centroid is plain majority voting and whose least-squares
weighted combination is the optimal weighted vote. The package bundles
the geometry, the incremental learners and drifting-stream generators to
exercise it, a prequential evaluation harness, and rank-test reporting.
"""

from .ensemble import (
    EnsembleConfig,
    EnsemblePrediction,
    Sel2DivEnsemble,
    VotingEnsemble,
    build_scenario,
    pairwise_q_matrix,
    q_statistic,
    select_most_diverse_pair,
)
from .errors import (
    ComponentError,
    ConfigurationError,
    DimensionError,
    EmptyEnsembleError,
    EmptyStreamError,
    EmptySystemError,
    GeovoteError,
    NumericError,
    ParseError,
    ReportIOError,
    SchemaError,
)
from .evaluation import (
    FriedmanResult,
    PrequentialResult,
    ResultMatrix,
    RunRecord,
    SweepResult,
    average_ranks,
    emit_report,
    friedman_test,
    prequential_run,
    size_sweep,
)
from .geometry import (
    IdealPoint,
    ScorePolytope,
    ScoreVector,
    WeightVector,
    centroid,
    loss,
    predict_label,
    weighted_centroid,
)
from .learners import (
    GaussianNaiveBayes,
    HoeffdingTree,
    IncrementalLearner,
    hoeffding_bound,
    make_learner,
)
from .streams import (
    CsvSchema,
    CsvStream,
    HyperplaneStream,
    RbfStream,
    Rng,
    SeaStream,
    StreamRecord,
    StreamSpec,
    derive_seed,
    evenly_spaced_drift_points,
    make_stream,
    take,
    write_stream_csv,
)
from .weights import (
    NormalSystem,
    WeightSolution,
    accumulate,
    rank_diagnostics,
    solve,
)

__version__ = "0.1.0"
