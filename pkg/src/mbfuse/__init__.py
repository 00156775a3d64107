"""Distributed multi-object tracking with clustered multi-Bernoulli fusion.

Layers, bottom to top:

- ``gm``: Gaussian-mixture algebra (powers, pairwise products, reduction).
- ``mb``: multi-Bernoulli density, motion and sensor models, the
  cardinality-balanced filter recursion.
- ``gci``: weighted geometric-mean fusion of two multi-Bernoulli densities
  by exhaustive hypothesis enumeration (the correctness oracle).
- ``clustering``: divergence gating, association graph, disjoint-set
  connected components, largest isolated cluster decomposition.
- ``pgci``: per-cluster fusion that matches the exhaustive result when no
  hypotheses cross clusters, plus the truncation error bound.
- ``sim``: scenarios, sensor networks, Monte-Carlo driver, OSPA metric.
"""

from .errors import (
    ConfigError,
    DimensionMismatchError,
    IncompatiblePairError,
    IntractableFusionError,
    MbFuseError,
    NumericalError,
)
from .gm import (
    GaussianComponent,
    GaussianMixture,
    gm_eval,
    gm_normalize,
    gm_pair_product,
    gm_power,
    gm_reduce,
)
from .mb import (
    BernoulliComponent,
    BirthConfig,
    GmReduceConfig,
    MbReduceConfig,
    MotionModel,
    MultiBernoulliDensity,
    Rectangle,
    SensorModel,
    adaptive_birth,
    extract_estimates,
    mb_predict,
    mb_reduce,
    mb_update,
)
from .gci import (
    FusionWeights,
    FusionHypothesis,
    GmbDensity,
    count_hypotheses_distinct,
    count_hypotheses_nominal,
    enumerate_hypotheses,
    fused_pair_density,
    gci_divergence,
    naive_gci_mb_fuse,
    pairwise_distances,
)
from .clustering import (
    Cluster,
    ClusterKind,
    DisjointSet,
    LargestIsolatedClustering,
    compute_lic,
    connected_components,
    gate,
)
from .pgci import (
    FusionDiagnostics,
    hypothesis_count_report,
    inter_cluster_hypotheses,
    l1_error_bound,
    multi_sensor_fuse,
    pgci_fuse,
)
from .sim import (
    MonteCarloResult,
    ObjectBirth,
    ScenarioConfig,
    build_scenario,
    generate_measurements,
    generate_truth,
    metropolis_weights,
    ospa,
    run_local_filter,
    run_montecarlo,
    scenario1,
    scenario2,
)

__version__ = "0.1.0"
