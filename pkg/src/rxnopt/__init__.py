"""Knowledge-guided hierarchical Bayesian optimization for expensive
combinatorial experiments, with a benchmark harness and a campaign service."""

from .space import (
    CandidateSpec,
    Condition,
    Observation,
    SearchSpace,
    SpaceError,
    VariableSpec,
    build_space,
    decode,
    encode,
    enumerate_conditions,
    restrict_space,
)
from .knowledge import (
    KnowledgeError,
    KnowledgeProvider,
    KnowledgeReport,
    ManifestProvider,
    PropertyClusterProvider,
    RemoteProvider,
    StaticProvider,
    build_tree,
    report_from_space,
)
from .tree import OptTree, TreeError, TreeNode, backpropagate, batch_select, restrict, select_path, ucb
from .gp import AcquisitionKind, FitConfig, GPError, GPModel, acquire, fit, matern52, predict, select_batch
from .predictor import PerformancePredictor, PredictorError, RemotePredictor, RidgePredictor, TableOracle
from .pseudo import PseudoConfig, PseudoPoint, generate, global_removal, local_removal, score_tree, select_tree
from .campaign import Campaign, CampaignConfig, CampaignError, load, save

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
