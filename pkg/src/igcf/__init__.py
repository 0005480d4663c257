"""Interactive graph-convolutional filtering toolkit."""

from .graph import (
    InteractionGraph,
    PropagationSpec,
    build_graph,
    coefficient_columns,
    materialize_coefficient_matrix,
    node_final_embedding,
    normalized_adjacency,
    propagate,
    propagation_operator,
    self_loop_adjacency,
)
from .datasets import DataError, InteractionDataset, from_records, ingest
from .pretrain import (
    NumericalError,
    PretrainConfig,
    PretrainedModel,
    VariationalParams,
    export_item_vectors,
    init_params,
    loss_binary,
    loss_continuous,
    pretrain,
    sample_embeddings,
)
from .online import (
    BayesLinUcbPolicy,
    MetaPrior,
    PolicyConfig,
    UserPosterior,
    build_meta_prior,
    confidence_width,
    init_user,
    mutual_information,
    select,
    ucb_scores,
    update_posterior,
)
from .baselines import IcfPolicy, IcfState, icf_select, icf_update, static_policies
from .metrics import EpisodeLog, ndcg_at, precision_at, recall_at
from .replay import ReplayEnvironment, build_drift_split, run_episode, run_policy
from .regret_lab import (
    SyntheticEnv,
    SyntheticEnvConfig,
    bayes_regret_bound,
    empirical_regret,
    meta_prior_constants,
    sample_env,
    sufficient_rounds,
)
from .snapshot import load_snapshot, save_snapshot

__version__ = "0.1.0"
