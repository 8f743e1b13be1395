"""Learning-to-rank with privileged features distillation, plus a linear theory lab."""

from ._core import (  # noqa: F401
    ConfigError,
    DatasetError,
    DomainError,
    LinearExperiment,
    LossError,
    MetricError,
    PipelineError,
    QueryGroup,
    RankingDataset,
    closed_form_risk_ols,
    closed_form_risk_pfd,
    example_experiment,
    filter_query_groups,
    generate_binary_labels,
    label_probability,
    latent_fixture,
    log1p_transform,
    monte_carlo_risk,
    ndcg_at_k,
    rank_bce,
    rank_by_scores,
    rank_net,
    read_dataset,
    run_strategy,
    sigmoid,
    split_features_by_correlation,
    write_dataset,
)

__version__ = "0.1.0"
