"""Contribution-metered data pool: reward accounting and dataset curation."""

from ._core import (
    DatapoolError,
    DedupIndex,
    Platform,
    apply_filters,
    compute_rewards,
    contribution_ratio,
    count_tokens,
    estimate_jaccard,
    exact_fingerprint,
    expected_payout,
    minhash_signature,
    normalize,
    reward_pool,
    run_pipeline,
)

__all__ = [
    "DatapoolError",
    "DedupIndex",
    "Platform",
    "apply_filters",
    "compute_rewards",
    "contribution_ratio",
    "count_tokens",
    "estimate_jaccard",
    "exact_fingerprint",
    "expected_payout",
    "minhash_signature",
    "normalize",
    "reward_pool",
    "run_pipeline",
]
