"""
Probability module for the RDFC pipeline.

Handles exact and empirical PMFs, divergences, information measures and
the rate-region tooling.
"""

from .pmf import (
    JointPmf,
    ConditionalPmf,
    tvd,
    kl_divergence,
    pinsker_bound,
    entropy,
    binary_entropy,
    mutual_information,
    conditional_entropy_y_given_x,
    bsc_conditional,
    bsc_joint,
    empirical_joint,
    empirical_joint_from_arrays,
    save_pmf_csv,
    load_pmf_csv,
)
from .region import (
    RateTriple,
    RateRegionCertificate,
    RegionBounds,
    RegionCheck,
    WCIResult,
    CoverageRatio,
    certificate_bounds,
    check_rate_triple,
    certificate_u_equals_x,
    certificate_u_equals_y,
    certificate_constant,
    certificate_from_factors,
    corner_points,
    dsbs_target,
    wyner_common_information,
    wci_dsbs,
    coverage_ratio,
    format_percent,
    coverage_table,
    EXPERIMENT_GRID,
    EXPERIMENT_SAMPLES,
)

__all__ = [
    'JointPmf', 'ConditionalPmf', 'tvd', 'kl_divergence', 'pinsker_bound', 'entropy',
    'binary_entropy', 'mutual_information', 'conditional_entropy_y_given_x', 'bsc_conditional',
    'bsc_joint', 'empirical_joint', 'empirical_joint_from_arrays', 'save_pmf_csv', 'load_pmf_csv',
    'RateTriple', 'RateRegionCertificate', 'RegionBounds', 'RegionCheck', 'WCIResult',
    'CoverageRatio', 'certificate_bounds', 'check_rate_triple', 'certificate_u_equals_x',
    'certificate_u_equals_y', 'certificate_constant', 'certificate_from_factors', 'corner_points',
    'dsbs_target', 'wyner_common_information', 'wci_dsbs', 'coverage_ratio', 'format_percent',
    'coverage_table', 'EXPERIMENT_GRID', 'EXPERIMENT_SAMPLES',
]
