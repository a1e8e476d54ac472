from .describe import frequency_table, group_summary, histogram, median
from .special import beta_inc, chi2_sf, f_sf, gamma_p, gamma_q, log_gamma, normal_sf, tail_probability
from .tests import (
    AssociationResult,
    ContingencyTable,
    anova_oneway,
    concordance_counts,
    gk_gamma,
    kruskal_wallis,
    midranks,
    write_association_csv,
)

__all__ = [
    "AssociationResult", "ContingencyTable", "anova_oneway", "beta_inc", "chi2_sf", "concordance_counts",
    "f_sf", "frequency_table", "gamma_p", "gamma_q", "gk_gamma", "group_summary", "histogram",
    "kruskal_wallis", "log_gamma", "median", "midranks", "normal_sf", "tail_probability",
    "write_association_csv",
]
