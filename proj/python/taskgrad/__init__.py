"""Gradient-based task relationship analysis for multi-task panels.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface.
"""

from ._core import (  # noqa: F401
    ConfigError,
    DataError,
    NumericError,
    Panel,
    apply_overlap,
    ari,
    empirical_matrix,
    fit_sigmoid,
    generate_panel,
    gradient_check,
    group_tasks,
    linkage_average,
    load_csv_panel,
    matrix_correlation,
    nmi,
    pairwise_overlap,
    pearson,
    random_partition,
    run_experiment,
    save_csv_panel,
    snr_model,
    spearman,
    train_gradient_matrix,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "Panel",
    "apply_overlap",
    "ari",
    "empirical_matrix",
    "fit_sigmoid",
    "generate_panel",
    "gradient_check",
    "group_tasks",
    "linkage_average",
    "load_csv_panel",
    "matrix_correlation",
    "nmi",
    "pairwise_overlap",
    "pearson",
    "random_partition",
    "run_experiment",
    "save_csv_panel",
    "snr_model",
    "spearman",
    "train_gradient_matrix",
]

__version__ = "0.1.0"
