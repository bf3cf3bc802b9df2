"""Offline fair multi-objective RL: tabular solver, neural trainer and welfare metrics."""

from ._core import (
    Dataset,
    HyperParams,
    NeuralResult,
    SolverError,
    TabularResult,
    TrainingError,
    evaluate_tabular,
    f_prime_inverse,
    generate_dataset,
    jain_index,
    kruskal_wallis,
    load_dataset,
    nsw,
    soft_chi2_f,
    solve_tabular,
    train,
    w_star,
)

__all__ = [
    "Dataset",
    "HyperParams",
    "NeuralResult",
    "SolverError",
    "TabularResult",
    "TrainingError",
    "evaluate_tabular",
    "f_prime_inverse",
    "generate_dataset",
    "jain_index",
    "kruskal_wallis",
    "load_dataset",
    "nsw",
    "soft_chi2_f",
    "solve_tabular",
    "train",
    "w_star",
]
