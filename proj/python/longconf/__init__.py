from ._longconf import (
    Dataset,
    FitError,
    InvalidInput,
    UnavailableCell,
    bmsm,
    bsa,
    geweke_z,
    msm,
    replicate,
    sensitivity_table_csv,
    simulate,
    true_ate,
)

__all__ = [
    "Dataset",
    "FitError",
    "InvalidInput",
    "UnavailableCell",
    "bmsm",
    "bsa",
    "geweke_z",
    "msm",
    "replicate",
    "sensitivity_table_csv",
    "simulate",
    "true_ate",
]
