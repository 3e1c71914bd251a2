"""Locally differentially private collection of key-value data.

Users hold sets of key-value pairs (values in [-1, 1]); each contributes one
randomized report, and the server estimates per-key frequencies and means.
The key and value channels are perturbed jointly, so the combined privacy
level is tighter than the sum of the two stage budgets; budget allocation
exploits that, and an exhaustive auditor verifies the claimed level exactly
on small domains.
"""

from .budget import (
    BudgetSpec,
    PerturbProbs,
    allocate,
    compose_grr,
    compose_ue,
    probs_grr,
    probs_ue,
    split_from_theta,
)
from .model import Dataset, KvPair, TrueStats, UserRecord, true_stats
from .sampling import pad_and_sample, sample_distribution
from .mechanisms import (
    GrrReport,
    PrivKvReport,
    UeReport,
    output_distribution_grr,
    output_distribution_ue,
    perturb_grr,
    perturb_privkv,
    perturb_ue,
    privkv_probs,
)
from .estimation import (
    Estimates,
    PrivKvCounts,
    SupportCounts,
    aggregate,
    aggregate_privkv,
    calibrate_counts,
    estimate_corrected,
    estimate_frequency,
    estimate_mean_baseline,
    estimate_privkv,
    merge_counts,
)
from .theory import (
    ErrorPrediction,
    ScanResult,
    allocation_objective_scan,
    choose_mechanism,
    gh_from_probs,
    grr_gh_closed_form,
    predict_errors,
    ue_objective,
)
from .audit import AuditResult, audit_grr, audit_ue, enumerate_input_records
from .datagen import SynthConfig, gen_synthetic, load_csv, load_dataset, save_dataset
from .simulate import run_grr, run_privkv, run_ue, sample_pairs
from .experiment import (
    ExperimentConfig,
    MetricsReport,
    compare_allocations,
    precision_top_n,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetSpec", "PerturbProbs", "allocate", "compose_grr", "compose_ue",
    "probs_grr", "probs_ue", "split_from_theta",
    "Dataset", "KvPair", "TrueStats", "UserRecord", "true_stats",
    "pad_and_sample", "sample_distribution",
    "GrrReport", "PrivKvReport", "UeReport",
    "output_distribution_grr", "output_distribution_ue",
    "perturb_grr", "perturb_privkv", "perturb_ue", "privkv_probs",
    "Estimates", "PrivKvCounts", "SupportCounts", "aggregate",
    "aggregate_privkv", "calibrate_counts", "estimate_corrected",
    "estimate_frequency", "estimate_mean_baseline", "estimate_privkv",
    "merge_counts",
    "ErrorPrediction", "ScanResult", "allocation_objective_scan",
    "choose_mechanism", "gh_from_probs", "grr_gh_closed_form",
    "predict_errors", "ue_objective",
    "AuditResult", "audit_grr", "audit_ue", "enumerate_input_records",
    "SynthConfig", "gen_synthetic", "load_csv", "load_dataset", "save_dataset",
    "run_grr", "run_privkv", "run_ue", "sample_pairs",
    "ExperimentConfig", "MetricsReport", "compare_allocations",
    "precision_top_n", "run_experiment",
]
