"""Datasets, training, sweeps, sensing runs and the command line."""

from .dataset import Dataset, build_records, generate_dataset, load_dataset
from .evaluation import (RECEIVERS, SweepResult, SweepRow, eval_ber_sweep, goodput, max_rate,
                         wilson_interval)
from .sensing import SensingResult, run_sensing, sense
from .simulation import codebook_for, simulate_frame
from .training import TrainResult, train

__all__ = [
    "Dataset", "build_records", "generate_dataset", "load_dataset",
    "RECEIVERS", "SweepResult", "SweepRow", "eval_ber_sweep", "goodput", "max_rate", "wilson_interval",
    "SensingResult", "run_sensing", "sense", "codebook_for", "simulate_frame", "TrainResult", "train",
]
