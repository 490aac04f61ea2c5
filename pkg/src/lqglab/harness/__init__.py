"""Experiment harness: YAML configs, seeded ensembles, reports and the CLI."""
from .config import KINDS, ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import affine_pair_ratios, lattice_compatible
from .runner import RunReport, run, write_report
from .summary import SummaryError, summarize


def affine_covariance_study(config: ExperimentConfig, workers: int = 1) -> RunReport:
    """Run an ``affine_covariance`` config; rows flag interpolation mode when ``a`` is not lattice-compatible."""
    if config.kind != "affine_covariance":
        raise ConfigError(["kind: affine_covariance_study needs kind affine_covariance"])
    return run(config, workers)


__all__ = ["KINDS", "ConfigError", "ExperimentConfig", "RunReport", "SummaryError", "affine_covariance_study",
           "affine_pair_ratios", "lattice_compatible", "load_config", "parse_config", "run", "summarize",
           "write_report"]
