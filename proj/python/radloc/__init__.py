"""Radio localization solvers, ranging bounds and a Monte Carlo harness."""

import json
import os

from ._radloc import (
    RadioMap,
    RadlocError,
    RangeSet,
    Scenario,
    aoa_spectrum,
    classical_locate,
    crlb_range_std,
    esprit,
    foy_tdoa,
    rbf_locate,
    solve,
    stress,
    synthesize_ranges,
    tdoa_error_floor,
    trilaterate,
    zzlb_range_std,
)
from ._radloc import run_experiment as _run_experiment

__all__ = [
    "RadioMap",
    "RadlocError",
    "RangeSet",
    "Scenario",
    "aoa_spectrum",
    "classical_locate",
    "crlb_range_std",
    "esprit",
    "foy_tdoa",
    "rbf_locate",
    "run_experiment",
    "solve",
    "stress",
    "synthesize_ranges",
    "tdoa_error_floor",
    "trilaterate",
    "zzlb_range_std",
]


def run_experiment(config):
    """Run a harness experiment.

    `config` is a dict or a path to a JSON file. Returns (aggregates, metrics_csv) where
    aggregates is the parsed aggregate.json content. Scenario files referenced by a
    config file resolve against that file's directory.
    """
    base_dir = ""
    if isinstance(config, (str, os.PathLike)):
        base_dir = os.path.dirname(os.path.abspath(config))
        with open(config) as f:
            config = json.load(f)
    aggregates, csv = _run_experiment(json.dumps(config), base_dir)
    return json.loads(aggregates), csv
