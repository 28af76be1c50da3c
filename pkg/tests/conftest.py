"""Shared fixtures: baseline simulated setup and a synthetic SPC-style file."""

import csv
from pathlib import Path

import numpy as np
import pytest

from tailcover.cli import ExperimentConfig, build_family, metric_config, simulated_model, simulated_sample
from tailcover.dists import ModelKind, TailLinkModel

# Link for the synthetic tornado generator: gamma spans ~[0.5, 1.5] over
# CONUS-like coordinates, so the conditional mean is undefined for part of
# the map and the median clamp is the right choice.
TORNADO_TRUE_MODEL = TailLinkModel(
    ModelKind.GPD, (0.0, 0.03, 0.01), sigma=2.0, covariate_dim=2
)


def make_sim(m=5000, rep=0, **kwargs):
    """Baseline simulated dataset + family (true-model clamp) + metric."""
    conf = ExperimentConfig(m=m, **kwargs)
    sample = simulated_sample(conf, rep)
    model = simulated_model(conf)
    family = build_family(conf, sample, model)
    return sample, family, model, metric_config(conf)


def write_spc_csv(path: Path, n: int = 6000, seed: int = 7, with_bad_rows: bool = True) -> dict:
    """Synthetic SPC-style tornado file with known generating model.

    Losses are GPD per unit area under ``TORNADO_TRUE_MODEL`` at the track's
    mean coordinates, then multiplied back by len*wid. A fraction of rows is
    zero-loss, some fall outside 2016-2023, and (optionally) a few are
    malformed to exercise the rejects path.
    """
    rng = np.random.default_rng(seed)
    rows = []
    n_window_usable = 0
    for i in range(n):
        year = int(rng.integers(2014, 2025))
        slat = rng.uniform(26.0, 48.0)
        elat = slat + rng.normal(scale=0.05)
        slon = rng.uniform(-119.0, -76.0)
        elon = slon + rng.normal(scale=0.05)
        length = rng.uniform(0.2, 25.0)
        wid = rng.uniform(20.0, 900.0)
        w = np.array([(slat + elat) / 2.0, (slon + elon) / 2.0])
        if rng.uniform() < 0.12:
            loss = 0.0
        else:
            y_unit = float(TORNADO_TRUE_MODEL.sample_given(w.reshape(1, -1), rng)[0])
            loss = y_unit * length * wid
        if 2016 <= year <= 2023 and loss > 0:
            n_window_usable += 1
        rows.append([i + 1, year, loss, slat, slon, elat, elon, length, wid])
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["om", "yr", "loss", "slat", "slon", "elat", "elon", "len", "wid"])
        for row in rows:
            writer.writerow(row)
        if with_bad_rows:
            writer.writerow([n + 1, 2019, 1000.0, 35.0, -90.0, 35.0, -90.0, 1.0, ""])
            writer.writerow([n + 2, 2019, "abc", 35.0, -90.0, 35.0, -90.0, 1.0, 10.0])
            writer.writerow([n + 3, 2019, 1000.0, 0.0, -90.0, 35.0, -90.0, 1.0, 10.0])
    return {"n_rows": n, "n_window_usable": n_window_usable}


@pytest.fixture(scope="session")
def spc_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("spc") / "tornadoes.csv"
    info = write_spc_csv(path)
    return path, info
