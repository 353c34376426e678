"""Config documents and deterministic CSV / coefficient output."""
from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np
import yaml

from . import families
from .errors import ConfigFileError
from .network import network_from_dict, load_network

MODES = ("simulate", "energy-check", "carleman-check", "reconstruct-direct", "reconstruct-lsq", "stability")


def fmt(value) -> str:
    """Shortest round-tripping text for floats, plain text otherwise."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_trajectory(path, trajectory, every: int = 1) -> Path:
    """Long format: edge, x, t, u1, u2 for every ``every``-th stored level."""
    levels = range(0, len(trajectory.t), max(1, every))
    if (len(trajectory.t) - 1) % max(1, every):
        levels = list(levels) + [len(trajectory.t) - 1]

    def rows():
        for j in trajectory.edge_ids:
            x = trajectory.x[j]
            for i in levels:
                t = trajectory.t[i]
                for n in range(len(x)):
                    yield j, x[n], t, trajectory.u1[j][i, n], trajectory.u2[j][i, n]
    return write_csv(path, ("edge", "x", "t", "u1", "u2"), rows())


def write_coefficients(path, constants: dict, names=("L", "C", "R", "G")) -> Path:
    """Per-edge constants in the config's coefficient format."""
    doc = {int(j): [float(v) for v in c] for j, c in sorted(constants.items())}
    with open(path, "w") as fh:
        fh.write("# per-edge coefficients: [" + ", ".join(names) + "]\n")
        yaml.safe_dump(doc, fh, sort_keys=True)
    return Path(path)


# -- configs ---------------------------------------------------------------------

def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigFileError(f"config file {path} does not exist")
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ConfigFileError("config must be a key-value document")
    doc["_base"] = str(path.parent)
    return doc


def resolve_network(cfg: dict):
    spec = cfg.get("network")
    if spec is None:
        raise ConfigFileError("config needs a 'network' entry")
    if isinstance(spec, dict):
        return network_from_dict(spec)
    path = Path(cfg.get("_base", ".")) / spec
    if not path.exists():
        raise ConfigFileError(f"network file {path} does not exist")
    return load_network(path)


def coefficient_spec(cfg: dict, key="coefficients"):
    """A 4-list for every edge or a mapping edge -> 4-list."""
    spec = cfg.get(key, (1.0, 1.0, 0.0, 0.0))
    if isinstance(spec, dict):
        return {int(j): list(v) for j, v in spec.items()}
    return list(spec)


def time_signal(spec):
    """Boundary signals are families of ``t``."""
    return families.from_spec(spec)


def threads_from(cli_value, cfg: dict) -> int:
    """``--threads`` wins, then ``TELEGRAPHNET_THREADS``, then the config, then 1."""
    if cli_value is not None:
        n = cli_value
    elif os.environ.get("TELEGRAPHNET_THREADS"):
        try:
            n = int(os.environ["TELEGRAPHNET_THREADS"])
        except ValueError as exc:
            raise ConfigFileError("TELEGRAPHNET_THREADS must be an integer") from exc
    else:
        n = int(cfg.get("threads", 1))
    if n < 1:
        raise ConfigFileError("thread count must be at least 1")
    return n

