"""TOML run configuration.

Layout::

    [model]
    beta = 0.0
    d = {kind = "table", support = [[1, 0.5], [2, 0.5]]}   # or 3, or {kind = "poisson", lambda = 2.0}

    [run]
    horizon = 1000000
    checkpoints = {base = 100, ratio = 1.2}
    seed = 1
    replicas = 1
    k_max = 10
    workers = 4            # optional, defaults to the CPU count

    [trackers]
    scaling_c = 4.0        # adds Q_c and U_c
    lemma22 = true         # adds the running minimum of M(n) / n^(1/(4(2+beta)))

    [verify]               # only read by the `verify` command
    degrees = [2, 1, 1]    # frozen tree for `verify onestep`
    trials = 1000000
    k = 1                  # `verify clt`
    n = 100000
    replicas = 4000
    hub_threshold = 0.9    # `verify hub`
"""

from __future__ import annotations

from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import degree_dist
from .graph_engine import ModelParams
from .harness import RunConfig


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    run: RunConfig
    verify: dict = field(default_factory=dict)


def parse_params(model: dict) -> ModelParams:
    if "d" not in model:
        raise ConfigError("[model] needs a `d` entry")
    return ModelParams(float(model.get("beta", 0.0)), degree_dist.from_config(model["d"]))


def parse_config(doc: dict) -> Config:
    try:
        params = parse_params(doc.get("model", {}))
        run = doc.get("run", {})
        cps = run.get("checkpoints", {})
        trackers = doc.get("trackers", {})
        enabled = set()
        scaling_c = trackers.get("scaling_c")
        if scaling_c is not None:
            enabled.add("scaling")
        if trackers.get("lemma22", False):
            enabled.add("lemma22")
        cfg = RunConfig(
            params=params,
            horizon=int(run.get("horizon", 10**5)),
            checkpoint_base=int(cps.get("base", 100)),
            checkpoint_ratio=float(cps.get("ratio", 1.2)),
            master_seed=int(run.get("seed", 0)),
            replicas=int(run.get("replicas", 1)),
            k_max=int(run.get("k_max", 10)),
            trackers=frozenset(enabled),
            scaling_c=None if scaling_c is None else float(scaling_c),
            workers=run.get("workers"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, MemoryError) as exc:
        raise ConfigError(str(exc)) from exc
    return Config(cfg, dict(doc.get("verify", {})))


def load_config(path) -> Config:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(doc)
