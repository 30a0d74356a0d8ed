import logging
import os
import re
from dataclasses import dataclass, field, replace
from typing import Optional

import yaml

from core.iteration.qvi import UPDATE_ORDERS
from core.utils.env_expander import expand_env_vars

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.path.join(os.path.dirname(__file__), "default_run_config.yml")

EPS_GLOBAL = "global"
EPS_ADAPTIVE = "adaptive"
EPS_FIXED = "fixed"

DEFAULTS = {
    "game": "paper-sec5",
    "iterations": 60,
    "seeds": [0, 1, 2, 3, 4],
    "init": "uniform",
    "eps": EPS_GLOBAL,
    "eps_iterates_only": False,
    "update_order": "jacobi",
    "output_dir": "results",
    "cycle_window": 10,
    "burn_in": 5,
    "enumeration_limit": 10**6,
    "workers": 1,
}


class RunConfigError(ValueError):
    """Raised when a run configuration is invalid."""


@dataclass(frozen=True)
class EpsMode:
    kind: str
    value: Optional[float] = None

    def __str__(self):
        return f"{self.kind}:{self.value!r}" if self.kind == EPS_FIXED else self.kind


@dataclass(frozen=True)
class RunConfig:
    """
    Experimental protocol of a run: which game, how many iterations, which
    seeds, how Q_0 is drawn, which slack certifies the bound and where the
    files go.
    """

    game: str = DEFAULTS["game"]
    iterations: int = DEFAULTS["iterations"]
    seeds: tuple = tuple(DEFAULTS["seeds"])
    init: str = DEFAULTS["init"]
    eps: EpsMode = field(default_factory=lambda: EpsMode(EPS_GLOBAL))
    eps_iterates_only: bool = False
    update_order: str = DEFAULTS["update_order"]
    output_dir: str = DEFAULTS["output_dir"]
    cycle_window: int = DEFAULTS["cycle_window"]
    burn_in: int = DEFAULTS["burn_in"]
    enumeration_limit: int = DEFAULTS["enumeration_limit"]
    workers: int = DEFAULTS["workers"]

    def __post_init__(self):
        if self.iterations < 0:
            raise RunConfigError(f"iterations must be >= 0, got {self.iterations}")
        if not self.seeds:
            raise RunConfigError("at least one seed is required")
        if any(seed < 0 for seed in self.seeds):
            raise RunConfigError(f"seeds must be non-negative, got {list(self.seeds)}")
        if self.eps.kind == EPS_FIXED and (self.eps.value is None or self.eps.value < 0):
            raise RunConfigError(f"fixed eps must be >= 0, got {self.eps.value}")
        if not (self.init in ("uniform", "zero") or self.init.startswith("file:")):
            raise RunConfigError(f"init must be uniform, zero or file:<path>, got '{self.init}'")
        if self.update_order not in UPDATE_ORDERS:
            raise RunConfigError(f"update_order must be one of {UPDATE_ORDERS}, got '{self.update_order}'")
        if self.cycle_window < 1 or self.workers < 1 or self.burn_in < 0:
            raise RunConfigError("cycle_window and workers must be >= 1, burn_in >= 0")

    def with_overrides(self, **overrides) -> "RunConfig":
        """Copy with every non-None override applied."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict:
        return {
            "game": self.game,
            "iterations": self.iterations,
            "seeds": list(self.seeds),
            "init": self.init,
            "eps": str(self.eps),
            "eps_iterates_only": self.eps_iterates_only,
            "update_order": self.update_order,
            "output_dir": self.output_dir,
            "cycle_window": self.cycle_window,
            "burn_in": self.burn_in,
            "enumeration_limit": self.enumeration_limit,
            "workers": self.workers,
        }


def parse_eps_mode(text: str) -> EpsMode:
    """Parse ``global``, ``adaptive`` or ``fixed:<value>``."""
    text = str(text).strip()
    if text in (EPS_GLOBAL, EPS_ADAPTIVE):
        return EpsMode(text)
    if text.startswith(f"{EPS_FIXED}:"):
        try:
            value = float(text.split(":", 1)[1])
        except ValueError:
            raise RunConfigError(f"invalid fixed eps '{text}'") from None
        if not value >= 0:
            raise RunConfigError(f"fixed eps must be >= 0, got {value}")
        return EpsMode(EPS_FIXED, value)
    raise RunConfigError(f"eps mode must be global, adaptive or fixed:<value>, got '{text}'")


def parse_seeds(text) -> tuple:
    """
    Parse a seed list: ``0..4`` (inclusive range), ``0,2,5``, a single
    integer, or a YAML list.
    """
    if isinstance(text, (list, tuple)):
        return tuple(int(s) for s in text)
    if isinstance(text, int):
        return (text,)
    text = str(text).strip()
    match = re.fullmatch(r"(\d+)\.\.(\d+)", text)
    try:
        if match:
            start, stop = int(match.group(1)), int(match.group(2))
            if stop < start:
                raise RunConfigError(f"empty seed range '{text}'")
            return tuple(range(start, stop + 1))
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise RunConfigError(f"invalid seed list '{text}'") from None


class RunConfigManager:
    """
    Loads the run configuration from a YAML file, expanding environment
    placeholders and filling missing keys with defaults.
    """

    def __init__(self, config_path: Optional[str] = None):
        """
        :param config_path: YAML file; the packaged default when omitted.
        """
        self.config_path = config_path or DEFAULT_CONFIG_PATH

    def load(self) -> RunConfig:
        """
        :return: The validated RunConfig.
        :raises RunConfigError: If the file is missing, unparsable or invalid.
        """
        logger.debug(f"Loading run config from: {self.config_path}")
        try:
            with open(self.config_path, "r") as file:
                raw_content = file.read()
            data = yaml.safe_load(expand_env_vars(raw_content)) or {}
        except FileNotFoundError:
            error_message = f"Error: The specified config file '{self.config_path}' does not exist."
            logger.error(error_message)
            raise RunConfigError(error_message)
        except yaml.YAMLError as e:
            error_message = f"An error occurred while parsing the config: {e}"
            logger.error(error_message)
            raise RunConfigError(error_message)

        if not isinstance(data, dict):
            raise RunConfigError(f"config '{self.config_path}' must be a mapping")

        unknown = sorted(set(data) - set(DEFAULTS))
        if unknown:
            logger.warning(f"Ignoring unknown config keys: {', '.join(unknown)}")

        for key, default in DEFAULTS.items():
            if key not in data or data[key] is None:
                logger.warning(f"Missing key '{key}' in config '{self.config_path}', using {default!r}")
                data[key] = default

        try:
            config = RunConfig(
                game=str(data["game"]),
                iterations=int(data["iterations"]),
                seeds=parse_seeds(data["seeds"]),
                init=str(data["init"]),
                eps=parse_eps_mode(data["eps"]),
                eps_iterates_only=bool(data["eps_iterates_only"]),
                update_order=str(data["update_order"]),
                output_dir=str(data["output_dir"]) or DEFAULTS["output_dir"],
                cycle_window=int(data["cycle_window"]),
                burn_in=int(data["burn_in"]),
                enumeration_limit=int(data["enumeration_limit"]),
                workers=int(data["workers"]),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, RunConfigError):
                raise
            raise RunConfigError(f"invalid value in config '{self.config_path}': {e}") from e
        logger.debug("Run config loaded successfully.")
        return config
