"""Edit-job configuration: defaults, job files, sweep grids, manifests.

Job files are plain-text ``key = value`` lines, UTF-8, with ``#``
comments.  A run's manifest uses the identical format, so re-running
from a manifest reproduces the run.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Callable, Dict, List

from .errors import ConfigError

DEFAULT_STEPS = 50
DEFAULT_GUIDANCE = 7.5
DEFAULT_MASK_THRESHOLD = 0.03
OUT_ENV_VAR = "ADAPEDIT_OUT"

SWEEP_KEYS = ("lambda_tau", "lambda_sv", "lambda_s")


@dataclass(frozen=True)
class EditConfig:
    """All hyper-parameters of one edit job."""

    prompt: str = ""
    edit: str = ""
    lambda_tau: float = 1.0
    lambda_sv: float = 1.0
    lambda_s: float = 0.9
    alpha_m: float = DEFAULT_MASK_THRESHOLD
    steps: int = DEFAULT_STEPS
    guidance: float = DEFAULT_GUIDANCE
    seed: int = 42
    backend: str = "toy"
    out_dir: str = ""
    dps_per_step: bool = False

    def validate(self) -> "EditConfig":
        if not self.prompt.strip():
            raise ConfigError("missing required key: prompt")
        if not self.edit.strip():
            raise ConfigError("missing required key: edit")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.steps > 0xFFFF:
            raise ConfigError(f"steps must fit in 16 bits, got {self.steps}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if not 0.0 <= self.alpha_m < 1.0:
            raise ConfigError(f"alpha_m must lie in [0, 1), got {self.alpha_m}")
        if self.lambda_tau < 0:
            raise ConfigError(f"lambda_tau must be >= 0, got {self.lambda_tau}")
        if self.lambda_sv < 0:
            raise ConfigError(f"lambda_sv must be >= 0, got {self.lambda_sv}")
        if not 0.0 <= self.lambda_s <= 1.0:
            raise ConfigError(f"lambda_s must lie in [0, 1], got {self.lambda_s}")
        if not (self.backend == "toy" or self.backend.startswith("remote:")):
            raise ConfigError(
                f"backend must be 'toy' or 'remote:<host:port>', got {self.backend!r}"
            )
        return self

    def resolved_out_dir(self) -> Path:
        root = self.out_dir or os.environ.get(OUT_ENV_VAR, "") or "./out"
        return Path(root)


_KEY_ALIASES = {"dps.per_step": "dps_per_step"}
_FIELD_NAMES = {f.name for f in fields(EditConfig)}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


_PARSERS: Dict[str, Callable[[str], object]] = {
    "prompt": str,
    "edit": str,
    "lambda_tau": float,
    "lambda_sv": float,
    "lambda_s": float,
    "alpha_m": float,
    "steps": int,
    "guidance": float,
    "seed": int,
    "backend": str,
    "out_dir": str,
    "dps_per_step": _parse_bool,
}


def parse_key_values(text: str) -> Dict[str, str]:
    """Raw ``key = value`` pairs, comments and blank lines skipped."""
    pairs: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def config_from_pairs(pairs: Dict[str, str]) -> EditConfig:
    values: Dict[str, object] = {}
    for key, raw in pairs.items():
        name = _KEY_ALIASES.get(key, key)
        if name not in _FIELD_NAMES:
            raise ConfigError(f"unknown config key: {key!r}")
        try:
            values[name] = _PARSERS[name](raw)
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"invalid value for {key!r}: {raw!r}") from None
    return EditConfig(**values).validate()


def load_job_file(path: Path) -> EditConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read job file {path}: {exc}") from None
    return config_from_pairs(parse_key_values(text))


def format_manifest(config: EditConfig) -> str:
    """Resolved config as a re-runnable job file."""
    lines = [
        "# resolved run configuration",
        f"prompt        = {config.prompt}",
        f"edit          = {config.edit}",
        f"lambda_tau    = {config.lambda_tau!r}",
        f"lambda_sv     = {config.lambda_sv!r}",
        f"lambda_s      = {config.lambda_s!r}",
        f"alpha_m       = {config.alpha_m!r}",
        f"steps         = {config.steps}",
        f"guidance      = {config.guidance!r}",
        f"seed          = {config.seed}",
        f"backend       = {config.backend}",
        f"out_dir       = {config.out_dir}",
        f"dps.per_step  = {'true' if config.dps_per_step else 'false'}",
    ]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepGrid:
    """Explicit value lists for the three guidance weights."""

    base: EditConfig
    lambda_tau: tuple[float, ...] = (1.0,)
    lambda_sv: tuple[float, ...] = (1.0,)
    lambda_s: tuple[float, ...] = (0.9,)

    def jobs(self) -> List[EditConfig]:
        out = []
        for lt in self.lambda_tau:
            for lsv in self.lambda_sv:
                for ls in self.lambda_s:
                    out.append(
                        replace(
                            self.base, lambda_tau=lt, lambda_sv=lsv, lambda_s=ls
                        ).validate()
                    )
        return out

    @staticmethod
    def job_dir_name(config: EditConfig) -> str:
        return (
            f"lt{config.lambda_tau!r}_lsv{config.lambda_sv!r}_ls{config.lambda_s!r}"
        )


def load_grid_file(path: Path) -> SweepGrid:
    """Grid files reuse the job format; the lambda keys take comma lists."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read grid file {path}: {exc}") from None
    pairs = parse_key_values(text)

    lists: Dict[str, tuple[float, ...]] = {}
    for key in SWEEP_KEYS:
        if key in pairs:
            raw = pairs.pop(key)
            try:
                values = tuple(float(v.strip()) for v in raw.split(",") if v.strip())
            except ValueError:
                raise ConfigError(f"invalid value list for {key!r}: {raw!r}") from None
            if not values:
                raise ConfigError(f"empty value list for {key!r}")
            lists[key] = values

    base = config_from_pairs(pairs)
    return SweepGrid(
        base=base,
        lambda_tau=lists.get("lambda_tau", (base.lambda_tau,)),
        lambda_sv=lists.get("lambda_sv", (base.lambda_sv,)),
        lambda_s=lists.get("lambda_s", (base.lambda_s,)),
    )
