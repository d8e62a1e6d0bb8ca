"""Experiment configuration: JSON parsing with field-level validation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError
from .matrix_model import EntryDistribution
from .perturbation import SpikeSpec

_KNOWN_FIELDS = {
    "n_list",
    "k_exponent",
    "k_list",
    "spikes",
    "non_normality_tau",
    "trials",
    "base_seed",
    "distribution",
    "epsilon_band",
    "output_dir",
    "dense_oracle",
    "force_zero_matrix",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated parameters of one study run."""

    n_list: tuple[int, ...]
    spike_spec: SpikeSpec
    trials: int
    base_seed: int
    distribution: EntryDistribution
    output_dir: Path
    k_exponent: float | None = None
    k_list: tuple[int, ...] | None = None
    epsilon_band: float | None = None
    dense_oracle: bool = True
    force_zero_matrix: bool = False


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a JSON experiment file.

    Error messages name the offending field. Relative output paths resolve
    against the directory holding the config file.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"
        ) from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a JSON object")
    return parse_config(raw, base_dir=path.parent)


def _expect_int(raw: dict, name: str, default=None, required: bool = False):
    if name not in raw:
        if required:
            raise ConfigurationError(f"config field '{name}' is required")
        return default
    value = raw[name]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"config field '{name}': expected an integer")
    return value


def _expect_number(value, label: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"config field '{label}': expected a number")
    return float(value)


def _parse_spikes(raw: dict, tau: float) -> SpikeSpec:
    items = raw.get("spikes")
    if not isinstance(items, list) or not items:
        raise ConfigurationError("config field 'spikes': expected a non-empty list")
    parsed = []
    for idx, item in enumerate(items):
        label = f"spikes[{idx}]"
        if not isinstance(item, dict):
            raise ConfigurationError(f"config field '{label}': expected an object")
        unknown = set(item) - {"re", "im", "multiplicity"}
        if unknown:
            raise ConfigurationError(
                f"config field '{label}': unknown key(s) {sorted(unknown)}"
            )
        if "re" not in item:
            raise ConfigurationError(f"config field '{label}.re' is required")
        re = _expect_number(item["re"], f"{label}.re")
        im = _expect_number(item.get("im", 0.0), f"{label}.im")
        mult = item.get("multiplicity", 1)
        if isinstance(mult, bool) or not isinstance(mult, int):
            raise ConfigurationError(
                f"config field '{label}.multiplicity': expected an integer"
            )
        parsed.append((complex(re, im), mult))
    try:
        return SpikeSpec(spikes=tuple(parsed), non_normality_tau=tau)
    except ConfigurationError as exc:
        raise ConfigurationError(f"config field 'spikes': {exc}") from None


def parse_config(raw: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    unknown = set(raw) - _KNOWN_FIELDS
    if unknown:
        raise ConfigurationError(f"unknown config field(s): {sorted(unknown)}")

    n_raw = raw.get("n_list")
    if not isinstance(n_raw, list) or not n_raw:
        raise ConfigurationError("config field 'n_list': expected a non-empty list")
    n_list = []
    for idx, value in enumerate(n_raw):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"config field 'n_list[{idx}]': expected an integer")
        if value < 2:
            raise ConfigurationError(
                f"config field 'n_list[{idx}]': dimension must be at least 2, got {value}"
            )
        n_list.append(value)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigurationError("config field 'n_list': must be strictly ascending")

    has_exponent = "k_exponent" in raw
    has_list = "k_list" in raw
    if has_exponent == has_list:
        raise ConfigurationError(
            "exactly one of 'k_exponent' or 'k_list' must be given"
        )
    k_exponent = None
    k_list = None
    if has_exponent:
        k_exponent = _expect_number(raw["k_exponent"], "k_exponent")
        if not 0.0 < k_exponent < 1.0:
            raise ConfigurationError(
                f"config field 'k_exponent': must lie in (0, 1), got {k_exponent}"
            )
    else:
        items = raw["k_list"]
        if not isinstance(items, list):
            raise ConfigurationError("config field 'k_list': expected a list")
        if len(items) != len(n_list):
            raise ConfigurationError(
                f"config field 'k_list': {len(items)} entries for {len(n_list)} dimensions"
            )
        k_list = []
        for idx, value in enumerate(items):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigurationError(
                    f"config field 'k_list[{idx}]': expected an integer"
                )
            if not 2 <= value <= n_list[idx]:
                raise ConfigurationError(
                    f"config field 'k_list[{idx}]': K must satisfy 2 <= K <= n, "
                    f"got K={value} with n={n_list[idx]}"
                )
            k_list.append(value)

    tau = _expect_number(raw.get("non_normality_tau", 0.0), "non_normality_tau")
    spike_spec = _parse_spikes(raw, tau)
    if n_list[0] < 2 * spike_spec.rank:
        raise ConfigurationError(
            f"config field 'n_list[0]': {n_list[0]} must be at least twice the "
            f"total spike rank {spike_spec.rank}"
        )

    trials = _expect_int(raw, "trials", required=True)
    if trials < 1:
        raise ConfigurationError(f"config field 'trials': must be positive, got {trials}")
    base_seed = _expect_int(raw, "base_seed", default=0)
    if not 0 <= base_seed < 2**64:
        raise ConfigurationError("config field 'base_seed': must fit in 64 bits")

    dist_name = raw.get("distribution", EntryDistribution.COMPLEX_GAUSSIAN.value)
    if not isinstance(dist_name, str):
        raise ConfigurationError("config field 'distribution': expected a string")
    try:
        distribution = EntryDistribution.from_name(dist_name)
    except ConfigurationError as exc:
        raise ConfigurationError(f"config field 'distribution': {exc}") from None

    band_raw = raw.get("epsilon_band", "auto")
    if band_raw == "auto":
        epsilon_band = None
    else:
        epsilon_band = _expect_number(band_raw, "epsilon_band")
        if epsilon_band <= 0:
            raise ConfigurationError(
                f"config field 'epsilon_band': must be positive or 'auto', got {epsilon_band}"
            )

    out_raw = raw.get("output_dir", "results")
    if not isinstance(out_raw, str) or not out_raw:
        raise ConfigurationError("config field 'output_dir': expected a non-empty string")
    output_dir = Path(base_dir) / out_raw

    for flag in ("dense_oracle", "force_zero_matrix"):
        if flag in raw and not isinstance(raw[flag], bool):
            raise ConfigurationError(f"config field '{flag}': expected true or false")

    return ExperimentConfig(
        n_list=tuple(n_list),
        spike_spec=spike_spec,
        trials=trials,
        base_seed=base_seed,
        distribution=distribution,
        output_dir=output_dir,
        k_exponent=k_exponent,
        k_list=None if k_list is None else tuple(k_list),
        epsilon_band=epsilon_band,
        dense_oracle=bool(raw.get("dense_oracle", True)),
        force_zero_matrix=bool(raw.get("force_zero_matrix", False)),
    )
