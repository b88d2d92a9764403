"""Scenario files: flat `key = value` lines, full defaults, typo-proof.

Parsing never stops at the first problem; every bad line is reported
with its line number so a scenario file can be fixed in one pass.
Unknown keys and duplicates are errors, not warnings, because a silent
typo in a parameter name would quietly run the wrong experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class ScenarioConfig:
    # run selection
    overlay: str = "tree"
    seed: int = 0
    horizon_s: float = 3600.0
    # stream shape
    stream_kbps: float = 500.0
    chunk_mb: float = 2.0
    show_seconds: float = 1800.0
    # audience behavior
    arrival_rate: float = 0.05
    zipf_exponent: float = 1.0
    early_quit_fraction: float = 0.5
    early_quit_window: float = 600.0
    show_end_leave_prob: float = 0.8
    vcr_rate: float = 1 / 900
    live_join_prob: float = 0.5
    pause_mean_seconds: float = 120.0
    show_start_burst: float = 3.0
    abrupt_leave_prob: float = 0.2
    popularity_session_corr: float = 0.0
    # transport and peer resources
    hop_latency_s: float = 0.05
    upload_kbps: float = 2000.0
    upload_slots: int = 4
    upload_capacity: int = 3
    storage_chunks: int = 100_000
    audit_period_s: float = 300.0
    sample_period_s: float = 600.0
    # turntable layout (tree and mesh)
    m: int = 12
    r: int = 2
    k_rep: int = 3
    k_min: int = 2
    producer_archive: bool = True
    # tree variant
    fanout: int = 3
    summary_mode: str = "exact"
    bloom_bits: int = 1024
    bloom_hashes: int = 3
    # mesh variant
    colors: int = 3
    gossip_period: float = 10.0
    max_degree: int = 8
    request_ttl: int = 16
    # interval overlay
    k: int = 2
    default_cap: int = 4
    horizon_T: int = 600
    dedicated_server: bool = False
    rebalance_period_s: float = 600.0


_OVERLAYS = ("tree", "mesh", "interval")
_SUMMARY_MODES = ("exact", "bloom")

# key -> (lower bound, inclusive?) for numeric fields; None = no bound
_RANGES: dict[str, tuple[float, bool]] = {
    "seed": (0, True),
    "horizon_s": (0, True),
    "stream_kbps": (0, False),
    "chunk_mb": (0, False),
    "show_seconds": (0, False),
    "arrival_rate": (0, True),
    "zipf_exponent": (0, False),
    "early_quit_window": (0, True),
    "vcr_rate": (0, True),
    "pause_mean_seconds": (0, True),
    "show_start_burst": (0, True),
    "popularity_session_corr": (0, True),
    "hop_latency_s": (0, True),
    "upload_kbps": (0, False),
    "upload_slots": (1, True),
    "upload_capacity": (1, True),
    "storage_chunks": (1, True),
    "audit_period_s": (0, False),
    "sample_period_s": (0, False),
    "m": (1, True),
    "r": (1, True),
    "k_rep": (1, True),
    "k_min": (1, True),
    "fanout": (1, True),
    "bloom_bits": (8, True),
    "bloom_hashes": (1, True),
    "colors": (1, True),
    "gossip_period": (0, False),
    "max_degree": (1, True),
    "request_ttl": (1, True),
    "k": (1, True),
    "default_cap": (1, True),
    "horizon_T": (1, True),
    "rebalance_period_s": (0, False),
}

_PROBABILITIES = (
    "early_quit_fraction",
    "show_end_leave_prob",
    "live_join_prob",
    "abrupt_leave_prob",
)


_TYPES: dict[str, type] = {
    f.name: type(getattr(ScenarioConfig(), f.name)) for f in fields(ScenarioConfig)
}


def _convert(key: str, raw: str, line_no: int, errors: list[str]):
    target = _TYPES[key]
    if target is bool:
        if raw == "true":
            return True
        if raw == "false":
            return False
        errors.append(f"line {line_no}: {key} must be 'true' or 'false', got {raw!r}")
        return None
    if target is int:
        try:
            return int(raw)
        except ValueError:
            errors.append(f"line {line_no}: {key} must be an integer, got {raw!r}")
            return None
    if target is float:
        try:
            return float(raw)
        except ValueError:
            errors.append(f"line {line_no}: {key} must be a number, got {raw!r}")
            return None
    return raw


def _check_range(key: str, value, line_no: int, errors: list[str]) -> None:
    if key in _PROBABILITIES:
        if not 0 <= value <= 1:
            errors.append(
                f"line {line_no}: {key} must be within [0, 1], got {value}")
        return
    bound = _RANGES.get(key)
    if bound is None:
        return
    low, inclusive = bound
    ok = value >= low if inclusive else value > low
    if not ok:
        op = "at least" if inclusive else "greater than"
        errors.append(f"line {line_no}: {key} must be {op} {low}, got {value}")


def parse_config(text: str) -> tuple[ScenarioConfig | None, list[str]]:
    """Parse one scenario file; returns (config, errors).

    The config is None whenever errors is non-empty. All problems are
    collected: unknown keys, duplicates (both lines named), bad types,
    and out-of-range values.
    """
    errors: list[str] = []
    seen: dict[str, int] = {}
    values: dict[str, object] = {}

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {line_no}: expected 'key = value', got {raw_line!r}")
            continue
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _TYPES:
            errors.append(f"line {line_no}: unknown key {key!r}")
            continue
        if key in seen:
            errors.append(
                f"line {line_no}: duplicate key {key!r} (first set on line {seen[key]})")
            continue
        seen[key] = line_no
        value = _convert(key, raw_value, line_no, errors)
        if value is None and _TYPES[key] is not bool:
            continue
        if value is None:
            continue
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            _check_range(key, value, line_no, errors)
        values[key] = value

    if "overlay" in values and values["overlay"] not in _OVERLAYS:
        errors.append(
            f"line {seen['overlay']}: overlay must be one of "
            f"{', '.join(_OVERLAYS)}, got {values['overlay']!r}")
    if "summary_mode" in values and values["summary_mode"] not in _SUMMARY_MODES:
        errors.append(
            f"line {seen['summary_mode']}: summary_mode must be one of "
            f"{', '.join(_SUMMARY_MODES)}, got {values['summary_mode']!r}")

    if errors:
        return None, errors

    config = ScenarioConfig(**values)
    cross = validate_config(config)
    if cross:
        return None, cross
    return config, []


def validate_config(config: ScenarioConfig) -> list[str]:
    """Cross-field checks that need the whole config."""
    errors = []
    if config.k_min > config.k_rep:
        errors.append(
            f"k_min ({config.k_min}) cannot exceed k_rep ({config.k_rep})")
    if config.r < 1 or config.r > 64:
        errors.append(f"r must be within [1, 64], got {config.r}")
    if config.overlay not in _OVERLAYS:
        errors.append(
            f"overlay must be one of {', '.join(_OVERLAYS)}, got {config.overlay!r}")
    if config.summary_mode not in _SUMMARY_MODES:
        errors.append(
            f"summary_mode must be one of {', '.join(_SUMMARY_MODES)}, "
            f"got {config.summary_mode!r}")
    return errors


def render_config(config: ScenarioConfig) -> str:
    """Serialize so that parse_config(render_config(c)) round-trips."""
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
