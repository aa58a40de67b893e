"""Plain-text experiment configuration.

Files are INI documents with one section per config type::

    [emergence]
    n_populations = 20
    n_agents = 6
    master_seed = 7

    [hyper]
    learning_rate = 0.05

Recognised sections are ``emergence``, ``hyper``, ``ablation``,
``transmission`` and ``naive_hyper``; unknown sections or keys are errors.
Omitted keys take their defaults.
"""

import configparser
import dataclasses
import json
import re
from pathlib import Path

from .exceptions import InvalidConfigurationError
from .experiments import AblationConfig, EmergenceConfig, TransmissionConfig
from .game import RewardConstants
from .policy import PpoHyperparams

REWARD_KEYS = ("t_reward", "r_reward", "s_reward", "p_reward")

EMERGENCE_KEYS = {
    "n_populations": int,
    "n_agents": int,
    "max_generations": int,
    "eta": float,
    "convergence_window": int,
    "master_seed": int,
    "opa": float,
    **{k: float for k in REWARD_KEYS},
}
HYPER_KEYS = {
    "learning_rate": float,
    "clip_epsilon": float,
    "discount_gamma": float,
    "episodes_per_generation": int,
    "update_epochs": int,
    "entropy_coefficient": float,
    "value_learning_rate": "optional_float",
    "shared_bias": bool,
}
ABLATION_KEYS = {"opa_grid": "float_list", "populations_per_point": int}
TRANSMISSION_KEYS = {
    "n_source_populations": int,
    "repeats_per_population": int,
    "k_values": "int_list",
}
SECTIONS = {
    "emergence": EMERGENCE_KEYS,
    "hyper": HYPER_KEYS,
    "ablation": ABLATION_KEYS,
    "transmission": TRANSMISSION_KEYS,
    "naive_hyper": HYPER_KEYS,
}
COMMAND_SECTIONS = {
    "emerge": ("emergence", "hyper"),
    "ablate": ("emergence", "hyper", "ablation"),
    "transmit": ("emergence", "hyper", "transmission", "naive_hyper"),
}


class ConfigError(InvalidConfigurationError):
    """Configuration problem, located at ``path:line`` when possible."""


def _locate(lines, section, key=None):
    current = None
    for no, raw in enumerate(lines, 1):
        line = raw.strip()
        m = re.match(r"^\[(.+)\]$", line)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section:
            k = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
            if k == key:
                return no
    return None


def _convert(kind, text):
    text = text.strip()
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is bool:
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "optional_float":
        return None if text.lower() in ("", "none") else float(text)
    if kind == "float_list":
        return tuple(float(x) for x in text.split(",") if x.strip())
    if kind == "int_list":
        return tuple(int(x) for x in text.split(",") if x.strip())
    raise AssertionError(kind)


def parse_config_text(text: str, command: str, source: str = "<config>") -> dict:
    """Parse and type-convert a config document; returns ``{section: {key: value}}``."""
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f"{source}:{line}" if line else source
        raise ConfigError(f"{where}: {exc.message if hasattr(exc, 'message') else exc}") from None
    allowed = COMMAND_SECTIONS[command]
    out = {}
    for section in parser.sections():
        if section not in allowed:
            raise ConfigError(
                f"{source}:{_locate(lines, section)}: unknown section [{section}] for '{command}' "
                f"(allowed: {', '.join(allowed)})",
                section,
            )
        known = SECTIONS[section]
        values = {}
        for key, raw in parser.items(section):
            line = _locate(lines, section, key)
            if key not in known:
                raise ConfigError(f"{source}:{line}: unknown key '{key}' in [{section}]", key)
            try:
                values[key] = _convert(known[key], raw)
            except ValueError as exc:
                raise ConfigError(f"{source}:{line}: [{section}] {key}: {exc}", key) from None
        out[section] = values
    return out


def _hyper(values: dict) -> PpoHyperparams:
    return PpoHyperparams(**values)


def build_configs(sections: dict, command: str, seed_override=None, lines=None, source="<config>"):
    """Construct the typed config object for ``command``; errors name the offending field."""

    def fail(section, exc):
        field = getattr(exc, "field", None)
        line = _locate(lines or [], section, field) if field else None
        where = f"{source}:{line}" if line else source
        key = f" {field}:" if field else ""
        raise ConfigError(f"{where}: [{section}]{key} {exc}", field) from None

    em = dict(sections.get("emergence", {}))
    if seed_override is not None:
        em["master_seed"] = seed_override
    rewards_kw = {k: em.pop(k) for k in REWARD_KEYS if k in em}
    try:
        hyper = _hyper(sections.get("hyper", {}))
    except InvalidConfigurationError as exc:
        fail("hyper", exc)
    try:
        rewards = dataclasses.replace(RewardConstants(), **rewards_kw)
        base = EmergenceConfig(hyper=hyper, rewards=rewards, **em)
    except InvalidConfigurationError as exc:
        fail("emergence", exc)
    if command == "emerge":
        return base
    if command == "ablate":
        try:
            return AblationConfig(base=base, **sections.get("ablation", {}))
        except InvalidConfigurationError as exc:
            fail("ablation", exc)
    try:
        naive = _hyper(sections.get("naive_hyper", {}))
    except InvalidConfigurationError as exc:
        fail("naive_hyper", exc)
    try:
        return TransmissionConfig(base=base, naive_hyper=naive, **sections.get("transmission", {}))
    except InvalidConfigurationError as exc:
        fail("transmission", exc)


def load_config(path, command: str, seed_override=None):
    """Read a config file (or the ``config_text`` of a run manifest) for ``command``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            manifest = json.loads(text)
            text = manifest["config_text"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise ConfigError(f"{path}: not a run manifest with a config_text field") from None
        if manifest.get("command") != command:
            raise ConfigError(f"{path}: manifest belongs to '{manifest.get('command')}', not '{command}'")
    sections = parse_config_text(text, command, source=str(path))
    return build_configs(sections, command, seed_override, text.splitlines(), str(path))


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, (tuple, list)):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _hyper_items(h: PpoHyperparams):
    return {f.name: getattr(h, f.name) for f in dataclasses.fields(h)}


def resolved_sections(cfg) -> dict:
    """Every config value, defaults included, grouped by section."""
    if isinstance(cfg, EmergenceConfig):
        base, extra = cfg, {}
    elif isinstance(cfg, AblationConfig):
        base = cfg.base
        extra = {"ablation": {"opa_grid": cfg.opa_grid, "populations_per_point": cfg.populations_per_point}}
    else:
        base = cfg.base
        extra = {
            "transmission": {
                "n_source_populations": cfg.n_source_populations,
                "repeats_per_population": cfg.repeats_per_population,
                "k_values": cfg.k_values,
            },
            "naive_hyper": _hyper_items(cfg.naive_hyper),
        }
    em = {k: getattr(base, k) for k in EMERGENCE_KEYS if k not in REWARD_KEYS}
    em.update({k: getattr(base.rewards, k) for k in REWARD_KEYS})
    return {"emergence": em, "hyper": _hyper_items(base.hyper), **extra}


def render_config(cfg) -> str:
    parts = []
    for section, values in resolved_sections(cfg).items():
        parts.append(f"[{section}]")
        parts.extend(f"{k} = {_fmt(v)}" for k, v in values.items())
        parts.append("")
    return "\n".join(parts)
