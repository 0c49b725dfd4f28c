"""Run configuration: defaults, INI file, flag overrides, content hash.

A run is fully described by one key/value file with sections. Every
hyperparameter lives here with its default; command-line flags of the
same name override individual keys, and ``--seed`` overrides the seed of
every section at once. The resolved configuration hashes to a hex digest
that output artifacts embed, so downstream commands can reject inputs
produced under different settings. Data file paths are deliberately not
part of the hash; input files are checksummed by content in the manifest
instead.
"""
from __future__ import annotations

import configparser
import hashlib

from .errors import ConfigError

_MODES = ("attention", "avg", "min", "max", "ap")
_METRICS = ("", "euclidean", "cosine")
_ACTIVATIONS = ("tanh", "identity")


def _parse_bool(raw):
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw):
    raw = raw.strip()
    if not raw:
        return None
    return [int(x) for x in raw.split(",") if x.strip()]


def _parse_opt_int(raw):
    raw = raw.strip()
    return int(raw) if raw else None


def _parse_str_list(raw):
    return [x.strip() for x in raw.split(",") if x.strip()]


def _choice(options):
    def parse(raw):
        value = raw.strip()
        if value not in options:
            raise ValueError(f"must be one of {options}, got {raw!r}")
        return value
    return parse


# section -> key -> (parser, default-as-string)
SCHEMA = {
    "pairs": {
        "eta": (float, "0.3"),
        "seed": (int, "42"),
        "max_pos": (_parse_opt_int, ""),
        "allow_replacement": (_parse_bool, "false"),
    },
    "composition": {
        "mode": (_choice(_MODES), "attention"),
    },
    "network": {
        "output_dim": (int, "50"),
        "layers": (int, "3"),
        "hidden_dims": (_parse_int_list, ""),
        "activation": (_choice(_ACTIVATIONS), "tanh"),
        "dropout_rate": (float, "0.5"),
    },
    "training": {
        "margin_t": (float, "3.0"),
        "beta": (float, "2.0"),
        "lambda": (float, "0.002"),
        "learning_rate": (float, "0.03"),
        "epochs": (int, "30"),
        "seed": (int, "42"),
        "finetune_attention": (_parse_bool, "true"),
    },
    "clustering": {
        "k": (_parse_opt_int, ""),
        "metric": (_choice(_METRICS), ""),
        "n_init": (int, "10"),
        "max_iter": (int, "100"),
        "seed": (int, "42"),
    },
    "evaluation": {
        "runs": (int, "10"),
        "seed": (int, "42"),
        "methods": (_parse_str_list, "metric,avg,ap"),
    },
    "split": {
        "train_ratio": (float, "0.3"),
        "test_ratio": (float, "0.5"),
        "dev_ratio": (float, "0.2"),
        "seed": (int, "42"),
    },
    "ablation": {
        "combos": (str, "ap:0:raw,attention:1:trained,attention:3:trained"),
    },
}

# flag name -> (section, key); the special flag "seed" fans out to every
# section that has a seed.
FLAG_MAP = {
    "eta": ("pairs", "eta"),
    "max_pos": ("pairs", "max_pos"),
    "mode": ("composition", "mode"),
    "output_dim": ("network", "output_dim"),
    "layers": ("network", "layers"),
    "hidden_dims": ("network", "hidden_dims"),
    "activation": ("network", "activation"),
    "dropout_rate": ("network", "dropout_rate"),
    "margin_t": ("training", "margin_t"),
    "beta": ("training", "beta"),
    "lambda": ("training", "lambda"),
    "learning_rate": ("training", "learning_rate"),
    "epochs": ("training", "epochs"),
    "k": ("clustering", "k"),
    "metric": ("clustering", "metric"),
    "n_init": ("clustering", "n_init"),
    "max_iter": ("clustering", "max_iter"),
    "runs": ("evaluation", "runs"),
    "methods": ("evaluation", "methods"),
    "combos": ("ablation", "combos"),
}

SEED_KEYS = [(section, "seed") for section in SCHEMA if "seed" in SCHEMA[section]]


def resolve(config_path=None, overrides=None):
    """Merge defaults, an optional INI file and flag overrides.

    ``overrides`` maps flag names (see FLAG_MAP, plus "seed") to raw
    string values. Returns a nested dict of typed values with a "_raw"
    entry holding the canonical string form used for hashing. Unknown
    sections or keys are configuration errors.
    """
    raw = {section: dict((k, v[1]) for k, v in keys.items())
           for section, keys in SCHEMA.items()}

    if config_path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{config_path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{config_path}: unknown section [{section}]")
            for key, value in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{config_path}: unknown key {key!r} in [{section}]")
                raw[section][key] = value

    if overrides:
        for flag, value in overrides.items():
            if value is None:
                continue
            if flag == "seed":
                for section, key in SEED_KEYS:
                    raw[section][key] = str(value)
                continue
            if flag not in FLAG_MAP:
                raise ConfigError(f"unknown override {flag!r}")
            section, key = FLAG_MAP[flag]
            raw[section][key] = str(value)

    resolved = {}
    for section, keys in SCHEMA.items():
        resolved[section] = {}
        for key, (parse, _default) in keys.items():
            value = raw[section][key]
            try:
                resolved[section][key] = parse(value)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    resolved["_raw"] = raw
    return resolved


def config_hash(resolved):
    """Hex digest of the canonical key=value lines of a resolved config."""
    lines = []
    for section in sorted(SCHEMA):
        for key in sorted(SCHEMA[section]):
            lines.append(f"{section}.{key}={resolved['_raw'][section][key].strip()}")
    digest = hashlib.sha256("\n".join(lines).encode("utf-8"))
    return digest.hexdigest()


def train_config_from(resolved):
    """Build a TrainConfig from the training/network sections."""
    from .network import TrainConfig

    t = resolved["training"]
    return TrainConfig(
        margin_t=t["margin_t"],
        beta=t["beta"],
        reg_lambda=t["lambda"],
        learning_rate=t["learning_rate"],
        epochs=t["epochs"],
        seed=t["seed"],
        finetune_attention=t["finetune_attention"],
        dropout_rate=resolved["network"]["dropout_rate"],
    )
