import json
import os

from sketchlab.utils.utils import InvalidArgument


def parse_value(value):
    """Coerces a config string to bool, int, float or a comma separated list of those."""
    value = value.strip()
    lowered = value.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if lowered in ("none", "null"):
        return None
    if "," in value:
        return [parse_value(x) for x in value.split(",") if x.strip()]
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def parse_experiment_config(path):
    """Parses an experiment configuration file and returns its blocks in order"""
    with open(path, 'r') as file:
        lines = file.read().split('\n')
    lines = [x.strip() for x in lines]
    lines = [x for x in lines if x and not x.startswith('#')]
    blocks = []
    for line in lines:
        if line.startswith('['):  # This marks the start of a new block
            if not line.endswith(']'):
                raise InvalidArgument(f"{path}: malformed section header {line!r}")
            blocks.append({})
            blocks[-1]['type'] = line[1:-1].strip()
        else:
            if not blocks:
                raise InvalidArgument(f"{path}: key outside of any [section]: {line!r}")
            if '=' not in line:
                raise InvalidArgument(f"{path}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            blocks[-1][key.strip()] = parse_value(value)

    return blocks


def load_config(path):
    """Reads a ``.cfg`` block file or a ``.json`` document into {section: {key: value}}"""
    if not os.path.exists(path):
        raise InvalidArgument(f"config file not found: {path}")
    if path.endswith('.json'):
        with open(path, 'r') as fp:
            try:
                config = json.load(fp)
            except json.JSONDecodeError as exc:
                raise InvalidArgument(f"{path}: invalid JSON ({exc})")
        if not isinstance(config, dict):
            raise InvalidArgument(f"{path}: top level must be an object")
        return config
    config = {}
    for block in parse_experiment_config(path):
        section = block.pop('type')
        config.setdefault(section, {}).update(block)
    return config
