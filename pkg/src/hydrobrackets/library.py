"""Built-in example systems, shipped as JSON configs inside the package."""

from __future__ import annotations

import importlib.resources

from .config import LoadedConfig, load_config


def names():
    """Sorted names of the built-in example configs."""
    root = importlib.resources.files(__package__) / "builtin"
    return sorted(p.name[:-len(".json")] for p in root.iterdir()
                  if p.name.endswith(".json"))


def path(name: str):
    """Filesystem path of one built-in config."""
    p = importlib.resources.files(__package__) / "builtin" / f"{name}.json"
    if not p.is_file():
        known = ", ".join(names())
        raise KeyError(f"no built-in example {name!r} (available: {known})")
    return p


def load(name: str) -> LoadedConfig:
    return load_config(path(name))
