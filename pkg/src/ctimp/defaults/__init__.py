"""Bundled starter configuration: decoders, native rules, policies, threats."""

from importlib import resources


def load_default(name: str) -> bytes:
    """Return a bundled config file (e.g. "decoders.toml") as bytes."""
    return resources.files(__package__).joinpath(name).read_bytes()
