"""Configuration, file formats and the command-line workflow."""

from .config import DesignConfig, VerifyParams, load_config, parse_config
from .gridfile import read_grid, write_grid

__all__ = ["DesignConfig", "VerifyParams", "load_config", "parse_config", "read_grid", "write_grid"]
