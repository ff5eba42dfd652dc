"""Relative import of all settings."""
from .settings_importer import *  # NOQA
