"""Offline figure rendering for propost experiment artifacts.

Reads only the documented CSV/JSON artifact files; all numerics come from the
primary package's outputs.
"""

from .figures import FIGURE_KINDS, SchemaError, render

__version__ = "0.1.0"
