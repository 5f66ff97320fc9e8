"""Static paper-style figures rendered from hilab CSV outputs.

This package talks to the experiment lab only through its CSV files; it
never imports the lab itself.
"""

__version__ = "0.1.0"
