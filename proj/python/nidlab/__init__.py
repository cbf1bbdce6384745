"""Factored grid-world transition models.

The compiled extension lives inside the installed package; during in-tree
development the build directory provides it as a top-level module instead.
"""

try:
    from ._nidlab import *  # noqa: F401,F403
    from ._nidlab import __doc__  # noqa: F401
except ImportError:  # pragma: no cover - in-tree layout
    from _nidlab import *  # noqa: F401,F403
    from _nidlab import __doc__  # noqa: F401
