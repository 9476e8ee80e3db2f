"""Semi-supervised patient trajectory clustering with survival outcomes."""

try:
    from ._trajcluster import *  # noqa: F401,F403  (installed package layout)
except ImportError:
    from _trajcluster import *  # noqa: F401,F403  (in-tree build layout)
