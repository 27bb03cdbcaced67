"""Vehicle-to-building charging laboratory."""

try:
    from ._core import *  # noqa: F401,F403  installed layout
    from ._core import __version__  # noqa: F401
except ImportError:  # in-tree runs put the extension on sys.path instead
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
