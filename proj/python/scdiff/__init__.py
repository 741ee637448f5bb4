"""Diffusion models with softly constrained denoisers."""

try:
    from ._core import *  # noqa: F401,F403
    from ._core import __version__  # noqa: F401
except ImportError:
    # build-tree layout: the extension sits next to the package directory
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
