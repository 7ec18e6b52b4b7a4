"""Near/far-field multiuser hybrid beamforming simulator (C++ core)."""

try:
    from ._xlbeam import *  # noqa: F401,F403
    from ._xlbeam import __version__  # noqa: F401
except ImportError:  # module built outside the package (plain CMake builds)
    from _xlbeam import *  # noqa: F401,F403
    from _xlbeam import __version__  # noqa: F401
