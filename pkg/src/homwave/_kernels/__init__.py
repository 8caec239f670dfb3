"""Kernel backend selection: compiled extension if importable, numpy fallback
otherwise. HOMWAVE_FORCE_PY_KERNELS=1 forces the fallback (used by the
benchmark and backend-equivalence tests)."""
import os

if os.environ.get("HOMWAVE_FORCE_PY_KERNELS"):
    from . import _leapfrog_py as _impl

    BACKEND = "python"
else:
    try:
        from . import _leapfrog_c as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _leapfrog_py as _impl

        BACKEND = "python"

lap1d = _impl.lap1d
leap1d = _impl.leap1d
lap2d = _impl.lap2d
leap2d = _impl.leap2d


def backend() -> str:
    """Name of the active kernel backend ('compiled' or 'python')."""
    return BACKEND
