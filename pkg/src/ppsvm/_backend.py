"""Select the compiled core or the numpy fallback at import time.

Set ``PPSVM_BACKEND=python`` to force the fallback even when the extension
is available.
"""
import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

_forced = os.environ.get("PPSVM_BACKEND", "").strip().lower()

if _forced == "python":
    impl = _fallback
    NAME = "python"
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
        NAME = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise
        log.debug("compiled core unavailable, using numpy fallback")
        impl = _fallback
        NAME = "python"

smo_solve = impl.smo_solve
mgs_orthonormalize = impl.mgs_orthonormalize
sq_dists_compensated = impl.sq_dists_compensated
