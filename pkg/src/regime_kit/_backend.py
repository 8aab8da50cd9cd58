"""Select the compiled kernels when available, else the numpy fallback.

Set ``REGIME_KIT_PURE=1`` to force the fallback (used by the benchmark and
by the backend-equivalence tests).
"""

import os

from . import _core_py

BACKEND = "python"
core = _core_py

if os.environ.get("REGIME_KIT_PURE") != "1":
    try:
        from . import _core as core  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        core = _core_py

sobolev_gram = core.sobolev_gram
gaussian_smoother = core.gaussian_smoother
secular_top_root = core.secular_top_root
surrogate_terms = core.surrogate_terms
