"""Select the compiled kernel core, falling back to numpy.

Set ``HALFLINE_LQ_BACKEND=python`` to force the fallback.
"""

import os

from . import _fallback

fallback = _fallback

if os.environ.get("HALFLINE_LQ_BACKEND", "").lower() == "python":
    core = _fallback
    NAME = "python"
else:
    try:
        from . import _core as core  # type: ignore[attr-defined]

        NAME = "compiled"
    except ImportError:
        core = _fallback
        NAME = "python"

philox4x32 = core.philox4x32
philox_uniforms = core.philox_uniforms
heat_kernel_matrix = core.heat_kernel_matrix
