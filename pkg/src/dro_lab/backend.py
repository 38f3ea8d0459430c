"""Backend selection: compiled extension when available, numpy otherwise.

Set DRO_LAB_BACKEND=python to force the numpy fallback (used by the
benchmark and by tests that compare the two implementations).
"""

import os

from . import _numpykernels

BACKEND = "python"
_impl = _numpykernels

if os.environ.get("DRO_LAB_BACKEND", "").lower() not in ("python", "numpy"):
    try:
        from . import _fastkernels as _compiled
    except ImportError:
        pass
    else:
        BACKEND = "compiled"
        _impl = _compiled


def gaussian_gram(X, Y, inv_sigma_sq):
    import numpy as np

    X = np.ascontiguousarray(X, dtype=float)
    Y = np.ascontiguousarray(Y, dtype=float)
    return _impl.gaussian_gram(X, Y, inv_sigma_sq)


def pairwise_dists_condensed(X):
    import numpy as np

    X = np.ascontiguousarray(X, dtype=float)
    return _impl.pairwise_dists_condensed(X)
