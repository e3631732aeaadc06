"""Kernel backend selection.

Prefers the compiled extension (`routekd._kernels`) and falls back to the
pure-NumPy module when it is unavailable. Set ROUTEKD_BACKEND=python to
force the fallback, or ROUTEKD_BACKEND=cython to fail loudly if the
extension is missing.
"""

import os

from routekd import _kernels_py

_forced = os.environ.get("ROUTEKD_BACKEND", "").strip().lower()

if _forced == "python":
    _impl = _kernels_py
elif _forced == "cython":
    from routekd import _kernels as _impl  # noqa: F401  (ImportError is the point)
else:
    try:
        from routekd import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.NAME

dense_forward = _impl.dense_forward
dense_backward = _impl.dense_backward
relu_forward = _impl.relu_forward
relu_backward = _impl.relu_backward
batchnorm_forward_train = _impl.batchnorm_forward_train
batchnorm_backward = _impl.batchnorm_backward
softmax_rows = _impl.softmax_rows
logsumexp_rows = _impl.logsumexp_rows
gmm_log_components = _impl.gmm_log_components
