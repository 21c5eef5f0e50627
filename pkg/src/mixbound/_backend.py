"""Select the compiled kernels when available, else the pure-Python ones."""
import os

BACKEND = "python"

if os.environ.get("MIXBOUND_PURE_PYTHON", "") not in ("", "0"):
    from mixbound._kernels_py import sample_path, svm_sweep, svr_sweep
else:
    try:
        from mixbound._kernels import sample_path, svm_sweep, svr_sweep

        BACKEND = "cython"
    except ImportError:  # pragma: no cover
        from mixbound._kernels_py import sample_path, svm_sweep, svr_sweep

__all__ = ["BACKEND", "sample_path", "svm_sweep", "svr_sweep"]
