"""Selects the compiled deposit kernel, falling back to NumPy."""

try:
    from . import _kernels as kernels  # type: ignore[attr-defined]

    KERNEL_BACKEND = kernels.BACKEND_NAME
except ImportError:  # extension not built
    from . import _kernels_np as kernels  # type: ignore[no-redef]

    KERNEL_BACKEND = kernels.BACKEND_NAME

deposit_trains = kernels.deposit_trains
