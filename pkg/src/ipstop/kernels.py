"""Kernel backend selection: compiled extension if present, numpy otherwise."""

try:
    from . import _kernels as _impl

    HAVE_COMPILED_KERNELS = True
except ImportError:  # pragma: no cover - depends on build environment
    from . import _kernels_py as _impl

    HAVE_COMPILED_KERNELS = False

step_to_boundary = _impl.step_to_boundary
max_abs_ratio = _impl.max_abs_ratio
stepped_dot = _impl.stepped_dot
axpby_norm = _impl.axpby_norm
axpbypcz_norm = _impl.axpbypcz_norm
reconstruct_ne = _impl.reconstruct_ne
