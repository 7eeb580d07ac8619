"""Numba/numpy backend selection for the hot kernels.

The environment variable ``TAGSONG_BACKEND`` picks the implementation of the
compiled kernels:

* ``auto`` (default) -- use numba when it imports, numpy otherwise
* ``numba``          -- require numba, fail loudly if it is missing
* ``numpy``          -- force the pure-numpy fallback (numba never imported)

``set_backend`` overrides the choice at runtime; the benchmark and the test
suite use it to exercise both paths.
"""

import os

_VALID = ("auto", "numba", "numpy")

_requested = os.environ.get("TAGSONG_BACKEND", "auto").lower()
_resolved: str | None = None


def set_backend(name: str) -> None:
    """Force the kernel backend; ``auto`` re-enables detection."""
    global _requested, _resolved
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    _requested = name
    _resolved = None


def active_backend() -> str:
    """Resolve and return the backend in use: ``'numba'`` or ``'numpy'``."""
    global _resolved
    if _resolved is None:
        if _requested == "numpy":
            _resolved = "numpy"
        elif _requested == "numba":
            import numba  # noqa: F401  (fail here if unavailable)

            _resolved = "numba"
        else:
            try:
                import numba  # noqa: F401

                _resolved = "numba"
            except ImportError:
                _resolved = "numpy"
    return _resolved
