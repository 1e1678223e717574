"""Kernel lane selection: compiled extension when available, pure Python otherwise.

The two lanes implement identical draw disciplines and produce bitwise-equal
paths; the compiled one is simply faster. Set ``CTMCPATH_PURE=1`` to force
the pure lane, or pass ``lane="pure"``/``lane="compiled"`` to any sampler.
"""

from __future__ import annotations

import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built; pure lane only
    _ckernels = None

_LANES = {"pure": _pykernels}
if _ckernels is not None:
    _LANES["compiled"] = _ckernels

if os.environ.get("CTMCPATH_PURE", "").strip() not in ("", "0"):
    DEFAULT_LANE = "pure"
else:
    DEFAULT_LANE = "compiled" if _ckernels is not None else "pure"


def available_lanes() -> tuple[str, ...]:
    return tuple(sorted(_LANES))


def have_compiled() -> bool:
    return _ckernels is not None


def get_lane(name: str | None = None):
    """Resolve a lane name (None means the default) to its kernel module."""
    if name is None:
        name = DEFAULT_LANE
    try:
        return _LANES[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel lane {name!r}; available: {available_lanes()}"
        ) from None
