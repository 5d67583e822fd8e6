"""Backend selection for the per-path theta kernel.

The compiled extension is used when it imports; ``TCLEVY_BACKEND=python``
forces the pure-Python fallback.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

_BACKENDS = {"python": _pykernel}
if _ckernel is not None:
    _BACKENDS["compiled"] = _ckernel

if os.environ.get("TCLEVY_BACKEND", "").lower() == "python" or _ckernel is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"


def available() -> tuple:
    return tuple(_BACKENDS)


def get(name: str | None = None):
    """Kernel module by name; ``None`` or ``"auto"`` means the active default."""
    if name in (None, "auto"):
        name = BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {available()}") from None


def pack_envelopes(envs) -> dict:
    """Flatten three envelopes into the array arguments the kernels take."""
    k = max(1, max(len(e.amps) for e in envs))
    amps = np.zeros((3, k))
    freqs = np.zeros((3, k))
    for i, e in enumerate(envs):
        amps[i, : len(e.amps)] = e.amps
        freqs[i, : len(e.freqs)] = e.freqs
    return {
        "env_level": np.array([e.level for e in envs], dtype=float),
        "env_scale": np.array([e.scale for e in envs], dtype=float),
        "env_eta": np.array([e.eta for e in envs], dtype=float),
        "env_amps": amps,
        "env_freqs": freqs,
        "env_nterms": np.array([len(e.amps) for e in envs], dtype=np.int64),
    }
