"""Quintic smoothstep profiles shared by the cutoffs and the bump initial data."""
from __future__ import annotations

import numpy as np


def smoothstep5(s) -> np.ndarray:
    """``10 s^3 - 15 s^4 + 6 s^5`` clamped to ``[0, 1]``; C^2 at both ends."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def plateau(s) -> np.ndarray:
    """Equal to 1 on ``[0, 1/2]``, 0 on ``[1, inf)``, quintic in between."""
    return 1.0 - smoothstep5(2.0 * np.asarray(s, dtype=float) - 1.0)
