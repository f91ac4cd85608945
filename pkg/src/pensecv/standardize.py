"""Robust standardization of a design matrix and response, with exact back-transformation."""

import warnings
from dataclasses import dataclass

import numpy as np

MAD_CONSISTENCY = 1.482602218505602


@dataclass
class Standardization:
    """Column-wise ``(x - median) / (1.4826 MAD)`` and a median-centered response.

    Constant predictors are dropped (``kept`` lists the retained columns).
    With ``enabled=False`` the transformation is the identity on the kept
    columns.
    """

    enabled: bool
    kept: np.ndarray
    x_center: np.ndarray
    x_scale: np.ndarray
    y_center: float

    @classmethod
    def fit(cls, x, y, enabled=True, names=()):
        x = np.asarray(x, dtype=float)
        constant = np.ptp(x, axis=0) == 0
        for j in np.flatnonzero(constant):
            name = names[j] if j < len(names) else f"column {j + 1}"
            warnings.warn(f"dropping constant predictor {name}", stacklevel=2)
        kept = np.flatnonzero(~constant)
        if kept.size == 0:
            raise ValueError("every predictor is constant")
        if not enabled:
            return cls(False, kept, np.zeros(kept.size), np.ones(kept.size), 0.0)
        xk = x[:, kept]
        center = np.median(xk, axis=0)
        spread = MAD_CONSISTENCY * np.median(np.abs(xk - center), axis=0)
        # MAD is 0 when over half a column shares one value; fall back to the SD
        zero = spread == 0
        spread[zero] = np.std(xk[:, zero], axis=0, ddof=1)
        return cls(True, kept, center, spread, float(np.median(y)))

    def transform(self, x, y=None):
        xs = (x[:, self.kept] - self.x_center) / self.x_scale
        return xs if y is None else (xs, y - self.y_center)

    def back_transform(self, intercept, beta, p):
        """Coefficients on the original scale; dropped predictors get 0."""
        b = beta / self.x_scale
        full = np.zeros(p)
        full[self.kept] = b
        return float(intercept + self.y_center - self.x_center @ b), full

    def to_json(self):
        return {"enabled": self.enabled, "kept_columns": self.kept.tolist(),
                "x_center": self.x_center.tolist(), "x_scale": self.x_scale.tolist(),
                "y_center": self.y_center}
