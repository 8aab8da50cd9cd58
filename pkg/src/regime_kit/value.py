"""Per-patient contrasts and balancing-weight value estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class OmegaTable:
    pos: np.ndarray
    neg: np.ndarray
    miss_weight: np.ndarray
    flavor: str

    def __post_init__(self):
        if not (np.isfinite(self.pos).all() and np.isfinite(self.neg).all()):
            raise ValueError("contrast table has non-finite entries")

    def __len__(self):
        return len(self.pos)

    def at(self, decisions) -> np.ndarray:
        return np.where(np.asarray(decisions) == 1, self.pos, self.neg)

    def subset(self, idx) -> "OmegaTable":
        return OmegaTable(self.pos[idx], self.neg[idx], self.miss_weight[idx], self.flavor)


def build_omega(A, weights, y, q_pos=None, q_neg=None, miss_weight=None) -> OmegaTable:
    """Omega(a) = w I(A=a) y, minus (w I(A=a) - 1) Q(h, a) when Q is given.

    Rows whose missingness weight is zero carry no outcome; their entries are
    set to zero and never contribute.
    """
    A = np.asarray(A)
    w = np.asarray(weights, float)
    n = len(A)
    mw = np.ones(n) if miss_weight is None else np.asarray(miss_weight, float)
    active = mw > 0
    y = np.where(active, np.asarray(y, float), 0.0)
    cols = {}
    for a, q in ((1, q_pos), (-1, q_neg)):
        wi = w * (A == a)
        om = wi * y
        if q is not None:
            om = om - (wi - 1.0) * np.asarray(q, float)
        cols[a] = np.where(active, om, 0.0)
    flavor = "BW" if q_pos is None else "ABW"
    if flavor == "ABW" and q_neg is None:
        raise ValueError("augmented contrasts need both arm models")
    return OmegaTable(cols[1], cols[-1], mw, flavor)


def estimate_value(omega: OmegaTable, decisions) -> float:
    """mean_i (r_i / pi_i) Omega_i(d(h_i))."""
    return float(np.mean(omega.miss_weight * omega.at(decisions)))
