"""Cohorts, stage-wise complete-case samples and covariate rescaling.

A cohort is stored column-wise: one ``(n, p_t)`` covariate array per stage
with NaN marking missing entries, plus ``(n, T)`` arrays of treatments and
outcomes.  :class:`Trajectory` gives the per-patient view.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Structurally invalid cohort data."""


COMBINERS = {
    "sum": lambda Y: Y.sum(axis=1),
    "last": lambda Y: Y[:, -1],
    "max": lambda Y: Y.max(axis=1),
}


@dataclass(frozen=True)
class Trajectory:
    """One patient's observed path through ``T`` stages."""

    id: int
    covariates: tuple[np.ndarray, ...]
    treatments: tuple[int, ...]
    outcomes: tuple[float, ...]

    @property
    def missing(self) -> tuple[np.ndarray, ...]:
        return tuple(np.isnan(x) for x in self.covariates)

    @property
    def complete(self) -> tuple[int, ...]:
        """R_t for each stage: 1 iff no entry of X_t is missing."""
        return tuple(int(not np.isnan(x).any()) for x in self.covariates)


@dataclass
class CohortDataset:
    X: list[np.ndarray]
    A: np.ndarray
    Y: np.ndarray
    combiner: str = "sum"
    ids: np.ndarray | None = None
    covariate_names: list[list[str]] | None = None

    def __post_init__(self):
        self.A = np.asarray(self.A)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.A.ndim == 1:
            self.A = self.A[:, None]
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        self.X = [np.atleast_2d(np.asarray(x, dtype=float)) for x in self.X]
        n, T = self.A.shape
        if self.Y.shape != (n, T) or len(self.X) != T:
            raise DataError(
                f"inconsistent stage layout: A {self.A.shape}, Y {self.Y.shape}, {len(self.X)} covariate blocks"
            )
        for t, x in enumerate(self.X, start=1):
            if x.shape[0] != n:
                raise DataError(f"stage {t} covariates have {x.shape[0]} rows, expected {n}")
        if not np.isin(self.A, (-1, 1)).all():
            raise DataError("treatments must be coded -1/+1")
        if not np.isfinite(self.Y).all():
            raise DataError("outcomes must be finite")
        if self.combiner not in COMBINERS:
            raise DataError(f"unknown outcome combiner {self.combiner!r}")
        self.A = self.A.astype(int)
        if self.ids is None:
            self.ids = np.arange(n)
        if self.covariate_names is None:
            self.covariate_names = [[f"X{t}_{j}" for j in range(1, x.shape[1] + 1)] for t, x in enumerate(self.X, 1)]

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def T(self) -> int:
        return self.A.shape[1]

    @property
    def dims(self) -> list[int]:
        return [x.shape[1] for x in self.X]

    @property
    def R(self) -> np.ndarray:
        """(n, T) stage completeness indicators."""
        return np.column_stack([~np.isnan(x).any(axis=1) for x in self.X]).astype(int)

    def final_outcome(self) -> np.ndarray:
        return COMBINERS[self.combiner](self.Y)

    def history_names(self, t: int) -> list[str]:
        names: list[str] = []
        for s in range(1, t + 1):
            if s > 1:
                names += [f"A{s - 1}", f"Y{s - 1}"]
            names += list(self.covariate_names[s - 1])
        return names

    def history(self, t: int) -> np.ndarray:
        """H_t = (H_{t-1}, A_{t-1}, Y_{t-1}, X_t) for every patient (NaN where missing)."""
        blocks = []
        for s in range(1, t + 1):
            if s > 1:
                blocks += [self.A[:, s - 2 : s - 1].astype(float), self.Y[:, s - 2 : s - 1]]
            blocks.append(self.X[s - 1])
        return np.hstack(blocks)

    def trajectories(self) -> list[Trajectory]:
        return [
            Trajectory(
                id=int(self.ids[i]),
                covariates=tuple(x[i].copy() for x in self.X),
                treatments=tuple(int(a) for a in self.A[i]),
                outcomes=tuple(float(y) for y in self.Y[i]),
            )
            for i in range(self.n)
        ]

    @classmethod
    def from_trajectories(cls, trajs: Sequence[Trajectory], combiner: str = "sum") -> "CohortDataset":
        if not trajs:
            raise DataError("no trajectories")
        T = len(trajs[0].treatments)
        dims = [len(x) for x in trajs[0].covariates]
        for tr in trajs:
            if len(tr.treatments) != T or [len(x) for x in tr.covariates] != dims:
                raise DataError(f"trajectory {tr.id} does not share the stage layout")
        X = [np.array([tr.covariates[t] for tr in trajs], dtype=float).reshape(len(trajs), dims[t]) for t in range(T)]
        return cls(
            X=X,
            A=np.array([tr.treatments for tr in trajs]),
            Y=np.array([tr.outcomes for tr in trajs], dtype=float),
            combiner=combiner,
            ids=np.array([tr.id for tr in trajs]),
        )

    def without_missingness(self, X_full: list[np.ndarray]) -> "CohortDataset":
        """Same cohort with the covariates replaced by fully observed ones."""
        return replace(self, X=[np.array(x, dtype=float) for x in X_full])

    def subset(self, rows: np.ndarray) -> "CohortDataset":
        return replace(self, X=[x[rows] for x in self.X], A=self.A[rows], Y=self.Y[rows], ids=self.ids[rows])


# -- rescaling -----------------------------------------------------------------


@dataclass(frozen=True)
class Rescaler:
    """Per-coordinate affine map onto [0, 1] learned from one sample."""

    lo: np.ndarray
    hi: np.ndarray
    binary: np.ndarray
    degenerate: np.ndarray

    @classmethod
    def fit(cls, H: np.ndarray, binary: Sequence[bool] | None = None) -> "Rescaler":
        H = np.asarray(H, dtype=float)
        if H.shape[0] == 0:
            raise DataError("cannot rescale an empty sample")
        if binary is None:
            binary = np.zeros(H.shape[1], dtype=bool)
        binary = np.asarray(binary, dtype=bool)
        lo = np.where(binary, -1.0, H.min(axis=0))
        hi = np.where(binary, 1.0, H.max(axis=0))
        degenerate = ~binary & (hi - lo <= 0)
        return cls(lo=lo, hi=hi, binary=binary, degenerate=degenerate)

    def transform(self, H: np.ndarray) -> np.ndarray:
        H = np.atleast_2d(np.asarray(H, dtype=float))
        span = np.where(self.degenerate, 1.0, self.hi - self.lo)
        Z = (H - self.lo) / span
        Z[:, self.degenerate] = 0.5
        return np.clip(Z, 0.0, 1.0)

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return self.lo + Z * (self.hi - self.lo)


# -- stage samples -------------------------------------------------------------


@dataclass
class StageSample:
    t: int
    ids: np.ndarray
    H: np.ndarray
    names: list[str]
    A: np.ndarray
    y: np.ndarray
    r: np.ndarray
    rescaler: Rescaler = field(repr=False)
    rows: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def unit(self) -> np.ndarray:
        """Histories mapped into the unit cube."""
        return self.rescaler.transform(self.H) if self.n else self.H.copy()

    def columns(self, names: Sequence[str]) -> np.ndarray:
        """Select history columns by name; ``A{t}`` for the current stage is allowed."""
        cols = []
        for nm in names:
            if nm in self.names:
                cols.append(self.H[:, self.names.index(nm)])
            elif nm == f"A{self.t}":
                cols.append(self.A.astype(float))
            else:
                raise KeyError(f"column {nm!r} is not part of stage-{self.t} history")
        return np.column_stack(cols) if cols else np.empty((self.n, 0))

    def with_pseudo_outcome(self, y: np.ndarray) -> "StageSample":
        y = np.asarray(y, dtype=float).copy()
        y[self.r == 0] = np.nan
        if not np.isfinite(y[self.r == 1]).all():
            raise DataError("observed pseudo-outcomes must be finite")
        return replace(self, y=y)


def _binary_columns(names: Sequence[str]) -> list[bool]:
    return [re.fullmatch(r"A\d+", nm) is not None for nm in names]


def pseudo_missingness_indicator(cohort: CohortDataset, t: int) -> np.ndarray:
    """r_pse over the rows of S_t: R_{t+1} for t < T, all ones at T."""
    _check_stage(cohort, t)
    rows = stage_rows(cohort, t)
    if t == cohort.T:
        return np.ones(len(rows), dtype=int)
    return cohort.R[rows, t].astype(int)


def stage_rows(cohort: CohortDataset, t: int) -> np.ndarray:
    """Indices of patients with R_1 = ... = R_t = 1, in input order."""
    _check_stage(cohort, t)
    return np.flatnonzero(cohort.R[:, :t].min(axis=1) == 1)


def build_stage_sample(cohort: CohortDataset, t: int) -> StageSample:
    rows = stage_rows(cohort, t)
    names = cohort.history_names(t)
    H = cohort.history(t)[rows]
    r = pseudo_missingness_indicator(cohort, t)
    if t == cohort.T:
        y = cohort.final_outcome()[rows]
    else:
        y = np.full(len(rows), np.nan)
    binary = _binary_columns(names)
    if len(rows):
        rescaler = Rescaler.fit(H, binary)
    else:
        p = H.shape[1]
        rescaler = Rescaler(np.zeros(p), np.ones(p), np.asarray(binary, bool), np.zeros(p, bool))
    return StageSample(
        t=t,
        ids=cohort.ids[rows],
        H=H,
        names=names,
        A=cohort.A[rows, t - 1],
        y=y,
        r=r,
        rescaler=rescaler,
        rows=rows,
    )


def rescale_covariates(sample: StageSample) -> StageSample:
    """Refit the rescaling record on ``sample`` (the record is what maps new points)."""
    if sample.n == 0:
        raise DataError("cannot rescale an empty sample")
    return replace(sample, rescaler=Rescaler.fit(sample.H, _binary_columns(sample.names)))


def _check_stage(cohort: CohortDataset, t: int) -> None:
    if not 1 <= t <= cohort.T:
        raise DataError(f"stage {t} outside 1..{cohort.T}")


# -- delimited-file ingestion --------------------------------------------------

_COL = re.compile(r"^(?:X(\d+)_(\d+)|A(\d+)|Y(\d+))$")


def read_cohort_csv(path: str | Path, combiner: str = "sum", id_column: str | None = "id") -> CohortDataset:
    """Load a cohort with columns ``X{t}_{j}``, ``A{t}``, ``Y{t}``; empty cells are missing covariates."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    xcols: dict[int, dict[int, int]] = {}
    acols: dict[int, int] = {}
    ycols: dict[int, int] = {}
    id_idx = None
    for k, name in enumerate(header):
        m = _COL.match(name)
        if m is None:
            if id_column is not None and name == id_column:
                id_idx = k
            continue
        if m.group(1):
            xcols.setdefault(int(m.group(1)), {})[int(m.group(2))] = k
        elif m.group(3):
            acols[int(m.group(3))] = k
        else:
            ycols[int(m.group(4))] = k
    T = max(acols, default=0)
    if T == 0 or sorted(acols) != list(range(1, T + 1)) or sorted(ycols) != list(range(1, T + 1)):
        raise DataError(f"{path}: need A1..AT and Y1..YT columns")
    if sorted(xcols) != list(range(1, T + 1)):
        raise DataError(f"{path}: need covariates X{{t}}_{{j}} for every stage 1..{T}")

    def cell(row, k, allow_missing):
        v = row[k].strip() if k < len(row) else ""
        if v == "":
            if allow_missing:
                return np.nan
            raise DataError(f"{path}: missing value in non-covariate column {header[k]}")
        return float(v)

    X = []
    names = []
    for t in range(1, T + 1):
        js = sorted(xcols[t])
        if js != list(range(1, len(js) + 1)):
            raise DataError(f"{path}: stage-{t} covariate columns are not X{t}_1..X{t}_{len(js)}")
        X.append(np.array([[cell(r, xcols[t][j], True) for j in js] for r in rows], dtype=float).reshape(len(rows), len(js)))
        names.append([f"X{t}_{j}" for j in js])
    A = np.array([[cell(r, acols[t], False) for t in range(1, T + 1)] for r in rows]).astype(int)
    Y = np.array([[cell(r, ycols[t], False) for t in range(1, T + 1)] for r in rows], dtype=float)
    ids = np.array([int(float(r[id_idx])) for r in rows]) if id_idx is not None else None
    return CohortDataset(X=X, A=A, Y=Y, combiner=combiner, ids=ids, covariate_names=names)


def write_cohort_csv(cohort: CohortDataset, path: str | Path) -> None:
    header = ["id"]
    for t in range(1, cohort.T + 1):
        header += list(cohort.covariate_names[t - 1]) + [f"A{t}", f"Y{t}"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(cohort.n):
            row: list[object] = [int(cohort.ids[i])]
            for t in range(cohort.T):
                row += ["" if np.isnan(v) else repr(float(v)) for v in cohort.X[t][i]]
                row += [int(cohort.A[i, t]), repr(float(cohort.Y[i, t]))]
            w.writerow(row)
