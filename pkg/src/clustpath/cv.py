"""K-fold tuning of ``(lambda1_bar, eta)`` over exact paths or a log grid."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core_model import DEFAULT_RIDGE, Dataset, PathConfig, ridge_augment
from .errors import InputError, RankDeficientError
from .path import SolutionPath, run_path

logger = logging.getLogger(__name__)

LAMBDA1_GRID = (0.0, 0.5, 1.0, 2.0)


@dataclass
class CVChoice:
    mode: str
    lambda1_bar: float
    eta: float
    cv_mse: float
    test_mse: float | None
    gnnz: int


@dataclass
class CVCurve:
    """CV error over the candidate etas of one ``lambda1_bar`` and one search mode."""

    lambda1_bar: float
    mode: str
    etas: np.ndarray
    cv_mse: np.ndarray

    def best(self):
        i = int(np.argmin(self.cv_mse))
        return float(self.etas[i]), float(self.cv_mse[i])


@dataclass
class CVReport:
    folds: int
    curves: list = field(default_factory=list)
    per_lambda: list = field(default_factory=list)
    best: dict = field(default_factory=dict)
    ridged_folds: int = 0

    def to_dict(self) -> dict:
        def choice(c: CVChoice):
            return {"mode": c.mode, "lambda1_bar": c.lambda1_bar, "eta": c.eta,
                    "cv_mse": c.cv_mse, "test_mse": c.test_mse, "gnnz": c.gnnz}

        return {
            "folds": self.folds,
            "ridged_folds": self.ridged_folds,
            "best": {k: choice(v) for k, v in self.best.items()},
            "per_lambda1": [choice(c) for c in self.per_lambda],
        }


def _raw(dataset):
    """Undo a ridge augmentation so folds split real observations only."""
    if isinstance(dataset, tuple):
        y, X = dataset
        return np.asarray(y, dtype=float), np.asarray(X, dtype=float)
    if dataset.augmented:
        n = dataset.n - dataset.p
        return dataset.y[:n], dataset.X[:n]
    return dataset.y, dataset.X


def fold_indices(n: int, folds: int, seed: int):
    rng = np.random.Generator(np.random.PCG64(seed))
    return np.array_split(rng.permutation(n), folds)


def _fit_dataset(y, X, epsilon):
    if epsilon:
        return ridge_augment(y, X, epsilon), False
    try:
        return Dataset(y, X), False
    except RankDeficientError:
        return ridge_augment(y, X, DEFAULT_RIDGE), True


def _mse(path: SolutionPath, etas, y, X):
    if etas.size == 0:
        return np.zeros(0)
    B = path.solution_at(etas)
    r = y[None, :] - B @ X.T
    return np.mean(r * r, axis=1)


def log_grid(eta_max: float, size: int = 100) -> np.ndarray:
    """``eta_max * 10^(-4 i / (size - 1))`` for ``i = 0..size-1``."""
    if size == 1:
        return np.array([eta_max])
    i = np.arange(size)
    return eta_max * 10.0 ** (-4.0 * i / (size - 1))


def run_cv(dataset: Dataset, config: PathConfig, folds: int = 5, lambda1_grid=LAMBDA1_GRID,
           seed: int = 0, test=None, grid_size: int = 100,
           n_jobs: int = 1) -> CVReport:
    """Select ``(lambda1_bar, eta)`` by ``folds``-fold CV, in path-based and grid modes.

    Path-based candidates are every breakpoint eta of the fold paths; grid
    candidates are a 4-decade log grid below the full-data terminal eta. The CV
    error is the unweighted mean of the per-fold MSEs. ``gnnz`` and the test error
    come from the full-data path at the selected eta. ``test`` is a Dataset or
    a ``(y, X)`` pair.
    """
    y, X = _raw(dataset)
    n = y.size
    if folds < 2 or n < 2 * folds:
        raise InputError(f"need folds >= 2 and n >= 2 * folds (n={n}, folds={folds})")
    epsilon = dataset.epsilon if dataset.augmented else 0.0
    parts = fold_indices(n, folds, seed)
    report = CVReport(folds)
    test_y, test_X = _raw(test) if test is not None else (None, None)

    def one_lambda(l1):
        cfg = replace(config, lambda1_bar=float(l1), eta_max=None)
        full = run_path(dataset, cfg)
        fold_paths, held, ridged = [], [], 0
        for k in range(folds):
            val = parts[k]
            tr = np.concatenate([parts[j] for j in range(folds) if j != k])
            d, auto = _fit_dataset(y[tr], X[tr], epsilon)
            if auto:
                logger.warning("fold %d is rank deficient; added ridge %g", k + 1, DEFAULT_RIDGE)
                ridged += 1
            fold_paths.append(run_path(d, cfg))
            held.append(val)
        cand = {
            "path": np.unique(np.concatenate([fp.etas for fp in fold_paths])),
            "grid": np.unique(log_grid(full.terminal_eta, grid_size)),
        }
        curves = []
        for mode, etas in cand.items():
            mse = np.mean([_mse(fp, etas, y[v], X[v]) for fp, v in zip(fold_paths, held)], axis=0)
            curves.append(CVCurve(float(l1), mode, etas, mse))
        return full, curves, ridged

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(one_lambda, lambda1_grid))
    else:
        results = [one_lambda(l1) for l1 in lambda1_grid]

    fulls = {}
    for l1, (full, curves, ridged) in zip(lambda1_grid, results):
        fulls[float(l1)] = full
        report.curves.extend(curves)
        report.ridged_folds += ridged

    def choose(curve: CVCurve):
        eta, mse = curve.best()
        full = fulls[curve.lambda1_bar]
        tmse = None
        if test_y is not None:
            tmse = float(_mse(full, np.array([eta]), test_y, test_X)[0])
        labels = full.labels_at(eta)
        gnnz = int(np.unique(labels[labels != 0]).size)
        return CVChoice(curve.mode, curve.lambda1_bar, eta, mse, tmse, gnnz)

    report.per_lambda = [choose(c) for c in report.curves]
    for mode in ("path", "grid"):
        picks = [c for c in report.per_lambda if c.mode == mode]
        report.best[mode] = min(picks, key=lambda c: c.cv_mse)
    return report
