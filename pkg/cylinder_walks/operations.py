import numpy as np
import pandas as pd
from scipy import stats
from .utils import Verdict


def standard_error(values):
    """Standard error of the mean of `values`"""
    values = values.values if isinstance(values, pd.Series) else np.asarray(values)
    if len(values) < 2:
        return float("nan")
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def proportion(hits):
    """Frequency of True in `hits` and its standard error

    Parameters
    ----------
    hits : array_like of bool

    Returns
    -------
    tuple
        (frequency, standard error); the error is floored at the value for a
        single success so that it never vanishes
    """
    hits = np.asarray(hits, dtype=bool)
    n = len(hits)
    p = float(hits.mean())
    return p, float(np.sqrt(max(p * (1.0 - p), 1.0 / n) / n))


def within_se(estimate, target, se, k=3.0):
    """Whether `estimate` lies within `k` standard errors of `target`"""
    return bool(abs(estimate - target) <= k * se)


def trend_verdict(values, errors=None, direction="decreasing", k=2.0):
    """Monotone-trend verdict across sizes

    Parameters
    ----------
    values : list of float
        statistic per size, in increasing size order

    errors : list of float
        standard errors; a step against the trend within ``k`` combined
        errors is tolerated. Default is None (no tolerance)

    direction : str
        "decreasing", "increasing" or "bounded"

    k : float
        Default is 2

    Returns
    -------
    Verdict
        Inconclusive for fewer than two sizes or non-finite values
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 2 or not np.all(np.isfinite(values)):
        return Verdict.Inconclusive
    if direction == "bounded":
        return Verdict.Pass
    errors = np.zeros(len(values)) if errors is None else np.asarray(errors)
    slack = k * np.sqrt(errors[1:] ** 2 + errors[:-1] ** 2)
    steps = np.diff(values)
    if direction == "increasing":
        steps = -steps
    elif direction != "decreasing":
        raise ValueError(f"Unknown trend direction '{direction}'")
    return Verdict.Pass if np.all(steps <= slack) else Verdict.Fail


def log_linear_fit(x, y):
    """Least-squares fit of ``log y = a + b x``

    Returns
    -------
    dict
        slope, intercept and coefficient of determination
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = y > 0
    if keep.sum() < 3:
        raise ValueError("A log-linear fit needs at least three positive values")
    fit = stats.linregress(x[keep], np.log(y[keep]))
    return {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.rvalue**2}


def slope_through_origin(x, y, weights=None):
    """Weighted least-squares slope of ``y = b x``

    Returns
    -------
    tuple
        (slope, standard error)
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(x)) if weights is None else np.asarray(weights, dtype=float)
    sxx = np.sum(w * x**2)
    if sxx <= 0:
        raise ValueError("Slope through the origin needs a nonzero regressor")
    slope = np.sum(w * x * y) / sxx
    dof = max(len(x) - 1, 1)
    residual = np.sum(w * (y - slope * x) ** 2) / dof
    return float(slope), float(np.sqrt(residual / sxx))


def check_row(name, reference, statistic, verdict, direction=None, **extra):
    """One entry of the `checks` array of a report"""
    row = {
        "name": name,
        "reference": reference,
        "statistic": statistic,
        "verdict": verdict.name if isinstance(verdict, Verdict) else verdict,
    }
    if direction is not None:
        row["direction"] = direction
    row.update(extra)
    return row
