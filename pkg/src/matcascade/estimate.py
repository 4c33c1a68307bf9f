"""Estimators over sample batches: moments, harmonic moments, Laplace
transform decay fits, tail curves, and the fixed-point distributional check.

All estimators target the depth-n martingale value at a user-chosen n;
stability across nearby n is the honest surrogate for statements about
the almost-sure limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .engine import SampleBatch, simulate_batch, _simulate


class EstimateError(ValueError):
    pass


@dataclass
class MomentEstimate:
    order: float
    target: str  # "norm", "coord:<i>", or "proj:<vector>"
    point: float
    stderr: float
    ci95: tuple
    n: int
    replicates: int
    heavy_tail_flag: bool = False
    infinite_count: int = 0
    bias_note: str | None = None


@dataclass
class DecayFit:
    kind: str  # "power" | "stretched-exponential"
    exponent: float
    intercept: float
    grid: list  # (norm_t, phi) pairs actually regressed
    r2: float
    window: tuple
    r2_flag: bool = False  # set when r2 < 0.98 (fit family mismatch)


@dataclass
class TailPoint:
    x: float
    cdf: float
    wilson_low: float
    wilson_high: float
    ratio: float  # cdf / x^lambda
    flagged: bool  # below the Monte Carlo resolution floor


@dataclass
class FixedPointReport:
    n: int
    replicates: int
    ks: dict  # projection label -> (statistic, pvalue)
    laplace_residual: float
    min_pvalue: float


def _target_values(batch, target):
    vals = batch.ok_values()
    if np.iscomplexobj(vals):
        raise EstimateError("real-mode estimator applied to a complex batch")
    if isinstance(target, str) and target == "norm":
        return np.abs(vals).sum(axis=1), "norm"
    if isinstance(target, int):
        return vals[:, target], f"coord:{target}"
    y = np.asarray(target, dtype=float)
    if y.shape != (batch.p,):
        raise EstimateError(f"projection vector must have length {batch.p}")
    return vals @ y, "proj:" + ",".join(repr(float(c)) for c in y)


def _heavy_tail_flag(g, k=10, share=0.5):
    # flagged when the top k order statistics dominate the sample moment
    if g.size <= k:
        return False
    total = g.sum()
    if total <= 0:
        return False
    top = np.sort(g)[-k:].sum()
    return bool(top > share * total)


def estimate_moment(batch, alpha, target="norm"):
    """Sample alpha-moment of a projection of the batch values.

    target: "norm" (L1 norm), an integer coordinate, or a projection
    vector.  Standard error is the CLT estimate from the sample variance.
    """
    if alpha <= 0:
        raise EstimateError("alpha must be positive")
    base, label = _target_values(batch, target)
    if base.size == 0:
        raise EstimateError("empty batch")
    g = base**alpha
    point = float(g.mean())
    stderr = float(g.std(ddof=1) / np.sqrt(g.size)) if g.size > 1 else 0.0
    return MomentEstimate(
        order=alpha, target=label, point=point, stderr=stderr,
        ci95=(point - 1.96 * stderr, point + 1.96 * stderr),
        n=batch.n, replicates=int(base.size),
        heavy_tail_flag=_heavy_tail_flag(g))


def estimate_harmonic(batch, lam, y):
    """Sample mean of (y . Y_n)^(-lambda) over surviving replicates.

    Zero projections (extinct replicates) would make the integrand
    infinite; they are excluded and counted, and the estimate is flagged
    as conditionally biased.
    """
    if lam <= 0:
        raise EstimateError("lambda must be positive")
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or not np.any(y > 0):
        raise EstimateError("y must be nonnegative and nonzero")
    base, label = _target_values(batch, y)
    finite_mask = base > 0
    inf_count = int((~finite_mask).sum())
    g = base[finite_mask] ** (-lam)
    if g.size == 0:
        raise EstimateError("no surviving replicates for harmonic estimate")
    point = float(g.mean())
    stderr = float(g.std(ddof=1) / np.sqrt(g.size)) if g.size > 1 else 0.0
    note = None
    if inf_count:
        note = (f"{inf_count} infinite term(s) excluded; estimate is "
                "conditional on survival and biased low")
    return MomentEstimate(
        order=-lam, target=label, point=point, stderr=stderr,
        ci95=(point - 1.96 * stderr, point + 1.96 * stderr),
        n=batch.n, replicates=int(g.size),
        heavy_tail_flag=_heavy_tail_flag(g),
        infinite_count=inf_count, bias_note=note)


def estimate_laplace(batch, t_grid):
    """Empirical Laplace transform: mean of exp(-t . Y_n) per grid point."""
    t_grid = [np.asarray(t, dtype=float) for t in t_grid]
    if not t_grid:
        raise EstimateError("empty grid")
    vals = batch.ok_values()
    if np.iscomplexobj(vals):
        raise EstimateError("Laplace estimator needs a real-mode batch")
    out = []
    for t in t_grid:
        if t.shape != (batch.p,):
            raise EstimateError(f"grid vectors must have length {batch.p}")
        out.append((t, float(np.exp(-(vals @ t)).mean())))
    return out


def _loglog_fit(xs, ys):
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def _curve_window(curve, lo, hi):
    pts = [(float(np.abs(np.asarray(t, dtype=float)).sum()), float(phi))
           for t, phi in curve]
    pts.sort(key=lambda q: q[0])
    return [(s, phi) for s, phi in pts if lo <= phi <= hi]


def fit_power_decay(curve, replicates=None, r2_threshold=0.98):
    """Least-squares log phi vs log ||t|| inside the window phi in
    [max(10/R, 1e-4), 0.5]; the exponent is minus the slope."""
    floor = max(10.0 / replicates, 1e-4) if replicates else 1e-4
    window = (floor, 0.5)
    pts = _curve_window(curve, *window)
    if len(pts) < 5:
        raise EstimateError(
            f"only {len(pts)} grid points inside window {window}; "
            "enlarge the grid or the batch")
    xs = np.log(np.array([s for s, _ in pts]))
    ys = np.log(np.array([phi for _, phi in pts]))
    slope, intercept, r2 = _loglog_fit(xs, ys)
    return DecayFit(kind="power", exponent=-slope, intercept=intercept,
                    grid=pts, r2=r2, window=window,
                    r2_flag=bool(r2 < r2_threshold))


def fit_stretched_exponential(curve, replicates=None, r2_threshold=0.98):
    """Least-squares log(-log phi) vs log ||t|| inside the window phi in
    [max(10/R, 1e-5), 0.2]; the slope is the stretching exponent."""
    floor = max(10.0 / replicates, 1e-5) if replicates else 1e-5
    window = (floor, 0.2)
    pts = _curve_window(curve, *window)
    if any(phi >= 1.0 for _, phi in pts):
        raise EstimateError("phi >= 1 inside the regression window")
    if len(pts) < 5:
        raise EstimateError(
            f"only {len(pts)} grid points inside window {window}; "
            "enlarge the grid or the batch")
    xs = np.log(np.array([s for s, _ in pts]))
    ys = np.log(-np.log(np.array([phi for _, phi in pts])))
    slope, intercept, r2 = _loglog_fit(xs, ys)
    return DecayFit(kind="stretched-exponential", exponent=slope,
                    intercept=intercept, grid=pts, r2=r2, window=window,
                    r2_flag=bool(r2 < r2_threshold))


def _wilson(k, n, z=1.96):
    if n == 0:
        return 0.0, 1.0
    phat = k / n
    denom = 1 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(center - half, 0.0), min(center + half, 1.0)


def tail_curve(batch, y, x_grid, lam):
    """Empirical left-tail CDF of y . Y_n with Wilson intervals.

    The ratio column cdf / x^lambda supports the boundedness check of the
    tail-order prediction; points with fewer than 10 hits are flagged as
    below Monte Carlo resolution.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if np.any(np.diff(x_grid) <= 0) or np.any(x_grid <= 0):
        raise EstimateError("x grid must be positive and increasing")
    proj, _ = _target_values(batch, np.asarray(y, dtype=float))
    n = proj.size
    out = []
    for x in x_grid:
        k = int((proj <= x).sum())
        lo, hi = _wilson(k, n)
        cdf = k / n
        out.append(TailPoint(x=float(x), cdf=cdf, wilson_low=lo, wilson_high=hi,
                             ratio=cdf / x**lam, flagged=bool(k < 10)))
    return out


def tail_slope_test(points, level=0.05):
    """One-sided test for upward drift of the ratio as x decreases.

    Regresses log ratio on log x over resolvable points; a significantly
    negative slope means the ratio grows as x -> 0 (tail heavier than
    x^lambda).  Returns (drift_detected, slope, pvalue).
    """
    usable = [q for q in points if not q.flagged and q.ratio > 0]
    if len(usable) < 3:
        raise EstimateError("too few resolvable points for the slope test")
    xs = np.log([q.x for q in usable])
    ys = np.log([q.ratio for q in usable])
    res = stats.linregress(xs, ys)
    one_sided = res.pvalue / 2 if res.slope < 0 else 1.0 - res.pvalue / 2
    return bool(res.slope < 0 and one_sided < level), float(res.slope), float(one_sided)


def _default_projections(p):
    labels = {}
    for i in range(p):
        e = np.zeros(p)
        e[i] = 1.0
        labels[f"e{i+1}"] = e
    labels["ones"] = np.ones(p)
    return labels


def fixed_point_check(model, n, replicates, seed, skip_root_weights=False,
                      t_grid=None, cap=None):
    """Two-sample check of the distributional fixed-point recursion.

    Batch B1 draws the depth-n value directly; batch B2 grafts one extra
    generation at the root, i.e. draws sum_k A_k . (depth-n value of an
    independent subtree).  Matching laws is the recursion property;
    Kolmogorov-Smirnov statistics are reported per projection, plus the
    sup over a grid of the empirical functional-equation residual.

    skip_root_weights deliberately drops the root matrices (a seeded
    corruption used to verify the check has power).
    """
    from .engine import DEFAULT_CAP

    cap = cap or DEFAULT_CAP
    b1 = simulate_batch(model, n, replicates, seed, cap=cap)
    values2, _, _, capped2, _ = _simulate(
        model, n + 1, replicates, seed + 0x9E3779B9, cap, tilt=None,
        want_traj=False, identity_root=skip_root_weights)
    v2 = values2[~capped2]
    v1 = b1.ok_values()

    ks = {}
    for label, y in _default_projections(model.p).items():
        s1 = v1 @ y
        s2 = v2 @ y
        res = stats.ks_2samp(s1, s2)
        ks[label] = (float(res.statistic), float(res.pvalue))

    if t_grid is None:
        ones = np.ones(model.p)
        t_grid = [s * ones for s in (0.1, 0.3, 1.0, 3.0)]
    resid = 0.0
    for t in t_grid:
        t = np.asarray(t, dtype=float)
        phi_t = float(np.exp(-(v1 @ t)).mean())
        # empirical E prod_k phi(t A_k) over the atom law, phi from B1
        acc = 0.0
        for atom in model.atoms:
            prod = 1.0
            for mat in atom.matrices:
                ta = t @ np.asarray(mat, dtype=float)
                prod *= float(np.exp(-(v1 @ ta)).mean())
            acc += atom.prob * prod
        resid = max(resid, abs(phi_t - acc))

    return FixedPointReport(
        n=n, replicates=replicates, ks=ks, laplace_residual=resid,
        min_pvalue=min(p for _, p in ks.values()))
