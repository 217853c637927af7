"""
Upper confidence bounds built from the block bootstrap.

Five level-``alpha`` upper bounds for ``theta = H(mu)``, each targeting
``P(theta <= bound) = alpha``:

``basic``
    ``theta_hat - G*^{-1}(1 - alpha) / sqrt(n)``, with ``G*`` the first-level
    pivot distribution.
``calibrated``
    The basic bound at a level ``alpha_hat`` chosen by a second-level
    bootstrap so that the bootstrap-world coverage equals ``1 - alpha``.
``studentized``
    Bootstrap-t with Monte Carlo Studentizing factors: ``tau_hat`` from the
    first level, ``tau*`` from the second level of every draw.
``dh``, ``gk``
    Bootstrap-t with closed-form long-run variance Studentizers
    (Davison-Hall and Gotze-Kunsch lag-window forms).

`compute_bounds` runs the shared first-level bootstrap once and produces all
requested bounds for several levels at a time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from dblboot.blocks import BlockScheme, OuterResult, materialize, outer_distribution
from dblboot.empdist import EmpiricalDistribution
from dblboot.exceptions import DegenerateSampleError, StudentizationError
from dblboot.nested import EPS_TAU, InnerBatch, InnerResult, inner_batch
from dblboot.smooth import EstimatorKind, SmoothEstimator, make_estimator, transform

__all__ = [
    "METHODS",
    "BoundSet",
    "default_lengths",
    "bound_basic",
    "calibrate",
    "bound_calibrated",
    "bound_studentized",
    "tau_dh",
    "tau_gk",
    "bound_closed_form",
    "compute_bounds",
]

METHODS = ("basic", "calibrated", "studentized", "dh", "gk")
# share of first-level resamples allowed to give a non-positive closed-form variance
MAX_CLOSED_FORM_DROP = 0.01


def default_lengths(n: int) -> tuple[int, int]:
    """
    First- and second-level block lengths for a series of length `n`.

    ``ell`` is ``n ** (1/3)`` rounded half up and ``k = max(1, ell // 2)``;
    this gives (8, 4) at n = 500 and (10, 5) at n = 1000.
    """
    if n < 8:
        raise ValueError(f"default block lengths need n >= 8, got {n}")
    ell = int(np.floor(round(n ** (1.0 / 3.0), 9) + 0.5))
    return ell, max(1, ell // 2)


def _check_level(alpha: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"level must lie in [0, 1], got {alpha}")
    return float(alpha)


def bound_basic(outer: OuterResult, theta_hat: float, n: int, alpha: float) -> float:
    """``theta_hat - quantile(G*, 1 - alpha) / sqrt(n)``.

    `alpha` may be 0 or 1 so that calibrated levels at the edge of the grid
    map to the extreme pivots.
    """
    alpha = _check_level(alpha)
    return theta_hat - outer.pivots.order_statistic(1.0 - alpha) / np.sqrt(n)


def calibrate(u_values, alpha: float) -> float:
    """
    Calibrated nominal level from second-level u-values.

    ``alpha_hat = 1 - quantile(u, 1 - alpha)``. The fraction of u-values at or
    below ``1 - alpha_hat`` is then the smallest achievable value that is at
    least ``1 - alpha``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    u = EmpiricalDistribution(u_values)
    return 1.0 - u.quantile(1.0 - alpha)


def _tau_stars(inner) -> np.ndarray:
    if isinstance(inner, InnerBatch):
        return inner.tau_star
    return np.array([r.tau_star for r in inner])


def _u_values(inner, t_star) -> np.ndarray:
    if isinstance(inner, InnerBatch):
        return inner.u_values(t_star)
    return np.array([r.pivots.cdf(t) for r, t in zip(inner, t_star)])


def _check_inner(outer: OuterResult, inner) -> np.ndarray:
    tau = _tau_stars(inner)
    if tau.shape[0] != outer.B:
        raise ValueError(f"{tau.shape[0]} inner results for {outer.B} outer draws")
    bad = np.count_nonzero(~(tau > EPS_TAU))
    if bad:
        raise StudentizationError(f"{bad} degenerate inner distributions (tau* <= {EPS_TAU})")
    return tau


def bound_calibrated(
    outer: OuterResult,
    inner: InnerBatch | Sequence[InnerResult],
    theta_hat: float,
    n: int,
    alpha: float,
) -> tuple[float, float]:
    """
    Coverage-calibrated bound.

    Returns
    -------
    bound : float
    alpha_hat : float
    """
    _check_inner(outer, inner)
    alpha_hat = calibrate(_u_values(inner, outer.t_star), alpha)
    return bound_basic(outer, theta_hat, n, alpha_hat), alpha_hat


def _student_bound(t_star, tau_star, tau_hat, theta_hat, n, alpha) -> float:
    j_star = EmpiricalDistribution(np.asarray(t_star) / np.asarray(tau_star))
    return theta_hat - tau_hat * j_star.quantile(1.0 - alpha) / np.sqrt(n)


def bound_studentized(
    outer: OuterResult,
    inner: InnerBatch | Sequence[InnerResult],
    theta_hat: float,
    n: int,
    alpha: float,
) -> float:
    """Bootstrap-t bound ``theta_hat - tau_hat * J*^{-1}(1 - alpha) / sqrt(n)``."""
    tau = _check_inner(outer, inner)
    return _student_bound(outer.t_star, tau, outer.tau_hat, theta_hat, n, alpha)


# -- closed-form Studentizers -------------------------------------------------


def _linearize(y: np.ndarray, est: SmoothEstimator) -> np.ndarray:
    """Project centered observations on the gradient of H at their mean.

    Works on ``(N, d)`` or batched ``(B, N, d)`` input.
    """
    ybar = y.mean(axis=-2, keepdims=True)
    g = est.gradient(ybar)
    return ((y - ybar) * g).sum(axis=-1)


def _dh_variance(u: np.ndarray, ell: int, symmetrize: bool) -> np.ndarray:
    n = u.shape[-1]
    v = (u * u).sum(axis=-1)
    factor = 2.0 if symmetrize else 1.0
    for j in range(1, ell):
        v = v + factor * (u[..., : n - j] * u[..., j:]).sum(axis=-1)
    return v / n


def _gk_weights(ell: int, c: float) -> np.ndarray:
    j = np.arange(ell)
    w = 2.0 * (1.0 - c * (j / ell) ** 2)
    w[0] = 1.0
    return w


def _gk_variance(u: np.ndarray, ell: int, c: float) -> np.ndarray:
    n = u.shape[-1]
    if n < ell:
        raise ValueError(f"series of length {n} too short for lag window {ell}")
    w = _gk_weights(ell, c)
    head = u[..., : n - ell]
    v = np.zeros(u.shape[:-1])
    for j in range(ell):
        v = v + w[j] * (head * u[..., j : n - ell + j]).sum(axis=-1)
    return v / n


def _gk_block_variance(u: np.ndarray, ell: int) -> np.ndarray:
    b = u.shape[-1] // ell
    s = u[..., : b * ell].reshape(*u.shape[:-1], b, ell).sum(axis=-1)
    return (s * s).sum(axis=-1) / (b * ell)


def _sqrt_or_raise(v) -> float:
    v = float(v)
    if not v > EPS_TAU**2:
        raise StudentizationError(f"non-positive closed-form variance estimate {v:.3g}")
    return float(np.sqrt(v))


def _as_lifted(series_d, est: SmoothEstimator) -> np.ndarray:
    y = np.asarray(series_d, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] != est.dim:
        raise ValueError(f"expected {est.dim} columns, got {y.shape[1]}")
    return y


def tau_dh(series_d, ell: int, est: SmoothEstimator, symmetrize: bool = False) -> float:
    """
    Davison-Hall Studentizing factor.

    ``tau^2 = sum_rs H_r(ybar) H_s(ybar) S_rs`` with
    ``S = n^-1 sum_i z_i z_i' + n^-1 sum_{j=1}^{ell-1} sum_{i=1}^{n-j} z_i z_{i+j}'``
    and ``z_i = y_i - ybar``. The lag term is one-sided as written; pass
    ``symmetrize=True`` to add its transpose.
    """
    u = _linearize(_as_lifted(series_d, est), est)
    return _sqrt_or_raise(_dh_variance(u, int(ell), symmetrize))


def tau_gk(
    series_d,
    ell: int,
    est: SmoothEstimator,
    c: float = 0.5,
    bootstrap_side: bool = False,
) -> float:
    """
    Gotze-Kunsch Studentizing factor.

    On the original series, a lag window with weights ``w_0 = 1`` and
    ``w_j = 2 (1 - c (j / ell)^2)``:
    ``S = sum_{j<ell} w_j n^-1 sum_{i=1}^{n-ell} z_i z_{i+j}'``.
    With ``bootstrap_side=True``, `series_d` is a pasted block bootstrap
    series of ``b`` blocks of length `ell` and
    ``S = b^-1 sum_blocks ell^-1 (sum_block z)(sum_block z)'``.
    """
    y = _as_lifted(series_d, est)
    u = _linearize(y, est)
    if bootstrap_side:
        return _sqrt_or_raise(_gk_block_variance(u, int(ell)))
    return _sqrt_or_raise(_gk_variance(u, int(ell), c))


def _closed_form_taus(
    kind: str,
    scheme: BlockScheme,
    outer: OuterResult,
    est: SmoothEstimator,
    gk_c: float,
    symmetrize_dh: bool,
) -> tuple[float, np.ndarray]:
    """Original-side factor and one bootstrap-side factor per outer draw (NaN if dropped)."""
    y = scheme.series
    if kind == "dh":
        tau_hat = tau_dh(y, scheme.ell, est, symmetrize_dh)
        var = _dh_variance(_linearize(materialize(scheme, outer.starts), est), scheme.ell, symmetrize_dh)
    elif kind == "gk":
        tau_hat = tau_gk(y, scheme.ell, est, gk_c)
        # block sums of the centered bootstrap series, without pasting
        centered = scheme.block_sums[outer.starts] - scheme.ell * outer.means[:, None, :]
        s = (centered * est.gradient(outer.means)[:, None, :]).sum(axis=-1)
        var = (s * s).sum(axis=-1) / scheme.resample_length
    else:
        raise ValueError(f"unknown closed-form Studentizer {kind!r}")
    ok = var > EPS_TAU**2
    tau_star = np.where(ok, np.sqrt(np.where(ok, var, 1.0)), np.nan)
    return tau_hat, tau_star


def _closed_form_bound(outer, tau_hat, tau_star, theta_hat, n, alpha) -> float:
    ok = np.isfinite(tau_star)
    dropped = outer.B - np.count_nonzero(ok)
    if dropped > MAX_CLOSED_FORM_DROP * outer.B:
        raise StudentizationError(
            f"{dropped} of {outer.B} resamples gave non-positive closed-form variances"
        )
    return _student_bound(outer.t_star[ok], tau_star[ok], tau_hat, theta_hat, n, alpha)


def bound_closed_form(
    kind: str,
    series_d,
    ell: int,
    est: SmoothEstimator,
    B1: int,
    alpha: float,
    rng: np.random.Generator,
    c: float = 0.5,
    symmetrize_dh: bool = False,
) -> float:
    """Bootstrap-t bound with a closed-form Studentizer (``kind`` is "dh" or "gk")."""
    scheme = BlockScheme(_as_lifted(series_d, est), ell)
    outer = outer_distribution(scheme, est, B1, rng)
    theta_hat = float(est.H(scheme.series.mean(axis=0)))
    tau_hat, tau_star = _closed_form_taus(kind, scheme, outer, est, c, symmetrize_dh)
    return _closed_form_bound(outer, tau_hat, tau_star, theta_hat, scheme.m, alpha)


# -- all bounds at once -------------------------------------------------------


@dataclass
class BoundSet:
    """All requested bounds at one level; a bound is None if not requested or failed."""

    alpha: float
    theta_hat: float
    n: int
    ell: int
    k: int
    i_basic: float | None = None
    i_cal: float | None = None
    i_stud: float | None = None
    i_dh: float | None = None
    i_gk: float | None = None
    alpha_hat: float | None = None
    tau_hat: float | None = None
    tau_dh: float | None = None
    tau_gk: float | None = None
    failures: dict[str, str] = field(default_factory=dict)
    diagnostics: dict[str, int] = field(default_factory=dict)

    _FIELDS = {
        "basic": "i_basic",
        "calibrated": "i_cal",
        "studentized": "i_stud",
        "dh": "i_dh",
        "gk": "i_gk",
    }

    def bound(self, method: str) -> float | None:
        return getattr(self, self._FIELDS[method])

    def set_bound(self, method: str, value: float) -> None:
        setattr(self, self._FIELDS[method], float(value))


def _resolve_lengths(m: int, ell, k) -> tuple[int, int]:
    auto_ell, auto_k = default_lengths(m) if m >= 8 else (1, 1)
    ell = auto_ell if ell in (None, "auto") else int(ell)
    if k in (None, "auto"):
        k = max(1, ell // 2)
    k = int(k)
    if not 1 <= k <= ell:
        raise ValueError(f"need 1 <= k <= ell, got ell={ell}, k={k}")
    return ell, k


def compute_bounds(
    series,
    estimator: EstimatorKind | str | SmoothEstimator,
    alphas: float | Iterable[float],
    *,
    ell: int | str = "auto",
    k: int | str = "auto",
    B1: int = 500,
    B2: int = 250,
    rng: np.random.Generator | int | None = None,
    inner_rng: np.random.Generator | None = None,
    methods: Iterable[str] = METHODS,
    gk_c: float = 0.5,
    symmetrize_dh: bool = False,
) -> list[BoundSet]:
    """
    Compute the requested upper bounds for a raw scalar series.

    All methods share one first-level bootstrap drawn from `rng`; the
    second-level bootstrap uses `inner_rng` (spawned from `rng` if omitted), so
    adding or removing methods never changes the other bounds.

    Parameters
    ----------
    series : array_like
        Raw observations.
    estimator : EstimatorKind, str or SmoothEstimator
    alphas : float or iterable of float
        Nominal levels in (0, 1).
    ell, k : int or "auto"
        Block lengths; "auto" uses `default_lengths` of the lifted length and
        ``k = ell // 2``.
    B1, B2 : int
        First- and second-level Monte Carlo sizes.
    methods : iterable of str
        Subset of `METHODS`.

    Returns
    -------
    list of BoundSet
        One per level, in the order given.

    Raises
    ------
    DegenerateSampleError
        The estimate or a first-level pivot is undefined; no bound can be built.
    """
    est = estimator if isinstance(estimator, SmoothEstimator) else make_estimator(estimator)
    alphas = [float(alphas)] if np.ndim(alphas) == 0 else [float(a) for a in alphas]
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {a}")
    methods = list(methods)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if inner_rng is None and {"calibrated", "studentized"} & set(methods):
        inner_rng = rng.spawn(1)[0]

    y = transform(series, est)
    m = y.shape[0]
    ell, k = _resolve_lengths(m, ell, k)
    theta_hat = float(est.H(y.mean(axis=0)))
    if not np.isfinite(theta_hat):
        raise DegenerateSampleError(f"{est.kind.value} undefined on this sample")

    scheme = BlockScheme(y, ell)
    outer = outer_distribution(scheme, est, B1, rng)
    sets = [BoundSet(a, theta_hat, m, ell, k, tau_hat=outer.tau_hat) for a in alphas]

    def fail(method: str, err: Exception) -> None:
        for s in sets:
            s.failures[method] = f"{type(err).__name__}: {err}"

    if "basic" in methods:
        for s in sets:
            s.set_bound("basic", bound_basic(outer, theta_hat, m, s.alpha))

    nested = [x for x in ("calibrated", "studentized") if x in methods]
    if nested:
        try:
            inner = inner_batch(scheme, outer.starts, k, est, B2, inner_rng)
        except DegenerateSampleError as err:
            for x in nested:
                fail(x, err)
        else:
            n_bad = int(np.count_nonzero(~(inner.tau_star > EPS_TAU)))
            for s in sets:
                s.diagnostics["degenerate_inner"] = n_bad
            for s in sets:
                try:
                    if "calibrated" in nested:
                        b, a_hat = bound_calibrated(outer, inner, theta_hat, m, s.alpha)
                        s.set_bound("calibrated", b)
                        s.alpha_hat = a_hat
                    if "studentized" in nested:
                        s.set_bound("studentized", bound_studentized(outer, inner, theta_hat, m, s.alpha))
                except StudentizationError as err:
                    for x in nested:
                        s.failures[x] = f"{type(err).__name__}: {err}"

    for kind in ("dh", "gk"):
        if kind not in methods:
            continue
        try:
            tau_hat, tau_star = _closed_form_taus(kind, scheme, outer, est, gk_c, symmetrize_dh)
            n_drop = int(np.count_nonzero(~np.isfinite(tau_star)))
            for s in sets:
                s.diagnostics[f"{kind}_dropped"] = n_drop
                setattr(s, f"tau_{kind}", tau_hat)
                s.set_bound(kind, _closed_form_bound(outer, tau_hat, tau_star, theta_hat, m, s.alpha))
        except StudentizationError as err:
            fail(kind, err)
    return sets
