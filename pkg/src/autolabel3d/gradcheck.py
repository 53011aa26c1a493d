"""Finite-difference validation harness for the loss gradients."""

from __future__ import annotations

import numpy as np

from . import losses

FD_STEP = 1e-6
REL_TOL = 1e-4


def finite_difference(fn, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar function at x."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        hi = np.zeros_like(x)
        hi.flat[i] = h
        grad.flat[i] = (fn(x + hi) - fn(x - hi)) / (2 * h)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(analytic)),
                float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / denom


def _check_info_nce(rng, n_points):
    worst = 0.0
    for _ in range(n_points):
        dim = rng.integers(3, 8)
        q = rng.normal(size=dim)
        pos = rng.normal(size=dim)
        negs = [rng.normal(size=dim) for _ in range(rng.integers(1, 5))]
        tau = float(rng.uniform(0.05, 1.0))
        lv = losses.info_nce(q, pos, negs, tau)
        num = finite_difference(lambda x: losses.info_nce(x, pos, negs, tau).value, q)
        worst = max(worst, rel_error(lv.gradient, num))
    return worst


def _check_focal(rng, n_points):
    worst = 0.0
    for _ in range(n_points):
        shape = (4, 5)
        # stay away from the clamp and keep p in the smooth region
        pred = rng.uniform(0.05, 0.95, size=shape)
        target = np.where(rng.random(shape) < 0.15, 1.0,
                          rng.uniform(0.0, 0.9, size=shape))
        weight = rng.uniform(0.2, 1.0, size=shape)
        lv = losses.focal_center_loss(pred, target, weight=weight)
        num = finite_difference(
            lambda x: losses.focal_center_loss(x.reshape(shape), target,
                                               weight=weight).value,
            pred.ravel())
        worst = max(worst, rel_error(lv.gradient, num))
    return worst


def _check_l1(rng, n_points):
    worst = 0.0
    for _ in range(n_points):
        n = rng.integers(2, 10)
        pred = rng.normal(size=n)
        target = pred + np.where(rng.random(n) < 0.5, 1, -1) \
            * rng.uniform(1e-2, 2.0, size=n)  # keep |pred-target| > 1e-3
        lv = losses.l1_loss(pred, target)
        num = finite_difference(lambda x: losses.l1_loss(x, target).value, pred)
        worst = max(worst, rel_error(lv.gradient, num))
    return worst


def _check_bce(rng, n_points):
    worst = 0.0
    for _ in range(n_points):
        n = rng.integers(2, 10)
        pred = rng.uniform(0.05, 0.95, size=n)
        target = (rng.random(n) < 0.5).astype(float)
        weight = rng.uniform(0.2, 1.0, size=n)
        lv = losses.bce_loss(pred, target, weight=weight)
        num = finite_difference(
            lambda x: losses.bce_loss(x, target, weight=weight).value, pred)
        worst = max(worst, rel_error(lv.gradient, num))
    return worst


def _check_totals(rng, n_points):
    worst = 0.0
    for _ in range(n_points):
        n = rng.integers(2, 8)
        pred = rng.uniform(0.05, 0.95, size=n)
        target = pred + rng.uniform(0.01, 0.5, size=n) * 0.05

        def total(x):
            comp = {name: losses.l1_loss(x, target)
                    for name in losses.MATCH_COMPONENTS}
            return losses.match_loss_total(comp)

        lv = total(pred)
        num = finite_difference(lambda x: total(x).value, pred)
        worst = max(worst, rel_error(lv.gradient, num))
    return worst


CHECKS = {
    "info_nce": _check_info_nce,
    "focal": _check_focal,
    "l1": _check_l1,
    "bce": _check_bce,
    "aggregates": _check_totals,
}


def run_gradient_checks(seed: int = 0, n_points: int = 100):
    """Returns [(name, worst relative error, points, passed)] per loss."""
    results = []
    for i, (name, check) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, i])
        err = check(rng, n_points)
        results.append((name, err, n_points, err < REL_TOL))
    return results
