"""Randomized property suites for the angle, determinant and surrogate
identities, plus the network sup-norm bound.

Each suite reports how many trials passed and its worst margin (the smallest
slack against the tolerance; negative means a failure).
"""

import math

import numpy as np

from marlvm.bounds import BoundInputs
from marlvm.errors import DependentRowsError
from marlvm.harness.io import MetricsReport, config_hash
from marlvm.linalg import gram_det, non_obtuse_angle, orth_decompose, signed_angle
from marlvm.nn import SIGMOID_AT_ZERO, SIGMOID_LIPSCHITZ, sup_norm_check
from marlvm.regularizer import (
    SurrogateConfig,
    ascent_step,
    mar_breakdown,
    surrogate,
    surrogate_g,
    surrogate_gradient,
)

ETA_GRID = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
GAMMAS = (0.5, 1.0, 2.0)


def random_unit_rows(rng, k_range=(2, 6), d_max=10):
    """Random unit-row matrix with ``K`` in ``k_range`` and ``K <= D <= d_max``."""
    K = int(rng.integers(k_range[0], k_range[1] + 1))
    D = int(rng.integers(K, d_max + 1))
    A = rng.standard_normal((K, D))
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def fd_gradient(f, A, h=1e-6):
    G = np.zeros_like(A)
    for idx in np.ndindex(A.shape):
        E = np.zeros_like(A)
        E[idx] = h
        G[idx] = (f(A + E) - f(A - E)) / (2 * h)
    return G


def rel_error(G, ref):
    return float(np.max(np.abs(G - ref)) / max(np.max(np.abs(ref)), 1e-300))


def _suite_angle_invariance(rng, trials):
    margins = []
    for _ in range(trials):
        d = int(rng.integers(1, 9))
        x, y = rng.standard_normal(d), rng.standard_normal(d)
        s, t = rng.choice([-1, 1], 2) * 10 ** rng.uniform(-3, 3, 2)
        err = abs(non_obtuse_angle(s * x, t * y) - non_obtuse_angle(x, y))
        err = max(err, abs(non_obtuse_angle(y, x) - non_obtuse_angle(x, y)))
        margins.append(1e-12 - err)
    return margins


def _suite_gram_det_range(rng, trials):
    margins = []
    for _ in range(trials):
        A = random_unit_rows(rng, (1, 8), 8)
        if rng.random() < 0.3:
            A = np.vstack([A, A[:1]])  # dependent rows still land in range
        det = gram_det(A)
        margins.append(min(det, 1 + 1e-10 - det))
    return margins


def _suite_det_expansion(rng, trials):
    margins = []
    for _ in range(trials):
        A = random_unit_rows(rng, (2, 8), 8)
        det = gram_det(A)
        worst = 0.0
        for i in range(A.shape[0]):
            dec = orth_decompose(A, i)
            rest = gram_det(np.delete(A, i, axis=0))
            worst = max(worst, abs(det - rest * dec.residual_norm * float(dec.residual_dir @ A[i])))
        margins.append(1e-8 - worst)
    return margins


def _suite_gradient_direction(rng, trials):
    margins = []
    for _ in range(trials):
        A = random_unit_rows(rng)
        G = surrogate_gradient(A)
        worst = math.inf
        for i in range(A.shape[0]):
            e = orth_decompose(A, i).residual_dir
            cos = float(G[i] @ e / np.linalg.norm(G[i]))
            worst = min(worst, cos - (1 - 1e-8))
        margins.append(worst)
    return margins


def _suite_triangle(rng, trials):
    if trials == 0:
        return []
    d = rng.integers(2, 9, size=trials)
    margins = []
    for k in range(trials):
        u1, u2, u3 = rng.standard_normal((3, int(d[k])))
        lhs = signed_angle(u1, u3)
        rhs = signed_angle(u1, u2) + signed_angle(u2, u3)
        margins.append(rhs + 1e-12 - lhs)
    return margins


def _suite_lower_bound(rng, trials):
    margins = []
    for k in range(trials):
        gamma = GAMMAS[k % len(GAMMAS)]
        A = random_unit_rows(rng)
        margins.append(mar_breakdown(A, gamma).omega + 1e-9 - surrogate(A, gamma))
    return margins


def ascent_margin(A, gamma=1.0, etas=ETA_GRID):
    """``(margin, largest passing eta)`` for one configuration.

    The margin is the best, over the grid, of the smallest slack among the
    three conditions (mean up, variance down, regularizer up).
    """
    cfg = SurrogateConfig(gamma)
    before = mar_breakdown(A, gamma)
    best, best_eta = -math.inf, None
    for eta in etas:
        after = mar_breakdown(ascent_step(A, eta, cfg), gamma)
        slack = min(after.omega - before.omega + 1e-12,
                    after.mean_angle - before.mean_angle + 1e-12,
                    before.angle_variance - after.angle_variance + 1e-12)
        if slack >= 0 and best_eta is None:
            best_eta = eta
        best = max(best, slack)
    return best, best_eta


def _suite_ascent(rng, trials):
    return [ascent_margin(random_unit_rows(rng))[0] for _ in range(trials)]


def _suite_gradient_fd(rng, trials):
    margins = []
    while len(margins) < trials:
        A = random_unit_rows(rng)
        det = gram_det(A)
        if not 0.05 <= det <= 0.95:
            continue
        gamma = GAMMAS[len(margins) % len(GAMMAS)]
        ref = fd_gradient(lambda B: surrogate_g(gram_det(B), gamma), A)
        G = surrogate_gradient(A, SurrogateConfig(gamma))
        margins.append(1e-5 - rel_error(G, ref))
    return margins


def _suite_g_monotone(rng, trials):
    if trials == 0:
        return []
    xs = np.linspace(0.0, 1.0, 1000)
    return [float(np.min(np.diff([surrogate_g(x, g) for x in xs]))) for g in GAMMAS]


def _suite_sup_norm(rng, trials):
    if trials == 0:
        return []
    inputs = BoundInputs(m=4, C1=2.0, C3=1.5, C4=1.0, h0=SIGMOID_AT_ZERO, L=SIGMOID_LIPSCHITZ, theta=0.6)
    violations, worst = sup_norm_check(inputs, d=10, draws=trials, seed=int(rng.integers(2**31)))
    # one margin per draw is not available; report the aggregate
    return [1.0 - worst] * (trials - violations) + [-1.0] * violations


SUITES = {
    "angle_invariance": _suite_angle_invariance,
    "gram_det_range": _suite_gram_det_range,
    "det_expansion": _suite_det_expansion,
    "gradient_direction": _suite_gradient_direction,
    "angle_triangle": _suite_triangle,
    "lower_bound": _suite_lower_bound,
    "ascent": _suite_ascent,
    "gradient_fd": _suite_gradient_fd,
    "g_monotone": _suite_g_monotone,
    "sup_norm": _suite_sup_norm,
}


def run_verify(seed=0, trials=100, suites=None):
    """Run the property suites; returns a :class:`MetricsReport`.

    With ``trials=0`` nothing runs and the report has no metrics.
    ``report.meta["failed"]`` counts failing trials across all suites.
    """
    names = list(SUITES) if suites is None else list(suites)
    report = MetricsReport(meta={"seed": seed, "trials": trials,
                                 "config_hash": config_hash({"suites": names, "trials": trials})})
    failed = 0
    if trials > 0:
        streams = np.random.SeedSequence(seed).spawn(len(SUITES))
        for name, ss in zip(SUITES, streams):
            if name not in names:
                continue
            try:
                margins = SUITES[name](np.random.default_rng(ss), trials)
            except DependentRowsError:
                margins = [-1.0]
            n_pass = sum(m >= 0 for m in margins)
            failed += len(margins) - n_pass
            report.add(f"{name}.trials", len(margins))
            report.add(f"{name}.passed", n_pass)
            report.add(f"{name}.worst_margin", min(margins))
    report.meta["failed"] = failed
    return report
