"""Empirical Orlicz norms, tail rearrangements, and small-ball diagnostics.

All functionals treat a vector v as a random variable under the uniform
measure on its m coordinates.
"""

from __future__ import annotations

import math

import numpy as np


def psi_alpha_norm(v, alpha):
    """Discrete psi_alpha norm: inf{c > 0 : mean exp((|v_i|/c)^alpha) <= 2}.

    Solved by bisection to relative width 1e-10 on a bracket that always
    encloses the root: [0.5*max|v|/ln(2m)^(1/a), 2*max|v|/ln(2)^(1/a)].
    The zero vector has norm 0.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("psi_alpha_norm needs at least one coordinate")
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    mx = float(np.abs(v).max())
    if mx == 0.0:
        return 0.0
    m = v.size
    absv = np.abs(v)
    lo = 0.5 * mx / math.log(2.0 * m) ** (1.0 / alpha)
    hi = 2.0 * mx / math.log(2.0) ** (1.0 / alpha)

    def budget(c):
        return float(np.mean(np.exp((absv / c) ** alpha)))

    for _ in range(100):
        if hi - lo <= 1e-10 * hi:
            break
        mid = 0.5 * (lo + hi)
        if budget(mid) > 2.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def rearrangement_functional(v, alpha):
    """max_i v*_i / log^(1/alpha)(e m / i), v* the nonincreasing |v|."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("rearrangement_functional needs at least one coordinate")
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    vs = np.sort(np.abs(v))[::-1]
    m = v.size
    i = np.arange(1, m + 1, dtype=float)
    return float((vs / np.log(math.e * m / i) ** (1.0 / alpha)).max())


def paley_zygmund_fraction(v, eta):
    """Fraction of coordinates with |v_i| >= eta * mean|v|, plus psi_1/L_1.

    The returned beta_ratio = psi_1 norm over first absolute moment is the
    equivalence constant that controls how large the fraction must be.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("paley_zygmund_fraction needs at least one coordinate")
    if not eta >= 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    l1 = float(np.abs(v).mean())
    if l1 == 0.0:
        raise ValueError("zero vector has no scale for a Paley-Zygmund fraction")
    fraction = float(np.mean(np.abs(v) >= eta * l1))
    return fraction, psi_alpha_norm(v, 1.0) / l1


def empirical_smallball_fraction(A, u, v, c1):
    """Fraction of rows with |<a_i,u><a_i,v>| >= c1 ||u|| ||v||."""
    A = np.asarray(A, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if A.ndim != 2 or u.shape != (A.shape[1],) or v.shape != (A.shape[1],):
        raise ValueError("A must be (N, n) with u, v of length n")
    if not c1 >= 0:
        raise ValueError(f"c1 must be >= 0, got {c1}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ValueError("u and v must both be nonzero")
    thr = c1 * nu * nv
    return float(np.mean(np.abs((A @ u) * (A @ v)) >= thr))


def product_process_sup(A, T1, T2):
    """max over (t, s) in T1 x T2 of |(1/N) sum <a_i,t><a_i,s> - <t,s>|."""
    A = np.asarray(A, dtype=float)
    T1 = np.atleast_2d(np.asarray(T1, dtype=float))
    T2 = np.atleast_2d(np.asarray(T2, dtype=float))
    if A.ndim != 2 or T1.shape[1] != A.shape[1] or T2.shape[1] != A.shape[1]:
        raise ValueError("A must be (N, n) with T1, T2 rows of length n")
    Z1 = A @ T1.T
    Z2 = A @ T2.T
    empirical = (Z1.T @ Z2) / A.shape[0]
    return float(np.abs(empirical - T1 @ T2.T).max())


# ---------------------------------------------------------------------------
# norm-product equivalence around a signal


def _equivalence_implications(d_minus, d_plus, nx, nx0, R, c1, c2):
    """Vectorized truth values of the two implications, per the two cases."""
    prod = d_minus * d_plus
    mn = np.minimum(d_minus, d_plus)
    sqrt_r = np.sqrt(R)
    small = nx0 < sqrt_r / 4.0
    fwd_small = (prod < R) | (nx >= c1 * sqrt_r)
    bwd_small = (nx < sqrt_r) | (prod >= c2 * R)
    fwd_large = (nx0 * mn < R) | (prod >= c1 * R)
    bwd_large = (prod < R) | (nx0 * mn >= c2 * R)
    forward = np.where(small, fwd_small, fwd_large)
    backward = np.where(small, bwd_small, bwd_large)
    return forward, backward, small


def norm_equivalence_check(x, x0, R, c1, c2):
    """Check the product/norm equivalence at scale R for one pair (x, x0).

    Large-signal case (||x0|| >= sqrt(R)/4):
      forward:  ||x0|| * min{||x-x0||, ||x+x0||} >= R  =>  product >= c1*R
      backward: product >= R  =>  ||x0|| * min{...} >= c2*R
    Small-signal case (||x0|| < sqrt(R)/4) the product behaves like ||x||^2:
      forward:  product >= R   =>  ||x|| >= c1*sqrt(R)
      backward: ||x|| >= sqrt(R)  =>  product >= c2*R

    Returns (forward_holds, backward_holds, small_norm_case).
    """
    x = np.asarray(x, dtype=float).ravel()
    x0 = np.asarray(x0, dtype=float).ravel()
    if x.shape != x0.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x0.shape}")
    if not R > 0:
        raise ValueError(f"R must be > 0, got {R}")
    fwd, bwd, small = _equivalence_implications(
        np.linalg.norm(x - x0),
        np.linalg.norm(x + x0),
        np.linalg.norm(x),
        np.linalg.norm(x0),
        float(R), c1, c2,
    )
    return bool(fwd), bool(bwd), bool(small)


def random_norm_triples(count, seed, dim=3):
    """Random (X, X0, R) stress triples concentrated near the case boundaries.

    Mixes independent pairs, pairs with x near +-x0, and pairs rescaled to
    put the product near the threshold R; ||x0|| straddles sqrt(R)/4.
    """
    rng = np.random.default_rng(seed)
    R = np.exp(rng.uniform(math.log(0.25), math.log(4.0), count))
    sqrt_r = np.sqrt(R)

    t0 = 0.25 * sqrt_r * np.exp(rng.uniform(-3.0, 3.0, count))
    X0 = rng.standard_normal((count, dim))
    X0 *= (t0 / np.linalg.norm(X0, axis=1))[:, None]

    X = rng.standard_normal((count, dim))
    X *= (sqrt_r * np.exp(rng.uniform(-1.5, 1.5, count)) / np.linalg.norm(X, axis=1))[:, None]

    mode = rng.integers(0, 3, count)
    near = X0 * rng.choice([-1.0, 1.0], count)[:, None] + rng.standard_normal((count, dim)) * (
        sqrt_r * np.exp(rng.uniform(-4.0, 0.5, count))
    )[:, None] / math.sqrt(dim)
    X = np.where((mode == 1)[:, None], near, X)

    boundary = X * (sqrt_r * np.exp(rng.uniform(-0.2, 0.2, count)) /
                    np.maximum(np.linalg.norm(X, axis=1), 1e-300))[:, None]
    X = np.where((mode == 2)[:, None], boundary, X)
    return X, X0, R


def norm_equivalence_violations(count, c1, c2, seed, dim=3):
    """Count forward/backward counterexamples over random stress triples."""
    X, X0, R = random_norm_triples(count, seed, dim)
    fwd, bwd, _ = _equivalence_implications(
        np.linalg.norm(X - X0, axis=1),
        np.linalg.norm(X + X0, axis=1),
        np.linalg.norm(X, axis=1),
        np.linalg.norm(X0, axis=1),
        R, c1, c2,
    )
    return int(np.sum(~fwd)), int(np.sum(~bwd))


# Calibrated constants for the regression suites.  The equivalence constants
# sit strictly inside the analytic worst cases (forward sqrt(15)/4 ~ 0.968,
# backward ~ 0.195 at ||x0|| = sqrt(R)/4 collinear) so large random scans
# admit zero counterexamples; the remaining bounds were frozen from reference
# scans and guard against regressions, not proved.
EQUIVALENCE_C1 = 0.95
EQUIVALENCE_C2 = 0.18
# psi_alpha_norm / rearrangement_functional stays inside this band
# (observed [1.07, 2.76] over 3000 stress vectors incl. spikes and heavy tails).
REARRANGEMENT_RATIO_LOW = 0.90
REARRANGEMENT_RATIO_HIGH = 3.20
# For nonnegative samples whose psi_1/L1 ratio is at most beta, the fraction
# of coordinates >= eta * mean is at least the floor: beta -> (eta, floor).
# Observed minima 0.81 / 0.69 / 0.58 over 1000 powered-gaussian draws each.
PZ_LEVELS = {2.0: (0.25, 0.50), 4.0: (0.125, 0.40), 8.0: (0.0625, 0.30)}
