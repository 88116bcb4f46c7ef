"""Independent reference computations used to check the library.

None of these import the code paths they check: prox values come from 1-D
minimisation of the defining objective, eigenvalues from cyclic Jacobi
rotations, gradients from central differences.
"""

import math

import numpy as np

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_min(fun, a, b, iters=200):
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = fun(d)
        if b - a < 1e-15 * max(1.0, abs(a)):
            break
    return 0.5 * (a + b)


def phi_scalar(kind, nu1=0.0, nu2=0.0, lo=-np.inf, hi=np.inf):
    """Scalar regularizer written out from its definition."""
    if kind == "zero":
        return lambda y: 0.0
    if kind == "l1":
        return lambda y: nu1 * abs(y)
    if kind == "elastic_net":
        return lambda y: nu1 * abs(y) + nu2 * y * y
    if kind == "box":
        return lambda y: 0.0 if lo <= y <= hi else math.inf
    raise ValueError(kind)


def brute_prox_scalar(phi, gamma, v, lo=-np.inf, hi=np.inf, grid=2001):
    """Grid search to bracket, then golden section, on phi(y) + (y-v)^2/(2 gamma)."""
    obj = lambda y: phi(y) + (y - v) ** 2 / (2.0 * gamma)
    a = max(lo, v - 10.0 * (abs(v) + 1.0))
    b = min(hi, v + 10.0 * (abs(v) + 1.0))
    if a >= b:
        return a
    ys = np.linspace(a, b, grid)
    vals = np.array([obj(y) for y in ys])
    k = int(np.argmin(vals))
    left = ys[max(k - 1, 0)]
    right = ys[min(k + 1, grid - 1)]
    y = golden_section_min(obj, left, right)
    # endpoints of a constrained interval can be optimal
    for cand in (left, right):
        if obj(cand) < obj(y):
            y = cand
    return y


def jacobi_eigenvalues(M, tol=1e-15, max_sweeps=100):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    A = np.array(M, dtype=np.float64, copy=True)
    p = A.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(A[i, j] ** 2 for i in range(p) for j in range(p) if i != j))
        if off <= tol * max(1.0, np.abs(np.diag(A)).max()):
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                if A[i, j] == 0.0:
                    continue
                theta = (A[j, j] - A[i, i]) / (2.0 * A[i, j])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(p)
                R[i, i] = R[j, j] = c
                R[i, j] = s
                R[j, i] = -s
                A = R.T @ A @ R
    return np.sort(np.diag(A))


def central_difference_grad(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64, copy=True)
    g = np.empty_like(x)
    for k in range(x.size):
        old = x[k]
        x[k] = old + h
        fp = f(x)
        x[k] = old - h
        fm = f(x)
        x[k] = old
        g[k] = (fp - fm) / (2.0 * h)
    return g


def brute_min_residual(grad_f, lower, upper, grid=401):
    """min over s in the box [lower, upper] of ||grad_f + s||, by dense grid per coordinate.

    Infinite box ends are truncated at |grad_f| + 1, which always contains the optimum.
    """
    total = 0.0
    for g, lo, hi in zip(grad_f, lower, upper):
        span = abs(g) + 1.0
        a = max(lo, -span - abs(lo if np.isfinite(lo) else 0.0))
        b = min(hi, span + abs(hi if np.isfinite(hi) else 0.0))
        best = a
        for _ in range(8):  # zoom the grid around its minimiser
            if b <= a:
                break
            ss = np.linspace(a, b, grid)
            k = int(np.argmin((g + ss) ** 2))
            best = ss[k]
            width = ss[1] - ss[0]
            a, b = max(a, best - width), min(b, best + width)
        total += float((g + best) ** 2)
    return math.sqrt(total)
