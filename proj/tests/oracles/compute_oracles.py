"""Reference values frozen into the C++ test suites.

Inputs are closed-form deterministic arrays so the C++ side can rebuild them
exactly. Run: python3 tests/oracles/compute_oracles.py
"""
import itertools
import math

import mpmath
import numpy as np
import scipy.optimize
import scipy.stats
import statsmodels.api as sm
from sklearn.linear_model import Lasso

mpmath.mp.dps = 60


def det_matrix(rows, cols, a=1.3, b=0.7, c=0.1):
    i = np.arange(rows)[:, None]
    j = np.arange(cols)[None, :]
    return np.sin(a * i + b * j * j + c) + 0.5 * np.cos(0.37 * i * (j + 1))


def softplus_inverse():
    print("# stable_softplus_inverse (mpmath, 60 digits)")
    for y in ["1e-10", "1e-5", "0.5", "1", "20", "50", "700"]:
        v = mpmath.log(mpmath.expm1(mpmath.mpf(y)))
        print(f"  {{{y}, {mpmath.nstr(v, 20)}}},")


def lasso():
    print("# lasso, x = det_matrix(40, 5), y = x @ w + 0.05*cos(i)")
    x = det_matrix(40, 5)
    w = np.array([1.5, -2.0, 0.0, 0.7, 0.0])
    y = x @ w + 0.05 * np.cos(np.arange(40))
    for alpha, positive in [(0.05, False), (0.05, True), (0.3, False)]:
        m = Lasso(alpha=alpha, positive=positive, tol=1e-14, max_iter=1000000).fit(x, y)
        print(f"  alpha={alpha} positive={positive} coef={np.array2string(m.coef_, precision=12, separator=', ')} "
              f"intercept={m.intercept_:.12f}")


def nnls_qp_bruteforce():
    # Nonnegative least squares by enumerating active sets (exact QP oracle).
    print("# nonneg least squares, active-set enumeration, x = det_matrix(30, 4), y = x @ [1,-1,0.5,2]")
    x = det_matrix(30, 4)
    y = x @ np.array([1.0, -1.0, 0.5, 2.0])
    xc = x - x.mean(0)
    yc = y - y.mean()
    best = None
    for mask in itertools.product([0, 1], repeat=4):
        idx = [k for k in range(4) if mask[k]]
        w = np.zeros(4)
        if idx:
            sol, *_ = np.linalg.lstsq(xc[:, idx], yc, rcond=None)
            if (sol < 0).any():
                continue
            w[idx] = sol
        obj = 0.5 * np.sum((yc - xc @ w) ** 2)
        if best is None or obj < best[0]:
            best = (obj, w)
    print(f"  coef={np.array2string(best[1], precision=12, separator=', ')}")


def poisson_glm():
    print("# Poisson GLM (exponential link) by statsmodels; x = det_matrix(60, 3), y = floor(exp(0.3 + x@[0.5,-0.4,0.2]) + 0.5*(1+sin(3i)))")
    x = det_matrix(60, 3)
    eta = 0.3 + x @ np.array([0.5, -0.4, 0.2])
    y = np.floor(np.exp(eta) + 0.5 * (1 + np.sin(3 * np.arange(60))))
    res = sm.GLM(y, sm.add_constant(x), family=sm.families.Poisson()).fit(tol=1e-14)
    print(f"  y={y.astype(int).tolist()}")
    print(f"  params={np.array2string(res.params, precision=12, separator=', ')}")


def yeo_johnson():
    print("# Yeo-Johnson MLE lambda (scipy), x_i = exp(sin(0.7 i) + 0.3 cos(1.9 i)) - 0.8, i < 200")
    i = np.arange(200)
    x = np.exp(np.sin(0.7 * i) + 0.3 * np.cos(1.9 * i)) - 0.8
    lam = scipy.stats.yeojohnson_normmax(x, brack=None) if False else scipy.optimize.minimize_scalar(
        lambda l: -scipy.stats.yeojohnson_llf(l, x), bounds=(-5, 5), method="bounded",
        options={"xatol": 1e-12}).x
    print(f"  lambda={lam:.10f}")
    for v, l in [(3.0, 0.5), (-2.0, 0.5), (-2.0, 2.0), (3.0, 0.0), (-0.5, 3.0)]:
        print(f"  yj({v}, {l}) = {scipy.stats.yeojohnson(np.array([v]), l)[0]:.15f}")


def lp_transport():
    print("# transport LP (scipy linprog), C = det_matrix(3, 2), uniform marginals 1/3, 1/2")
    c = det_matrix(3, 2)
    nx, ny = c.shape
    a_eq, b_eq = [], []
    for r in range(nx):
        row = np.zeros(nx * ny)
        row[r * ny:(r + 1) * ny] = 1
        a_eq.append(row)
        b_eq.append(1 / nx)
    for k in range(ny):
        row = np.zeros(nx * ny)
        row[k::ny] = 1
        a_eq.append(row)
        b_eq.append(1 / ny)
    res = scipy.optimize.linprog(-c.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    print(f"  C={np.array2string(c, precision=12, separator=', ')}")
    print(f"  optimum={-res.fun:.12f}")


def rsa_and_hierarchy():
    print("# RSA score (pearson of RDM upper triangles), a = det_matrix(8, 5), b = det_matrix(8, 5, 0.9, 0.4, 0.3)")
    a = det_matrix(8, 5)
    b = det_matrix(8, 5, 0.9, 0.4, 0.3)
    ra = 1 - np.corrcoef(a)
    rb = 1 - np.corrcoef(b)
    iu = np.triu_indices(8, 1)
    r = scipy.stats.pearsonr(ra[iu], rb[iu])[0]
    print(f"  rsa={r:.12f} squared={r * r:.12f}")
    print("# hierarchy correlation, levels [1,2,3,1,2,3], d_ij = |li-lj|*0.3 + 0.1 + 0.05*sin(i+2j) (i<j)")
    lv = [1, 2, 3, 1, 2, 3]
    d, dist = [], []
    for p in range(6):
        for q in range(p + 1, 6):
            d.append(abs(lv[p] - lv[q]) * 0.3 + 0.1 + 0.05 * math.sin(p + 2 * q))
            dist.append(abs(lv[p] - lv[q]))
    print(f"  r={scipy.stats.pearsonr(d, dist)[0]:.12f}")


if __name__ == "__main__":
    softplus_inverse()
    lasso()
    nnls_qp_bruteforce()
    poisson_glm()
    yeo_johnson()
    lp_transport()
    rsa_and_hierarchy()
