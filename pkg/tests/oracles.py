"""Independent test oracles.

These implementations deliberately avoid the package's computation paths:
the wedge expansion iterates raw symbol choices, the defining-function
oracle re-evaluates the polynomial from its definition, and derivative
oracles are plain central differences.
"""

import numpy as np


def brute_wedge_expansion(eta, d_zbar, d_zetabar, d_t):
    """Expand sum_k (-1)^(k-1) eta_k wedge_{j!=k} d(eta_j) over raw symbols.

    Symbols 0..n-1: dzbar, n..2n-1: dzetabar, 2n: dt.  Returns a dict
    (zbar tuple, zetabar tuple, dt flag) -> coefficient.
    """
    from itertools import product

    n = len(eta)
    out = {}
    for k in range(n):
        rows = [j for j in range(n) if j != k]
        choices = []
        for j in rows:
            opts = [(l, d_zbar[j, l]) for l in range(n)]
            opts += [(n + l, d_zetabar[j, l]) for l in range(n)]
            opts.append((2 * n, d_t[j]))
            choices.append([o for o in opts if o[1] != 0])
        for combo in product(*choices):
            syms = [c[0] for c in combo]
            if len(set(syms)) != len(syms):
                continue
            coeff = eta[k] * (-1) ** k
            for _, c in combo:
                coeff = coeff * c
            sign = 1
            lst = list(syms)
            for i in range(len(lst)):
                for j2 in range(i + 1, len(lst)):
                    if lst[j2] < lst[i]:
                        sign = -sign
            ss = sorted(syms)
            key = (tuple(s for s in ss if s < n),
                   tuple(s - n for s in ss if n <= s < 2 * n),
                   1 if 2 * n in ss else 0)
            out[key] = out.get(key, 0.0) + sign * coeff
    return out


def defining_polynomial(n, m, hermitian, z):
    """Direct re-evaluation of Im w_k - z'^H H_k z' from the definition."""
    z = np.asarray(z, dtype=complex)
    zp = z[:n - m]
    out = []
    for k in range(m):
        acc = 0.0
        for i in range(n - m):
            for j in range(n - m):
                acc += (np.conj(zp[i]) * hermitian[k][i, j] * zp[j]).real
        out.append(z[n - m + k].imag - acc)
    return np.array(out)


def central_diff(fn, x, step):
    return (fn(x + step) - fn(x - step)) / (2.0 * step)


def fd_hessian_mixed(fn, z, a, b, step=1e-4):
    """Mixed Wirtinger second derivative d^2 f / d z_a d zbar_b by nested
    central differences in real coordinates."""
    def d_za(point):
        px = point.copy(); px[a] += step
        mx = point.copy(); mx[a] -= step
        py = point.copy(); py[a] += 1j * step
        my = point.copy(); my[a] -= 1j * step
        fx = (fn(px) - fn(mx)) / (2 * step)
        fy = (fn(py) - fn(my)) / (2 * step)
        return 0.5 * (fx - 1j * fy)

    px = z.copy(); px[b] += step
    mx = z.copy(); mx[b] -= step
    py = z.copy(); py[b] += 1j * step
    my = z.copy(); my[b] -= 1j * step
    fx = (d_za(px) - d_za(mx)) / (2 * step)
    fy = (d_za(py) - d_za(my)) / (2 * step)
    return 0.5 * (fx + 1j * fy)


def loglog_fit(x, y):
    lx = np.log(np.asarray(x, float))
    ly = np.log(np.abs(np.asarray(y, float)))
    lx = lx - lx.mean()
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))
