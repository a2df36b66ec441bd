"""Independent reference solves for case9 with scipy (SLSQP).

Prints the centralized optimum and the single-block proximal optimum
(rho = 500, unit weights, flat-start anchor). The C++ tests freeze both.
"""
import re
import sys

import numpy as np
from scipy.optimize import minimize


def load(path):
    text = re.sub(r"%[^\n]*", "", open(path).read())
    base = float(re.search(r"mpc\.baseMVA\s*=\s*([-\d.eE+]+)", text).group(1))

    def matrix(name):
        body = re.search(r"mpc\.%s\s*=\s*\[(.*?)\]" % name, text, re.S).group(1)
        rows = [r.split() for r in re.split(r"[;\n]", body) if r.strip()]
        return np.array([[float(v) for v in r] for r in rows])

    return base, matrix("bus"), matrix("gen"), matrix("branch"), matrix("gencost")


def ybus(base, bus, branch):
    n = len(bus)
    idx = {int(b[0]): i for i, b in enumerate(bus)}
    y = np.zeros((n, n), complex)
    for br in branch:
        if br[10] == 0:
            continue
        f, t = idx[int(br[0])], idx[int(br[1])]
        ys = 1 / complex(br[2], br[3])
        bc = br[4]
        tap = br[8] if br[8] != 0 else 1.0
        a = tap * np.exp(1j * np.deg2rad(br[9]))
        y[f, f] += (ys + 1j * bc / 2) / (tap * tap)
        y[t, t] += ys + 1j * bc / 2
        y[f, t] += -ys / np.conj(a)
        y[t, f] += -ys / a
    for i, b in enumerate(bus):
        y[i, i] += complex(b[4], b[5]) / base
    return y, idx


def main(path):
    base, bus, gen, branch, cost = load(path)
    y, idx = ybus(base, bus, branch)
    n, ng = len(bus), len(gen)
    gbus = [idx[int(g[0])] for g in gen]
    slack = [i for i, b in enumerate(bus) if int(b[1]) == 3][0]
    vs = [g[5] for g in gen if idx[int(g[0])] == slack][0]

    def unpack(z):
        return z[:n], z[n:2 * n], z[2 * n:2 * n + ng], z[2 * n + ng:]

    def f(z):
        _, _, p, _ = unpack(z)
        pm = p * base
        return float(np.sum(cost[:, 4] * pm ** 2 + cost[:, 5] * pm + cost[:, 6]))

    def pf(z):
        th, v, p, q = unpack(z)
        vc = v * np.exp(1j * th)
        s = vc * np.conj(y @ vc)
        inj = np.zeros(n, complex)
        for k, b in enumerate(gbus):
            inj[b] += p[k] + 1j * q[k]
        mis = s - inj + (bus[:, 2] + 1j * bus[:, 3]) / base
        return np.concatenate([mis.real, mis.imag])

    lb = np.concatenate([np.full(n, -np.inf), bus[:, 12], gen[:, 9] / base, gen[:, 4] / base])
    ub = np.concatenate([np.full(n, np.inf), bus[:, 11], gen[:, 8] / base, gen[:, 3] / base])
    lb[slack], ub[slack] = 0.0, 0.0
    lb[n + slack], ub[n + slack] = vs, vs
    flat = np.concatenate([np.zeros(n), np.ones(n), 0.5 * (lb[2 * n:] + ub[2 * n:])])
    flat[n + slack] = vs
    bounds = list(zip(np.where(np.isinf(lb), None, lb), np.where(np.isinf(ub), None, ub)))
    cons = [{"type": "eq", "fun": pf}]
    opts = {"ftol": 1e-14, "maxiter": 2000}

    central = minimize(f, flat, method="SLSQP", bounds=bounds, constraints=cons, options=opts)
    print("central %.9f success=%s" % (central.fun, central.success))

    def prox(z):
        return f(z) + 250.0 * float(np.sum((z - flat) ** 2))

    local = minimize(prox, central.x, method="SLSQP", bounds=bounds, constraints=cons, options=opts)
    print("proximal %.9f success=%s" % (local.fun, local.success))


if __name__ == "__main__":
    main(sys.argv[1])
