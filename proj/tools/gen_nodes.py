#!/usr/bin/env python3
"""Generate interpolation node tables (data/nodes_p{4,8,16}.txt).

Approximate Fekete points on the reference simplex T0 = {u,v >= 0, u+v <= 1}:
greedy volume maximization (column-pivoted QR) over a dense symmetrized
candidate set in the orthonormal Koornwinder basis, driven to a continuous
local optimum by maxvol exchange sweeps over progressively refined local
grids around the current nodes.  The build-time checks mirror what
build_basis() re-verifies: strictly interior nodes, positive weights summing
to |T0| = 1/2, and a modest Vandermonde condition number.

File format: first line p, then n_p lines "u v".
"""

import os

import numpy as np
import scipy.linalg as la

DATA = os.path.join(os.path.dirname(__file__), "..", "data")
MARGIN = 2e-5


def koornwinder(p, u, v):
    """Orthonormal basis on T0, ordered by total degree k then j.  Shape (len(u), n_p)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = p * (p + 1) // 2
    out = np.empty((u.size, n))
    # q_j = P_j(xi) (1-v)^j, singularity-free at v = 1
    q = np.empty((p, u.size))
    q[0] = 1.0
    if p > 1:
        q[1] = 2 * u - (1 - v)
    for j in range(1, p - 1):
        q[j + 1] = ((2 * j + 1) * (2 * u - (1 - v)) * q[j] - j * (1 - v) ** 2 * q[j - 1]) / (j + 1)
    eta = 2 * v - 1
    col = 0
    for k in range(p):
        for j in range(k + 1):
            m = k - j
            a = 2 * j + 1
            # P_m^{(a,0)}(eta) by the standard three-term recurrence
            pm1, pm = np.zeros_like(eta), np.ones_like(eta)
            for mm in range(1, m + 1):
                if mm == 1:
                    cur = (a + 2) * eta / 2 + a / 2
                else:
                    c1 = 2 * mm * (mm + a) * (2 * mm + a - 2)
                    c2 = (2 * mm + a - 1) * ((2 * mm + a) * (2 * mm + a - 2) * eta + a * a)
                    c3 = 2 * (mm + a - 1) * (mm - 1) * (2 * mm + a)
                    cur = (c2 * pm - c3 * pm1) / c1
                pm1, pm = pm, cur
            scale = np.sqrt(2.0 * (2 * j + 1) * (m + j + 1))
            out[:, col] = scale * q[j] * pm
            col += 1
    return out


def interior(u, v):
    return np.minimum(np.minimum(u, v), 1 - u - v) > MARGIN


def symmetrize(u, v):
    bary = np.stack([u, v, 1 - u - v], 1)
    perms = [(0, 1, 2), (1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0), (2, 0, 1)]
    pts = np.concatenate([bary[:, list(q)] for q in perms], 0)
    pts = np.unique(np.round(pts[:, :2], 13), axis=0)
    return pts[:, 0], pts[:, 1]


def base_candidates(p):
    # Duffy-mapped Gauss grid clusters near edges the way optimal nodes do
    # (closest ~ (pi/2p)^2/2 from an edge); symmetrize to kill the map's bias.
    ng = max(60, 6 * p)
    x, _ = np.polynomial.legendre.leggauss(ng)
    s = (x + 1) / 2
    S, T = np.meshgrid(s, s, indexing="ij")
    u = (S * (1 - T)).ravel()
    v = T.ravel()
    u, v = symmetrize(u, v)
    keep = interior(u, v)
    return u[keep], v[keep]


def maxvol(A, sel, tol=1e-10, refresh=64):
    sel = list(sel)
    n = A.shape[1]
    B = A @ la.inv(A[sel])
    for it in range(20000):
        i, j = np.unravel_index(np.argmax(np.abs(B)), B.shape)
        if abs(B[i, j]) < 1 + tol:
            break
        sel[j] = i
        if (it + 1) % refresh == 0:
            B = A @ la.inv(A[sel])
        else:
            ej = np.zeros(n)
            ej[j] = 1.0
            B -= np.outer(B[:, j], B[i, :] - ej) / B[i, j]
    return np.array(sel)


def local_pool(uu, vv, hw, m=7):
    off = np.linspace(-hw, hw, m)
    du, dv = np.meshgrid(off, off, indexing="ij")
    u = (uu[:, None] + du.ravel()[None, :]).ravel()
    v = (vv[:, None] + dv.ravel()[None, :]).ravel()
    keep = interior(u, v)
    return np.concatenate([uu, u[keep]]), np.concatenate([vv, v[keep]])


def node_weights(p, uu, vv):
    V = koornwinder(p, uu, vv)        # node-row Vandermonde V[j, n] = K_n(u_j, v_j)
    U = la.inv(V)
    return (np.sqrt(2) / 2) * U[0, :], U, np.linalg.cond(V)


def polish_weights(p, uu, vv, target=1e-5):
    """Nudge nodes until all interpolatory weights clear `target`.

    Gradient descent on J = sum_j exp(-w_j/s).  Since w_j = m1*(V^-1)[0,j] and
    moving node k perturbs only row k of V, dw_j/dx_k = -w_k*(dK_k^T U)_j with
    dK_k the basis-derivative vector at node k (finite differences suffice).
    Interpolatory exactness (sum w = 1/2, degree < p) holds for any node set,
    so only positivity, interiority, and conditioning need watching.
    """
    s, h = 1e-4, 1e-7
    uu, vv = uu.copy(), vv.copy()
    scale = 2e-5
    for _ in range(3000):
        w, U, _ = node_weights(p, uu, vv)
        if w.min() >= target:
            break
        g = -np.exp(-np.clip(w / s, -50, 50)) / s
        Ug = U @ g
        dKu = (koornwinder(p, uu + h, vv) - koornwinder(p, uu - h, vv)) / (2 * h)
        dKv = (koornwinder(p, uu, vv + h) - koornwinder(p, uu, vv - h)) / (2 * h)
        grad_u = -w * (dKu @ Ug)
        grad_v = -w * (dKv @ Ug)
        gmax = max(np.abs(grad_u).max(), np.abs(grad_v).max(), 1e-30)
        ok = False
        for _ in range(30):
            un, vn = uu - scale / gmax * grad_u, vv - scale / gmax * grad_v
            stay = ~interior(un, vn)       # nodes that would leave stay put
            un[stay], vn[stay] = uu[stay], vv[stay]
            if node_weights(p, un, vn)[0].min() > w.min():
                uu, vv, ok = un, vn, True
                scale *= 1.3
                break
            scale /= 2
        if not ok:
            break
    return uu, vv


def approx_fekete(p):
    u, v = base_candidates(p)
    A = koornwinder(p, u, v)
    n = A.shape[1]
    _, _, piv = la.qr(A.T, pivoting=True)
    sel = maxvol(A, piv[:n])
    uu, vv = u[sel], v[sel]
    for hw in (0.02, 0.007, 0.0023, 0.0008, 0.00027):
        u, v = local_pool(uu, vv, hw)
        A = koornwinder(p, u, v)
        sel = maxvol(A, np.arange(n))
        uu, vv = u[sel], v[sel]
    uu, vv = polish_weights(p, uu, vv)
    w, _, cond = node_weights(p, uu, vv)
    return uu, vv, w, cond


def main():
    for p in (4, 8, 16):
        uu, vv, w, cond = approx_fekete(p)
        assert np.all(interior(uu, vv))
        assert np.all(w > 0), "nonpositive weight at p=%d (min %g)" % (p, w.min())
        assert abs(w.sum() - 0.5) < 1e-12
        assert abs(w @ (uu * vv) - 1.0 / 24) < 1e-12   # exact for degree < p
        assert cond < 1e4
        path = os.path.join(DATA, "nodes_p%d.txt" % p)
        with open(path, "w") as f:
            f.write("%d\n" % p)
            for a, b in zip(uu, vv):
                f.write("%.17e %.17e\n" % (a, b))
        print("p=%2d  n=%3d  cond(V)=%.3g  min w=%.3g  wrote %s"
              % (p, len(w), cond, w.min(), path))


if __name__ == "__main__":
    main()
