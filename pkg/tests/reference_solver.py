"""Independent reference solver for cross-checking the interior-point method.

Plain ADMM (operator splitting between an affine set and a product cone)
on the real form of a :class:`ConicProblem`:

* each Hermitian ``n x n`` variable becomes a real symmetric ``2n x 2n``
  block ``[[Re X, -Im X], [Im X, Re X]]`` so that
  ``<A, X> = tr(emb(A) Y) / 2``;
* each LMI gets a PSD slack block equal to its affine matrix;
* each inequality gets a nonnegative slack.

It shares no code with :mod:`estbeam.conic` beyond reading the problem
description.
"""

from __future__ import annotations

import numpy as np


def embed(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


class _Layout:
    def __init__(self, problem):
        self.problem = problem
        off = 0
        self.scalar = {}
        for s in problem.scalar_vars:
            self.scalar[s] = off
            off += 1
        self.free = off
        self.blocks = []                      # (offset, dim) of PSD blocks
        self.matrix = {}
        for v in problem.matrix_vars:
            m = 2 * v.dim
            self.matrix[v.name] = (off, m)
            self.blocks.append((off, m))
            off += m * m
        self.lmi = []
        for lmi in problem.lmis:
            m = lmi.dim
            self.lmi.append((off, m))
            self.blocks.append((off, m))
            off += m * m
        self.ineq = {}
        for c in problem.constraints:
            if c.sense != "==":
                self.ineq[c.name] = off
                off += 1
        self.nonneg = (min(self.ineq.values()) if self.ineq else off, off)
        self.n = off

    def row(self, expr) -> tuple:
        """Coefficient row and constant of an affine expression."""
        r = np.zeros(self.n)
        for s, v in expr.scalars.items():
            r[self.scalar[s]] += v
        for name, A in expr.matrices.items():
            o, m = self.matrix[name]
            r[o:o + m * m] += 0.5 * embed(A).ravel()
        return r, expr.const


def _project_cone(v, lay):
    out = v.copy()
    for o, m in lay.blocks:
        Y = v[o:o + m * m].reshape(m, m)
        Y = 0.5 * (Y + Y.T)
        w, U = np.linalg.eigh(Y)
        out[o:o + m * m] = ((U * np.maximum(w, 0.0)) @ U.T).ravel()
    a, b = lay.nonneg
    out[a:b] = np.maximum(v[a:b], 0.0)
    return out


def admm_solve(problem, rho: float = 1.0, max_iterations: int = 200_000, tol: float = 1e-10,
               alpha: float = 1.6):
    """Return ``(objective, matrices, scalars)`` at the ADMM limit point."""
    lay = _Layout(problem)
    rows, rhs = [], []
    for c in problem.constraints:
        r, k = lay.row(c.expr)
        if c.sense == "<=":
            r[lay.ineq[c.name]] = 1.0
        elif c.sense == ">=":
            r[lay.ineq[c.name]] = -1.0
        rows.append(r)
        rhs.append(-k)
    for (o, m), lmi in zip(lay.lmi, problem.lmis):
        for i in range(m):
            for j in range(i, m):
                r, k = lay.row(lmi.entry(i, j))
                r = -r
                r[o + i * m + j] += 0.5
                r[o + j * m + i] += 0.5
                rows.append(r)
                rhs.append(k)
    A = np.array(rows).reshape(-1, lay.n)
    b = np.array(rhs)
    c, c0 = lay.row(problem.objective)
    if A.shape[0]:
        pinv = np.linalg.pinv(A)
        P = np.eye(lay.n) - pinv @ A
        q = pinv @ b
    else:
        P = np.eye(lay.n)
        q = np.zeros(lay.n)

    z = np.zeros(lay.n)
    u = np.zeros(lay.n)
    for it in range(max_iterations):
        x = P @ (z - u - c / rho) + q
        xh = alpha * x + (1 - alpha) * z
        z_old = z
        z = _project_cone(xh + u, lay)
        u = u + xh - z
        if it % 50 == 0:
            r_p = np.linalg.norm(x - z)
            r_d = rho * np.linalg.norm(z - z_old)
            scale = 1.0 + max(np.linalg.norm(x), np.linalg.norm(z))
            if r_p < tol * scale and r_d < tol * (1.0 + np.linalg.norm(c)):
                break
            # residual balancing keeps both residuals shrinking together
            if r_p > 10 * r_d:
                rho *= 2.0
                u /= 2.0
            elif r_d > 10 * r_p:
                rho /= 2.0
                u *= 2.0
    matrices = {}
    for v in problem.matrix_vars:
        o, m = lay.matrix[v.name]
        Y = z[o:o + m * m].reshape(m, m)
        n = v.dim
        re = 0.5 * (Y[:n, :n] + Y[n:, n:])
        im = 0.5 * (Y[n:, :n] - Y[:n, n:])
        matrices[v.name] = re + 1j * im
    scalars = {s: float(z[i]) for s, i in lay.scalar.items()}
    return float(c @ z + c0), matrices, scalars


def _rand_herm(rng, n, scale=1.0):
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (G + G.conj().T) / 2


def _rand_pd(rng, n):
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return G @ G.conj().T / n + 0.2 * np.eye(n)


def random_problem(rng):
    """Random strictly feasible conic problem with a compact feasible set.

    A strictly feasible point ``x0`` is drawn first and every constraint is
    built to hold at it with slack (equalities exactly).  Trace caps on the
    matrix variables and box bounds on the scalars keep the feasible set
    bounded, so an optimum exists and strong duality holds.
    """
    from estbeam.conic import Affine, ProblemBuilder

    pb = ProblemBuilder()
    dims = [int(rng.integers(1, 7))]
    if rng.random() < 0.5:
        dims.append(int(rng.integers(1, 5)))
    names = [pb.hermitian(f"X{j}", n) for j, n in enumerate(dims)]
    X0 = {name: _rand_pd(rng, n) for name, n in zip(names, dims)}
    n_s = int(rng.integers(0, 3))
    svars = [pb.scalar(f"s{i}") for i in range(n_s)]
    s0 = {f"s{i}": float(rng.uniform(-1, 1)) for i in range(n_s)}

    def random_expr():
        e = Affine()
        for name, n in zip(names, dims):
            e = e + Affine.inner(name, _rand_herm(rng, n))
        for s in svars:
            e = e + s * float(rng.standard_normal())
        return e

    def at_x0(e):
        return e.value(s0, X0)

    for i in range(int(rng.integers(0, 3))):
        e = random_expr()
        pb.add(e, "==", at_x0(e), name=f"eq{i}")
    for i in range(int(rng.integers(0, 4))):
        e = random_expr()
        slack = float(rng.uniform(0.1, 1.0))
        if rng.random() < 0.5:
            pb.add(e, "<=", at_x0(e) + slack, name=f"le{i}")
        else:
            pb.add(e, ">=", at_x0(e) - slack, name=f"ge{i}")
    for name, n in zip(names, dims):
        pb.add(Affine.inner(name, np.eye(n)), "<=", float(np.trace(X0[name]).real) + 1.0,
               name=f"cap_{name}")
    for s in svars:
        pb.add(s, "<=", 5.0)
        pb.add(s, ">=", -5.0)
    if rng.random() < 0.6:
        m = int(rng.integers(2, 4))
        entries = [[None] * m for _ in range(m)]
        target = np.real(_rand_pd(rng, m))
        for i in range(m):
            for j in range(i, m):
                e = random_expr()
                entries[i][j] = e + (target[i, j] - at_x0(e))
        pb.add_lmi(entries, name="lmi")
    obj = random_expr()
    pb.minimize(obj)
    return pb.build()
