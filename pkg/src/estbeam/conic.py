"""Dense conic programs over Hermitian PSD matrices and real scalars.

A :class:`ConicProblem` has a real-linear objective over Hermitian matrix
variables (each constrained PSD) and scalar variables, real-linear
equality/inequality constraints, and real symmetric linear matrix
inequalities whose entries are affine expressions.  :func:`solve` runs a
homogeneous self-dual primal-dual interior-point method with
Nesterov-Todd scaling and certifies the answer by re-evaluating every
constraint from the problem description, independently of the solver's
internal representation.

Inner products against a matrix variable ``X`` are written with a
Hermitian coefficient matrix ``A`` and mean ``real(trace(A^H X))``.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla

Number = Union[int, float]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical-failure"

_SENSES = ("==", "<=", ">=")


# ---------------------------------------------------------------------------
# Hermitian parametrization
# ---------------------------------------------------------------------------

def herm_to_params(X: np.ndarray) -> np.ndarray:
    """Real coordinates of a Hermitian matrix.

    Layout: the ``n`` diagonal entries, then real parts and then imaginary
    parts of the strict upper triangle in row-major order.
    """
    X = np.asarray(X)
    n = X.shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate([np.real(np.diag(X)), np.real(X[iu]), np.imag(X[iu])])


def params_to_herm(v: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`herm_to_params`; the result is exactly Hermitian."""
    v = np.asarray(v, dtype=float)
    iu = np.triu_indices(n, 1)
    k = len(iu[0])
    X = np.zeros((n, n), dtype=complex)
    X[np.diag_indices(n)] = v[:n]
    X[iu] = v[n:n + k] + 1j * v[n + k:n + 2 * k]
    X[(iu[1], iu[0])] = np.conj(X[iu])
    return X


def herm_coef(A: np.ndarray) -> np.ndarray:
    """Coefficient vector ``c`` with ``c @ herm_to_params(X) == <A, X>``."""
    A = np.asarray(A)
    n = A.shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate([np.real(np.diag(A)), 2.0 * np.real(A[iu]), 2.0 * np.imag(A[iu])])


def inner(A: np.ndarray, X: np.ndarray) -> float:
    """Real inner product ``real(trace(A^H X))``."""
    return float(np.real(np.vdot(A, X)))


def hermitian_part(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + np.conj(X.T))


# ---------------------------------------------------------------------------
# Modelling layer
# ---------------------------------------------------------------------------

class Affine:
    """Real affine expression ``const + sum s_i x_i + sum <A_j, X_j>``.

    Scalar terms map a variable name to a real coefficient; matrix terms map
    a variable name to a Hermitian coefficient matrix.
    """

    __slots__ = ("const", "scalars", "matrices")

    def __init__(self, const: Number = 0.0,
                 scalars: Optional[Mapping[str, Number]] = None,
                 matrices: Optional[Mapping[str, np.ndarray]] = None):
        self.const = float(const)
        self.scalars: Dict[str, float] = {k: float(v) for k, v in (scalars or {}).items()}
        self.matrices: Dict[str, np.ndarray] = {
            k: np.asarray(v, dtype=complex) for k, v in (matrices or {}).items()}

    @classmethod
    def var(cls, name: str, coef: Number = 1.0) -> "Affine":
        return cls(scalars={name: coef})

    @classmethod
    def inner(cls, name: str, A: np.ndarray) -> "Affine":
        """The expression ``<A, X_name>`` for a Hermitian matrix ``A``."""
        A = np.asarray(A, dtype=complex)
        if not np.allclose(A, np.conj(A.T), atol=1e-12 * (1.0 + np.abs(A).max(initial=0.0))):
            raise ValueError("coefficient matrix must be Hermitian")
        return cls(matrices={name: hermitian_part(A)})

    @staticmethod
    def lift(value: Union["Affine", Number]) -> "Affine":
        return value if isinstance(value, Affine) else Affine(const=value)

    def __add__(self, other):
        other = Affine.lift(other)
        scalars = dict(self.scalars)
        for k, v in other.scalars.items():
            scalars[k] = scalars.get(k, 0.0) + v
        matrices = dict(self.matrices)
        for k, v in other.matrices.items():
            matrices[k] = matrices[k] + v if k in matrices else v
        return Affine(self.const + other.const, scalars, matrices)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) - self

    def __mul__(self, k: Number):
        if isinstance(k, Affine):
            raise TypeError("product of two affine expressions is not affine")
        k = float(k)
        return Affine(self.const * k, {n: v * k for n, v in self.scalars.items()},
                      {n: v * k for n, v in self.matrices.items()})

    __rmul__ = __mul__

    def __truediv__(self, k: Number):
        return self * (1.0 / float(k))

    def value(self, scalars: Mapping[str, float], matrices: Mapping[str, np.ndarray]) -> float:
        total = self.const
        for k, v in self.scalars.items():
            total += v * scalars[k]
        for k, A in self.matrices.items():
            total += inner(A, matrices[k])
        return total

    def magnitude(self, scalars: Mapping[str, float], matrices: Mapping[str, np.ndarray]) -> float:
        """Sum of absolute term values; the natural scale of a residual."""
        total = abs(self.const)
        for k, v in self.scalars.items():
            total += abs(v * scalars[k])
        for k, A in self.matrices.items():
            total += abs(inner(A, matrices[k]))
        return total

    def is_constant(self) -> bool:
        return not self.scalars and not self.matrices

    def __repr__(self):
        return (f"Affine(const={self.const!r}, scalars={sorted(self.scalars)}, "
                f"matrices={sorted(self.matrices)})")


@dataclasses.dataclass(frozen=True)
class MatrixVar:
    name: str
    dim: int
    field: str = "hermitian"


@dataclasses.dataclass(frozen=True)
class LinearConstraint:
    """``expr (sense) 0`` with sense one of ``==``, ``<=``, ``>=``."""

    name: str
    expr: Affine
    sense: str


@dataclasses.dataclass(frozen=True)
class LmiConstraint:
    """Real symmetric matrix of affine expressions constrained PSD.

    Only the upper triangle of ``entries`` is read.
    """

    name: str
    entries: Tuple[Tuple[Affine, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.entries)

    def entry(self, i: int, j: int) -> Affine:
        return self.entries[min(i, j)][max(i, j)]

    def evaluate(self, scalars, matrices) -> np.ndarray:
        m = self.dim
        F = np.empty((m, m))
        for i in range(m):
            for j in range(i, m):
                F[i, j] = F[j, i] = self.entries[i][j].value(scalars, matrices)
        return F


@dataclasses.dataclass(frozen=True)
class ConicProblem:
    """Minimize ``objective`` subject to linear constraints, LMIs and ``X_j ⪰ 0``."""

    matrix_vars: Tuple[MatrixVar, ...]
    scalar_vars: Tuple[str, ...]
    objective: Affine
    constraints: Tuple[LinearConstraint, ...]
    lmis: Tuple[LmiConstraint, ...] = ()

    def matrix_dims(self) -> Dict[str, int]:
        return {v.name: v.dim for v in self.matrix_vars}

    def num_scalars(self) -> int:
        return len(self.scalar_vars)


class ProblemBuilder:
    """Incremental construction of a :class:`ConicProblem`."""

    def __init__(self):
        self._matrix_vars: List[MatrixVar] = []
        self._scalars: List[str] = []
        self._objective = Affine()
        self._constraints: List[LinearConstraint] = []
        self._lmis: List[LmiConstraint] = []
        self._names = set()

    def _claim(self, name: str) -> str:
        if name in self._names:
            raise ValueError(f"duplicate name {name!r}")
        self._names.add(name)
        return name

    def hermitian(self, name: str, dim: int) -> str:
        if dim < 1:
            raise ValueError("matrix dimension must be positive")
        self._matrix_vars.append(MatrixVar(self._claim(name), int(dim)))
        return name

    def scalar(self, name: str) -> Affine:
        self._scalars.append(self._claim(name))
        return Affine.var(name)

    def minimize(self, expr: Union[Affine, Number]) -> None:
        self._objective = Affine.lift(expr)

    def add(self, lhs, sense: str, rhs=0.0, name: Optional[str] = None) -> str:
        if sense not in _SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        name = self._claim(name or f"c{len(self._constraints)}")
        self._constraints.append(LinearConstraint(name, Affine.lift(lhs) - Affine.lift(rhs), sense))
        return name

    def add_lmi(self, entries: Sequence[Sequence[Union[Affine, Number]]],
                name: Optional[str] = None) -> str:
        m = len(entries)
        if any(len(row) != m for row in entries):
            raise ValueError("LMI entries must form a square array")
        rows = tuple(tuple(Affine.lift(entries[i][j]) if j >= i else Affine()
                           for j in range(m)) for i in range(m))
        name = self._claim(name or f"lmi{len(self._lmis)}")
        self._lmis.append(LmiConstraint(name, rows))
        return name

    def build(self) -> ConicProblem:
        known_m = {v.name for v in self._matrix_vars}
        known_s = set(self._scalars)
        exprs = [self._objective] + [c.expr for c in self._constraints]
        exprs += [e for lmi in self._lmis for row in lmi.entries for e in row]
        dims = {v.name: v.dim for v in self._matrix_vars}
        for e in exprs:
            for k in e.scalars:
                if k not in known_s:
                    raise ValueError(f"unknown scalar variable {k!r}")
            for k, A in e.matrices.items():
                if k not in known_m:
                    raise ValueError(f"unknown matrix variable {k!r}")
                if A.shape != (dims[k], dims[k]):
                    raise ValueError(f"coefficient shape {A.shape} does not match {k!r}")
            if not math.isfinite(e.const):
                raise ValueError("non-finite constant in expression")
        return ConicProblem(tuple(self._matrix_vars), tuple(self._scalars), self._objective,
                            tuple(self._constraints), tuple(self._lmis))


# ---------------------------------------------------------------------------
# Solution and certificates
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class InfeasibilityCertificate:
    """Multipliers of a separating functional proving primal infeasibility.

    The weighted sum ``sum_i lambda_i g_i(x) + sum_k <Z_k, F_k(x)> +
    sum_j <S_j, X_j>`` (every ``g_i`` written in ``>= 0`` or ``== 0`` form,
    inequality multipliers nonnegative, ``Z_k``/``S_j`` PSD) has zero linear
    part and a negative constant, while it would be nonnegative at any
    feasible point.
    """

    multipliers: Dict[str, float]
    lmi_duals: Dict[str, np.ndarray]
    matrix_duals: Dict[str, np.ndarray]

    def check(self, problem: ConicProblem) -> Tuple[float, float]:
        """Return ``(relative linear residual, constant)``.

        The certificate is valid when the residual is small and the constant
        is negative.
        """
        lin, const, scale = _weighted_functional(problem, self.multipliers, self.lmi_duals,
                                                 self.matrix_duals, objective=False)
        return lin / max(scale, abs(const), 1e-300), const

    def is_valid(self, problem: ConicProblem, tol: float = 1e-6) -> bool:
        rel, const = self.check(problem)
        if const >= 0 or rel > tol:
            return False
        for c in problem.constraints:
            if c.sense != "==" and self.multipliers.get(c.name, 0.0) < -tol * abs(const):
                return False
        for Z in list(self.lmi_duals.values()) + list(self.matrix_duals.values()):
            ev = np.linalg.eigvalsh(Z)
            if ev.min() < -tol * max(1.0, np.abs(ev).max()):
                return False
        return True


@dataclasses.dataclass
class ConicSolution:
    status: str
    objective: float
    matrices: Dict[str, np.ndarray]
    scalars: Dict[str, float]
    multipliers: Dict[str, float]
    lmi_duals: Dict[str, np.ndarray]
    matrix_duals: Dict[str, np.ndarray]
    primal_residual: float
    dual_residual: float
    duality_gap: float
    iterations: int
    certificate: Optional[InfeasibilityCertificate] = None
    message: str = ""


def _normalized_sign(sense: str) -> float:
    """Sign turning ``expr (sense) 0`` into ``sign*expr >= 0`` (or ``== 0``)."""
    return -1.0 if sense == "<=" else 1.0


def _weighted_functional(problem, multipliers, lmi_duals, matrix_duals, objective: bool):
    """Evaluate ``[objective] - sum multiplier * constraint`` as an affine map.

    Returns the infinity norm of its linear part, its constant term and the
    largest magnitude of the individual terms entering the linear part.
    For the stationarity check the objective gradient is included and the
    constraints are subtracted; for certificates only the constraints are
    summed.
    """
    dims = problem.matrix_dims()
    mats = {k: np.zeros((n, n), dtype=complex) for k, n in dims.items()}
    mats_abs = {k: np.zeros((n, n)) for k, n in dims.items()}
    scal = {k: 0.0 for k in problem.scalar_vars}
    scal_abs = {k: 0.0 for k in problem.scalar_vars}
    sgn = -1.0 if objective else 1.0
    const = 0.0

    def accumulate(expr: Affine, weight: float):
        nonlocal const
        const += weight * expr.const
        for k, v in expr.scalars.items():
            scal[k] += weight * v
            scal_abs[k] += abs(weight * v)
        for k, A in expr.matrices.items():
            mats[k] += weight * A
            mats_abs[k] += np.abs(weight * A)

    if objective:
        accumulate(problem.objective, 1.0)
    for c in problem.constraints:
        lam = multipliers.get(c.name, 0.0)
        if lam:
            accumulate(c.expr, sgn * _normalized_sign(c.sense) * lam)
    for lmi in problem.lmis:
        Z = lmi_duals.get(lmi.name)
        if Z is None:
            continue
        for i in range(lmi.dim):
            for j in range(i, lmi.dim):
                w = Z[i, j] if i == j else Z[i, j] + Z[j, i]
                if w:
                    accumulate(lmi.entries[i][j], sgn * float(np.real(w)))
    for v in problem.matrix_vars:
        S = matrix_duals.get(v.name)
        if S is not None:
            mats[v.name] += sgn * S
            mats_abs[v.name] += np.abs(S)
    lin = 0.0
    scale = 0.0
    for k in problem.scalar_vars:
        lin = max(lin, abs(scal[k]))
        scale = max(scale, scal_abs[k])
    for k in dims:
        if mats[k].size:
            lin = max(lin, float(np.abs(mats[k]).max()))
            scale = max(scale, float(mats_abs[k].max()))
    return lin, const, scale


def certify(problem: ConicProblem, matrices: Mapping[str, np.ndarray],
            scalars: Mapping[str, float], multipliers: Mapping[str, float],
            lmi_duals: Mapping[str, np.ndarray], matrix_duals: Mapping[str, np.ndarray]
            ) -> Tuple[float, float, float]:
    """Scaled primal residual, dual residual and duality gap of a primal-dual pair.

    Everything is recomputed from the :class:`ConicProblem` description.

    * primal: constraint violation divided by ``1 + sum |terms|``, LMI and
      matrix-variable eigenvalue violation divided by ``1 + norm``;
    * dual: stationarity residual of the Lagrangian divided by ``1 +`` the
      largest term, together with dual cone violations;
    * gap: total complementarity divided by ``1 + |objective|``.
    """
    pres = 0.0
    for c in problem.constraints:
        val = c.expr.value(scalars, matrices)
        scale = 1.0 + c.expr.magnitude(scalars, matrices)
        if c.sense == "==":
            viol = abs(val)
        elif c.sense == "<=":
            viol = max(val, 0.0)
        else:
            viol = max(-val, 0.0)
        pres = max(pres, viol / scale)
    for lmi in problem.lmis:
        F = lmi.evaluate(scalars, matrices)
        scale = 1.0 + max(lmi.entry(i, j).magnitude(scalars, matrices)
                          for i in range(lmi.dim) for j in range(i, lmi.dim))
        pres = max(pres, max(-np.linalg.eigvalsh(F).min(), 0.0) / scale)
    for v in problem.matrix_vars:
        X = matrices[v.name]
        ev = np.linalg.eigvalsh(X)
        pres = max(pres, max(-ev.min(), 0.0) / (1.0 + np.abs(ev).max()))

    lin, _, scale = _weighted_functional(problem, multipliers, lmi_duals, matrix_duals,
                                         objective=True)
    dres = lin / (1.0 + scale)
    for c in problem.constraints:
        if c.sense != "==":
            lam = multipliers.get(c.name, 0.0)
            dres = max(dres, max(-lam, 0.0) / (1.0 + abs(lam)))
    for Z in list(lmi_duals.values()) + list(matrix_duals.values()):
        ev = np.linalg.eigvalsh(Z)
        dres = max(dres, max(-ev.min(), 0.0) / (1.0 + np.abs(ev).max()))

    comp = 0.0
    for c in problem.constraints:
        if c.sense != "==":
            comp += multipliers.get(c.name, 0.0) * _normalized_sign(c.sense) * c.expr.value(
                scalars, matrices)
    for lmi in problem.lmis:
        comp += float(np.sum(lmi_duals[lmi.name] * lmi.evaluate(scalars, matrices)))
    for v in problem.matrix_vars:
        comp += inner(matrix_duals[v.name], matrices[v.name])
    obj = problem.objective.value(scalars, matrices)
    gap = abs(comp) / (1.0 + abs(obj))
    return pres, dres, gap


# ---------------------------------------------------------------------------
# Standard form:  minimize c'x  s.t.  G x + s = h,  s in K,  A x = b
# ---------------------------------------------------------------------------

class _PsdBlock:
    """One PSD cone of the standard form.

    ``kind == "var"``: the slack is the Hermitian matrix variable itself
    (``G = -basis``, ``h = 0``).  ``kind == "lmi"``: the slack is the real
    symmetric matrix ``F0 + sum_p x_p F_p``; only the support entries of the
    ``F_p`` are stored, as columns of ``M``.
    """

    def __init__(self, kind: str, dim: int, h: np.ndarray, *, offset: int = 0,
                 act: Optional[np.ndarray] = None, rows: Optional[np.ndarray] = None,
                 cols: Optional[np.ndarray] = None, M: Optional[np.ndarray] = None):
        self.kind = kind
        self.dim = dim
        self.h = h
        self.offset = offset
        self.act = act
        self.rows = rows
        self.cols = cols
        self.M = M
        self.complex = kind == "var"
        if kind == "var":
            n = dim
            self.nparam = n * n
            iu = np.triu_indices(n, 1)
            self._diag_flat = np.arange(n) * (n + 1)
            self._up_flat = iu[0] * n + iu[1]
            self._low_flat = iu[1] * n + iu[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``G x`` restricted to this cone."""
        if self.kind == "var":
            return -params_to_herm(x[self.offset:self.offset + self.nparam], self.dim)
        F = np.zeros((self.dim, self.dim))
        F[self.rows, self.cols] = x[self.act] @ self.M
        return -F

    def apply_t(self, Z: np.ndarray, out: np.ndarray) -> None:
        """``out += G^T Z`` for this cone."""
        if self.kind == "var":
            out[self.offset:self.offset + self.nparam] -= herm_coef(Z)
        else:
            out[self.act] -= self.M @ np.real(Z[self.rows, self.cols])

    def add_hessian(self, H: np.ndarray, T: np.ndarray) -> None:
        """``H += G^T T(.)T G`` for this cone."""
        if self.kind == "var":
            n = self.dim
            K = np.kron(T, T.T)
            # Columns: vec of the basis matrices; rows: coefficient extraction.
            KB = np.empty((n * n, n * n), dtype=complex)
            k = len(self._up_flat)
            KB[:, :n] = K[:, self._diag_flat]
            KB[:, n:n + k] = K[:, self._up_flat] + K[:, self._low_flat]
            KB[:, n + k:] = 1j * (K[:, self._up_flat] - K[:, self._low_flat])
            blk = np.concatenate([KB[self._diag_flat].real, 2.0 * KB[self._up_flat].real,
                                  2.0 * KB[self._up_flat].imag])
            sl = slice(self.offset, self.offset + self.nparam)
            H[sl, sl] += blk
        else:
            raise TypeError("LMI blocks are accumulated by _lmi_hessian")

    def lmi_factors(self, T: np.ndarray):
        """``(M KS, M)`` with ``KS[a, b] = T[j_a, i_b] T[j_b, i_a]``.

        The Hessian block equals ``(M KS) M^T``.
        """
        TS = T[np.ix_(self.cols, self.rows)]
        return self.M @ (TS * TS.T), self.M


class _StandardForm:
    def __init__(self, problem: ConicProblem):
        self.problem = problem
        offsets = {}
        pos = 0
        for v in problem.matrix_vars:
            offsets[v.name] = pos
            pos += v.dim * v.dim
        self.matrix_offsets = offsets
        self.scalar_index = {}
        for name in problem.scalar_vars:
            self.scalar_index[name] = pos
            pos += 1
        self.nx = pos

        self.c = self.linearize(problem.objective)[1]
        self.c0 = problem.objective.const

        a_rows, b_vals, g_rows, h_vals = [], [], [], []
        self.eq_names, self.ineq_names, self.ineq_signs = [], [], []
        for con in problem.constraints:
            k, a = self.linearize(con.expr)
            if con.sense == "==":
                a_rows.append(a)
                b_vals.append(-k)
                self.eq_names.append(con.name)
            elif con.sense == "<=":
                g_rows.append(a)
                h_vals.append(-k)
                self.ineq_names.append(con.name)
                self.ineq_signs.append(-1.0)
            else:
                g_rows.append(-a)
                h_vals.append(k)
                self.ineq_names.append(con.name)
                self.ineq_signs.append(1.0)
        self.A = np.array(a_rows).reshape(len(a_rows), self.nx)
        self.b = np.array(b_vals, dtype=float)
        self.Gl = np.array(g_rows).reshape(len(g_rows), self.nx)
        self.hl = np.array(h_vals, dtype=float)

        self.blocks: List[_PsdBlock] = []
        for lmi in problem.lmis:
            self.blocks.append(self._lmi_block(lmi))
        for v in problem.matrix_vars:
            self.blocks.append(_PsdBlock("var", v.dim, np.zeros((v.dim, v.dim), dtype=complex),
                                         offset=offsets[v.name]))
        self.degree = len(self.hl) + sum(b.dim for b in self.blocks)
        self.col_scale = np.ones(self.nx)
        self.row_l = np.ones(len(self.hl))
        self.row_a = np.ones(len(self.b))
        self.omega = 1.0

        used = np.zeros(self.nx, dtype=bool)
        used |= np.any(self.A != 0, axis=0) if self.A.size else False
        used |= np.any(self.Gl != 0, axis=0) if self.Gl.size else False
        for blk in self.blocks:
            if blk.kind == "var":
                used[blk.offset:blk.offset + blk.nparam] = True
            else:
                used[blk.act] = True
        if not used.all():
            missing = [n for n, i in self.scalar_index.items() if not used[i]]
            raise ValueError(f"variables {missing} appear in no constraint; fix them explicitly")

    def equilibrate(self, passes: int = 6) -> None:
        """Balance row and column magnitudes (Ruiz iterations).

        Linear rows get positive weights, LMI blocks a diagonal congruence,
        scalar columns individual weights and each matrix variable one
        common weight (the matrix-variable cone is rescaled along with it so
        the cone itself is unchanged).  The objective is normalized last.
        """
        var_blocks = [blk for blk in self.blocks if blk.kind == "var"]
        lmi_blocks = [blk for blk in self.blocks if blk.kind == "lmi"]
        for blk in lmi_blocks:
            blk.d = np.ones(blk.dim)
        for blk in var_blocks:
            blk.e = 1.0
        for _ in range(passes):
            if len(self.hl):
                r = np.abs(self.Gl).max(axis=1)
                r = np.where(r > 0, 1.0 / np.sqrt(np.where(r > 0, r, 1.0)), 1.0)
                self.Gl *= r[:, None]
                self.hl *= r
                self.row_l *= r
            if len(self.b):
                r = np.abs(self.A).max(axis=1)
                r = np.where(r > 0, 1.0 / np.sqrt(np.where(r > 0, r, 1.0)), 1.0)
                self.A *= r[:, None]
                self.b *= r
                self.row_a *= r
            for blk in lmi_blocks:
                if not blk.M.size:
                    continue
                N = np.zeros((blk.dim, blk.dim))
                np.maximum.at(N, (blk.rows, blk.cols), np.abs(blk.M).max(axis=0))
                rmax = N.max(axis=1)
                d = np.where(rmax > 0, 1.0 / np.sqrt(np.sqrt(np.where(rmax > 0, rmax, 1.0))), 1.0)
                blk.M = blk.M * (d[blk.rows] * d[blk.cols])[None, :]
                blk.h = d[:, None] * blk.h * d[None, :]
                blk.d = blk.d * d
            cmax = np.zeros(self.nx)
            if len(self.hl):
                cmax = np.maximum(cmax, np.abs(self.Gl).max(axis=0))
            if len(self.b):
                cmax = np.maximum(cmax, np.abs(self.A).max(axis=0))
            for blk in lmi_blocks:
                if blk.M.size:
                    cmax[blk.act] = np.maximum(cmax[blk.act], np.abs(blk.M).max(axis=1))
            e = np.where(cmax > 0, 1.0 / np.sqrt(np.where(cmax > 0, cmax, 1.0)), 1.0)
            for blk in var_blocks:
                sl = slice(blk.offset, blk.offset + blk.nparam)
                m = cmax[sl].max()
                e[sl] = 1.0 / math.sqrt(m) if m > 0 else 1.0
                blk.e *= e[blk.offset]
            self._scale_columns(e)
        cmax = float(np.abs(self.c).max()) if self.nx else 0.0
        if cmax > 0:
            self.omega = 1.0 / cmax
            self.c = self.c * self.omega

    def _scale_columns(self, e: np.ndarray) -> None:
        self.col_scale *= e
        self.c = self.c * e
        if len(self.hl):
            self.Gl *= e[None, :]
        if len(self.b):
            self.A *= e[None, :]
        for blk in self.blocks:
            if blk.kind == "lmi" and blk.M.size:
                blk.M = blk.M * e[blk.act][:, None]

    def unscale(self, x: np.ndarray, y: np.ndarray, z: list):
        """Map a scaled primal-dual point back to the original problem."""
        x = x * self.col_scale
        y = y * self.row_a / self.omega
        out = [z[0] * self.row_l / self.omega]
        for blk, Z in zip(self.blocks, z[1:]):
            if blk.kind == "lmi":
                out.append(blk.d[:, None] * Z * blk.d[None, :] / self.omega)
            else:
                out.append(Z / (blk.e * self.omega))
        return x, y, out

    def linearize(self, expr: Affine) -> Tuple[float, np.ndarray]:
        a = np.zeros(self.nx)
        for k, v in expr.scalars.items():
            a[self.scalar_index[k]] += v
        for k, A in expr.matrices.items():
            o = self.matrix_offsets[k]
            n = A.shape[0]
            a[o:o + n * n] += herm_coef(A)
        return expr.const, a

    def _lmi_block(self, lmi: LmiConstraint) -> _PsdBlock:
        m = lmi.dim
        F0 = np.zeros((m, m))
        rows, cols, vecs = [], [], []
        for i in range(m):
            for j in range(i, m):
                k, a = self.linearize(lmi.entries[i][j])
                F0[i, j] = F0[j, i] = k
                if np.any(a != 0):
                    rows.append(i)
                    cols.append(j)
                    vecs.append(a)
                    if i != j:
                        rows.append(j)
                        cols.append(i)
                        vecs.append(a)
        if vecs:
            V = np.array(vecs).T
        else:
            V = np.zeros((self.nx, 0))
        act = np.flatnonzero(np.any(V != 0, axis=1))
        return _PsdBlock("lmi", m, F0, act=act, rows=np.array(rows, dtype=int),
                         cols=np.array(cols, dtype=int), M=V[act])

    # cone-space helpers -----------------------------------------------------
    def G(self, x: np.ndarray) -> list:
        return [self.Gl @ x] + [blk.apply(x) for blk in self.blocks]

    def GT(self, z: list) -> np.ndarray:
        out = self.Gl.T @ z[0] if len(self.hl) else np.zeros(self.nx)
        out = np.array(out, dtype=float)
        for blk, Z in zip(self.blocks, z[1:]):
            blk.apply_t(Z, out)
        return out

    def h(self) -> list:
        return [self.hl.copy()] + [blk.h.copy() for blk in self.blocks]


# cone vectors are lists [l-part (1-D), block_1, block_2, ...]

def _cdot(u, v) -> float:
    return float(sum(np.real(np.vdot(a, b)) for a, b in zip(u, v)))


def _cnorm(u) -> float:
    return math.sqrt(max(_cdot(u, u), 0.0))


def _cadd(u, v, a=1.0):
    return [x + a * y for x, y in zip(u, v)]


def _cscale(u, a):
    return [a * x for x in u]


def _herm(X):
    return 0.5 * (X + np.conj(X.T))


class _Scaling:
    """Nesterov-Todd scaling for the product cone.

    For the orthant ``W z = w * z`` and ``W^{-T} s = s / w``; for a PSD block
    ``W Z = R^H Z R`` and ``W^{-T} S = R^{-1} S R^{-H}``.  Both give the
    scaled point ``lambda`` (a diagonal matrix for PSD blocks).
    """

    def __init__(self, w, lam_l, R, Rinv, lam):
        self.w = w
        self.lam_l = lam_l
        self.R = R
        self.Rinv = Rinv
        self.lam = lam

    @classmethod
    def from_pair(cls, s, z):
        w = np.sqrt(s[0] / z[0])
        lam_l = np.sqrt(s[0] * z[0])
        R, Rinv, lam = [], [], []
        for S, Z in zip(s[1:], z[1:]):
            r, ri, l = _nt_block(S, Z)
            R.append(r)
            Rinv.append(ri)
            lam.append(l)
        return cls(w, lam_l, R, Rinv, lam)

    def lam_vec(self):
        return [self.lam_l] + [np.diag(l).astype(R.dtype) for l, R in zip(self.lam, self.R)]

    def scale_z(self, z):
        """``W z``."""
        return [self.w * z[0]] + [_herm(np.conj(R.T) @ Z @ R) for R, Z in zip(self.R, z[1:])]

    def scale_s(self, s):
        """``W^{-T} s``."""
        return [s[0] / self.w] + [_herm(Ri @ S @ np.conj(Ri.T)) for Ri, S in zip(self.Rinv, s[1:])]

    def unscale_s(self, u):
        """``W^T u``."""
        return [self.w * u[0]] + [_herm(R @ U @ np.conj(R.T)) for R, U in zip(self.R, u[1:])]

    def unscale_z(self, u):
        """``W^{-1} u``."""
        return [u[0] / self.w] + [_herm(np.conj(Ri.T) @ U @ Ri) for Ri, U in zip(self.Rinv, u[1:])]

    def wtw(self, z):
        """``W^T W z``."""
        return self.unscale_s(self.scale_z(z))

    def tmats(self):
        """``(W^T W)^{-1}`` as ``1/w^2`` and the congruence matrices ``T``."""
        return 1.0 / self.w ** 2, [np.conj(Ri.T) @ Ri for Ri in self.Rinv]

    def update(self, s_new, z_new):
        """Rescale after a step; ``s_new``/``z_new`` are in scaled coordinates."""
        self.w = self.w * np.sqrt(s_new[0] / z_new[0])
        self.lam_l = np.sqrt(s_new[0] * z_new[0])
        for i, (S, Z) in enumerate(zip(s_new[1:], z_new[1:])):
            r, ri, l = _nt_block(S, Z)
            self.R[i] = self.R[i] @ r
            self.Rinv[i] = ri @ self.Rinv[i]
            self.lam[i] = l


def _nt_block(S, Z):
    Ls = np.linalg.cholesky(_herm(S))
    Lz = np.linalg.cholesky(_herm(Z))
    U, sv, Vh = np.linalg.svd(np.conj(Lz.T) @ Ls)
    isq = 1.0 / np.sqrt(sv)
    R = (Ls @ np.conj(Vh.T)) * isq
    Rinv = (isq[:, None] * np.conj(U.T)) @ np.conj(Lz.T)
    return R, Rinv, sv


def _jprod_lam(lam_l, lam, u):
    """``lambda o u``."""
    out = [lam_l * u[0]]
    for l, U in zip(lam, u[1:]):
        out.append(0.5 * (l[:, None] + l[None, :]) * U)
    return out


def _jdiv_lam(lam_l, lam, d):
    """Solve ``lambda o u = d``."""
    out = [d[0] / lam_l]
    for l, D in zip(lam, d[1:]):
        out.append(2.0 * D / (l[:, None] + l[None, :]))
    return out


def _jprod(u, v):
    out = [u[0] * v[0]]
    for U, V in zip(u[1:], v[1:]):
        out.append(0.5 * (U @ V + V @ U))
    return out


def _max_step(lam_l, lam, d) -> float:
    """Largest ``a`` with ``lambda + a d`` in the cone (``inf`` if unbounded)."""
    t = 0.0
    if len(lam_l):
        t = max(t, float(np.max(-d[0] / lam_l)))
    for l, D in zip(lam, d[1:]):
        isq = 1.0 / np.sqrt(l)
        M = _herm(isq[:, None] * D * isq[None, :])
        t = max(t, float(-np.linalg.eigvalsh(M)[0]))
    return math.inf if t <= 0 else 1.0 / t


class _Kkt:
    """Solver for ``[0 A' G'; A 0 0; G 0 -W'W] [x; y; z] = [bx; by; bz]``."""

    def __init__(self, sf: _StandardForm, dl, T):
        self.sf = sf
        self.dl = dl
        self.T = T
        nx = sf.nx
        H = np.zeros((nx, nx))
        if len(sf.hl):
            H += (sf.Gl.T * dl) @ sf.Gl
        lmi_u, lmi_v, lmi_rows = [], [], []
        for blk, Tm in zip(sf.blocks, T):
            if blk.kind == "var":
                blk.add_hessian(H, Tm)
            elif blk.M.size:
                u, v = blk.lmi_factors(np.real(Tm))
                lmi_u.append(u)
                lmi_v.append(v)
                lmi_rows.append(blk.act)
        if lmi_u:
            width = sum(u.shape[1] for u in lmi_u)
            U = np.zeros((nx, width))
            V = np.zeros((nx, width))
            col = 0
            for u, v, act in zip(lmi_u, lmi_v, lmi_rows):
                U[act, col:col + u.shape[1]] = u
                V[act, col:col + u.shape[1]] = v
                col += u.shape[1]
            H += U @ V.T
        A = sf.A
        # H + rho A'A with rho matched to the size of H keeps A H^-1 A' well conditioned
        # as the barrier terms grow; any rho > 0 gives the same solution.
        self.rho = 1.0
        if A.shape[0]:
            AtA = A.T @ A
            self.rho = max(1.0, float(np.abs(np.diag(H)).max())) / max(
                1e-300, float(np.abs(np.diag(AtA)).max()))
            H += self.rho * AtA
        H = 0.5 * (H + H.T)
        scale = max(1.0, float(np.abs(np.diag(H)).max()))
        reg = 0.0
        while True:
            try:
                self.chol = sla.cho_factor(H + reg * np.eye(nx), lower=True, check_finite=False)
                break
            except np.linalg.LinAlgError:
                reg = scale * 1e-14 if reg == 0.0 else reg * 100.0
                if reg > scale * 1e-4:
                    raise
        if A.shape[0]:
            HA = sla.cho_solve(self.chol, A.T, check_finite=False)
            S = A @ HA
            S = 0.5 * (S + S.T)
            self.schur = sla.cho_factor(S + 1e-15 * np.trace(S) * np.eye(len(S)), lower=True,
                                        check_finite=False)
            self.HA = HA

    def _solve_once(self, bx, by, bzs, W: Optional[_Scaling]):
        """One solve with the z-block in scaled coordinates.

        ``bzs = W^-T bz`` and the returned ``wz = W z``; this avoids forming
        ``(W^T W)^-1`` applied to unscaled vectors, whose eigenvalues spread
        over many orders of magnitude near the optimum.
        """
        sf = self.sf
        rhs = bx + sf.GT(W.unscale_z(bzs) if W is not None else bzs)
        A = sf.A
        if A.shape[0]:
            rhs = rhs + self.rho * (A.T @ by)
            u = sla.cho_solve(self.chol, rhs, check_finite=False)
            y = sla.cho_solve(self.schur, A @ u - by, check_finite=False)
            x = u - self.HA @ y
        else:
            y = np.zeros(0)
            x = sla.cho_solve(self.chol, rhs, check_finite=False)
        Gx = sf.G(x)
        wz = _cadd(W.scale_s(Gx) if W is not None else Gx, bzs, -1.0)
        return x, y, wz

    def solve_scaled(self, bx, by, bzs, W: Optional[_Scaling], refine: int = 10):
        """Solve for ``(x, y, W z)`` given ``bzs = W^-T bz``, refining while the residual halves."""
        sf = self.sf
        x, y, wz = self._solve_once(bx, by, bzs, W)
        prev = math.inf
        for _ in range(refine):
            z = W.unscale_z(wz) if W is not None else wz
            rx = bx - sf.GT(z) - (sf.A.T @ y if len(y) else 0.0)
            ry = by - sf.A @ x if len(by) else by
            Gx = sf.G(x)
            rz = _cadd(bzs, _cadd(W.scale_s(Gx) if W is not None else Gx, wz, -1.0), -1.0)
            res = math.sqrt(float(rx @ rx) + (float(ry @ ry) if len(ry) else 0.0) + _cdot(rz, rz))
            if not res < 0.5 * prev:
                break
            prev = res
            dx, dy, dwz = self._solve_once(rx, ry, rz, W)
            x = x + dx
            y = y + dy
            wz = _cadd(wz, dwz)
        return x, y, wz

    def solve(self, bx, by, bz, W: Optional[_Scaling]):
        """Solve with unscaled right-hand side and solution."""
        bzs = W.scale_s(bz) if W is not None else bz
        x, y, wz = self.solve_scaled(bx, by, bzs, W)
        return x, y, (W.unscale_z(wz) if W is not None else wz)


@dataclasses.dataclass
class _Iterate:
    x: np.ndarray
    y: np.ndarray
    s: list
    z: list
    tau: float
    kappa: float


def _shift_into_cone(u, blocks):
    """Add a multiple of the identity so that ``u`` is strictly interior."""
    t = -np.inf
    if len(u[0]):
        t = max(t, float(-u[0].min()))
    for U in u[1:]:
        t = max(t, float(-np.linalg.eigvalsh(_herm(U))[0]))
    nrm = _cnorm(u)
    if t >= -1e-8 * max(nrm, 1.0):
        a = 1.0 + t
        u = [u[0] + a] + [U + a * np.eye(U.shape[0]) for U in u[1:]]
    return u


def _solve_standard(sf: _StandardForm, tol: float, max_iterations: int, trace=None,
                    accept=None):
    """Homogeneous self-dual interior-point iterations.

    Returns ``(kind, iterate, iterations, message)`` with kind one of
    ``optimal``, ``infeasible``, ``unbounded`` or ``stalled``.  ``accept``
    is called on a converged iterate; when it returns false the iterations
    continue, since the internal residuals live in the equilibrated scale.
    """
    nx, p = sf.nx, sf.A.shape[0]
    c, b = sf.c, sf.b
    h = sf.h()
    ident_T = [np.eye(blk.dim, dtype=complex if blk.complex else float) for blk in sf.blocks]
    kkt = _Kkt(sf, np.ones(len(sf.hl)), ident_T)

    # primal start: least-norm slack; dual start: least-norm z
    x, _, z0 = kkt.solve(np.zeros(nx), b, h, None)
    s = _cscale(z0, -1.0)
    _, y, z = kkt.solve(-c, np.zeros(p), [np.zeros_like(v) for v in h], None)
    s = _shift_into_cone(s, sf.blocks)
    z = _shift_into_cone(z, sf.blocks)
    tau, kappa = 1.0, 1.0
    W = _Scaling.from_pair(s, z)

    resx0 = max(1.0, float(np.linalg.norm(c)))
    resy0 = max(1.0, float(np.linalg.norm(b)))
    resz0 = max(1.0, _cnorm(h))
    nu = sf.degree

    best = None
    best_metric = math.inf
    stall = 0
    message = ""
    it = 0
    for it in range(max_iterations + 1):
        lam = W.lam_vec()
        gap_sz = _cdot(lam, lam)
        mu = (gap_sz + tau * kappa) / (nu + 1)

        Gx = sf.G(x)
        GTz = sf.GT(z)
        ATy = sf.A.T @ y if p else np.zeros(nx)
        hrx = -ATy - GTz
        rx = -hrx + c * tau
        hry = sf.A @ x if p else np.zeros(0)
        ry = -hry + b * tau
        hrz = _cadd(s, Gx)
        rz = _cadd(hrz, h, -tau)
        cx, by_, hz = float(c @ x), float(b @ y), _cdot(h, z)
        rt = kappa + cx + by_ + hz

        pres = max(float(np.linalg.norm(ry)) / resy0, _cnorm(rz) / resz0) / tau
        dres = float(np.linalg.norm(rx)) / resx0 / tau
        pcost, dcost = cx / tau, -(by_ + hz) / tau
        relgap = abs(pcost - dcost) / (1.0 + abs(pcost))
        gapn = gap_sz / tau ** 2 / (1.0 + abs(pcost))
        metric = max(pres, dres, relgap, gapn)
        pinf = (float(np.linalg.norm(hrx)) / resx0 / (-(hz + by_))) if hz + by_ < 0 else math.inf
        dinf = (max(float(np.linalg.norm(hry)) / resy0, _cnorm(hrz) / resz0) / (-cx)
                if cx < 0 else math.inf)

        if trace is not None:
            trace(it, pcost, dcost, pres, dres, relgap, gapn, tau, kappa)
        if metric < best_metric:
            best_metric = metric
            best = _Iterate(x.copy(), y.copy(), [v.copy() for v in s], [v.copy() for v in z],
                            tau, kappa)
            stall = 0
        else:
            stall += 1

        if metric <= tol and (accept is None or accept(best)):
            return "optimal", best, it, "converged"
        if pinf <= tol:
            return "infeasible", _Iterate(x, y, s, z, tau, kappa), it, "primal infeasible"
        if dinf <= tol:
            return "unbounded", _Iterate(x, y, s, z, tau, kappa), it, "dual infeasible"
        if it == max_iterations:
            message = "iteration limit"
            break
        if stall >= 8:
            message = "no progress"
            break

        try:
            dl, T = W.tmats()
            kkt = _Kkt(sf, dl, T)
            # (x1, y1, z1): response to the tau column
            hs = W.scale_s(h)
            x1, y1, wz1 = kkt.solve_scaled(-c, b, hs, W)
            denom = -(_cdot(wz1, wz1) + kappa / tau)

            def newton(dx, dy, dz, ds, dt, dk):
                xi = _jdiv_lam(W.lam_l, W.lam, ds)
                x0, y0, wz0 = kkt.solve_scaled(dx, -dy, _cadd(W.scale_s(dz), xi, -1.0), W)
                dtau = (dt - dk / tau - float(c @ x0) - float(b @ y0) - _cdot(hs, wz0)) / denom
                ddx = x0 + dtau * x1
                ddy = y0 + dtau * y1
                dzs = _cadd(wz0, wz1, dtau)
                dss = _cadd(xi, dzs, -1.0)
                dkap = (dk - kappa * dtau) / tau
                return ddx, ddy, dzs, dss, dtau, dkap

            lamsq = _jprod(lam, lam)
            # predictor
            ax, ay, azs, ass, atau, akap = newton(-rx, -ry, _cscale(rz, -1.0), _cscale(lamsq, -1.0),
                                                  -rt, -tau * kappa)
            step = min(1.0, _step_length(W, ass, azs, tau, atau, kappa, akap))
            sigma = max(0.0, 1.0 - step) ** 3
            # corrector
            corr = _jprod(ass, azs)
            ds = [-a + sigma * mu * e - q for a, e, q in zip(lamsq, _identity_like(lam), corr)]
            dk = -tau * kappa + sigma * mu - atau * akap
            f = 1.0 - sigma
            dx, dy, dzs, dss, dtau, dkap = newton(-f * rx, -f * ry, _cscale(rz, -f), ds, -f * rt, dk)
            step = min(1.0, 0.99 * _step_length(W, dss, dzs, tau, dtau, kappa, dkap))
        except np.linalg.LinAlgError:
            message = "factorization failed"
            break
        if not step > 1e-12:
            message = "step length collapsed"
            break

        x = x + step * dx
        y = y + step * dy
        tau = tau + step * dtau
        kappa = kappa + step * dkap
        s_new = _cadd(lam, dss, step)
        z_new = _cadd(lam, dzs, step)
        try:
            W.update(s_new, z_new)
        except np.linalg.LinAlgError:
            message = "scaling update failed"
            break
        lam = W.lam_vec()
        s = W.unscale_s(lam)
        z = W.unscale_z(lam)
    return "stalled", best, it, message


def _identity_like(lam_vec):
    out = [np.ones_like(lam_vec[0])]
    for L in lam_vec[1:]:
        out.append(np.eye(L.shape[0], dtype=L.dtype))
    return out


def _step_length(W: _Scaling, ds, dz, tau, dtau, kappa, dkap) -> float:
    a = min(_max_step(W.lam_l, W.lam, ds), _max_step(W.lam_l, W.lam, dz))
    if dtau < 0:
        a = min(a, -tau / dtau)
    if dkap < 0:
        a = min(a, -kappa / dkap)
    return a


# ---------------------------------------------------------------------------
# Public solve
# ---------------------------------------------------------------------------

def _unpack(sf: _StandardForm, x: np.ndarray):
    problem = sf.problem
    matrices = {}
    for v in problem.matrix_vars:
        o = sf.matrix_offsets[v.name]
        matrices[v.name] = params_to_herm(x[o:o + v.dim * v.dim], v.dim)
    scalars = {name: float(x[i]) for name, i in sf.scalar_index.items()}
    return matrices, scalars


def _unpack_duals(sf: _StandardForm, y: np.ndarray, z: list):
    problem = sf.problem
    multipliers = {}
    for name, val in zip(sf.ineq_names, z[0]):
        multipliers[name] = float(val)
    for name, val in zip(sf.eq_names, y):
        multipliers[name] = -float(val)
    lmi_duals, matrix_duals = {}, {}
    nl = len(problem.lmis)
    for lmi, Z in zip(problem.lmis, z[1:1 + nl]):
        lmi_duals[lmi.name] = np.real(_herm(Z))
    for v, Z in zip(problem.matrix_vars, z[1 + nl:]):
        matrix_duals[v.name] = _herm(Z)
    return multipliers, lmi_duals, matrix_duals


#: Ruiz equilibration passes tried in order until one run certifies.
EQUILIBRATION_PASSES = (6, 2, 0)


def solve(problem: ConicProblem, tolerance: float = 1e-8, max_iterations: int = 200,
          trace=None) -> ConicSolution:
    """Solve ``problem`` and certify the result.

    ``status == "optimal"`` guarantees that the independently recomputed
    scaled primal residual, dual residual and duality gap are all at most
    ``tolerance``.  An ``infeasible`` status carries a certificate whose
    validity is re-checked before returning.  When the certified residuals
    miss ``tolerance`` the problem is re-solved with lighter equilibration
    and the attempt with the smallest residuals is returned.
    """
    if not 0.0 < tolerance <= 1e-2:
        raise ValueError("tolerance must lie in (0, 1e-2]")
    best = None
    for passes in EQUILIBRATION_PASSES:
        sol = _solve_equilibrated(problem, passes, tolerance, max_iterations, trace)
        if sol.status != NUMERICAL_FAILURE:
            return sol
        if best is None or _worst_residual(sol) < _worst_residual(best):
            best = sol
    return best


def _worst_residual(sol: ConicSolution) -> float:
    worst = max(sol.primal_residual, sol.dual_residual, sol.duality_gap)
    return worst if math.isfinite(worst) else math.inf


def _solve_equilibrated(problem: ConicProblem, passes: int, tolerance: float,
                        max_iterations: int, trace) -> ConicSolution:
    sf = _StandardForm(problem)
    sf.equilibrate(passes)

    def certified(it_):
        x, y, z = sf.unscale(it_.x / it_.tau, it_.y / it_.tau, _cscale(it_.z, 1.0 / it_.tau))
        return max(certify(problem, *_unpack(sf, x), *_unpack_duals(sf, y, z))) <= tolerance

    kind, it_, iters, message = _solve_standard(sf, tolerance, max_iterations, trace, certified)
    if kind == "stalled" and it_ is not None:
        kind = "optimal"

    if kind == "infeasible":
        _, y, z = sf.unscale(it_.x, it_.y, it_.z)
        mult, lmid, matd = _unpack_duals(sf, y, z)
        _, const, _ = _weighted_functional(problem, mult, lmid, matd, objective=False)
        k = 1.0 / abs(const) if const else 1.0
        cert = InfeasibilityCertificate({n: k * v for n, v in mult.items()},
                                        {n: k * v for n, v in lmid.items()},
                                        {n: k * v for n, v in matd.items()})
        zeros_m = {v.name: np.zeros((v.dim, v.dim), dtype=complex) for v in problem.matrix_vars}
        zeros_s = {n: 0.0 for n in problem.scalar_vars}
        status = INFEASIBLE if cert.is_valid(problem, 1e3 * tolerance) else NUMERICAL_FAILURE
        return ConicSolution(status, math.nan, zeros_m, zeros_s, cert.multipliers,
                             cert.lmi_duals, cert.matrix_duals, math.nan, math.nan, math.nan,
                             iters, cert, message)
    if kind == "unbounded":
        x, _, _ = sf.unscale(it_.x, it_.y, it_.z)
        matrices, scalars = _unpack(sf, x / abs(problem.objective.value(*_unpack(sf, x)[::-1])
                                                - problem.objective.const))
        return ConicSolution(UNBOUNDED, -math.inf, matrices, scalars, {}, {}, {},
                             math.nan, math.nan, math.nan, iters, None, message)

    x, y, z = sf.unscale(it_.x / it_.tau, it_.y / it_.tau, _cscale(it_.z, 1.0 / it_.tau))
    matrices, scalars = _unpack(sf, x)
    mult, lmid, matd = _unpack_duals(sf, y, z)
    pres, dres, gap = certify(problem, matrices, scalars, mult, lmid, matd)
    obj = problem.objective.value(scalars, matrices)
    ok = max(pres, dres, gap) <= tolerance
    status = OPTIMAL if ok else NUMERICAL_FAILURE
    if not ok and not message:
        message = "residuals above tolerance"
    return ConicSolution(status, obj, matrices, scalars, mult, lmid, matd, pres, dres, gap,
                         iters, None, message)


def extract_rank_profile(X: np.ndarray) -> np.ndarray:
    """Eigenvalues in descending order, tiny negatives clipped to zero."""
    ev = np.linalg.eigvalsh(hermitian_part(np.asarray(X)))[::-1]
    lmax = max(float(ev[0]), 0.0) if len(ev) else 0.0
    return np.where(ev >= -1e-8 * lmax, np.maximum(ev, 0.0), ev)


def _dump_affine(expr: Affine, indent: str) -> List[str]:
    lines = [f"{indent}const {expr.const!r}"]
    for name in sorted(expr.scalars):
        lines.append(f"{indent}scalar {name} {expr.scalars[name]!r}")
    for name in sorted(expr.matrices):
        A = expr.matrices[name]
        lines.append(f"{indent}matrix {name} {A.shape[0]}")
        for row in A:
            lines.append(indent + "  " + " ".join(f"{v.real!r} {v.imag!r}" for v in row))
    return lines


def dump_problem(problem: ConicProblem) -> str:
    """Plain-text description of ``problem`` for cross-checking with other solvers.

    Every affine expression lists its constant, its scalar coefficients and
    its Hermitian coefficient matrices.  Matrices are written row-major with
    each entry as a ``real imag`` pair; the matrix term is ``Re tr(A^H X)``.
    Constraints read ``expr (sense) 0`` and LMIs list their upper triangle.
    """
    out = ["conic-problem v1",
           f"matrix_vars {len(problem.matrix_vars)}"]
    out += [f"  {v.name} {v.dim} {v.field}" for v in problem.matrix_vars]
    out.append(f"scalar_vars {len(problem.scalar_vars)}")
    out += [f"  {name}" for name in problem.scalar_vars]
    out.append("objective minimize")
    out += _dump_affine(problem.objective, "  ")
    out.append(f"constraints {len(problem.constraints)}")
    for c in problem.constraints:
        out.append(f"constraint {c.name} {c.sense} 0")
        out += _dump_affine(c.expr, "  ")
    out.append(f"lmis {len(problem.lmis)}")
    for lmi in problem.lmis:
        out.append(f"lmi {lmi.name} {lmi.dim}")
        for i in range(lmi.dim):
            for j in range(i, lmi.dim):
                out.append(f"  entry {i} {j}")
                out += _dump_affine(lmi.entry(i, j), "    ")
    return "\n".join(out) + "\n"
