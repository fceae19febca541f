"""Left-preconditioned Krylov solvers for complex sparse systems.

All three methods start from ``x0 = 0``, use the initial preconditioned
residual as shadow vector, and test convergence on the preconditioned
residual ``||M^-1 (b - A x)|| / ||M^-1 b||``. The unpreconditioned relative
residual is recomputed from the returned iterate and reported alongside.

Iteration counts: one BiCGSTAB iteration is a full two-matvec step, one
BiCGSTAB(l) iteration is an outer cycle of ``l`` BiCG steps plus the
minimal-residual update, and one TFQMR iteration is a pair of half steps.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .numkit import CsrMatrix, as_cvector, axpy, dot_hermitian, norm2, spmv

__all__ = [
    "SolverOptions",
    "SolveReport",
    "Preconditioner",
    "ZeroDiagonalError",
    "identity_preconditioner",
    "jacobi",
    "bicgstab",
    "bicgstab_l",
    "tfqmr",
    "SOLVERS",
    "solve",
    "write_report_csv",
    "read_report_csv",
    "write_history_csv",
]

BREAKDOWN = 1e-30


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-9
    max_iter: int = 1000
    l: int = 8
    record_history: bool = False
    parallel: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.l < 1:
            raise ValueError("l must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class SolveReport:
    solver: str
    n: int
    converged: bool = False
    iterations: int = 0
    final_relres: float = math.inf
    true_relres: float = math.inf
    wall_time: float = 0.0
    residual_history: list[float] = field(default_factory=list)
    breakdown: Optional[str] = None
    restarts: int = 0


class Preconditioner:
    """Left preconditioner, ``apply(v) = M^-1 v``."""

    def __init__(self, apply: Callable[[np.ndarray], np.ndarray], name: str = "custom"):
        self.apply = apply
        self.name = name

    def __call__(self, v):
        return self.apply(v)


class ZeroDiagonalError(ValueError):
    pass


def identity_preconditioner() -> Preconditioner:
    return Preconditioner(lambda v: as_cvector(v).copy(), "identity")


def jacobi(A: CsrMatrix) -> Preconditioner:
    d = A.diagonal()
    zero = np.flatnonzero(d == 0)
    if zero.size:
        raise ZeroDiagonalError(f"zero diagonal entry in row {int(zero[0])}")
    inv = 1.0 / d
    return Preconditioner(lambda v: inv * as_cvector(v), "jacobi")


class _Ops:
    """Kernels bound to a kernel mode, plus the preconditioned operator."""

    def __init__(self, A: CsrMatrix, M: Preconditioner | None, parallel: bool):
        self.A = A
        self.M = M or identity_preconditioner()
        self.parallel = parallel

    def op(self, v):
        return self.M.apply(spmv(self.A, v, self.parallel))

    def dot(self, x, y):
        return dot_hermitian(x, y, self.parallel)

    def norm(self, x):
        return norm2(x, self.parallel)

    def axpy(self, a, x, y):
        return axpy(a, x, y, self.parallel)


def _setup(A: CsrMatrix, b, name: str):
    if A.nrows != A.ncols:
        raise ValueError("matrix must be square")
    b = as_cvector(b)
    if b.size != A.nrows:
        raise ValueError(f"rhs has {b.size} entries, matrix has {A.nrows} rows")
    return b, SolveReport(name, A.nrows)


def _finish(rep: SolveReport, ops: _Ops, b, x, t0) -> tuple[np.ndarray, SolveReport]:
    bn = norm2(b)
    r = b - spmv(ops.A, x)
    rep.true_relres = norm2(r) / bn if bn > 0 else 0.0
    rep.wall_time = time.perf_counter() - t0
    return x, rep


def bicgstab(A: CsrMatrix, b, M: Preconditioner | None = None,
             opts: SolverOptions = SolverOptions()) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned BiCGSTAB."""
    t0 = time.perf_counter()
    b, rep = _setup(A, b, "bicgstab")
    ops = _Ops(A, M, opts.parallel)
    x = np.zeros_like(b)
    r = ops.M.apply(b)
    bn = ops.norm(r)
    if bn == 0:
        rep.converged, rep.final_relres = True, 0.0
        return _finish(rep, ops, b, x, t0)
    rhat = r.copy()
    rho_old = alpha = omega = 1.0 + 0j
    p = v = np.zeros_like(b)
    relres = 1.0
    for it in range(1, opts.max_iter + 1):
        rep.iterations = it
        rho = ops.dot(rhat, r)
        if abs(rho) < BREAKDOWN * bn * bn:
            rep.breakdown = "rho"
            break
        if it == 1:
            p = r.copy()
        else:
            beta = (rho / rho_old) * (alpha / omega)
            p = ops.axpy(beta, ops.axpy(-omega, v, p), r)
        v = ops.op(p)
        sigma = ops.dot(rhat, v)
        if abs(sigma) < BREAKDOWN * bn * ops.norm(v):
            rep.breakdown = "rhat.v"
            break
        alpha = rho / sigma
        s = ops.axpy(-alpha, v, r)
        relres = ops.norm(s) / bn
        if relres <= opts.tol:
            x = ops.axpy(alpha, p, x)
            if opts.record_history:
                rep.residual_history.append(relres)
            rep.converged = True
            break
        t = ops.op(s)
        tt = ops.dot(t, t).real
        if tt == 0:
            rep.breakdown = "t.t"
            break
        omega = ops.dot(t, s) / tt
        if abs(omega) < BREAKDOWN:
            rep.breakdown = "omega"
            break
        x = ops.axpy(omega, s, ops.axpy(alpha, p, x))
        r = ops.axpy(-omega, t, s)
        relres = ops.norm(r) / bn
        if opts.record_history:
            rep.residual_history.append(relres)
        if not math.isfinite(relres):
            rep.breakdown = "non-finite residual"
            break
        if relres <= opts.tol:
            rep.converged = True
            break
        rho_old = rho
    rep.final_relres = relres
    return _finish(rep, ops, b, x, t0)


def bicgstab_l(A: CsrMatrix, b, M: Preconditioner | None = None,
               opts: SolverOptions = SolverOptions()) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned BiCGSTAB(l) with a least-squares minimal-residual step."""
    t0 = time.perf_counter()
    b, rep = _setup(A, b, f"bicgstab_l{opts.l}")
    ops = _Ops(A, M, opts.parallel)
    ell = opts.l
    x = np.zeros_like(b)
    r0 = ops.M.apply(b)
    bn = ops.norm(r0)
    if bn == 0:
        rep.converged, rep.final_relres = True, 0.0
        return _finish(rep, ops, b, x, t0)
    rhat = r0.copy()
    R = [r0] + [None] * ell
    U = [np.zeros_like(b)] + [None] * ell
    rho0 = 1.0 + 0j
    alpha = 0j
    omega = 1.0 + 0j
    relres = 1.0
    for it in range(1, opts.max_iter + 1):
        rep.iterations = it
        rho0 = -omega * rho0
        done = False
        for j in range(ell):
            rho1 = ops.dot(rhat, R[j])
            if abs(rho0) < BREAKDOWN * bn * bn:
                rep.breakdown = "rho"
                break
            beta = alpha * rho1 / rho0
            rho0 = rho1
            for i in range(j + 1):
                U[i] = ops.axpy(-beta, U[i], R[i])
            U[j + 1] = ops.op(U[j])
            gamma = ops.dot(rhat, U[j + 1])
            if abs(gamma) < BREAKDOWN * bn * ops.norm(U[j + 1]):
                rep.breakdown = "rhat.u"
                break
            alpha = rho0 / gamma
            for i in range(j + 1):
                R[i] = ops.axpy(-alpha, U[i + 1], R[i])
            R[j + 1] = ops.op(R[j])
            x = ops.axpy(alpha, U[0], x)
            relres = ops.norm(R[0]) / bn
            if relres <= opts.tol:
                done = True
                break
        if rep.breakdown:
            break
        if done:
            if opts.record_history:
                rep.residual_history.append(relres)
            rep.converged = True
            break
        # minimise ||R0 - sum_j gamma_j R_j|| over gamma
        Rm = np.column_stack(R[1:])
        g, _, rank, _ = np.linalg.lstsq(Rm, R[0], rcond=None)
        if rank < ell or not np.all(np.isfinite(g)):
            rep.breakdown = "degenerate minimal-residual least squares"
            break
        for j in range(1, ell + 1):
            x = ops.axpy(g[j - 1], R[j - 1], x)
            R[0] = ops.axpy(-g[j - 1], R[j], R[0])
            U[0] = ops.axpy(-g[j - 1], U[j], U[0])
        omega = g[ell - 1]
        relres = ops.norm(R[0]) / bn
        if opts.record_history:
            rep.residual_history.append(relres)
        if not math.isfinite(relres):
            rep.breakdown = "non-finite residual"
            break
        if relres <= opts.tol:
            rep.converged = True
            break
        if abs(omega) < BREAKDOWN:
            rep.breakdown = "omega"
            break
    rep.final_relres = relres
    return _finish(rep, ops, b, x, t0)


def tfqmr(A: CsrMatrix, b, M: Preconditioner | None = None,
          opts: SolverOptions = SolverOptions()) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned transpose-free QMR.

    The recorded history is the quasi-residual ``tau / ||M^-1 b||`` after each
    half step. Convergence is declared once the bound ``tau * sqrt(m + 1)``
    drops below tolerance and the explicitly recomputed preconditioned
    residual confirms it. If the bound is met but the explicit residual is
    not (the recurrence has drifted from the true residual), the method
    restarts from the current iterate with the explicit residual; restarts
    are counted in ``SolveReport.restarts``.
    """
    t0 = time.perf_counter()
    b, rep = _setup(A, b, "tfqmr")
    ops = _Ops(A, M, opts.parallel)
    x = np.zeros_like(b)
    r0 = ops.M.apply(b)
    bn = ops.norm(r0)
    if bn == 0:
        rep.converged, rep.final_relres = True, 0.0
        return _finish(rep, ops, b, x, t0)

    def start(r0):
        rhat = r0.copy()
        u1 = ops.op(r0)
        return rhat, r0.copy(), r0.copy(), u1, u1.copy(), np.zeros_like(b), ops.norm(r0), ops.dot(rhat, r0)

    rhat, w, y1, u1, v, d, tau, rho = start(r0)
    theta = 0.0
    eta = 0j
    m0 = 0  # half-step offset of the current restart cycle
    relres = 1.0
    for it in range(1, opts.max_iter + 1):
        rep.iterations = it
        sigma = ops.dot(rhat, v)
        if abs(sigma) < BREAKDOWN * bn * ops.norm(v):
            rep.breakdown = "rhat.v"
            break
        alpha = rho / sigma
        y2 = ops.axpy(-alpha, v, y1)
        u2 = None
        restart = False
        for half in (0, 1):
            if half == 0:
                y, u = y1, u1
            else:
                u2 = ops.op(y2)
                y, u = y2, u2
            w = ops.axpy(-alpha, u, w)
            d = ops.axpy(theta * theta * eta / alpha, d, y)
            theta = ops.norm(w) / tau
            c = 1.0 / math.sqrt(1.0 + theta * theta)
            tau = tau * theta * c
            eta = c * c * alpha
            x = ops.axpy(eta, d, x)
            m = 2 * it - 1 + half - m0
            if opts.record_history:
                rep.residual_history.append(tau / bn)
            if tau * math.sqrt(m + 1) <= opts.tol * bn:
                r = ops.M.apply(b - spmv(A, x, ops.parallel))
                relres = ops.norm(r) / bn
                if relres <= opts.tol:
                    rep.converged = True
                else:
                    restart = True
                break
        if rep.converged:
            break
        if not math.isfinite(tau):
            rep.breakdown = "non-finite residual"
            break
        if restart:
            rep.restarts += 1
            rhat, w, y1, u1, v, d, tau, rho = start(r)
            theta = 0.0
            eta = 0j
            m0 = 2 * it
            continue
        rho_new = ops.dot(rhat, w)
        if abs(rho) < BREAKDOWN * bn * bn:
            rep.breakdown = "rho"
            break
        beta = rho_new / rho
        rho = rho_new
        y1 = ops.axpy(beta, y2, w)
        u1 = ops.op(y1)
        v = ops.axpy(beta, ops.axpy(beta, v, u2), u1)
    if not rep.converged:
        relres = ops.norm(ops.M.apply(b - spmv(A, x, ops.parallel))) / bn
    rep.final_relres = relres
    return _finish(rep, ops, b, x, t0)


SOLVERS = {"bicgstab": bicgstab, "bicgstab_l": bicgstab_l, "tfqmr": tfqmr}


def solve(name: str, A: CsrMatrix, b, M: Preconditioner | None = None,
          opts: SolverOptions = SolverOptions()):
    try:
        fn = SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; allowed: {', '.join(SOLVERS)}") from None
    return fn(A, b, M, opts)


REPORT_HEADER = "solver,h,n,iterations,converged,final_relres,true_relres,wall_time_s"


def _report_row(rep: SolveReport, h: float) -> str:
    return (f"{rep.solver},{float(h)!r},{rep.n},{rep.iterations},{str(rep.converged).lower()},"
            f"{float(rep.final_relres)!r},{float(rep.true_relres)!r},{float(rep.wall_time)!r}")


def write_report_csv(path, reports: Sequence[tuple[SolveReport, float]]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(REPORT_HEADER + "\n")
        for rep, h in reports:
            fh.write(_report_row(rep, h) + "\n")


def read_report_csv(path) -> list[tuple[SolveReport, float]]:
    out = []
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != REPORT_HEADER:
            raise ValueError(f"unexpected report header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            solver, h, n, it, conv, fr, tr, wt = line.strip().split(",")
            rep = SolveReport(solver, int(n), conv == "true", int(it), float(fr), float(tr), float(wt))
            out.append((rep, float(h)))
    return out


def write_history_csv(path, rep: SolveReport) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("iter,relres\n")
        for k, r in enumerate(rep.residual_history, start=1):
            fh.write(f"{k},{float(r)!r}\n")


def with_tol(opts: SolverOptions, tol: float) -> SolverOptions:
    return replace(opts, tol=tol)
