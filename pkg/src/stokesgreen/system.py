"""Discrete conormal Stokes saddle-point systems on voxel domains.

Discretization: collocated cell-centered unknowns (velocity 3-vector and
pressure per cell).  The viscous bilinear form is integrated with a
per-corner quadrature of one-sided face differences, which decomposes into
a centered-gradient term plus a jump penalty weighted by the diagonal
coefficient blocks; the penalty inherits coercivity from the ellipticity
constant and removes the velocity checkerboard.  For identity coefficients
the viscous block reduces to the compact face-difference Laplacian, and
the quadrature is exact on cellwise-linear probes.

The pressure-velocity coupling uses the centered divergence; the pressure
checkerboard is controlled by a Brezzi-Pitkaranta stabilization block
``c_s * h^2 * (grad_h p, grad_h q)`` whose pollution of ``div u`` is
reported.  The conormal boundary condition is natural: no boundary rows
are modified.  Velocity means are pinned by one symmetric Lagrange row per
component.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import fft as sfft

from .errors import CompatibilityError, GeometryError, SolverError

DIM = 3
DEFAULT_TOL = 1e-9
DEFAULT_STAB = 0.1
COMPAT_REL = 1e-10


# ---------------------------------------------------------------------------
# grid operators


class GridOperators:
    """Sparse difference operators on the included cells of a domain."""

    def __init__(self, domain):
        self.domain = domain
        nc = domain.ncells
        h = domain.h
        shape = np.array(domain.shape)
        ijk = domain.cell_ijk

        nb = np.empty((DIM, 2, nc), dtype=np.int64)  # [axis][minus/plus]
        for a in range(DIM):
            for s, step in ((0, -1), (1, +1)):
                q = ijk.copy()
                q[:, a] += step
                ok = (q[:, a] >= 0) & (q[:, a] < shape[a])
                ids = -np.ones(nc, dtype=np.int64)
                ids[ok] = domain.cell_id[q[ok, 0], q[ok, 1], q[ok, 2]]
                nb[a, s] = ids
        self.neighbors = nb

        cells = np.arange(nc)
        self.dbar = []
        self.dkap = []
        self.dface = []
        for a in range(DIM):
            minus, plus = nb[a, 0], nb[a, 1]
            has_m, has_p = minus >= 0, plus >= 0
            rows, cols, vals = [], [], []
            krows, kcols, kvals = [], [], []
            both = has_m & has_p
            # centered difference
            rows += [cells[both], cells[both]]
            cols += [plus[both], minus[both]]
            vals += [np.full(both.sum(), 0.5 / h), np.full(both.sum(), -0.5 / h)]
            # curvature (half second difference)
            krows += [cells[both]] * 3
            kcols += [plus[both], cells[both], minus[both]]
            kvals += [
                np.full(both.sum(), 0.5 / h),
                np.full(both.sum(), -1.0 / h),
                np.full(both.sum(), 0.5 / h),
            ]
            # one-sided closures at the staircase boundary
            only_p = has_p & ~has_m
            rows += [cells[only_p], cells[only_p]]
            cols += [plus[only_p], cells[only_p]]
            vals += [np.full(only_p.sum(), 1.0 / h), np.full(only_p.sum(), -1.0 / h)]
            only_m = has_m & ~has_p
            rows += [cells[only_m], cells[only_m]]
            cols += [cells[only_m], minus[only_m]]
            vals += [np.full(only_m.sum(), 1.0 / h), np.full(only_m.sum(), -1.0 / h)]
            dbar = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(nc, nc),
            ).tocsr()
            dkap = sp.coo_matrix(
                (
                    np.concatenate(kvals) if kvals else np.zeros(0),
                    (np.concatenate(krows), np.concatenate(kcols)),
                ),
                shape=(nc, nc),
            ).tocsr()
            self.dbar.append(dbar)
            self.dkap.append(dkap)
            # raw face differences (interior faces along axis a)
            fc = cells[has_p]
            nf = len(fc)
            frows = np.repeat(np.arange(nf), 2)
            fcols = np.stack([plus[has_p], fc], axis=1).ravel()
            fvals = np.tile([1.0 / h, -1.0 / h], nf)
            self.dface.append(sp.coo_matrix((fvals, (frows, fcols)), shape=(nf, nc)).tocsr())

        h3 = h**3
        self.lap_scalar = sum(
            (D.T * h3) @ D for D in self.dface
        ).tocsr()  # (grad p, grad q) on cells

    def gradient(self, values):
        """Centered per-cell gradient of a cellwise scalar, shape (3, n)."""
        return np.stack([D @ values for D in self.dbar])

    def divergence(self, u):
        """Centered per-cell divergence of a cellwise vector field (3, n)."""
        return sum(self.dbar[a] @ u[a] for a in range(DIM))

    def grad_energy_sq(self, u):
        """Quadrature of the squared gradient matching the viscous form."""
        h3 = self.domain.h**3
        total = 0.0
        for comp in np.atleast_2d(u):
            for a in range(DIM):
                total += h3 * float(
                    np.sum((self.dbar[a] @ comp) ** 2) + np.sum((self.dkap[a] @ comp) ** 2)
                )
        return total


def grid_operators(domain):
    ops = getattr(domain, "_grid_ops", None)
    if ops is None:
        ops = GridOperators(domain)
        domain._grid_ops = ops
    return ops


# ---------------------------------------------------------------------------
# operator assembly


class ConormalOperator:
    """Assembled saddle-point operator for one (domain, coefficients) pair.

    Unknown layout: velocity components (3 blocks of ncells), pressure
    (ncells), then 3 Lagrange multipliers pinning the velocity means.
    """

    def __init__(self, domain, coeffs, c_s=DEFAULT_STAB):
        if coeffs.shape != domain.shape or abs(coeffs.h - domain.h) > 1e-15:
            raise GeometryError("coefficient grid does not match the domain grid")
        self.domain = domain
        self.coeffs = coeffs
        self.c_s = float(c_s)
        ops = grid_operators(domain)
        self.ops = ops
        nc = domain.ncells
        h = domain.h
        h3 = h**3
        flat = domain.flat_ids

        blocks = [[None] * DIM for _ in range(DIM)]
        for i in range(DIM):
            for j in range(DIM):
                acc = None
                for a in range(DIM):
                    for b in range(DIM):
                        w = coeffs.entry(a, b, i, j, flat)
                        if not np.any(w):
                            continue
                        term = ops.dbar[a].T @ sp.diags(h3 * w) @ ops.dbar[b]
                        acc = term if acc is None else acc + term
                    wk = coeffs.entry(a, a, i, j, flat)
                    if np.any(wk):
                        term = ops.dkap[a].T @ sp.diags(h3 * wk) @ ops.dkap[a]
                        acc = term if acc is None else acc + term
                blocks[i][j] = acc if acc is not None else sp.csr_matrix((nc, nc))
        self.A = sp.bmat(blocks, format="csr")
        self.B = sp.vstack([h3 * D.T for D in ops.dbar], format="csr")
        self.C = (self.c_s * h * h) * ops.lap_scalar
        ones = np.ones(nc)
        self.E = sp.vstack(
            [
                sp.csr_matrix((h3 * ones, (np.zeros(nc, int), np.arange(nc) + i * nc)), shape=(1, DIM * nc))
                for i in range(DIM)
            ],
            format="csr",
        )
        self.K = sp.bmat(
            [
                [self.A, self.B, self.E.T],
                [self.B.T, -self.C, None],
                [self.E, None, None],
            ],
            format="csr",
        )
        self.nc = nc
        self.nu = DIM * nc
        self.ntot = self.K.shape[0]
        self.symmetric = coeffs.is_self_adjoint()
        self._prec = None
        self._lu = None

    # -- preconditioner ---------------------------------------------------

    def _scalar_shift(self):
        nmax = max(self.domain.shape)
        return self.domain.h * (2.0 - 2.0 * np.cos(np.pi / nmax))

    def _build_prec(self):
        dom = self.domain
        h = dom.h
        shift = self._scalar_shift()
        if dom.mask.all():
            shape = dom.shape
            eigs = sum(
                np.meshgrid(
                    *[
                        h * (2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n))
                        for n in shape
                    ],
                    indexing="ij",
                )
            )
            eigs.flat[0] = shift

            def apply_scalar(v):
                arr = v.reshape(shape)
                coef = sfft.dctn(arr, type=2, norm="ortho")
                coef /= eigs
                return sfft.idctn(coef, type=2, norm="ortho").ravel()

        else:
            import threading

            mat = (self.ops.lap_scalar + shift * sp.identity(self.nc)).tocsc()
            lu = spla.splu(mat)
            lock = threading.Lock()  # SuperLU solves are not reentrant

            def apply_scalar(v):
                with lock:
                    return lu.solve(v)

        h3 = h**3
        mult_scale = h3 * dom.volume / shift

        def prec(x):
            out = np.empty_like(x)
            nc = self.nc
            for i in range(DIM):
                out[i * nc : (i + 1) * nc] = apply_scalar(x[i * nc : (i + 1) * nc])
            out[self.nu : self.nu + nc] = x[self.nu : self.nu + nc] / h3
            out[self.nu + nc :] = x[self.nu + nc :] / mult_scale
            return out

        return prec

    def preconditioner(self):
        if self._prec is None:
            self._prec = self._build_prec()
        return spla.LinearOperator(
            (self.ntot, self.ntot), matvec=self._prec, dtype=float
        )

    # -- solves -----------------------------------------------------------

    def solve_direct(self, rhs):
        if self._lu is None:
            self._lu = spla.splu(self.K.tocsc())
        return self._lu.solve(rhs)

    def solve(self, rhs, tol=DEFAULT_TOL, max_iter=None, x0=None, method="auto"):
        """Solve K x = rhs to a true relative residual below tol.

        Returns (x, iterations, residual).  Raises SolverError on
        non-convergence, carrying the best residual reached.
        """
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0:
            return np.zeros(self.ntot), 0, 0.0
        if method == "auto":
            method = "minres" if self.symmetric else "lgmres"
        if method == "direct":
            x = self.solve_direct(rhs)
            res = np.linalg.norm(self.K @ x - rhs) / bnorm
            return x, 1, float(res)

        if max_iter is None:
            max_iter = 40 * int(np.cbrt(self.nc)) + 400
        M = self.preconditioner()
        count = [0]

        def cb(_):
            count[0] += 1

        x = np.zeros(self.ntot) if x0 is None else np.asarray(x0, dtype=float).copy()
        best = np.linalg.norm(self.K @ x - rhs) / bnorm
        inner = max(tol * 1e-2, 1e-15)
        rounds = 0
        while best > tol and count[0] < max_iter and rounds < 8:
            rounds += 1
            left = max_iter - count[0]
            if method == "minres":
                x_new, _ = spla.minres(
                    self.K, rhs, x0=x, rtol=inner,
                    maxiter=left, M=M, callback=cb,
                )
            else:
                x_new, _ = spla.lgmres(
                    self.K, rhs, x0=x, rtol=inner, atol=0.0,
                    maxiter=left, M=M, inner_m=40,
                    callback=cb,
                )
            res = np.linalg.norm(self.K @ x_new - rhs) / bnorm
            inner = max(inner * 1e-2, 1e-15)
            if res < best:
                best, x = res, x_new
            elif rounds > 2:
                break
        if best > tol:
            raise SolverError(
                f"{method} stalled at relative residual {best:.3e} "
                f"(target {tol:.1e}) after {count[0]} iterations",
                best_residual=float(best),
                iterations=count[0],
            )
        return x, count[0], float(best)


# ---------------------------------------------------------------------------
# public data types


@dataclass
class Field:
    """A discrete velocity/pressure pair on the included cells."""

    u: np.ndarray  # (3, ncells)
    p: np.ndarray  # (ncells,)


@dataclass
class SolveReport:
    iterations: int
    residual: float
    grad_norm: float
    p_norm: float
    data_norms: dict
    energy_quotient: float | None
    div_residual: float
    stab_slack: float
    mean_abs: float
    mean_projection: float
    method: str
    converged: bool = True

    def lines(self):
        out = []
        for k, v in self.__dict__.items():
            if isinstance(v, dict):
                for kk, vv in v.items():
                    out.append(f"{k}.{kk}={vv:.6e}")
            elif v is None:
                out.append(f"{k}=none")
            else:
                out.append(f"{k}={v}")
        return "\n".join(out)


@dataclass
class SaddleSystem:
    """An assembled operator with one concrete right-hand side."""

    operator: ConormalOperator
    rhs: np.ndarray
    g: np.ndarray
    data_norms: dict = dc_field(default_factory=dict)
    mean_projection: float = 0.0


def export_field(domain, field, path):
    """Write a Field as flat binary, 4 doubles per cell (u1, u2, u3, p)."""
    import json
    from pathlib import Path

    path = Path(path)
    dense = np.concatenate([field.u, field.p[None]], axis=0).T
    path.write_bytes(np.ascontiguousarray(dense).tobytes())
    meta = {"shape": list(domain.shape), "h": domain.h, "ncells": domain.ncells,
            "layout": "cell-major u1,u2,u3,p"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=1))


def import_field(domain, path):
    from pathlib import Path

    raw = np.frombuffer(Path(path).read_bytes(), dtype=float)
    dense = raw.reshape(domain.ncells, 4).T
    return Field(u=dense[:3].copy(), p=dense[3].copy())


# ---------------------------------------------------------------------------
# assembly and solves


def _cellwise(domain, val, vector=False):
    nc = domain.ncells
    if val is None:
        return np.zeros((DIM, nc)) if vector else np.zeros(nc)
    arr = np.asarray(val, dtype=float)
    want = (DIM, nc) if vector else (nc,)
    if arr.shape != want:
        raise GeometryError(f"data shape {arr.shape} does not match cells {want}")
    return arr


def lp_norm(domain, values, p):
    """Cellwise midpoint-quadrature L_p norm."""
    v = np.abs(np.asarray(values, dtype=float))
    return float((domain.h**3 * np.sum(v**p)) ** (1.0 / p))


def assemble(domain, coeffs, f=None, f_alpha=None, g=None, c_s=DEFAULT_STAB, operator=None):
    """Assemble the weak-form system for data (f, f_alpha, g).

    ``f`` is a cellwise vector (3, ncells) projected to mean zero (the
    projection magnitude is reported); ``f_alpha`` is indexed [alpha][comp]
    with shape (3, 3, ncells); ``g`` is a cellwise scalar.  No boundary rows
    are modified: the conormal condition is natural in the weak form.
    """
    op = operator if operator is not None else ConormalOperator(domain, coeffs, c_s)
    nc = domain.ncells
    h3 = domain.h**3
    fv = _cellwise(domain, f, vector=True)
    gv = _cellwise(domain, g)
    means = fv.mean(axis=1)
    ftil = fv - means[:, None]
    rhs = np.zeros(op.ntot)
    for i in range(DIM):
        rhs[i * nc : (i + 1) * nc] = -h3 * ftil[i]
    fa_norm = 0.0
    if f_alpha is not None:
        fa = np.asarray(f_alpha, dtype=float)
        if fa.shape != (DIM, DIM, nc):
            raise GeometryError(f"f_alpha must have shape (3, 3, {nc})")
        for a in range(DIM):
            for i in range(DIM):
                rhs[i * nc : (i + 1) * nc] += op.ops.dbar[a].T @ (h3 * fa[a, i])
        fa_norm = float(np.sqrt(h3 * np.sum(fa**2)))
    rhs[op.nu : op.nu + nc] = h3 * gv
    data_norms = {
        "f_L6over5": lp_norm(domain, np.sqrt((ftil**2).sum(axis=0)), 1.2),
        "f_alpha_L2": fa_norm,
        "g_L2": lp_norm(domain, gv, 2),
    }
    return SaddleSystem(
        operator=op,
        rhs=rhs,
        g=gv,
        data_norms=data_norms,
        mean_projection=float(np.abs(means).max()),
    )


def solve_conormal(system, tol=DEFAULT_TOL, max_iter=None, x0=None, method="auto"):
    """Solve the assembled conormal problem; returns (Field, SolveReport)."""
    op = system.operator
    x, iters, res = op.solve(system.rhs, tol=tol, max_iter=max_iter, x0=x0, method=method)
    nc = op.nc
    u = x[: op.nu].reshape(DIM, nc).copy()
    p = x[op.nu : op.nu + nc].copy()
    mean_before = float(np.abs(u.mean(axis=1)).max())
    u -= u.mean(axis=1, keepdims=True)  # constants are in the operator kernel
    dom = op.domain
    div = op.ops.divergence(u)
    div_res = lp_norm(dom, div - system.g, 2)
    slack = lp_norm(dom, (op.C @ p) / dom.h**3, 2)
    grad = np.sqrt(op.ops.grad_energy_sq(u))
    pn = lp_norm(dom, p, 2)
    denom = sum(system.data_norms.values())
    quotient = (grad + pn) / denom if denom > 0 else None
    report = SolveReport(
        iterations=iters,
        residual=res,
        grad_norm=grad,
        p_norm=pn,
        data_norms=dict(system.data_norms),
        energy_quotient=quotient,
        div_residual=div_res,
        stab_slack=slack,
        mean_abs=float(np.abs(u.mean(axis=1)).max()),
        mean_projection=max(system.mean_projection, mean_before),
        method=method if method != "auto" else ("minres" if op.symmetric else "lgmres"),
    )
    return Field(u=u, p=p), report


@dataclass
class DivergenceSolution:
    u: np.ndarray  # (3, ncells) velocity with div u = g
    quotient: float  # ||Du|| / ||g||
    div_residual: float
    sweeps: int
    report: SolveReport


def solve_divergence(domain, g, tol=DEFAULT_TOL, div_tol=1e-8, max_sweeps=16, c_s=DEFAULT_STAB, operator=None):
    """Minimal-energy velocity with prescribed divergence (mean-zero g).

    Solves the identity-coefficient conormal system with data (0, 0, g);
    the stabilization pollution of ``div u`` is removed by correction
    sweeps on the constraint data until ``||div u - g|| <= div_tol ||g||``
    or the reduction stalls.
    """
    from .coefficients import constant_identity

    gv = _cellwise(domain, g)
    gnorm = lp_norm(domain, gv, 2)
    if gnorm == 0:
        nc = domain.ncells
        rep = SolveReport(0, 0.0, 0.0, 0.0, {"g_L2": 0.0}, None, 0.0, 0.0, 0.0, 0.0, "minres")
        return DivergenceSolution(np.zeros((DIM, nc)), 0.0, 0.0, 0, rep)
    if abs(gv.mean()) * domain.volume > COMPAT_REL * gnorm:
        raise CompatibilityError(
            f"divergence data must have zero mean: |(g)| = {abs(gv.mean()):.3e}"
        )
    op = operator if operator is not None else ConormalOperator(
        domain, constant_identity(domain), c_s
    )
    ops = op.ops
    g_in = gv.copy()
    x0 = None
    best = None
    prev = np.inf
    for sweep in range(max_sweeps):
        system = assemble(domain, op.coeffs, g=g_in, operator=op)
        field, report = solve_conormal(system, tol=tol, x0=x0, method="minres")
        resid = lp_norm(domain, ops.divergence(field.u) - gv, 2)
        if best is None or resid < best[0]:
            best = (resid, field, report, sweep + 1)
        if resid <= div_tol * gnorm or resid > 0.97 * prev:  # done or stalling
            break
        prev = resid
        g_in = g_in + (gv - ops.divergence(field.u))
        x0 = np.concatenate([field.u.ravel(), field.p, np.zeros(DIM)])
    resid, field, report, sweeps = best
    quotient = np.sqrt(ops.grad_energy_sq(field.u)) / gnorm
    return DivergenceSolution(field.u, float(quotient), float(resid), sweeps, report)


def poincare_constant(domain, probes=8, seed=0):
    """Lower bound for the Poincare-Sobolev constant of the domain.

    Maximizes ``||phi||_L6 / ||D phi||_L2`` over mean-zero probe fields:
    the three coordinate functions first, then seeded random quadratic
    polynomials.  The probe family is nested in the probe count.
    """
    probes = int(probes)
    if probes < 1:
        raise GeometryError("at least one probe is required")
    ops = grid_operators(domain)
    centers = domain.cell_centers
    xc = centers - centers.mean(axis=0)
    rng = np.random.default_rng(seed)
    best = 0.0
    ext = max(domain.extent)
    for k in range(probes):
        if k < DIM:
            phi = xc[:, k].copy()
        else:
            coef = rng.standard_normal(9)
            x, y, z = (xc / ext).T
            phi = (
                coef[0] * x + coef[1] * y + coef[2] * z
                + coef[3] * x * y + coef[4] * y * z + coef[5] * x * z
                + coef[6] * x * x + coef[7] * y * y + coef[8] * z * z
            )
        phi = phi - phi.mean()
        grad_sq = ops.grad_energy_sq(phi[None])
        if grad_sq <= 1e-28:
            continue  # constant probe: mean-zero forces phi == 0
        quotient = lp_norm(domain, phi, 6) / np.sqrt(grad_sq)
        best = max(best, float(quotient))
    return best
