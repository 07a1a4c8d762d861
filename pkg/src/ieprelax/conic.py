"""Standard-form conic feasibility/optimization solver.

Problems read

    minimize    c'x
    subject to  A x = b,   x in K,

where K is an ordered product of PSD blocks (in svec coordinates) and free
blocks. The solver runs operator splitting (Douglas-Rachford) on the
homogeneous self-dual embedding, so a single iteration alternates one
cached linear-system solve with a projection onto the cone; the embedding
produces Farkas infeasibility certificates as naturally as solutions.

Certificate convention: a primal-infeasibility witness is a row vector y
with A'y in the dual cone K* and b'y = -1 after normalization.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from . import symlin

OPTIMAL = "OPTIMAL"
PRIMAL_INFEASIBLE = "PRIMAL_INFEASIBLE"
DUAL_INFEASIBLE = "DUAL_INFEASIBLE"
MAX_ITER = "MAX_ITER"
NUMERICAL_TROUBLE = "NUMERICAL_TROUBLE"

DEFAULT_EPS = 1e-7
DEFAULT_MAX_ITER = 200_000

# Certificates are declared only when the dual distance is small relative to
# a capped witness norm. The scale-relative test alone (dist <= eps * ||y||)
# admits astronomically scaled pseudo-witnesses on degenerate feasible
# programs with no strictly feasible point; capping the norm credit keeps
# every declared certificate meaningful for the bounded feasible sets built
# here, at the cost of reporting a (truthful) iteration cap on weakly
# infeasible inputs.
CERT_NORM_CAP = 1e5


@dataclass(frozen=True)
class Block:
    kind: str  # "psd" | "free"
    size: int

    def __post_init__(self):
        if self.kind not in ("psd", "free"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.size < 1:
            raise ValueError(f"block size must be positive, got {self.size}")

    @property
    def var_len(self) -> int:
        return symlin.svec_len(self.size) if self.kind == "psd" else self.size


def psd(k: int) -> Block:
    return Block("psd", k)


def free(m: int) -> Block:
    return Block("free", m)


@dataclass(frozen=True)
class ConeSpec:
    """Ordered product of PSD and free blocks over the variable vector."""

    blocks: tuple

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def dim(self) -> int:
        return sum(blk.var_len for blk in self.blocks)

    def slices(self):
        out, off = [], 0
        for blk in self.blocks:
            out.append((blk, slice(off, off + blk.var_len)))
            off += blk.var_len
        return out

    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection onto K (free blocks pass through)."""
        return self.projector()(x)

    def projector(self) -> "_ConeProjector":
        return _ConeProjector(self)

    def dist(self, x: np.ndarray) -> float:
        """Distance to K. Exploits that svec is isometric."""
        sq = 0.0
        for blk, sl in self.slices():
            if blk.kind == "psd":
                w, _ = symlin.eigh(symlin.smat(x[sl]))
                sq += float(np.sum(np.minimum(w, 0.0) ** 2))
        return float(np.sqrt(sq))

    def dual_dist(self, s: np.ndarray) -> float:
        """Distance to K* (PSD blocks are self-dual; free blocks dualize to 0)."""
        sq = 0.0
        for blk, sl in self.slices():
            if blk.kind == "psd":
                w, _ = symlin.eigh(symlin.smat(s[sl]))
                sq += float(np.sum(np.minimum(w, 0.0) ** 2))
            else:
                sq += float(np.dot(s[sl], s[sl]))
        return float(np.sqrt(sq))


class _ConeProjector:
    """Reusable cone projection with same-size PSD blocks batched into one
    stacked LAPACK eigendecomposition call."""

    def __init__(self, cone: ConeSpec):
        groups = {}
        for blk, sl in cone.slices():
            if blk.kind == "psd":
                groups.setdefault(blk.size, []).append(sl)
        self._groups = []
        for size, sls in groups.items():
            rows, cols = np.triu_indices(size)
            w = np.where(rows == cols, 1.0, symlin.SQRT2)
            self._groups.append((size, sls, rows, cols, w))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.array(x, dtype=float)
        for size, sls, rows, cols, wvec in self._groups:
            vals = np.stack([out[sl] for sl in sls]) / wvec
            mats = np.zeros((len(sls), size, size))
            mats[:, rows, cols] = vals
            mats[:, cols, rows] = vals
            w, Q = np.linalg.eigh(mats)
            neg = w[:, 0] < 0.0
            if not np.any(neg):
                continue
            wp = np.maximum(w[neg], 0.0)
            P = (Q[neg] * wp[:, None, :]) @ np.swapaxes(Q[neg], 1, 2)
            P = (P + np.swapaxes(P, 1, 2)) / 2.0
            sv = P[:, rows, cols] * wvec
            for k, i in enumerate(np.flatnonzero(neg)):
                out[sls[i]] = sv[k]
        return out


@dataclass(frozen=True)
class ConicProgram:
    cone: ConeSpec
    A: scipy.sparse.csr_matrix
    b: np.ndarray
    c: np.ndarray
    variable_names: tuple = ()

    def __post_init__(self):
        A = self.A
        if not (scipy.sparse.issparse(A) and A.format == "csr" and A.dtype == float):
            A = scipy.sparse.csr_matrix(A, dtype=float)
        b = np.asarray(self.b, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        if A.shape != (b.size, self.cone.dim):
            raise ValueError(
                f"A has shape {A.shape}, expected ({b.size}, {self.cone.dim})"
            )
        if c.size != self.cone.dim:
            raise ValueError(f"c has length {c.size}, expected {self.cone.dim}")
        if not (np.all(np.isfinite(A.data)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("program data contains non-finite entries")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def m(self) -> int:
        return self.b.size

    @property
    def dim(self) -> int:
        return self.cone.dim

    def with_objective(self, c: np.ndarray) -> "ConicProgram":
        return ConicProgram(self.cone, self.A, self.b, c, self.variable_names)


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    objective: float | None = None
    res_primal: float = np.inf
    res_cone: float = np.inf
    res_gap: float = np.inf
    certificate: np.ndarray | None = None
    certificate_residual: float = np.inf
    iterations: int = 0
    solve_time: float = 0.0
    message: str = ""

    def residual_report(self) -> dict:
        return {"primal": self.res_primal, "cone": self.res_cone, "gap": self.res_gap}


def _declarable_infeasibility(program: ConicProgram, y: np.ndarray, eps: float):
    """Solver-side gate for declaring primal infeasibility: the witness must
    pass verify_farkas at eps and its dual distance must stay below
    eps * min(||y||, CERT_NORM_CAP) after normalization."""
    ok, rep = verify_farkas(program, y, eps)
    if not ok:
        return False, rep
    strict = eps * max(1.0, min(rep["norm_y"], CERT_NORM_CAP))
    if rep["dual_dist"] > strict:
        rep = dict(rep, ok=False, rejected="witness norm beyond the cap")
        return False, rep
    return True, rep


def verify_farkas(program: ConicProgram, y: np.ndarray, tol: float):
    """Re-verify a primal-infeasibility witness from scratch.

    Renormalizes y so that b'y = -1 (scale-invariant), then checks that A'y
    lies within tol * max(1, ||y||) of the dual cone. Returns (ok, report).
    """
    y = np.asarray(y, dtype=float).ravel()
    if y.size != program.m:
        raise ValueError(f"certificate length {y.size}, expected {program.m}")
    bty = float(program.b @ y)
    report = {"bty_raw": bty}
    if not bty < 0.0:
        report.update(dual_dist=np.inf, norm_y=float(np.linalg.norm(y)), ok=False)
        return False, report
    yn = y / (-bty)
    s = program.A.T @ yn
    dual_dist = program.cone.dual_dist(s)
    norm_y = float(np.linalg.norm(yn))
    ok = dual_dist <= tol * max(1.0, norm_y)
    report.update(dual_dist=dual_dist, norm_y=norm_y, bty_normalized=-1.0, ok=ok)
    return ok, report


def dump_program(program: ConicProgram, path) -> None:
    """Debug dump of (A, b, c, cone) for cross-checking against other solvers."""
    doc = {
        "cone": [{"type": blk.kind, "size": blk.size} for blk in program.cone.blocks],
        "A": program.A.toarray().tolist(),
        "b": program.b.tolist(),
        "c": program.c.tolist(),
        "variable_names": list(program.variable_names),
    }
    with open(path, "w") as f:
        json.dump(doc, f)


class Workspace:
    """Preprocessed program with a cached factorization.

    The equality matrix is fixed at construction; solve() may be called many
    times with different objectives (the rounding heuristic does exactly
    that), reusing the preprocessing and the normal-equation factor.
    """

    def __init__(self, program: ConicProgram, lsqr_check: bool = True):
        self.program = program
        self.cone = program.cone
        self._projector = _ConeProjector(program.cone)
        A, b = program.A, program.b
        m0, N = A.shape
        self._At_full = A.T.tocsr()

        # drop all-zero rows (a zero row with nonzero rhs is an immediate
        # inconsistency with an elementary certificate)
        A.eliminate_zeros()
        nnz_per_row = np.diff(A.indptr)
        self.shortcut: ConicSolution | None = None
        zero_rows = np.flatnonzero(nnz_per_row == 0)
        for i in zero_rows:
            if b[i] != 0.0:
                y = np.zeros(m0)
                y[i] = -1.0 / b[i]
                self.shortcut = self._certified_infeasible(y, DEFAULT_EPS, 0, 0.0)
                if self.shortcut is not None:
                    return
        keep = nnz_per_row > 0

        # drop exact duplicate (row, rhs) pairs
        seen = {}
        idx_keep = []
        for i in range(m0):
            if not keep[i]:
                continue
            row = A.getrow(i)
            key = (row.indices.tobytes(), row.data.tobytes(), float(b[i]))
            if key in seen:
                continue
            seen[key] = i
            idx_keep.append(i)
        self.idx_keep = np.array(idx_keep, dtype=np.int64)
        self.m = len(idx_keep)
        self.N = N

        if self.m == 0:
            self.Ak = scipy.sparse.csr_matrix((0, N))
            self.As = self.Ak
            self.row_scale = np.zeros(0)
            self.bs = np.zeros(0)
            self.sigma_b = 1.0
            self._kkt_lu = None
            return

        self.Ak = A[self.idx_keep]
        bk = b[self.idx_keep]

        # linear consistency fast path: a definite least-squares residual is
        # already a Farkas certificate living in the null space of A'
        if lsqr_check:
            res = scipy.sparse.linalg.lsqr(
                self.Ak, bk, atol=1e-14, btol=1e-14, conlim=0.0,
                iter_lim=max(200, 4 * min(self.m, N)),
            )
            x_ls = res[0]
            r = self.Ak @ x_ls - bk
            rnorm = float(np.linalg.norm(r))
            if rnorm > 1e-9 * (1.0 + float(np.linalg.norm(bk))):
                y = np.zeros(m0)
                y[self.idx_keep] = r / rnorm**2
                self.shortcut = self._certified_infeasible(y, DEFAULT_EPS, 0, 0.0)
                if self.shortcut is not None:
                    return

        # row equilibration plus a global rhs scale
        row_norms = np.sqrt(np.asarray(self.Ak.multiply(self.Ak).sum(axis=1)).ravel())
        self.row_scale = 1.0 / row_norms
        D = scipy.sparse.diags(self.row_scale)
        self.As = (D @ self.Ak).tocsr()
        bs = self.row_scale * bk
        self.sigma_b = max(1.0, float(np.linalg.norm(bs)))
        self.bs = bs / self.sigma_b
        self._AsT = self.As.T.tocsr()

        # cache a sparse LU of the (always nonsingular) quasi-definite
        # KKT matrix [[I, -A'], [A, I]]; every iteration reuses it
        K = scipy.sparse.bmat(
            [[scipy.sparse.eye(N), -self._AsT],
             [self.As, scipy.sparse.eye(self.m)]], format="csc"
        )
        self._kkt_lu = scipy.sparse.linalg.splu(K, permc_spec="MMD_AT_PLUS_A")

    # -- linear algebra helpers -------------------------------------------

    def _msolve(self, w1: np.ndarray, w2: np.ndarray):
        """Solve [[I, -A'], [A, I]] [x; y] = [w1; w2] via the cached factor."""
        if self.m == 0:
            return w1.copy(), w2.copy()
        xy = self._kkt_lu.solve(np.concatenate([w1, w2]))
        return xy[:self.N], xy[self.N:]

    def _certified_infeasible(self, y_full, eps, iters, t0):
        ok, rep = _declarable_infeasibility(self.program, y_full, eps)
        if not ok:
            return None
        bty = float(self.program.b @ y_full)
        yn = y_full / (-bty)
        return ConicSolution(
            status=PRIMAL_INFEASIBLE, y=yn, certificate=yn,
            certificate_residual=rep["dual_dist"], iterations=iters,
            solve_time=time.perf_counter() - t0 if t0 else 0.0,
        )

    def _scatter(self, y_kept: np.ndarray) -> np.ndarray:
        y = np.zeros(self.program.m)
        y[self.idx_keep] = y_kept
        return y

    # -- main loop ---------------------------------------------------------

    def solve(self, c: np.ndarray | None = None, eps: float = DEFAULT_EPS,
              max_iter: int = DEFAULT_MAX_ITER, seed: int = 0,
              alpha: float = 1.8, check_every: int = 25,
              b: np.ndarray | None = None) -> ConicSolution:
        """Run the splitting iteration; see the module docstring for the model.

        The seed is accepted for interface stability; the iteration itself is
        deterministic and does not consume randomness. A replacement rhs b may
        be passed when preprocessing dropped nothing (same A, new targets).
        """
        t0 = time.perf_counter()
        prog = self.program
        if self.shortcut is not None:
            if b is not None:
                raise ValueError("rhs override is unavailable: preprocessing "
                                 "already certified this program infeasible")
            sol = self.shortcut
            return ConicSolution(**{**sol.__dict__})
        if b is not None:
            if self.m != prog.m:
                raise ValueError("rhs override requires preprocessing to have "
                                 "kept every row")
            b_full = np.asarray(b, dtype=float).ravel()
            if b_full.size != prog.m:
                raise ValueError(f"rhs length {b_full.size}, expected {prog.m}")
            prog = prog.__class__(prog.cone, prog.A, b_full, prog.c,
                                  prog.variable_names)
            bs_kept = self.row_scale * b_full[self.idx_keep]
            sigma_b = max(1.0, float(np.linalg.norm(bs_kept)))
            bs = bs_kept / sigma_b
        else:
            sigma_b, bs = self.sigma_b, self.bs

        N, m = self.N, self.m
        c0 = np.zeros(N) if c is None else np.asarray(c, dtype=float).ravel()
        if c0.size != N:
            raise ValueError(f"objective length {c0.size}, expected {N}")
        sigma_c = max(1.0, float(np.linalg.norm(c0)))
        cs = c0 / sigma_c

        h1, h2 = cs, -bs
        g1, g2 = self._msolve(h1, h2)
        hg = 1.0 + float(h1 @ g1 + h2 @ g2)

        ux = np.zeros(N)
        uy = np.zeros(m)
        ut = 1.0
        vx = np.zeros(N)
        vy = np.zeros(m)
        vt = 1.0

        norm_b = 1.0 + float(np.linalg.norm(prog.b))
        norm_c = 1.0 + float(np.linalg.norm(c0))
        best = ConicSolution(status=MAX_ITER)

        def check(iteration: int) -> ConicSolution | None:
            if not (np.all(np.isfinite(ux)) and np.all(np.isfinite(uy)) and np.isfinite(ut)):
                return ConicSolution(status=NUMERICAL_TROUBLE, iterations=iteration,
                                     solve_time=time.perf_counter() - t0,
                                     message="non-finite iterate")
            if ut > 1e-12:
                xc = (sigma_b / ut) * ux
                yc = self._scatter((sigma_c / ut) * (self.row_scale * uy))
                rp = float(np.linalg.norm(prog.A @ xc - prog.b)) / norm_b
                zc = c0 - self._At_full @ yc
                rd = prog.cone.dual_dist(zc) / norm_c
                ob = float(c0 @ xc)
                gap = abs(ob - float(prog.b @ yc)) / (1.0 + abs(ob))
                if rp <= eps and rd <= eps and gap <= eps:
                    return ConicSolution(
                        status=OPTIMAL, x=xc, y=yc, objective=ob,
                        res_primal=rp, res_cone=0.0, res_gap=gap,
                        iterations=iteration, solve_time=time.perf_counter() - t0,
                    )
                best.x, best.y, best.objective = xc, yc, ob
                best.res_primal, best.res_cone, best.res_gap = rp, 0.0, gap
            if m:
                y_dir = self._scatter(self.row_scale * (-uy))
                bty = float(prog.b @ y_dir)
                if bty < -1e-12 * max(1.0, float(np.linalg.norm(y_dir))):
                    ok, rep = _declarable_infeasibility(prog, y_dir, eps)
                    if ok:
                        yn = y_dir / (-bty)
                        return ConicSolution(
                            status=PRIMAL_INFEASIBLE, y=yn, certificate=yn,
                            certificate_residual=rep["dual_dist"],
                            iterations=iteration,
                            solve_time=time.perf_counter() - t0,
                        )
            ctx = float(c0 @ ux)
            if ctx < -1e-12 * max(1.0, float(np.linalg.norm(ux))):
                x_dir = ux / (-ctx)
                x_cap = max(1.0, min(float(np.linalg.norm(x_dir)), CERT_NORM_CAP))
                if float(np.linalg.norm(prog.A @ x_dir)) <= eps * x_cap:
                    return ConicSolution(
                        status=DUAL_INFEASIBLE, x=x_dir, certificate=x_dir,
                        certificate_residual=float(np.linalg.norm(prog.A @ x_dir)),
                        iterations=iteration, solve_time=time.perf_counter() - t0,
                    )
            return None

        cone_project = self._projector
        iteration = 0
        while iteration < max_iter:
            iteration += 1
            wx = ux + vx
            wy = uy + vy
            wt = ut + vt
            p1, p2 = self._msolve(wx, wy)
            tt = (wt + float(h1 @ p1 + h2 @ p2)) / hg
            tx = p1 - tt * g1
            ty = p2 - tt * g2
            # over-relaxed Douglas-Rachford update
            tx = alpha * tx + (1.0 - alpha) * ux
            ty = alpha * ty + (1.0 - alpha) * uy
            tt = alpha * tt + (1.0 - alpha) * ut
            ux_new = cone_project(tx - vx)
            uy_new = ty - vy
            ut_new = max(tt - vt, 0.0)
            vx = vx - tx + ux_new
            vy = vy - ty + uy_new  # identically zero for the free multiplier rows
            vt = vt - tt + ut_new
            ux, uy, ut = ux_new, uy_new, ut_new
            if iteration % check_every == 0:
                sol = check(iteration)
                if sol is not None:
                    return sol

        sol = check(iteration)
        if sol is not None:
            return sol
        best.iterations = iteration
        best.solve_time = time.perf_counter() - t0
        best.message = "iteration cap reached without a verified conclusion"
        return best


def solve(program: ConicProgram, eps: float = DEFAULT_EPS,
          max_iter: int = DEFAULT_MAX_ITER, seed: int = 0,
          alpha: float = 1.8, lsqr_check: bool = True) -> ConicSolution:
    """One-shot solve; builds a Workspace and discards it."""
    ws = Workspace(program, lsqr_check=lsqr_check)
    return ws.solve(c=program.c, eps=eps, max_iter=max_iter, seed=seed, alpha=alpha)
