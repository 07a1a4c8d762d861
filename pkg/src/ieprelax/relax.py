"""Compile IEP instances into conic feasibility programs.

Four program kinds are built here, all over products of PSD and free blocks:

  * r1      -- the basic projector relaxation: q PSD(n) blocks tied by
               partition-of-identity, trace, and affine rows.
  * alt1    -- the certificate search dual to r1: feasibility of alt1 is
               equivalent to r1 being empty, and its solution decodes into
               a structured infeasibility certificate.
  * r2      -- r1 plus a moment-style lift: one PSD block of order
               q * n(n+1)/2 holding pairwise product surrogates of the
               projectors, coupled to the Z blocks by four row families.
  * r2plus  -- r2 plus the off-diagonal orthogonality family (products of
               distinct projectors vanish); same cone sizes as r2.

The moment block is stored in orthonormal svec coordinates throughout, so
its PSD constraint is basis-independent; rows stated in terms of the
non-orthonormal elementary matrices pick up the matching sqrt(2) weights
at assembly time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from . import symlin
from .conic import Block, ConeSpec, ConicProgram, free, psd
from .instance import CandidateSolution, IEPInstance

SQRT2 = math.sqrt(2.0)

LEVEL_R1 = "r1"
LEVEL_R2 = "r2"
LEVEL_R2PLUS = "r2plus"
LEVELS = (LEVEL_R1, LEVEL_R2, LEVEL_R2PLUS)

MOMENT_SIZE_CAP = 400


class MomentSizeError(ValueError):
    """Moment block order exceeds the configured cap."""


@dataclass(frozen=True)
class VariableLayout:
    """Where each named variable lives inside the program's vector."""

    kind: str
    n: int
    q: int
    ell: int
    lam: tuple
    mults: tuple
    cone: ConeSpec
    slots: dict

    @property
    def d(self) -> int:
        return symlin.svec_len(self.n)

    def slot(self, name: str) -> slice:
        return self.slots[name]


@dataclass(frozen=True)
class MomentBlocks:
    """The lifted operator block in svec coordinates: a symmetric PSD matrix
    of order q*d whose (i, j) sub-block represents the operator coupling
    projector i with projector j."""

    n: int
    q: int
    mat: np.ndarray

    @property
    def d(self) -> int:
        return symlin.svec_len(self.n)

    def block(self, i: int, j: int) -> np.ndarray:
        d = self.d
        return self.mat[i * d:(i + 1) * d, j * d:(j + 1) * d]

    def apply(self, i: int, j: int, X: np.ndarray) -> np.ndarray:
        """Evaluate the (i, j) operator on a symmetric matrix."""
        return symlin.smat(self.block(i, j) @ symlin.svec(X))


@dataclass(frozen=True)
class DecodedPoint:
    Z: tuple
    X: np.ndarray | None
    moments: MomentBlocks | None = None
    cert_fields: dict | None = None

    def candidate(self) -> CandidateSolution:
        return CandidateSolution(Z=self.Z, X=self.X)


class _Rows:
    """Tiny COO assembler for constraint rows."""

    def __init__(self):
        self.rows, self.cols, self.vals, self.rhs = [], [], [], []

    def add_row(self, entries, b: float) -> None:
        r = len(self.rhs)
        for col, val in entries:
            if val != 0.0:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(val)
        self.rhs.append(b)

    def matrix(self, dim: int) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix(
            (self.vals, (self.rows, self.cols)), shape=(len(self.rhs), dim)
        )


def _r1_rows(inst: IEPInstance, rows: _Rows, z_off) -> None:
    """Partition, trace, and affine rows shared by every level."""
    n, d = inst.n, symlin.svec_len(inst.n)
    lam = inst.spectrum.values
    idx = symlin.svec_index_map(n)
    svec_eye = symlin.svec(np.eye(n))
    for a in range(d):
        rows.add_row([(z_off[i] + a, 1.0) for i in range(inst.q)], svec_eye[a])
    diag_coords = [idx[s, s] for s in range(n)]
    for i, m_i in enumerate(inst.spectrum.mults):
        rows.add_row([(z_off[i] + a, 1.0) for a in diag_coords], float(m_i))
    for con in inst.constraints:
        sC = symlin.svec(con.C)
        nz = np.flatnonzero(sC)
        entries = []
        for i in range(inst.q):
            entries.extend((z_off[i] + a, lam[i] * sC[a]) for a in nz)
        rows.add_row(entries, con.b)


def build_r1(inst: IEPInstance):
    """Projector relaxation: q PSD(n) blocks, d + q + ell equality rows."""
    n, q, d = inst.n, inst.q, symlin.svec_len(inst.n)
    cone = ConeSpec(tuple(psd(n) for _ in range(q)))
    z_off = [i * d for i in range(q)]
    rows = _Rows()
    _r1_rows(inst, rows, z_off)
    A = rows.matrix(cone.dim)
    layout = VariableLayout(
        kind=LEVEL_R1, n=n, q=q, ell=inst.ell,
        lam=tuple(inst.spectrum.values), mults=tuple(int(m) for m in inst.spectrum.mults),
        cone=cone,
        slots={f"Z{i}": slice(z_off[i], z_off[i] + d) for i in range(q)},
    )
    program = ConicProgram(cone, A, np.array(rows.rhs), np.zeros(cone.dim))
    return program, layout


def build_alt1(inst: IEPInstance):
    """Certificate search for r1 emptiness.

    Variables: a free symmetric matrix (svec coordinates), one free scalar
    per projector, one free scalar per affine constraint, and q PSD slack
    blocks. One normalization row plus q*d coupling rows."""
    n, q, ell, d = inst.n, inst.q, inst.ell, symlin.svec_len(inst.n)
    lam = inst.spectrum.values
    mults = inst.spectrum.mults
    idx = symlin.svec_index_map(n)

    blocks = [free(d), free(q)]
    if ell:
        blocks.append(free(ell))
    blocks.extend(psd(n) for _ in range(q))
    cone = ConeSpec(tuple(blocks))
    a_off = 0
    d_off = d
    xi_off = d + q
    b_off = d + q + ell
    slots = {"A": slice(a_off, a_off + d), "d": slice(d_off, d_off + q)}
    if ell:
        slots["xi"] = slice(xi_off, xi_off + ell)
    for i in range(q):
        slots[f"B{i}"] = slice(b_off + i * d, b_off + (i + 1) * d)

    rows = _Rows()
    diag_coords = [idx[s, s] for s in range(n)]
    entries = [(a_off + a, -1.0) for a in diag_coords]
    entries += [(d_off + i, -float(mults[i])) for i in range(q)]
    entries += [(xi_off + k, -inst.constraints[k].b) for k in range(ell)]
    rows.add_row(entries, 1.0)

    svec_eye = symlin.svec(np.eye(n))
    svec_C = [symlin.svec(con.C) for con in inst.constraints]
    for i in range(q):
        for a in range(d):
            entries = [(a_off + a, 1.0), (d_off + i, svec_eye[a])]
            entries += [
                (xi_off + k, lam[i] * svec_C[k][a]) for k in range(ell)
                if svec_C[k][a] != 0.0
            ]
            entries.append((b_off + i * d + a, -1.0))
            rows.add_row(entries, 0.0)

    A = rows.matrix(cone.dim)
    layout = VariableLayout(
        kind="alt1", n=n, q=q, ell=ell,
        lam=tuple(lam), mults=tuple(int(m) for m in mults),
        cone=cone, slots=slots,
    )
    program = ConicProgram(cone, A, np.array(rows.rhs), np.zeros(cone.dim))
    return program, layout


def build_r2(inst: IEPInstance, plus: bool = False, size_cap: int = MOMENT_SIZE_CAP):
    """Moment-lifted relaxation (optionally with the orthogonality family).

    The lifted block has order q*d with d = n(n+1)/2; instances beyond the
    size cap are refused outright rather than thrashing memory."""
    n, q, ell, d = inst.n, inst.q, inst.ell, symlin.svec_len(inst.n)
    D = q * d
    if D > size_cap:
        raise MomentSizeError(
            f"moment block order q*n(n+1)/2 = {D} exceeds the cap {size_cap}"
        )
    lam = inst.spectrum.values
    mults = inst.spectrum.mults
    idx = symlin.svec_index_map(n)
    idx_big = symlin.svec_index_map(D)

    cone = ConeSpec(tuple([psd(n)] * q + [psd(D)]))
    z_off = [i * d for i in range(q)]
    w_off = q * d

    def w_entry(P: int, R: int, weight: float):
        """svec-coordinate entry of the lifted block for raw position (P, R)."""
        if P == R:
            return w_off + idx_big[P, P], weight
        return w_off + idx_big[P, R], weight / SQRT2

    def accumulate(raw_entries):
        """Merge raw (P, R, w) contributions into svec coordinates."""
        acc = {}
        for P, R, w in raw_entries:
            col, val = w_entry(P, R, w)
            acc[col] = acc.get(col, 0.0) + val
        return list(acc.items())

    rows = _Rows()
    _r1_rows(inst, rows, z_off)

    # scale of the single nonzero svec coordinate of an elementary matrix
    def fw(s: int, t: int) -> float:
        return 1.0 if s == t else 1.0 / SQRT2

    pairs = [(s, t) for s in range(n) for t in range(s, n)]

    # family: summing the lifted operators over j reproduces delta * Z_i
    for i in range(q):
        for (s, t) in pairs:
            col_st = idx[s, t]
            w_st = fw(s, t)
            delta = 1.0 if s == t else 0.0
            for a in range(d):
                raw = [(i * d + a, j * d + col_st, w_st) for j in range(q)]
                entries = accumulate(raw)
                entries.append((z_off[i] + a, -delta))
                rows.add_row(entries, 0.0)

    # family: tracing the second argument gives multiplicity-weighted Z_i
    for i in range(q):
        for j in range(q):
            for a in range(d):
                raw = [(i * d + a, j * d + idx[s, s], 1.0) for s in range(n)]
                entries = accumulate(raw)
                entries.append((z_off[i] + a, -float(mults[j])))
                rows.add_row(entries, 0.0)

    # family: the diagonal blocks reproduce Z_i entrywise (idempotence lift)
    for i in range(q):
        for (s, t) in pairs:
            raw = [
                (i * d + idx[s, r], i * d + idx[t, r], fw(s, r) * fw(t, r))
                for r in range(n)
            ]
            entries = accumulate(raw)
            entries.append((z_off[i] + idx[s, t], -fw(s, t)))
            rows.add_row(entries, 0.0)

    # family: the affine equations hold in the lifted product sense
    for i in range(q):
        for k, con in enumerate(inst.constraints):
            sC = symlin.svec(con.C)
            nz = np.flatnonzero(sC)
            for a in range(d):
                raw = [
                    (i * d + a, j * d + cc, lam[j] * sC[cc])
                    for j in range(q) for cc in nz
                ]
                entries = accumulate(raw)
                entries.append((z_off[i] + a, -con.b))
                rows.add_row(entries, 0.0)

    if plus:
        # orthogonality family: distinct projectors multiply to zero
        for i in range(q):
            for j in range(i + 1, q):
                for s in range(n):
                    for t in range(n):
                        raw = [
                            (i * d + idx[s, r], j * d + idx[t, r], fw(s, r) * fw(t, r))
                            for r in range(n)
                        ]
                        rows.add_row(accumulate(raw), 0.0)

    A = rows.matrix(cone.dim)
    slots = {f"Z{i}": slice(z_off[i], z_off[i] + d) for i in range(q)}
    slots["W"] = slice(w_off, w_off + symlin.svec_len(D))
    layout = VariableLayout(
        kind=LEVEL_R2PLUS if plus else LEVEL_R2, n=n, q=q, ell=ell,
        lam=tuple(lam), mults=tuple(int(m) for m in mults),
        cone=cone, slots=slots,
    )
    program = ConicProgram(cone, A, np.array(rows.rhs), np.zeros(cone.dim))
    return program, layout


def build_level(inst: IEPInstance, level: str, size_cap: int = MOMENT_SIZE_CAP):
    if level == LEVEL_R1:
        return build_r1(inst)
    if level == LEVEL_R2:
        return build_r2(inst, plus=False, size_cap=size_cap)
    if level == LEVEL_R2PLUS:
        return build_r2(inst, plus=True, size_cap=size_cap)
    raise ValueError(f"unknown relaxation level {level!r}")


def append_image_rows(program: ConicProgram, layout: VariableLayout,
                      pairs) -> ConicProgram:
    """Append linear conditions on the encoded matrix X = sum_i lambda_i Z_i.

    Each pair (C, v) adds one row trace(C X) = v over the Z blocks only, so
    unlike instance constraints the conditions do not propagate into the
    lifted-product rows. Used to pin entries of X when scanning the image of
    a relaxation."""
    rows = _Rows()
    for C, v in pairs:
        sC = symlin.svec(symlin.check_symmetric(C, "image constraint"))
        nz = np.flatnonzero(sC)
        entries = []
        for i in range(layout.q):
            off = layout.slot(f"Z{i}").start
            entries.extend((off + a, layout.lam[i] * sC[a]) for a in nz)
        rows.add_row(entries, float(v))
    extra = rows.matrix(program.dim)
    A = scipy.sparse.vstack([program.A, extra], format="csr")
    b = np.concatenate([program.b, np.array(rows.rhs)])
    return ConicProgram(program.cone, A, b, program.c, program.variable_names)


def objective_vector(layout: VariableLayout, G) -> np.ndarray:
    """Objective minimizing -sum_i trace(G_i Z_i); lifted coordinates get zero."""
    G = list(G)
    if len(G) != layout.q:
        raise ValueError(f"expected {layout.q} objective matrices, got {len(G)}")
    c = np.zeros(layout.cone.dim)
    for i, Gi in enumerate(G):
        Gi = np.asarray(Gi, dtype=float)
        if Gi.shape != (layout.n, layout.n):
            raise ValueError(f"objective matrix {i} has shape {Gi.shape}")
        c[layout.slot(f"Z{i}")] = -symlin.svec(symlin.sym(Gi))
    return c


def attach_objective(program: ConicProgram, layout: VariableLayout, G) -> ConicProgram:
    """Program with the random-functional objective attached; rows unchanged."""
    return program.with_objective(objective_vector(layout, G))


def decode(layout: VariableLayout, x: np.ndarray) -> DecodedPoint:
    """Invert the builders' encoding: split the solver vector into named
    matrices (projector blocks, lifted block, or certificate fields)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != layout.cone.dim:
        raise ValueError(f"vector length {x.size}, expected {layout.cone.dim}")
    if layout.kind == "alt1":
        fields = {
            "A": symlin.smat(x[layout.slot("A")]),
            "d": x[layout.slot("d")].copy(),
            "xi": x[layout.slot("xi")].copy() if layout.ell else np.zeros(0),
            "B": tuple(symlin.smat(x[layout.slot(f"B{i}")]) for i in range(layout.q)),
        }
        return DecodedPoint(Z=(), X=None, cert_fields=fields)
    Z = tuple(symlin.smat(x[layout.slot(f"Z{i}")]) for i in range(layout.q))
    X = sum(l * Zi for l, Zi in zip(layout.lam, Z))
    moments = None
    if "W" in layout.slots:
        moments = MomentBlocks(n=layout.n, q=layout.q, mat=symlin.smat(x[layout.slot("W")]))
    return DecodedPoint(Z=Z, X=X, moments=moments)


def encode(layout: VariableLayout, Z=None, W: np.ndarray | None = None,
           A: np.ndarray | None = None, d=None, xi=None, B=None) -> np.ndarray:
    """Exact inverse of decode; used to inject known points into programs."""
    x = np.zeros(layout.cone.dim)
    if Z is not None:
        for i, Zi in enumerate(Z):
            x[layout.slot(f"Z{i}")] = symlin.svec(np.asarray(Zi, dtype=float))
    if W is not None:
        x[layout.slot("W")] = symlin.svec(np.asarray(W, dtype=float))
    if A is not None:
        x[layout.slot("A")] = symlin.svec(np.asarray(A, dtype=float))
    if d is not None:
        x[layout.slot("d")] = np.asarray(d, dtype=float)
    if xi is not None and layout.ell:
        x[layout.slot("xi")] = np.asarray(xi, dtype=float)
    if B is not None:
        for i, Bi in enumerate(B):
            x[layout.slot(f"B{i}")] = symlin.svec(np.asarray(Bi, dtype=float))
    return x


def lifted_moments(Z) -> np.ndarray:
    """Rank-one lift of an exact projector tuple: the outer product of the
    stacked svec coordinates. Satisfies every r2plus row when the tuple
    solves the polynomial system."""
    v = np.concatenate([symlin.svec(np.asarray(Zi, dtype=float)) for Zi in Z])
    return np.outer(v, v)
