"""Affine inverse eigenvalue problem instances.

An instance is a target spectrum (eigenvalue/multiplicity pairs summing to
the dimension n) together with an affine space of symmetric matrices given
by trace equations trace(C_k @ X) == b_k. The module provides validation,
the exact membership residuals for candidate projector tuples, JSON
serialization, and the four experiment-family generators.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import symlin

MERGE_TOL_DEFAULT = 1e-9
GROUP_MERGE_TOL = 1e-6
MEMBERSHIP_TOL_DEFAULT = 1e-5


class InvalidInstanceError(ValueError):
    """Instance data violates a structural invariant."""


class AmbiguousSpectrumError(ValueError):
    """Eigenvalue grouping hit a gap inside the ambiguous band."""


@dataclass(frozen=True)
class Spectrum:
    """Multiset of (eigenvalue, multiplicity) pairs."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((float(v), int(m)) for v, m in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if len(pairs) < 1:
            raise InvalidInstanceError("spectrum must contain at least one pair")
        for v, m in pairs:
            if m < 1:
                raise InvalidInstanceError(f"multiplicity {m} for eigenvalue {v} is not positive")
            if not math.isfinite(v):
                raise InvalidInstanceError(f"eigenvalue {v} is not finite")
        vals = sorted(v for v, _ in pairs)
        for u, w in zip(vals, vals[1:]):
            if w - u <= MERGE_TOL_DEFAULT:
                raise InvalidInstanceError(
                    f"eigenvalues {u} and {w} are not separated beyond the merge tolerance"
                )

    @property
    def q(self) -> int:
        return len(self.pairs)

    @property
    def n(self) -> int:
        return sum(m for _, m in self.pairs)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.pairs])

    @property
    def mults(self) -> np.ndarray:
        return np.array([m for _, m in self.pairs], dtype=int)

    def expanded(self, descending: bool = False) -> np.ndarray:
        """Length-n eigenvalue list with multiplicities written out, sorted."""
        out = np.concatenate([np.full(m, v) for v, m in self.pairs])
        out.sort()
        return out[::-1].copy() if descending else out


def spectrum_of(values, mults) -> Spectrum:
    return Spectrum(tuple(zip(values, mults)))


def group_eigenvalues(values, merge_tol: float = GROUP_MERGE_TOL,
                      tie_tol: float = MERGE_TOL_DEFAULT) -> Spectrum:
    """Group a numeric eigenvalue list into (value, multiplicity) pairs.

    Consecutive gaps <= tie_tol merge; gaps >= merge_tol split; a gap inside
    (tie_tol, merge_tol) is ambiguous and raises instead of silently
    corrupting multiplicities.
    """
    vals = np.sort(np.asarray(values, dtype=float))
    groups = [[vals[0]]]
    for prev, cur in zip(vals, vals[1:]):
        gap = cur - prev
        if gap <= tie_tol:
            groups[-1].append(cur)
        elif gap < merge_tol:
            raise AmbiguousSpectrumError(
                f"eigenvalue gap {gap:.3e} lies inside the ambiguous band "
                f"({tie_tol:.0e}, {merge_tol:.0e})"
            )
        else:
            groups.append([cur])
    return Spectrum(tuple((float(np.mean(g)), len(g)) for g in groups))


@dataclass(frozen=True)
class AffineConstraint:
    """One trace equation trace(C @ X) == b."""

    C: np.ndarray
    b: float

    def __post_init__(self):
        C = symlin.check_symmetric(self.C, "constraint matrix C")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "b", float(self.b))


@dataclass(frozen=True)
class IEPInstance:
    """Affine IEP: find X in the affine space with the given spectrum."""

    n: int
    spectrum: Spectrum
    constraints: tuple = ()
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.spectrum.n != self.n:
            raise InvalidInstanceError(
                f"spectrum multiplicities sum to {self.spectrum.n}, expected n={self.n}"
            )
        for k, con in enumerate(self.constraints):
            if con.C.shape != (self.n, self.n):
                raise InvalidInstanceError(
                    f"constraint {k} has shape {con.C.shape}, expected ({self.n}, {self.n})"
                )

    @property
    def ell(self) -> int:
        return len(self.constraints)

    @property
    def q(self) -> int:
        return self.spectrum.q

    def affine_residual(self, X: np.ndarray) -> float:
        """max_k |trace(C_k X) - b_k|, 0.0 when there are no constraints."""
        if not self.constraints:
            return 0.0
        return max(abs(float(np.sum(con.C * X)) - con.b) for con in self.constraints)

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "spectrum": [{"value": v, "mult": m} for v, m in self.spectrum.pairs],
            "constraints": [
                {"C": con.C.tolist(), "b": con.b} for con in self.constraints
            ],
            "label": self.label,
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)


def instance_from_json_dict(doc: dict) -> IEPInstance:
    for key in ("n", "spectrum", "constraints"):
        if key not in doc:
            raise InvalidInstanceError(f"missing required field {key!r}")
    n = doc["n"]
    if not isinstance(n, int) or n < 1:
        raise InvalidInstanceError(f"field 'n' must be a positive integer, got {n!r}")
    pairs = []
    for i, entry in enumerate(doc["spectrum"]):
        try:
            pairs.append((entry["value"], entry["mult"]))
        except (TypeError, KeyError) as exc:
            raise InvalidInstanceError(f"spectrum entry {i} must have 'value' and 'mult'") from exc
    cons = []
    for k, entry in enumerate(doc["constraints"]):
        try:
            C = np.array(entry["C"], dtype=float)
            b = entry["b"]
        except (TypeError, KeyError, ValueError) as exc:
            raise InvalidInstanceError(f"constraint {k} must have matrix 'C' and scalar 'b'") from exc
        if C.shape != (n, n):
            raise InvalidInstanceError(f"constraint {k} matrix has shape {C.shape}, expected ({n}, {n})")
        if not np.array_equal(C, C.T):
            raise InvalidInstanceError(f"constraint {k} matrix is not exactly symmetric")
        cons.append(AffineConstraint(C, b))
    return IEPInstance(n=n, spectrum=Spectrum(tuple(pairs)),
                       constraints=tuple(cons), label=str(doc.get("label", "")))


def load_instance(path) -> IEPInstance:
    with open(path) as f:
        doc = json.load(f)
    return instance_from_json_dict(doc)


@dataclass(frozen=True)
class CandidateSolution:
    """Tuple of q candidate spectral projectors and the matrix they encode."""

    Z: tuple
    X: np.ndarray

    @classmethod
    def from_projectors(cls, inst: IEPInstance, Z) -> "CandidateSolution":
        Z = tuple(np.asarray(Zi, dtype=float) for Zi in Z)
        if len(Z) != inst.q:
            raise InvalidInstanceError(f"expected {inst.q} blocks, got {len(Z)}")
        for Zi in Z:
            if Zi.shape != (inst.n, inst.n):
                raise InvalidInstanceError(f"block shape {Zi.shape} != ({inst.n}, {inst.n})")
        lam = inst.spectrum.values
        X = sum(l * Zi for l, Zi in zip(lam, Z))
        return cls(Z=Z, X=np.asarray(X))


@dataclass(frozen=True)
class ResidualRecord:
    """Violations of the four polynomial-system equation families."""

    r_part: float
    r_trace: float
    r_idem: float
    r_aff: float

    def max(self) -> float:
        return max(self.r_part, self.r_trace, self.r_idem, self.r_aff)

    def within(self, tol: float = MEMBERSHIP_TOL_DEFAULT) -> bool:
        return self.max() <= tol

    def as_dict(self) -> dict:
        return {"r_part": self.r_part, "r_trace": self.r_trace,
                "r_idem": self.r_idem, "r_aff": self.r_aff}


def residuals(inst: IEPInstance, cand: CandidateSolution) -> ResidualRecord:
    """Residuals of the projector-tuple system: partition of the identity,
    trace targets, idempotence, and the affine equations on X."""
    n, lam, mults = inst.n, inst.spectrum.values, inst.spectrum.mults
    if len(cand.Z) != inst.q:
        raise InvalidInstanceError(f"candidate has {len(cand.Z)} blocks, expected {inst.q}")
    for Zi in cand.Z:
        if Zi.shape != (n, n):
            raise InvalidInstanceError(f"candidate block shape {Zi.shape} != ({n}, {n})")
    S = sum(cand.Z)
    r_part = float(np.linalg.norm(S - np.eye(n)))
    r_trace = max(abs(float(np.trace(Zi)) - m) for Zi, m in zip(cand.Z, mults))
    r_idem = max(float(np.linalg.norm(Zi @ Zi - Zi)) for Zi in cand.Z)
    X = sum(l * Zi for l, Zi in zip(lam, cand.Z))
    r_aff = inst.affine_residual(X)
    return ResidualRecord(r_part, r_trace, r_idem, r_aff)


def spectral_projectors(X: np.ndarray, spectrum: Spectrum, tol: float = 1e-8):
    """Exact spectral projectors of X grouped to the given spectrum.

    Raises if the eigenvalues of X do not match the spectrum within tol.
    """
    X = np.asarray(X, dtype=float)
    w, Q = symlin.eigh(X)
    target = spectrum.expanded()
    if np.max(np.abs(np.sort(w) - target)) > tol:
        raise InvalidInstanceError("matrix spectrum does not match the requested spectrum")
    Z = []
    for v, m in spectrum.pairs:
        sel = np.abs(w - v) <= (tol * 10 + 1e-12)
        if int(np.sum(sel)) != m:
            sel = np.zeros_like(w, dtype=bool)
            sel[np.argsort(np.abs(w - v))[:m]] = True
        Qi = Q[:, sel]
        Z.append(Qi @ Qi.T)
    return [symlin.sym(Zi) for Zi in Z]


# ---------------------------------------------------------------------------
# Experiment-family generators
# ---------------------------------------------------------------------------

def gen_random(n: int, spectrum: Spectrum, ell: int, seed: int,
               planted: np.ndarray | None = None) -> IEPInstance:
    """Gaussian affine space: C_k = (G + G^T)/2 with G iid standard normal.

    Right-hand sides are zero, unless a planted matrix X* is given, in which
    case b_k = trace(C_k X*) and the instance is feasible by construction.
    """
    if planted is not None:
        planted = symlin.check_symmetric(planted, "planted matrix")
        if planted.shape != (n, n):
            raise InvalidInstanceError(f"planted matrix shape {planted.shape} != ({n}, {n})")
        w, _ = symlin.eigh(planted)
        if np.max(np.abs(np.sort(w) - spectrum.expanded())) > 1e-8:
            raise InvalidInstanceError("planted matrix spectrum does not match the target spectrum")
    rng = np.random.default_rng(seed)
    cons = []
    for _ in range(ell):
        G = rng.standard_normal((n, n))
        C = (G + G.T) / 2.0
        b = float(np.sum(C * planted)) if planted is not None else 0.0
        cons.append(AffineConstraint(C, b))
    kind = "planted" if planted is not None else "zero-rhs"
    return IEPInstance(n=n, spectrum=spectrum, constraints=tuple(cons),
                       label=f"random-{kind} n={n} ell={ell} seed={seed}")


def gen_sturm_liouville(n: int, eigenvalues) -> IEPInstance:
    """Discretized inverse Sturm-Liouville family: off-diagonal entries are
    pinned to those of ((n+1)^2 / pi^2) * J, where J is tridiagonal with
    diagonal 2 and off-diagonal -1; the diagonal is the free unknown."""
    scale = (n + 1) ** 2 / math.pi ** 2
    spectrum = group_eigenvalues(eigenvalues, merge_tol=GROUP_MERGE_TOL)
    if spectrum.n != n:
        raise InvalidInstanceError(f"{len(list(eigenvalues))} eigenvalues for n={n}")
    cons = []
    for s in range(n):
        for t in range(s + 1, n):
            b = -scale if t - s == 1 else 0.0
            cons.append(AffineConstraint(symlin.basis_f(s, t, n), b))
    return IEPInstance(n=n, spectrum=spectrum, constraints=tuple(cons),
                       label=f"sturm-liouville n={n}")


def gen_toeplitz(n: int, spectrum: Spectrum) -> IEPInstance:
    """Symmetric Toeplitz affine space: entries on each diagonal band are
    equal, encoded as chained pairwise differences with zero right-hand side."""
    cons = []
    for off in range(n):
        for s in range(n - off - 1):
            C = symlin.basis_f(s, s + off, n) - symlin.basis_f(s + 1, s + 1 + off, n)
            cons.append(AffineConstraint(C, 0.0))
    return IEPInstance(n=n, spectrum=spectrum, constraints=tuple(cons),
                       label=f"toeplitz n={n}")


def _check_adjacency(A: np.ndarray, name: str) -> np.ndarray:
    A = symlin.check_symmetric(A, name)
    if not np.all((A == 0) | (A == 1)):
        raise InvalidInstanceError(f"{name} must have 0/1 entries")
    if np.any(np.diag(A) != 0):
        raise InvalidInstanceError(f"{name} must have a zero diagonal")
    return A


def gen_induced_subgraph(A: np.ndarray, Aprime: np.ndarray) -> IEPInstance:
    """Induced-subgraph certification instance.

    The target spectrum is that of the small graph's adjacency matrix with
    an extra zero eigenvalue of multiplicity n - n'; the affine space pins
    the total edge weight trace(A M) to twice the small graph's edge count
    and zeroes M wherever the host graph has no edge (diagonal included).
    """
    A = _check_adjacency(A, "adjacency A")
    Ap = _check_adjacency(Aprime, "adjacency A'")
    n, npr = A.shape[0], Ap.shape[0]
    if npr >= n:
        raise InvalidInstanceError(f"subgraph order {npr} must be below host order {n}")
    w, _ = symlin.eigh(Ap)
    spec = group_eigenvalues(w, merge_tol=GROUP_MERGE_TOL)
    pairs = list(spec.pairs)
    extra = n - npr
    zi = [i for i, (v, _) in enumerate(pairs) if abs(v) <= GROUP_MERGE_TOL]
    if zi:
        pairs[zi[0]] = (0.0, pairs[zi[0]][1] + extra)
    else:
        pairs.append((0.0, extra))
    cons = [AffineConstraint(A, float(np.sum(Ap)))]
    for s in range(n):
        for t in range(s, n):
            if A[s, t] == 0:
                cons.append(AffineConstraint(symlin.basis_f(s, t, n), 0.0))
    return IEPInstance(n=n, spectrum=Spectrum(tuple(pairs)), constraints=tuple(cons),
                       label=f"induced-subgraph n={n} n'={npr}")
