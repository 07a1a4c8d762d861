"""Extraction and independent verification of infeasibility certificates.

Certificates are never taken on the solver's word: every witness returned
here is re-verified with fresh arithmetic at a tolerance looser than the
solver accuracy (re-verification accumulates floating point differently).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import conic, relax, symlin
from .instance import IEPInstance

VERIFY_TOL = 1e-6

CERTIFICATE = "CERTIFICATE"
FEASIBLE = "FEASIBLE"
UNDETERMINED = "UNDETERMINED"


@dataclass(frozen=True)
class Cert1:
    """Structured witness that the first-level relaxation is empty.

    Fields satisfy (up to tolerance): the normalization
    -trace(A) - sum_i m_i d[i] - sum_k b_k xi[k] = 1 and, for every i,
    A + d[i] I + lambda_i sum_k xi[k] C_k = B[i] with B[i] PSD.
    """

    A: np.ndarray
    d: np.ndarray
    xi: np.ndarray
    B: tuple

    def to_json_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "d": self.d.tolist(),
            "xi": self.xi.tolist(),
            "B": [Bi.tolist() for Bi in self.B],
        }


def verify_cert1(inst: IEPInstance, cert: Cert1, tol: float = VERIFY_TOL):
    """Recheck all three certificate invariants from scratch."""
    lam = inst.spectrum.values
    mults = inst.spectrum.mults
    norm_res = -float(np.trace(cert.A))
    norm_res -= float(np.dot(mults, cert.d))
    norm_res -= sum(con.b * x for con, x in zip(inst.constraints, cert.xi))
    norm_res = abs(norm_res - 1.0)

    coup_res = 0.0
    psd_res = 0.0
    eye = np.eye(inst.n)
    Csum = sum((x * con.C for con, x in zip(inst.constraints, cert.xi)),
               start=np.zeros((inst.n, inst.n)))
    for i in range(inst.q):
        R = cert.A + cert.d[i] * eye + lam[i] * Csum - cert.B[i]
        coup_res = max(coup_res, float(np.linalg.norm(R)))
        w, _ = symlin.eigh(cert.B[i])
        psd_res = max(psd_res, max(0.0, -float(w[0])))
    ok = norm_res <= tol and coup_res <= tol and psd_res <= tol
    return ok, {"normalization": norm_res, "coupling": coup_res, "psd": psd_res}


@dataclass
class Cert1Result:
    """Three-valued outcome: a verified certificate, a proof the relaxation
    is feasible (the certificate system itself is infeasible), or
    undetermined (iteration cap / numerical trouble / failed verification)."""

    outcome: str
    cert: Cert1 | None = None
    residuals: dict = field(default_factory=dict)
    solver_status: str = ""
    message: str = ""

    @property
    def found(self) -> bool:
        return self.outcome == CERTIFICATE


def certify_r1_infeasible(inst: IEPInstance, eps: float = conic.DEFAULT_EPS,
                          max_iter: int = conic.DEFAULT_MAX_ITER,
                          tol: float = VERIFY_TOL) -> Cert1Result:
    """Search for a structured first-level certificate.

    Solves the certificate-search program; a feasible point decodes into
    Cert1 and is re-verified before being returned. Any other solver
    outcome maps to FEASIBLE (the search is provably empty, so the
    relaxation is nonempty) or UNDETERMINED."""
    program, layout = relax.build_alt1(inst)
    sol = conic.solve(program, eps=eps, max_iter=max_iter)
    if sol.status == conic.OPTIMAL:
        fields = relax.decode(layout, sol.x).cert_fields
        cert = Cert1(A=fields["A"], d=fields["d"], xi=fields["xi"], B=fields["B"])
        ok, res = verify_cert1(inst, cert, tol)
        if ok:
            return Cert1Result(outcome=CERTIFICATE, cert=cert, residuals=res,
                               solver_status=sol.status)
        return Cert1Result(outcome=UNDETERMINED, residuals=res,
                           solver_status=sol.status,
                           message="decoded certificate failed re-verification")
    if sol.status == conic.PRIMAL_INFEASIBLE:
        return Cert1Result(outcome=FEASIBLE, solver_status=sol.status,
                           message="certificate system is infeasible, so the "
                                   "relaxation has a feasible point")
    return Cert1Result(outcome=UNDETERMINED, solver_status=sol.status,
                       message=sol.message or "solver did not reach a conclusion")


@dataclass
class FarkasReport:
    """Outcome of the feasibility/certification run at one relaxation level."""

    level: str
    verified: bool
    solver_status: str
    residuals: dict = field(default_factory=dict)
    witness: np.ndarray | None = None
    feasible_point_found: bool = False
    message: str = ""


def certify_level(inst: IEPInstance, level: str, eps: float = conic.DEFAULT_EPS,
                  max_iter: int = conic.DEFAULT_MAX_ITER,
                  tol: float = VERIFY_TOL,
                  size_cap: int = relax.MOMENT_SIZE_CAP) -> FarkasReport:
    """Solve the level's feasibility program; on infeasibility re-verify the
    Farkas witness from scratch at the (looser) verification tolerance."""
    program, _layout = relax.build_level(inst, level, size_cap=size_cap)
    sol = conic.solve(program, eps=eps, max_iter=max_iter)
    if sol.status == conic.PRIMAL_INFEASIBLE:
        ok, rep = conic.verify_farkas(program, sol.certificate, tol)
        return FarkasReport(level=level, verified=ok, solver_status=sol.status,
                            residuals=rep, witness=sol.certificate)
    if sol.status == conic.OPTIMAL:
        return FarkasReport(level=level, verified=False, solver_status=sol.status,
                            feasible_point_found=True,
                            residuals=sol.residual_report(),
                            message="feasible point found")
    return FarkasReport(level=level, verified=False, solver_status=sol.status,
                        residuals=sol.residual_report(),
                        message=sol.message or "undetermined")


def certificate_envelope(kind: str, level: str, fields: dict, residuals: dict) -> dict:
    return {"certificate": {"kind": kind, "level": level,
                            "fields": fields, "residuals": residuals}}


def save_cert1(inst: IEPInstance, result: Cert1Result, path) -> None:
    doc = certificate_envelope("structured-level1", "r1",
                               result.cert.to_json_dict(), result.residuals)
    doc["instance_label"] = inst.label
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def save_farkas(inst: IEPInstance, report: FarkasReport, path) -> None:
    doc = certificate_envelope("farkas", report.level,
                               {"y": report.witness.tolist() if report.witness is not None else None},
                               report.residuals)
    doc["instance_label"] = inst.label
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
