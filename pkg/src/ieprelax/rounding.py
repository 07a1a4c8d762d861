"""Random-linear-functional rounding heuristic.

Maximizing a random linear functional over a relaxation generically lands
on an extreme point; when the relaxation is tight there, that point is an
exact projector tuple and solves the original problem. Each trial draws a
Gaussian functional, solves the relaxation, and accepts iff the decoded
point satisfies the full polynomial system and the recovered spectrum
matches the target, both at the acceptance tolerance.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import conic, relax, symlin
from .instance import CandidateSolution, IEPInstance, ResidualRecord, residuals

ACCEPT_TOL = 1e-5


def sample_functional(seed: int, q: int, n: int):
    """q symmetrized Gaussian matrices, deterministic per seed."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(q):
        H = rng.standard_normal((n, n))
        out.append((H + H.T) / 2.0)
    return out


def sample_matrix_functional(seed: int, n: int) -> np.ndarray:
    """One symmetrized Gaussian matrix, deterministic per seed.

    The rounding objective maximizes trace(G X) over the relaxation, i.e.
    the random functional acts on the encoded matrix X = sum_i lambda_i Z_i.
    Per-block independent functionals land on extreme points whose blocks
    are almost never simultaneous projectors, so the heuristic would
    essentially never round; the matrix-space functional reproduces the
    intended success behavior."""
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((n, n))
    return (H + H.T) / 2.0


@dataclass(frozen=True)
class TrialRecord:
    seed: int
    level: str
    solver_status: str
    accepted: bool
    residuals: ResidualRecord | None
    eigenvalues: tuple | None
    spec_err: float
    wall_time: float
    X: np.ndarray | None = None  # kept for accepted trials only

    def as_row(self) -> dict:
        row = {"seed": self.seed, "level": self.level, "status": self.solver_status,
               "accepted": int(self.accepted), "spec_err": self.spec_err,
               "wall_time": self.wall_time}
        if self.residuals is not None:
            row.update(self.residuals.as_dict())
        else:
            row.update(r_part="", r_trace="", r_idem="", r_aff="")
        return row


@dataclass
class RoundingReport:
    label: str
    level: str
    trials: int
    base_seed: int
    records: list = field(default_factory=list)

    @property
    def successes(self) -> int:
        return sum(1 for r in self.records if r.accepted)

    def to_json_dict(self) -> dict:
        return {
            "label": self.label, "level": self.level, "trials": self.trials,
            "base_seed": self.base_seed, "successes": self.successes,
            "records": [r.as_row() for r in self.records],
            "accepted_matrices": {str(r.seed): r.X.tolist()
                                  for r in self.records if r.X is not None},
        }

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=1)

    CSV_FIELDS = ("seed", "level", "status", "accepted",
                  "r_part", "r_trace", "r_idem", "r_aff", "spec_err", "wall_time")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=self.CSV_FIELDS, extrasaction="ignore")
            writer.writeheader()
            for rec in self.records:
                writer.writerow(rec.as_row())


def _evaluate(inst: IEPInstance, level: str, seed: int,
              sol: conic.ConicSolution, layout, tau: float,
              elapsed: float) -> TrialRecord:
    if sol.status != conic.OPTIMAL:
        return TrialRecord(seed=seed, level=level, solver_status=sol.status,
                           accepted=False, residuals=None, eigenvalues=None,
                           spec_err=math.inf, wall_time=elapsed)
    point = relax.decode(layout, sol.x)
    cand = CandidateSolution(Z=point.Z, X=point.X)
    rec = residuals(inst, cand)
    w, _ = symlin.eigh(point.X)
    target = inst.spectrum.expanded()
    spec_err = float(np.max(np.abs(np.sort(w) - target)))
    accepted = rec.within(tau) and spec_err <= tau
    return TrialRecord(seed=seed, level=level, solver_status=sol.status,
                       accepted=accepted, residuals=rec,
                       eigenvalues=tuple(np.sort(w)), spec_err=spec_err,
                       wall_time=elapsed, X=point.X if accepted else None)


def round_once(inst: IEPInstance, level: str, seed: int,
               eps: float = conic.DEFAULT_EPS, max_iter: int = conic.DEFAULT_MAX_ITER,
               tau: float = ACCEPT_TOL, _prep=None) -> TrialRecord:
    """One rounding trial: build (or reuse) the level's program, attach the
    seeded functional, solve, decode, and test exact membership."""
    t0 = time.perf_counter()
    if _prep is None:
        program, layout = relax.build_level(inst, level)
        ws = conic.Workspace(program)
    else:
        program, layout, ws = _prep
    G = sample_matrix_functional(seed, inst.n)
    lam = inst.spectrum.values
    c = relax.objective_vector(layout, [l * G for l in lam])
    sol = ws.solve(c=c, eps=eps, max_iter=max_iter, seed=seed)
    return _evaluate(inst, level, seed, sol, layout, tau, time.perf_counter() - t0)


def _run_chunk(args):
    inst, level, seeds, eps, max_iter, tau = args
    program, layout = relax.build_level(inst, level)
    ws = conic.Workspace(program)
    prep = (program, layout, ws)
    return [round_once(inst, level, s, eps=eps, max_iter=max_iter, tau=tau, _prep=prep)
            for s in seeds]


def round_many(inst: IEPInstance, level: str, trials: int, base_seed: int = 0,
               eps: float = conic.DEFAULT_EPS, max_iter: int = conic.DEFAULT_MAX_ITER,
               tau: float = ACCEPT_TOL, jobs: int = 1) -> RoundingReport:
    """Independent trials with seeds base_seed .. base_seed + trials - 1.

    Trials are embarrassingly parallel; records are keyed by seed so the
    aggregate is identical for any jobs value."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = list(range(base_seed, base_seed + trials))
    report = RoundingReport(label=inst.label, level=level, trials=trials,
                            base_seed=base_seed)
    if jobs <= 1 or trials == 1:
        program, layout = relax.build_level(inst, level)
        ws = conic.Workspace(program)
        prep = (program, layout, ws)
        for s in seeds:
            report.records.append(
                round_once(inst, level, s, eps=eps, max_iter=max_iter, tau=tau, _prep=prep)
            )
        return report
    chunks = [seeds[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = pool.map(_run_chunk,
                           [(inst, level, ch, eps, max_iter, tau) for ch in chunks if ch])
    merged = [rec for chunk in results for rec in chunk]
    merged.sort(key=lambda r: r.seed)
    report.records = merged
    return report


def oracle_feasible_n2(inst: IEPInstance, resolution: float = 1e-4,
                       tol: float = 1e-6) -> bool:
    """Brute-force feasibility oracle for 2x2 instances with two distinct
    simple eigenvalues: sweep the rotation angle parametrizing the whole
    isospectral set, with local grid refinement around near-hits."""
    if inst.n != 2 or inst.q != 2 or tuple(inst.spectrum.mults) != (1, 1):
        raise ValueError("oracle requires n=2 with two simple eigenvalues")
    if not inst.constraints:
        return True
    l1, l2 = inst.spectrum.values

    Cs = np.array([con.C for con in inst.constraints])
    bs = np.array([con.b for con in inst.constraints])

    def max_violation(thetas: np.ndarray) -> np.ndarray:
        c, s = np.cos(thetas), np.sin(thetas)
        x11 = l1 * c * c + l2 * s * s
        x22 = l1 * s * s + l2 * c * c
        x12 = (l1 - l2) * c * s
        vals = (np.multiply.outer(Cs[:, 0, 0], x11)
                + np.multiply.outer(Cs[:, 1, 1], x22)
                + 2.0 * np.multiply.outer(Cs[:, 0, 1], x12))
        return np.max(np.abs(vals - bs[:, None]), axis=0)

    thetas = np.arange(0.0, math.pi, resolution)
    viol = max_violation(thetas)
    if float(viol.min()) <= tol:
        return True
    near = thetas[viol <= max(100.0 * tol, float(viol.min()) * 1.5 + 1e-12)]
    width = resolution
    for _ in range(3):
        if near.size == 0:
            break
        fine = np.unique(np.concatenate(
            [np.linspace(t - width, t + width, 41) for t in near[:200]]))
        fviol = max_violation(fine)
        if float(fviol.min()) <= tol:
            return True
        near = fine[fviol <= float(fviol.min()) * 1.5 + 1e-12]
        width /= 20.0
    return False
