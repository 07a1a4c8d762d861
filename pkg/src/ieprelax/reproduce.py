"""Scripted reproduction of the experiment families.

Each experiment writes delimited data (CSV), a JSON summary, and a rendered
figure into the chosen output directory, and returns a summary dict. All
experiments are deterministic given their seeds; grid points and trials fan
out over a process pool sized by the jobs argument, with outputs keyed so
the aggregate does not depend on scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import certify, conic, plots, relax, rounding, symlin
from .instance import (AffineConstraint, IEPInstance, Spectrum, gen_random,
                       gen_sturm_liouville, gen_toeplitz, gen_induced_subgraph,
                       spectrum_of)

GRID_EPS = 1e-6
GRID_MAX_ITER = 40_000


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _status_word(status: str) -> str:
    if status == conic.OPTIMAL:
        return "feasible"
    if status == conic.PRIMAL_INFEASIBLE:
        return "infeasible"
    return "undetermined"


def classify_pair(r1_word: str, r2_word: str) -> str:
    if "undetermined" in (r1_word, r2_word):
        return "undetermined"
    if r1_word == "infeasible" and r2_word == "infeasible":
        return "both_infeasible"
    if r1_word == "feasible" and r2_word == "infeasible":
        return "r1_feasible_r2_infeasible"
    if r1_word == "feasible" and r2_word == "feasible":
        return "both_feasible"
    return "r1_infeasible_r2_feasible"


# ---------------------------------------------------------------------------
# random S^3 grid scan
# ---------------------------------------------------------------------------

def grid_instance(ell: int, seed: int) -> IEPInstance:
    """Spectrum {-1, 0, 1} with ell zero-rhs Gaussian constraints."""
    spec = spectrum_of([-1.0, 0.0, 1.0], [1, 1, 1])
    base = gen_random(3, spec, ell, seed)
    return IEPInstance(3, spec, base.constraints,
                       label=f"grid-s3 ell={ell} seed={seed}")


def _grid_chunk(args):
    """Classify grid points by appending the two entry pins as conditions on
    the encoded matrix (its image under the relaxation), then overriding the
    right-hand side per point; the base program is built and factored once."""
    inst, points, eps, max_iter = args
    out = []
    solvers = {}
    pins = [(symlin.basis_f(0, 0, 3), 0.0), (symlin.basis_f(1, 1, 3), 0.0)]
    for level in (relax.LEVEL_R1, relax.LEVEL_R2):
        program, layout = relax.build_level(inst, level)
        pinned = relax.append_image_rows(program, layout, pins)
        solvers[level] = (pinned, conic.Workspace(pinned, lsqr_check=False))
    for (v1, v2) in points:
        words = {}
        for level, (program, ws) in solvers.items():
            b = program.b.copy()
            b[-2] = v1
            b[-1] = v2
            sol = ws.solve(b=b, eps=eps, max_iter=max_iter)
            words[level] = _status_word(sol.status)
        out.append((v1, v2, words[relax.LEVEL_R1], words[relax.LEVEL_R2]))
    return out


def experiment_grid_s3(out_dir, ell: int = 3, seed: int = 0, resolution: int = 21,
                       jobs: int = 1, eps: float = GRID_EPS,
                       max_iter: int = GRID_MAX_ITER) -> dict:
    """Sweep (X11, X22) over a grid and classify both relaxation levels."""
    _ensure_dir(out_dir)
    inst = grid_instance(ell, seed)
    grid = np.linspace(-1.0, 1.0, resolution)
    points = [(float(v1), float(v2)) for v1 in grid for v2 in grid]
    if jobs <= 1:
        results = _grid_chunk((inst, points, eps, max_iter))
    else:
        chunks = [points[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(_grid_chunk,
                             [(inst, ch, eps, max_iter) for ch in chunks if ch])
        results = [row for part in parts for row in part]
        results.sort(key=lambda r: (r[0], r[1]))

    rows = [(v1, v2, w1, w2, classify_pair(w1, w2)) for v1, v2, w1, w2 in results]
    csv_path = os.path.join(out_dir, f"grid_ell{ell}_seed{seed}.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["v1", "v2", "r1_status", "r2_status", "class"])
        writer.writerows(rows)
    fig_path = os.path.join(out_dir, f"grid_ell{ell}_seed{seed}.png")
    plots.render_grid([(r[0], r[1], r[4]) for r in rows], fig_path,
                      title=f"grid scan, {ell} random constraints, seed {seed}")
    counts = {}
    for r in rows:
        counts[r[4]] = counts.get(r[4], 0) + 1
    summary = {"experiment": "grid-s3", "ell": ell, "seed": seed,
               "resolution": resolution, "classes": counts,
               "csv": csv_path, "figure": fig_path}
    with open(os.path.join(out_dir, f"grid_ell{ell}_seed{seed}.json"), "w") as f:
        json.dump(summary, f, indent=1)
    return summary


# ---------------------------------------------------------------------------
# discrete inverse Sturm-Liouville pipeline
# ---------------------------------------------------------------------------

STURM_EIGS = {"int": [1, 2, 3, 4, 5], "squares": [1, 4, 9, 16, 25]}


def experiment_sturm5(out_dir, variant: str, trials: int = 100, base_seed: int = 0,
                      jobs: int = 1, eps: float = conic.DEFAULT_EPS,
                      max_iter: int = conic.DEFAULT_MAX_ITER,
                      levels=relax.LEVELS) -> dict:
    """Full certify + round pipeline on the n=5 discretized problem."""
    if variant not in STURM_EIGS:
        raise ValueError(f"unknown sturm variant {variant!r}")
    _ensure_dir(out_dir)
    inst = gen_sturm_liouville(5, STURM_EIGS[variant])
    tag = f"sturm5_{variant}"

    cert1 = certify.certify_r1_infeasible(inst, eps=eps, max_iter=max_iter)
    cert_reports = {}
    for level in levels:
        rep = certify.certify_level(inst, level, eps=eps, max_iter=max_iter)
        cert_reports[level] = {"verified": rep.verified, "status": rep.solver_status,
                               "feasible_point_found": rep.feasible_point_found}
    if cert1.found:
        certify.save_cert1(inst, cert1, os.path.join(out_dir, f"{tag}_cert1.json"))

    rates = {}
    for level in levels:
        report = rounding.round_many(inst, level, trials=trials, base_seed=base_seed,
                                     eps=eps, max_iter=max_iter, jobs=jobs)
        report.save_csv(os.path.join(out_dir, f"{tag}_trials_{level}.csv"))
        rates[level] = (report.successes, trials)
    fig_path = os.path.join(out_dir, f"{tag}_success_rates.png")
    plots.render_success_rates(rates, fig_path, title=f"rounding success, {tag}")

    summary = {"experiment": tag,
               "structured_certificate": cert1.outcome,
               "certify": cert_reports,
               "rounding": {lvl: {"successes": s, "trials": t}
                            for lvl, (s, t) in rates.items()},
               "figure": fig_path}
    with open(os.path.join(out_dir, f"{tag}_report.json"), "w") as f:
        json.dump(summary, f, indent=1)
    return summary


# ---------------------------------------------------------------------------
# Toeplitz construction
# ---------------------------------------------------------------------------

TOEPLITZ_CASES = {
    5: spectrum_of([1.0, 2.0, 3.0, 4.0, 5.0], [1, 1, 1, 1, 1]),
    8: spectrum_of([-1.0, 1.0], [4, 4]),
}


def experiment_toeplitz(out_dir, n: int, trials: int = 100, base_seed: int = 0,
                        jobs: int = 1, eps: float = conic.DEFAULT_EPS,
                        max_iter: int = conic.DEFAULT_MAX_ITER,
                        levels=relax.LEVELS) -> dict:
    """Rounding statistics for the spectrum-prescribed Toeplitz search."""
    if n not in TOEPLITZ_CASES:
        raise ValueError(f"no preset Toeplitz case for n={n}")
    _ensure_dir(out_dir)
    inst = gen_toeplitz(n, TOEPLITZ_CASES[n])
    tag = f"toeplitz{n}"
    rates = {}
    for level in levels:
        report = rounding.round_many(inst, level, trials=trials, base_seed=base_seed,
                                     eps=eps, max_iter=max_iter, jobs=jobs)
        report.save_csv(os.path.join(out_dir, f"{tag}_trials_{level}.csv"))
        rates[level] = (report.successes, trials)
    fig_path = os.path.join(out_dir, f"{tag}_success_rates.png")
    plots.render_success_rates(rates, fig_path, title=f"rounding success, {tag}")
    summary = {"experiment": tag,
               "rounding": {lvl: {"successes": s, "trials": t}
                            for lvl, (s, t) in rates.items()},
               "figure": fig_path}
    with open(os.path.join(out_dir, f"{tag}_report.json"), "w") as f:
        json.dump(summary, f, indent=1)
    return summary


# ---------------------------------------------------------------------------
# induced subgraph certification
# ---------------------------------------------------------------------------

def octahedral_adjacency() -> np.ndarray:
    """Complete tripartite graph on three vertex pairs: 6 nodes, 12 edges."""
    A = np.ones((6, 6)) - np.eye(6)
    for i in range(3):
        A[2 * i, 2 * i + 1] = 0.0
        A[2 * i + 1, 2 * i] = 0.0
    return A


def erdos_renyi(n: int, p: float, seed: int) -> np.ndarray:
    """Undirected ER graph: each edge independently present with probability p."""
    rng = np.random.default_rng(seed)
    A = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    edges = rng.random(len(iu[0])) < p
    A[iu] = edges.astype(float)
    return A + A.T


def _octahedral_one(args):
    n, p, seed, eps, max_iter, size_cap = args
    host = erdos_renyi(n, p, seed)
    inst = gen_induced_subgraph(host, octahedral_adjacency())
    r1 = certify.certify_level(inst, relax.LEVEL_R1, eps=eps, max_iter=max_iter)
    row = {"seed": seed, "n": n, "edges": int(host.sum() // 2),
           "r1": "certified" if r1.verified else _status_word(r1.solver_status),
           "r2plus": ""}
    if not r1.verified:
        d = symlin.svec_len(n)
        if inst.q * d > size_cap:
            row["r2plus"] = "skipped_size_cap"
        else:
            r2p = certify.certify_level(inst, relax.LEVEL_R2PLUS, eps=eps,
                                        max_iter=max_iter, size_cap=size_cap)
            row["r2plus"] = ("certified" if r2p.verified
                             else _status_word(r2p.solver_status))
    return row


def experiment_octahedral(out_dir, n: int = 20, p: float = 0.2, seeds: int = 10,
                          jobs: int = 1, eps: float = conic.DEFAULT_EPS,
                          max_iter: int = conic.DEFAULT_MAX_ITER,
                          size_cap: int = relax.MOMENT_SIZE_CAP) -> dict:
    """Certify that the octahedral graph is not an induced subgraph of random
    host graphs, escalating to the lifted level when the first one fails."""
    _ensure_dir(out_dir)
    tasks = [(n, p, s, eps, max_iter, size_cap) for s in range(seeds)]
    if jobs <= 1:
        rows = [_octahedral_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_octahedral_one, tasks))
    rows.sort(key=lambda r: r["seed"])
    tag = f"octahedral_n{n}_p{p:g}"
    csv_path = os.path.join(out_dir, f"{tag}.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["seed", "n", "edges", "r1", "r2plus"])
        writer.writeheader()
        writer.writerows(rows)

    def outcome(row):
        if row["r1"] == "certified":
            return "r1"
        if row["r2plus"] == "certified":
            return "r2plus"
        if row["r2plus"] == "skipped_size_cap":
            return "skipped"
        return "none"

    fig_path = os.path.join(out_dir, f"{tag}.png")
    plots.render_certifications([(r["seed"], outcome(r)) for r in rows], fig_path,
                                title=f"induced-subgraph certification, ER({n}, {p:g})")
    summary = {"experiment": tag, "seeds": seeds,
               "certified_r1": sum(1 for r in rows if r["r1"] == "certified"),
               "certified_r2plus": sum(1 for r in rows if r["r2plus"] == "certified"),
               "rows": rows, "csv": csv_path, "figure": fig_path}
    with open(os.path.join(out_dir, f"{tag}.json"), "w") as f:
        json.dump(summary, f, indent=1)
    return summary


# ---------------------------------------------------------------------------
# random-constraint recovery threshold
# ---------------------------------------------------------------------------

def _prop2_chunk(args):
    n, ells_reps, base_seed, eps, max_iter = args
    planted = np.diag(np.arange(n, 0, -1, dtype=float))
    spec = spectrum_of(list(range(1, n + 1)), [1] * n)
    out = []
    for ell, rep in ells_reps:
        inst_seed = base_seed + 1000 * ell + rep
        inst = gen_random(n, spec, ell, inst_seed, planted=planted)
        program, layout = relax.build_r1(inst)
        ws = conic.Workspace(program)
        lam = inst.spectrum.values
        Xs = []
        statuses = []
        for probe in (1, 2):
            G = rounding.sample_matrix_functional(10_000_000 + 2 * inst_seed + probe,
                                                  inst.n)
            sol = ws.solve(c=relax.objective_vector(layout, [l * G for l in lam]),
                           eps=eps, max_iter=max_iter)
            statuses.append(sol.status)
            Xs.append(relax.decode(layout, sol.x).X if sol.status == conic.OPTIMAL
                      else None)
        ok = all(s == conic.OPTIMAL for s in statuses)
        dist_ab = float(np.linalg.norm(Xs[0] - Xs[1])) if ok else math.inf
        dist_planted = float(np.linalg.norm(Xs[0] - planted)) if ok else math.inf
        recovered = ok and dist_ab <= 1e-4
        out.append({"ell": ell, "rep": rep, "status_a": statuses[0],
                    "status_b": statuses[1], "dist_ab": dist_ab,
                    "dist_planted": dist_planted, "recovered": int(recovered)})
    return out


def experiment_prop2(out_dir, n: int = 5, ell_lo: int = 8, ell_hi: int = 15,
                     reps: int = 20, base_seed: int = 0, jobs: int = 1,
                     eps: float = 1e-6, max_iter: int = 50_000) -> dict:
    """Recovery-vs-constraint-count sweep for a planted diagonal matrix.

    A repetition counts as recovered when two independent random functionals
    return the same optimizer, the uniqueness test for the relaxation."""
    _ensure_dir(out_dir)
    tasks = [(ell, rep) for ell in range(ell_lo, ell_hi + 1) for rep in range(reps)]
    if jobs <= 1:
        rows = _prop2_chunk((n, tasks, base_seed, eps, max_iter))
    else:
        chunks = [tasks[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(_prop2_chunk,
                             [(n, ch, base_seed, eps, max_iter) for ch in chunks if ch])
        rows = [r for part in parts for r in part]
        rows.sort(key=lambda r: (r["ell"], r["rep"]))

    csv_path = os.path.join(out_dir, f"prop2_n{n}.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["ell", "rep", "status_a", "status_b",
                                               "dist_ab", "dist_planted", "recovered"])
        writer.writeheader()
        writer.writerows(rows)

    rates = {}
    for ell in range(ell_lo, ell_hi + 1):
        sub = [r for r in rows if r["ell"] == ell]
        rates[ell] = sum(r["recovered"] for r in sub) / len(sub) if sub else 0.0
    harmonic = sum(1.0 / j for j in range(1, n + 1))
    threshold = n * (n + 1) / 2 - harmonic
    fig_path = os.path.join(out_dir, f"prop2_n{n}.png")
    plots.render_recovery_curve([(ell, rate, reps) for ell, rate in rates.items()],
                                fig_path, threshold=threshold,
                                title=f"unique recovery rate, n={n}")
    summary = {"experiment": "prop2", "n": n, "reps": reps,
               "threshold": threshold,
               "rates": {str(k): v for k, v in rates.items()},
               "csv": csv_path, "figure": fig_path}
    with open(os.path.join(out_dir, f"prop2_n{n}.json"), "w") as f:
        json.dump(summary, f, indent=1)
    return summary
