"""Constraint-qualification checkers with three-valued verdicts.

Neighbourhood quantifiers ("there is a ball where the rank is constant")
are undecidable numerically, so every rank-constancy check samples three
shrinking radii and labels a positive verdict as sampled evidence rather
than proof.  The implication lattice then completes the verdict table and
cross-checks the direct results for contradictions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import cones as cn
from .errors import LatticeContradictionError, SizeCapError
from .numeric import (Polyhedron, Tolerances, enumerate_generators, lp_solve,
                      rank_margin, rank_tol, rank_tol_batch)
from .problem import Bipartition, IndexSets, MpscProblem, bipartitions, index_sets
from .stationarity import lagrangian_hessian, Multipliers

HOLDS, FAILS, UNKNOWN = "HOLDS", "FAILS", "UNKNOWN"

CQ_NAMES = ("LICQ", "WCR", "PWCR", "RCRCQ", "PCRSC", "ACQ", "GCQ",
            "SSOCQ", "WSOCQ", "PSOQN")

# forward implication edges (contrapositives propagate FAILS backward)
LATTICE_EDGES = (
    ("LICQ", "RCRCQ"), ("RCRCQ", "ACQ"), ("ACQ", "GCQ"),
    ("RCRCQ", "PCRSC"), ("RCRCQ", "WCR"), ("RCRCQ", "SSOCQ"),
    ("PCRSC", "SSOCQ"), ("PCRSC", "ACQ"), ("SSOCQ", "ACQ"),
    ("SSOCQ", "WSOCQ"), ("WCR", "WSOCQ"), ("PWCR", "WSOCQ"),
)

RCRCQ_TRIPLE_CAP = 4096


@dataclass
class CqVerdict:
    name: str
    status: str
    mode: str = "exact"  # exact | sampled | inferred
    evidence: dict = field(default_factory=dict)

    def holds(self):
        return self.status == HOLDS

    def to_json(self):
        return {"name": self.name, "status": self.status, "mode": self.mode,
                "evidence": _jsonable(self.evidence)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Multipliers):
        return obj.to_json()
    return obj


# ---------------------------------------------------------------------------
# gradient families and sampled rank constancy
# ---------------------------------------------------------------------------

def _expr_of(P, kind, i):
    if kind == "g":
        return P.g[i]
    if kind == "h":
        return P.h[i]
    if kind == "G":
        return P.switch_pairs[i][0]
    return P.switch_pairs[i][1]


def family_matrix(P, x, items):
    rows = [P.grad(_expr_of(P, k, i), x) for k, i in items]
    return np.array(rows) if rows else np.zeros((0, P.n))


def family_tensor(P, X, items):
    """(N, q, n) stack of family gradients at each sample row."""
    X = np.asarray(X, float)
    if not items:
        return np.zeros((X.shape[0], 0, P.n))
    return np.stack([P.grad_batch(_expr_of(P, k, i), X) for k, i in items], axis=1)


def _ball(rng, count, n, radius):
    U = rng.normal(size=(count, n))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return radius * rng.uniform(size=(count, 1)) ** (1.0 / n) * U


RADII_FRACTIONS = (1.0, 0.25, 0.0625)


def rank_constancy(P, x, items, tol: Tolerances, tag) -> dict:
    """Sampled rank constancy of a gradient family near x.

    Returns a dict with constant (bool), base rank, witness sample (if any),
    and a thin_margin flag for fragile decisions near the rank cutoff.
    """
    x = np.asarray(x, float)
    M0 = family_matrix(P, x, items)
    r0 = rank_tol(M0, tol)
    thin = rank_margin(M0, tol) < 10.0
    witness = None
    for ri, frac in enumerate(RADII_FRACTIONS):
        rng = tol.rng("rankconst", tag, ri)
        X = x[None, :] + _ball(rng, tol.n_samples, P.n, tol.eps_ball * frac)
        ranks = rank_tol_batch(family_tensor(P, X, items), tol)
        bad = np.where(ranks != r0)[0]
        for b in bad:
            Mb = family_matrix(P, X[b], items)
            if rank_margin(Mb, tol) < 10.0:
                thin = True
                continue
            witness = {"point": X[b].tolist(), "rank": int(ranks[b]),
                       "radius": tol.eps_ball * frac}
            break
        if witness:
            break
    return {"constant": witness is None, "rank": r0, "witness": witness,
            "thin_margin": thin, "n_samples": tol.n_samples,
            "radii": [tol.eps_ball * f for f in RADII_FRACTIONS], "seed": tol.seed}


def _wcr_items(I: IndexSets, P):
    items = [("g", i) for i in I.I_g] + [("h", j) for j in range(P.p)]
    items += [("G", k) for k in sorted(set(I.I_G) | set(I.I_GH))]
    items += [("H", k) for k in sorted(set(I.I_H) | set(I.I_GH))]
    return items


def _branch_items(I: IndexSets, P, b: Bipartition, g_idx=None):
    items = [("g", i) for i in (I.I_g if g_idx is None else g_idx)]
    items += [("h", j) for j in range(P.p)]
    items += [("G", k) for k in sorted(set(I.I_G) | set(b.beta1))]
    items += [("H", k) for k in sorted(set(I.I_H) | set(b.beta2))]
    return items


# ---------------------------------------------------------------------------
# first-order checks
# ---------------------------------------------------------------------------

def check_licq(P: MpscProblem, x, tol: Tolerances) -> CqVerdict:
    """Linear independence of the full active gradient family (exact)."""
    I = index_sets(P, x, tol)
    items = _wcr_items(I, P)
    M = family_matrix(P, x, items)
    r = rank_tol(M, tol)
    status = HOLDS if r == len(items) else FAILS
    return CqVerdict("LICQ", status, "exact",
                     {"rows": len(items), "rank": r, "family": items})


def check_wcr(P: MpscProblem, x, tol: Tolerances) -> CqVerdict:
    """Sampled constant rank of the full active family near x."""
    I = index_sets(P, x, tol)
    rep = rank_constancy(P, x, _wcr_items(I, P), tol, "wcr")
    if rep["constant"] and rep["thin_margin"]:
        return CqVerdict("WCR", UNKNOWN, "sampled", rep)
    return CqVerdict("WCR", HOLDS if rep["constant"] else FAILS, "sampled", rep)


def check_pwcr(P: MpscProblem, x, tol: Tolerances) -> CqVerdict:
    """Per-bipartition sampled constant rank of the branch families."""
    I = index_sets(P, x, tol)
    reports = []
    any_thin = False
    for bi, b in enumerate(bipartitions(I)):
        rep = rank_constancy(P, x, _branch_items(I, P, b), tol, ("pwcr", bi))
        rep["bipartition"] = [list(b.beta1), list(b.beta2)]
        reports.append(rep)
        any_thin |= rep["thin_margin"]
        if not rep["constant"]:
            return CqVerdict("PWCR", FAILS, "sampled",
                             {"bipartitions": reports, "witness": rep["witness"]})
    status = UNKNOWN if any_thin else HOLDS
    return CqVerdict("PWCR", status, "sampled",
                     {"bipartitions": reports, "n_samples": tol.n_samples,
                      "seed": tol.seed})


def check_rcrcq(P: MpscProblem, x, tol: Tolerances) -> CqVerdict:
    """Sampled constant rank over all subset triples (I1, I3, I4)."""
    I = index_sets(P, x, tol)
    n_triples = 2 ** len(I.I_g) * 4 ** len(I.I_GH)
    if n_triples > RCRCQ_TRIPLE_CAP:
        return CqVerdict("RCRCQ", UNKNOWN, "sampled",
                         {"note": f"{n_triples} subset triples exceed the cap"})
    # evaluate the full gradient tensor once per radius, slice per triple
    full_items = [("g", i) for i in I.I_g] + [("h", j) for j in range(P.p)]
    full_items += [("G", k) for k in range(P.l)] + [("H", k) for k in range(P.l)]
    pos = {it: r for r, it in enumerate(full_items)}

    x = np.asarray(x, float)
    tensors = []
    for ri, frac in enumerate(RADII_FRACTIONS):
        rng = tol.rng("rankconst", "rcrcq", ri)
        X = x[None, :] + _ball(rng, tol.n_samples, P.n, tol.eps_ball * frac)
        tensors.append((X, family_tensor(P, X, full_items)))

    g_subsets = list(_subsets(I.I_g))
    gh_subsets = list(_subsets(I.I_GH))
    any_thin = False
    checked = 0
    for I1 in g_subsets:
        for I3 in gh_subsets:
            for I4 in gh_subsets:
                items = [("g", i) for i in I1] + [("h", j) for j in range(P.p)]
                items += [("G", k) for k in sorted(set(I3) | set(I.I_G))]
                items += [("H", k) for k in sorted(set(I4) | set(I.I_H))]
                checked += 1
                if not items:
                    continue
                sel = [pos[it] for it in items]
                M0 = family_matrix(P, x, items)
                r0 = rank_tol(M0, tol)
                for X, T in tensors:
                    ranks = rank_tol_batch(T[:, sel, :], tol)
                    bad = np.where(ranks != r0)[0]
                    for bidx in bad:
                        Mb = family_matrix(P, X[bidx], items)
                        if rank_margin(Mb, tol) < 10.0:
                            any_thin = True
                            continue
                        return CqVerdict("RCRCQ", FAILS, "sampled", {
                            "triple": {"I1": list(I1), "I3": list(I3), "I4": list(I4)},
                            "witness": {"point": X[bidx].tolist(),
                                        "rank": int(ranks[bidx]), "base_rank": r0},
                            "seed": tol.seed})
    status = UNKNOWN if any_thin else HOLDS
    return CqVerdict("RCRCQ", status, "sampled",
                     {"triples_checked": checked, "n_samples": tol.n_samples,
                      "seed": tol.seed})


def _subsets(idx):
    idx = tuple(idx)
    for r in range(len(idx) + 1):
        yield from itertools.combinations(idx, r)


# ---------------------------------------------------------------------------
# I_g^- and PCRSC
# ---------------------------------------------------------------------------

def i_g_minus(P: MpscProblem, x, b: Bipartition, tol: Tolerances,
              I: IndexSets | None = None):
    """Active inequalities forced to equality on the branch linearization cone.

    Primary route: -grad g_l lies in the cone generated by the remaining
    active inequality gradients (nonnegative weights) plus the span of the
    branch equality gradients.  Cross-check: g_l annihilates every generator
    of the branch linearization cone.  Returns (indices, crosscheck dict).
    """
    if I is None:
        I = index_sets(P, x, tol)
    picked = []
    for l in I.I_g:
        cols, nonneg = [], []
        for i in I.I_g:
            if i != l:
                cols.append(P.grad(P.g[i], x))
                nonneg.append(True)
        for j in range(P.p):
            cols.append(P.grad(P.h[j], x))
            nonneg.append(False)
        for k in sorted(set(I.I_G) | set(b.beta1)):
            cols.append(P.grad(P.switch_pairs[k][0], x))
            nonneg.append(False)
        for k in sorted(set(I.I_H) | set(b.beta2)):
            cols.append(P.grad(P.switch_pairs[k][1], x))
            nonneg.append(False)
        rhs = -P.grad(P.g[l], x)
        if not cols:
            if np.linalg.norm(rhs) <= 1e-9:
                picked.append(l)
            continue
        B = np.array(cols).T
        free = [c for c, nn in enumerate(nonneg) if not nn]
        A = np.hstack([B, -B[:, free]]) if free else B
        nc = A.shape[1]
        pol = Polyhedron.make(nc, A_eq=A, b_eq=rhs,
                              A_le=-np.eye(nc), b_le=np.zeros(nc))
        if lp_solve(None, pol, sense="feasibility").status == "optimal":
            picked.append(l)

    # cross-check against I_0 computed from the cone generators
    piece = cn.piece_for_bipartition(P, x, I, b)
    gen = enumerate_generators(piece.polyhedron(), tol)
    dirs = gen.all_rays()
    i0 = []
    for i in I.I_g:
        gi = P.grad(P.g[i], x)
        scale = 1e-9 * (1.0 + np.linalg.norm(gi))
        if all(abs(gi @ d) <= scale for d in dirs):
            i0.append(i)
    agree = set(picked) == set(i0)
    return tuple(picked), {"I0": i0, "agree": agree}


def check_pcrsc(P: MpscProblem, x, tol: Tolerances) -> CqVerdict:
    """Per-bipartition constant rank with g restricted to I_g^-."""
    I = index_sets(P, x, tol)
    reports = []
    any_thin = False
    any_mismatch = False
    for bi, b in enumerate(bipartitions(I)):
        igm, cross = i_g_minus(P, x, b, tol, I=I)
        any_mismatch |= not cross["agree"]
        rep = rank_constancy(P, x, _branch_items(I, P, b, g_idx=igm), tol,
                             ("pcrsc", bi))
        rep["bipartition"] = [list(b.beta1), list(b.beta2)]
        rep["I_g_minus"] = list(igm)
        rep["crosscheck"] = cross
        reports.append(rep)
        any_thin |= rep["thin_margin"]
        if not rep["constant"] and cross["agree"]:
            return CqVerdict("PCRSC", FAILS, "sampled",
                             {"bipartitions": reports, "witness": rep["witness"]})
    if any_mismatch:
        return CqVerdict("PCRSC", UNKNOWN, "sampled",
                         {"bipartitions": reports,
                          "note": "I_g^- LP and I_0 cross-check disagree"})
    status = UNKNOWN if any_thin else HOLDS
    return CqVerdict("PCRSC", status, "sampled",
                     {"bipartitions": reports, "n_samples": tol.n_samples,
                      "seed": tol.seed})


# ---------------------------------------------------------------------------
# ACQ (sampled tangent cone vs linearization cone)
# ---------------------------------------------------------------------------

def check_acq(P: MpscProblem, x, tol: Tolerances) -> CqVerdict:
    """Evidence-based equality of tangent and linearization cones.

    The inclusion T in L always holds; a sampled violation marks numeric
    failure (UNKNOWN).  The reverse inclusion is tested per piece: every
    generator must be shadowed by a sampled tangent direction of the same
    branch.  An unmatched generator whose ray visibly leaves the feasible
    set is a FAILS witness.
    """
    x = np.asarray(x, float)
    I = index_sets(P, x, tol)
    L = cn.linearization_cone(P, x, tol)

    trivial = all(p.lineality_basis(tol).shape[1] == 0
                  and not p.generators(tol).rays for p in L.pieces)
    if trivial:
        return CqVerdict("ACQ", HOLDS, "exact",
                         {"note": "linearization cone is the origin"})

    cloud = cn.sample_tangent_directions(P, x, tol)
    for d in cloud.directions:
        if not L.member_angular(d, tol)[0]:
            return CqVerdict("ACQ", UNKNOWN, "sampled", {
                "note": "sampled tangent direction escaped the linearization "
                        "cone; projection accuracy is suspect",
                "direction": d.tolist()})

    unresolved = []
    for piece in L.pieces:
        gens = piece.generators(tol)
        targets = [r / np.linalg.norm(r) for r in gens.all_rays()]
        branch_dirs = cloud.by_branch.get(piece.tag.label(), np.zeros((0, P.n)))
        for t in targets:
            if branch_dirs.size and np.max(branch_dirs @ t) >= math.cos(tol.angular_tol):
                continue
            probe = x + 0.5 * tol.eps_ball * t
            r = float(P.residual(probe))
            if r > 10.0 * tol.tau_feas:
                return CqVerdict("ACQ", FAILS, "sampled", {
                    "witness_generator": t.tolist(),
                    "bipartition": [list(piece.tag.beta1), list(piece.tag.beta2)],
                    "probe_residual": r,
                    "n_samples": tol.n_samples, "seed": tol.seed})
            unresolved.append({"generator": t.tolist(), "probe_residual": r})
    if unresolved:
        return CqVerdict("ACQ", UNKNOWN, "sampled",
                         {"unmatched": unresolved, "seed": tol.seed})
    return CqVerdict("ACQ", HOLDS, "sampled",
                     {"cloud_size": len(cloud), "n_samples": tol.n_samples,
                      "seed": tol.seed})


# ---------------------------------------------------------------------------
# piecewise second-order quasi-normality (partial checker)
# ---------------------------------------------------------------------------

def check_psoqn(P: MpscProblem, x, tol: Tolerances) -> CqVerdict:
    """Search for singular multipliers; certify absence, else probe failure.

    HOLDS is exact: no branch admits a nonzero (lambda >= 0, rho, mu, nu)
    with vanishing constraint-gradient combination.  FAILS needs all three
    defining conditions witnessed at once; anything less is UNKNOWN.
    """
    x = np.asarray(x, float)
    I = index_sets(P, x, tol)
    candidates = []
    for b in bipartitions(I):
        mu_sup = sorted(set(I.I_G) | set(b.beta1))
        nu_sup = sorted(set(I.I_H) | set(b.beta2))
        cols, nonneg = [], []
        for i in range(P.m):
            cols.append(P.grad(P.g[i], x))
            nonneg.append(True)
        for j in range(P.p):
            cols.append(P.grad(P.h[j], x))
            nonneg.append(False)
        for k in mu_sup:
            cols.append(P.grad(P.switch_pairs[k][0], x))
            nonneg.append(False)
        for k in nu_sup:
            cols.append(P.grad(P.switch_pairs[k][1], x))
            nonneg.append(False)
        if not cols:
            continue
        B = np.array(cols).T
        free = [c for c, nn in enumerate(nonneg) if not nn]
        A = np.hstack([B, -B[:, free]]) if free else B
        nc = A.shape[1]
        # vertices of {z >= 0 : A z = 0, sum z = 1} are the candidate rays
        pol = Polyhedron.make(nc,
                              A_eq=np.vstack([A, np.ones((1, nc))]),
                              b_eq=np.concatenate([np.zeros(P.n), [1.0]]),
                              A_le=-np.eye(nc), b_le=np.zeros(nc))
        try:
            gen = enumerate_generators(pol, tol)
        except ValueError:
            continue  # infeasible: no nonzero combination at all
        except SizeCapError:
            return CqVerdict("PSOQN", UNKNOWN, "sampled",
                             {"note": "multiplier-ray enumeration exceeds caps"})
        labels = [("lam", i) for i in range(P.m)] + [("rho", j) for j in range(P.p)]
        labels += [("mu", k) for k in mu_sup] + [("nu", k) for k in nu_sup]
        for v in gen.vertices:
            z = v[:len(labels)].copy()
            for c, fi in enumerate(free):
                z[fi] -= v[len(labels) + c]
            m = _expand_psoqn(P, labels, z)
            if m.l1() > 1e-9:
                candidates.append((b, m))
    if not candidates:
        return CqVerdict("PSOQN", HOLDS, "exact",
                         {"note": "no nonzero singular multiplier on any branch"})

    for b, m in candidates:
        if _psoqn_second_order(P, x, I, b, m, tol) and \
                _psoqn_sign_sequence(P, x, m, tol):
            return CqVerdict("PSOQN", FAILS, "sampled", {
                "bipartition": [list(b.beta1), list(b.beta2)],
                "multiplier": m.to_json(), "seed": tol.seed})
    return CqVerdict("PSOQN", UNKNOWN, "sampled",
                     {"candidates": len(candidates), "seed": tol.seed,
                      "note": "singular multipliers exist but no full witness"})


def _expand_psoqn(P, labels, z):
    lam = np.zeros(P.m)
    rho = np.zeros(P.p)
    mu = np.zeros(P.l)
    nu = np.zeros(P.l)
    store = {"lam": lam, "rho": rho, "mu": mu, "nu": nu}
    for (kind, idx), v in zip(labels, z):
        store[kind][idx] = v
    return Multipliers(tuple(lam), tuple(rho), tuple(mu), tuple(nu))


def _psoqn_second_order(P, x, I, b, m, tol):
    """Constraint-Hessian combination PSD on the branch critical subspace."""
    from .numeric import eig_sym, nullspace
    items = _branch_items(I, P, b)
    B = nullspace(family_matrix(P, x, items), tol)
    if B.shape[1] == 0:
        return True
    K = lagrangian_hessian(P, x, m, include_objective=False)
    w, _ = eig_sym(B.T @ K @ B)
    return bool(w[0] >= -tol.tau_psd)


def _psoqn_sign_sequence(P, x, m, tol):
    """A sample at every shrinking radius matching all strict sign conditions."""
    lam, rho, mu, nu = m.as_arrays()
    x = np.asarray(x, float)
    for ri, frac in enumerate(RADII_FRACTIONS):
        rng = tol.rng("psoqn", ri)
        X = x[None, :] + _ball(rng, tol.n_samples, P.n, tol.eps_ball * frac)
        g, h, G, H = P.constraint_values(X)
        ok = np.ones(X.shape[0], dtype=bool)
        for i in range(P.m):
            if lam[i] > tol.tau_act:
                ok &= g[:, i] > 1e-12
        for j in range(P.p):
            if abs(rho[j]) > tol.tau_act:
                ok &= rho[j] * h[:, j] > 1e-12
        for k in range(P.l):
            if abs(mu[k]) > tol.tau_act:
                ok &= mu[k] * G[:, k] > 1e-12
            if abs(nu[k]) > tol.tau_act:
                ok &= nu[k] * H[:, k] > 1e-12
        if not np.any(ok):
            return False
    return True


# ---------------------------------------------------------------------------
# implication lattice
# ---------------------------------------------------------------------------

def lattice_closure(verdicts: dict) -> dict:
    """Complete a verdict table along the implication edges.

    HOLDS propagates forward, FAILS backward; a node receiving both raises
    LatticeContradictionError (a tolerance or sampling bug upstream).
    Direct verdicts are never overwritten.
    """
    out = {name: verdicts[name] for name in verdicts}
    derived_h = {}  # node -> source chain
    derived_f = {}

    changed = True
    holds = {n for n, v in out.items() if v.status == HOLDS}
    fails = {n for n, v in out.items() if v.status == FAILS}
    while changed:
        changed = False
        for a, b in LATTICE_EDGES:
            if a in holds and b not in holds:
                holds.add(b)
                derived_h.setdefault(b, a)
                changed = True
            if b in fails and a not in fails:
                fails.add(a)
                derived_f.setdefault(a, b)
                changed = True

    conflict = holds & fails
    if conflict:
        raise LatticeContradictionError(
            f"lattice contradiction on {sorted(conflict)}: "
            "a direct verdict is inconsistent with the implication edges")

    for name in CQ_NAMES:
        if name in out and out[name].status != UNKNOWN:
            continue
        if name in holds:
            src = derived_h.get(name, "direct")
            out[name] = CqVerdict(name, HOLDS, "inferred",
                                  {"via": f"{src} HOLDS implies {name}"})
        elif name in fails:
            src = derived_f.get(name, "direct")
            out[name] = CqVerdict(name, FAILS, "inferred",
                                  {"via": f"{name} FAILS follows from {src} FAILS"})
        elif name not in out:
            out[name] = CqVerdict(name, UNKNOWN, "inferred", {})
    return out


def run_all(P: MpscProblem, x, tol: Tolerances, with_psoqn=True) -> dict:
    """Direct checks plus lattice closure; the standard CQ table."""
    verdicts = {
        "LICQ": check_licq(P, x, tol),
        "WCR": check_wcr(P, x, tol),
        "PWCR": check_pwcr(P, x, tol),
        "RCRCQ": check_rcrcq(P, x, tol),
        "PCRSC": check_pcrsc(P, x, tol),
        "ACQ": check_acq(P, x, tol),
    }
    if with_psoqn:
        verdicts["PSOQN"] = check_psoqn(P, x, tol)
    return lattice_closure(verdicts)
