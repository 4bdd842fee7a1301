"""Weak, Mordukhovich and strong stationarity at a feasible point.

Each notion is a linear feasibility system in the multipliers; the
complementarity mu_k * nu_k = 0 of M-stationarity is handled by exact
enumeration of the zero patterns over the biactive set.  Witnesses are
l1-minimal for reproducibility.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .cones import AXIS_A, AXIS_B, CROSS, ORIGIN, cross_cones
from .errors import NotSStationaryError, SizeCapError
from .numeric import Polyhedron, Tolerances, enumerate_generators, lp_solve
from .problem import IndexSets, MpscProblem, index_sets

HOLDS, FAILS = "HOLDS", "FAILS"


@dataclass(frozen=True)
class Multipliers:
    lam: tuple
    rho: tuple
    mu: tuple
    nu: tuple

    def as_arrays(self):
        return (np.asarray(self.lam, float), np.asarray(self.rho, float),
                np.asarray(self.mu, float), np.asarray(self.nu, float))

    def l1(self):
        return float(sum(abs(v) for part in (self.lam, self.rho, self.mu, self.nu)
                         for v in part))

    def to_json(self):
        return {"lambda": list(self.lam), "rho": list(self.rho),
                "mu": list(self.mu), "nu": list(self.nu)}


@dataclass
class StationarityVerdict:
    kind: str  # W | M | S
    status: str
    witness: Multipliers | None = None
    patterns: list = field(default_factory=list)  # per-pattern LP log (M only)

    def holds(self):
        return self.status == HOLDS

    def to_json(self):
        return {"kind": self.kind, "status": self.status, "mode": "exact",
                "witness": self.witness.to_json() if self.witness else None,
                "patterns": list(self.patterns)}


def lagrangian_gradient(P: MpscProblem, x, mult: Multipliers):
    lam, rho, mu, nu = mult.as_arrays()
    out = P.grad(P.f, x)
    for i, e in enumerate(P.g):
        if lam[i] != 0.0:
            out = out + lam[i] * P.grad(e, x)
    for j, e in enumerate(P.h):
        if rho[j] != 0.0:
            out = out + rho[j] * P.grad(e, x)
    for k, (G, H) in enumerate(P.switch_pairs):
        if mu[k] != 0.0:
            out = out + mu[k] * P.grad(G, x)
        if nu[k] != 0.0:
            out = out + nu[k] * P.grad(H, x)
    return out


def lagrangian_hessian(P: MpscProblem, x, mult: Multipliers, include_objective=True):
    lam, rho, mu, nu = mult.as_arrays()
    out = P.hess(P.f, x) if include_objective else np.zeros((P.n, P.n))
    for i, e in enumerate(P.g):
        if lam[i] != 0.0:
            out = out + lam[i] * P.hess(e, x)
    for j, e in enumerate(P.h):
        if rho[j] != 0.0:
            out = out + rho[j] * P.hess(e, x)
    for k, (G, H) in enumerate(P.switch_pairs):
        if mu[k] != 0.0:
            out = out + mu[k] * P.hess(G, x)
        if nu[k] != 0.0:
            out = out + nu[k] * P.hess(H, x)
    return out


# ---------------------------------------------------------------------------
# multiplier systems
# ---------------------------------------------------------------------------

def _columns(P, x, I: IndexSets, mu_support, nu_support):
    """Gradient columns and labels for the free multiplier coordinates."""
    cols, labels = [], []
    for i in I.I_g:
        cols.append(P.grad(P.g[i], x))
        labels.append(("lam", i))
    for j in range(P.p):
        cols.append(P.grad(P.h[j], x))
        labels.append(("rho", j))
    for k in sorted(mu_support):
        cols.append(P.grad(P.switch_pairs[k][0], x))
        labels.append(("mu", k))
    for k in sorted(nu_support):
        cols.append(P.grad(P.switch_pairs[k][1], x))
        labels.append(("nu", k))
    B = np.array(cols).T if cols else np.zeros((P.n, 0))
    return B, labels


def _expand(P, labels, z) -> Multipliers:
    lam = np.zeros(P.m)
    rho = np.zeros(P.p)
    mu = np.zeros(P.l)
    nu = np.zeros(P.l)
    store = {"lam": lam, "rho": rho, "mu": mu, "nu": nu}
    for (kind, idx), v in zip(labels, z):
        store[kind][idx] = v
    return Multipliers(tuple(lam), tuple(rho), tuple(mu), tuple(nu))


def _solve_system(P, x, I, mu_support, nu_support) -> Multipliers | None:
    """l1-minimal multiplier solving grad L = 0 on the given supports."""
    B, labels = _columns(P, x, I, mu_support, nu_support)
    rhs = -P.grad(P.f, x)
    nonneg = [kind == "lam" for kind, _ in labels]
    # split signed coordinates: z = [all coords >= 0 | negative parts of free]
    free_idx = [c for c, nn in enumerate(nonneg) if not nn]
    A = np.hstack([B, -B[:, free_idx]]) if free_idx else B
    ncols = A.shape[1]
    pol = Polyhedron.make(ncols, A_eq=A if A.size else None, b_eq=rhs if A.size else None,
                          A_le=-np.eye(ncols), b_le=np.zeros(ncols))
    if A.size == 0:
        return _expand(P, labels, []) if np.linalg.norm(rhs) <= 1e-9 else None
    res = lp_solve(np.ones(ncols), pol, sense="min")
    if res.status != "optimal":
        return None
    z = res.x[:len(labels)].copy()
    for c, fi in enumerate(free_idx):
        z[fi] -= res.x[len(labels) + c]
    return _expand(P, labels, z)


def check_w_stationary(P: MpscProblem, x, tol: Tolerances) -> StationarityVerdict:
    """Stationarity with mu, nu unrestricted on the biactive set."""
    I = index_sets(P, x, tol)
    w = _solve_system(P, x, I, set(I.I_G) | set(I.I_GH), set(I.I_H) | set(I.I_GH))
    return StationarityVerdict("W", HOLDS if w else FAILS, witness=w)


def w_stationarity_residual(P: MpscProblem, x, tol: Tolerances) -> float:
    """Smallest l1 norm of grad L over the weak multiplier structure.

    Zero at exactly W-stationary points; solver iterates are judged against
    this instead of the exact feasibility check, which a KKT residual at the
    tau_kkt scale would fail.
    """
    I = index_sets(P, x, tol)
    B, labels = _columns(P, x, I, set(I.I_G) | set(I.I_GH),
                         set(I.I_H) | set(I.I_GH))
    rhs = -P.grad(P.f, x)
    nonneg = [kind == "lam" for kind, _ in labels]
    free_idx = [c for c, nn in enumerate(nonneg) if not nn]
    Bz = np.hstack([B, -B[:, free_idx]]) if labels else np.zeros((P.n, 0))
    A = np.hstack([Bz, np.eye(P.n), -np.eye(P.n)])
    nc = A.shape[1]
    c = np.concatenate([np.zeros(Bz.shape[1]), np.ones(2 * P.n)])
    pol = Polyhedron.make(nc, A_eq=A, b_eq=rhs,
                          A_le=-np.eye(nc), b_le=np.zeros(nc))
    res = lp_solve(c, pol, sense="min")
    return float(res.value)


def check_s_stationary(P: MpscProblem, x, tol: Tolerances) -> StationarityVerdict:
    """Stationarity with mu = nu = 0 on the biactive set (single LP)."""
    I = index_sets(P, x, tol)
    w = _solve_system(P, x, I, set(I.I_G), set(I.I_H))
    return StationarityVerdict("S", HOLDS if w else FAILS, witness=w)


def check_m_stationary(P: MpscProblem, x, tol: Tolerances) -> StationarityVerdict:
    """Stationarity with mu_k * nu_k = 0 enforced by zero-pattern enumeration."""
    I = index_sets(P, x, tol)
    if len(I.I_GH) > 16:
        raise SizeCapError(f"|I_GH| = {len(I.I_GH)} exceeds the pattern cap")
    patterns = []
    best = None
    for choice in itertools.product((0, 1), repeat=len(I.I_GH)):
        mu_side = {k for k, c in zip(I.I_GH, choice) if c == 0}
        nu_side = {k for k, c in zip(I.I_GH, choice) if c == 1}
        w = _solve_system(P, x, I, set(I.I_G) | mu_side, set(I.I_H) | nu_side)
        patterns.append({
            "mu_free_on": sorted(mu_side), "nu_free_on": sorted(nu_side),
            "feasible": w is not None,
            "witness": w.to_json() if w else None,
        })
        if w is not None and (best is None or w.l1() < best.l1() - 1e-12):
            best = w
    return StationarityVerdict("M", HOLDS if best else FAILS, witness=best,
                               patterns=patterns)


def s_multiplier_polyhedron(P: MpscProblem, x, tol: Tolerances):
    """Affine polyhedron of all S-multipliers plus its generator form.

    Coordinates are (lambda on I_g, rho, mu on I_G, nu on I_H); everything
    off those supports is identically zero.  Raises NotSStationaryError when
    the system is infeasible.
    """
    I = index_sets(P, x, tol)
    B, labels = _columns(P, x, I, set(I.I_G), set(I.I_H))
    rhs = -P.grad(P.f, x)
    ncols = len(labels)
    lam_rows = np.array([[-1.0 if c == r else 0.0 for c in range(ncols)]
                         for r, (kind, _) in enumerate(labels) if kind == "lam"])
    pol = Polyhedron.make(ncols, A_eq=B if B.size else None,
                          b_eq=rhs if B.size else None,
                          A_le=lam_rows if lam_rows.size else None,
                          b_le=np.zeros(lam_rows.shape[0]) if lam_rows.size else None)
    if ncols == 0 and np.linalg.norm(rhs) > 1e-9:
        raise NotSStationaryError("point is not S-stationary")
    try:
        gen = enumerate_generators(pol, tol)
    except ValueError as err:
        raise NotSStationaryError("point is not S-stationary") from err
    return pol, labels, gen


def expand_multiplier(P: MpscProblem, labels, z) -> Multipliers:
    return _expand(P, labels, z)


# ---------------------------------------------------------------------------
# normal-cone characterization (independent oracle)
# ---------------------------------------------------------------------------

def normal_cone_oracle(P: MpscProblem, x, kind: str, tol: Tolerances) -> bool:
    """Decide 0 in grad f + Jacobian^T N_D(F(x)) per-component.

    The cone of each switching pair comes from the cross-set table (limiting
    normal for kind="M", Frechet normal for kind="S"), so this route is
    independent of the index-set systems above.
    """
    if kind not in ("M", "S"):
        raise ValueError("kind must be 'M' or 'S'")
    index_sets(P, x, tol)  # feasibility gate
    g, _, G, H = P.constraint_values(np.asarray(x, float))

    fixed_cols = []   # (gradient, nonneg?)
    cross_pairs = []  # [(grad_G, grad_H)] for pairs whose cone is the cross set
    for i, e in enumerate(P.g):
        if abs(g[i]) <= tol.tau_act:
            fixed_cols.append((P.grad(e, x), True))
        # inactive: normal cone of (-inf, 0] at an interior value is {0}
    for j, e in enumerate(P.h):
        fixed_cols.append((P.grad(e, x), False))
    for k, (Ge, He) in enumerate(P.switch_pairs):
        row = cross_cones(G[k], H[k], tol)
        cone = row.limiting_normal if kind == "M" else row.frechet_normal
        dG, dH = P.grad(Ge, x), P.grad(He, x)
        if cone == AXIS_A:
            fixed_cols.append((dG, False))
        elif cone == AXIS_B:
            fixed_cols.append((dH, False))
        elif cone == CROSS:
            cross_pairs.append((dG, dH))
        elif cone != ORIGIN:
            raise AssertionError(cone)

    rhs = -P.grad(P.f, x)
    for choice in itertools.product((0, 1), repeat=len(cross_pairs)):
        cols = list(fixed_cols)
        cols += [(pair[c], False) for pair, c in zip(cross_pairs, choice)]
        B = np.array([c for c, _ in cols]).T if cols else np.zeros((P.n, 0))
        if B.size == 0:
            if np.linalg.norm(rhs) <= 1e-9:
                return True
            continue
        nonneg = [nn for _, nn in cols]
        free_idx = [c for c, nn in enumerate(nonneg) if not nn]
        A = np.hstack([B, -B[:, free_idx]]) if free_idx else B
        ncols = A.shape[1]
        pol = Polyhedron.make(ncols, A_eq=A, b_eq=rhs,
                              A_le=-np.eye(ncols), b_le=np.zeros(ncols))
        if lp_solve(None, pol, sense="feasibility").status == "optimal":
            return True
    return False


# ---------------------------------------------------------------------------
# M-to-S bridge
# ---------------------------------------------------------------------------

@dataclass
class BridgeReport:
    partitions: list            # [(beta1, beta2), ...] from the zero pattern
    kkt_with_given: list        # residual of the fixed-multiplier KKT system
    kkt_any: list               # is the point a KKT point of the branch at all
    s_certificate: Multipliers | None
    reconstruction_residual: float
    note: str

    def to_json(self):
        return {"partitions": [[sorted(b1), sorted(b2)] for b1, b2 in self.partitions],
                "kkt_with_given": self.kkt_with_given, "kkt_any": self.kkt_any,
                "s_certificate": self.s_certificate.to_json() if self.s_certificate else None,
                "reconstruction_residual": self.reconstruction_residual,
                "note": self.note}


def m_to_s_bridge(P: MpscProblem, x, mult: Multipliers, tol: Tolerances) -> BridgeReport:
    """Probe whether an M-multiplier hides an S-certificate.

    Builds the two bipartitions matching the multiplier's support (a switch
    index with a nonzero mu goes to the G-pinned side, one with a nonzero nu
    to the H-pinned side; indices with both zero split the two partitions),
    reports KKT feasibility of each branch, and re-checks grad L = 0 after
    zeroing mu off I_G and nu off I_H.
    """
    I = index_sets(P, x, tol)
    lam, rho, mu, nu = mult.as_arrays()
    nz = lambda v: abs(v) > tol.tau_act

    part1 = (tuple(k for k in I.I_GH if nz(mu[k])),
             tuple(k for k in I.I_GH if not nz(mu[k])))
    part2 = (tuple(k for k in I.I_GH if not nz(nu[k])),
             tuple(k for k in I.I_GH if nz(nu[k])))

    kkt_given, kkt_any = [], []
    scale = 1.0 + float(np.linalg.norm(P.grad(P.f, x)))
    for beta1, beta2 in (part1, part2):
        r = P.grad(P.f, x).copy()
        for i in I.I_g:
            r += lam[i] * P.grad(P.g[i], x)
        for j in range(P.p):
            r += rho[j] * P.grad(P.h[j], x)
        for k in sorted(set(I.I_G) | set(beta1)):
            r += mu[k] * P.grad(P.switch_pairs[k][0], x)
        for k in sorted(set(I.I_H) | set(beta2)):
            r += nu[k] * P.grad(P.switch_pairs[k][1], x)
        kkt_given.append(float(np.linalg.norm(r)))
        w = _solve_system(P, x, I, set(I.I_G) | set(beta1), set(I.I_H) | set(beta2))
        kkt_any.append(w is not None)

    mu_bar = np.where([k in I.I_G for k in range(P.l)], mu, 0.0)
    nu_bar = np.where([k in I.I_H for k in range(P.l)], nu, 0.0)
    cand = Multipliers(tuple(lam), tuple(rho), tuple(mu_bar), tuple(nu_bar))
    res = float(np.linalg.norm(lagrangian_gradient(P, x, cand)))
    cert = cand if res <= 1e-8 * scale and np.all(lam >= 0.0) else None
    return BridgeReport(
        partitions=[part1, part2],
        kkt_with_given=kkt_given,
        kkt_any=kkt_any,
        s_certificate=cert,
        reconstruction_residual=res,
        note=("both candidate partitions are reported with their KKT status; "
              "the verdict is not aggregated into a single quantifier"),
    )
