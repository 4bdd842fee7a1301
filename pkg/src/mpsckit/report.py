"""Analysis report assembly shared by the CLI commands.

Every verdict in the report carries its mode and the seed, and component
failures are collected as error entries instead of aborting the rest of the
analysis.
"""

from __future__ import annotations

import dataclasses
import json
from importlib import resources

import numpy as np

from . import cones as cn
from . import cq as cqmod
from . import penalty as pen
from . import soc as socmod
from . import stationarity as st
from .errors import MpscError
from .numeric import Tolerances
from .problem import MpscProblem, bipartitions, index_sets
from .expr import to_text

SCHEMA_VERSION = "1"


def sanitize(obj):
    """Coerce numpy scalars/arrays to plain JSON types, recursively."""
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def load_schema():
    with resources.files("mpsckit.schemas").joinpath("report-v1.json").open() as fh:
        return json.load(fh)


def problem_echo(P: MpscProblem) -> dict:
    return {
        "n": P.n,
        "var_names": list(P.var_names),
        "min": to_text(P.f, P.var_names),
        "ineq": [to_text(e, P.var_names) for e in P.g],
        "eq": [to_text(e, P.var_names) for e in P.h],
        "switch": [[to_text(G, P.var_names), to_text(H, P.var_names)]
                   for G, H in P.switch_pairs],
    }


def _tol_echo(tol: Tolerances) -> dict:
    return {k: v for k, v in dataclasses.asdict(tol).items()}


def _piece_json(piece, tol):
    out = {"bipartition": [sorted(piece.tag.beta1), sorted(piece.tag.beta2)]
           if piece.tag else None}
    try:
        gen = piece.generators(tol)
        out["vertices"] = [[float(v) for v in p] for p in gen.vertices]
        out["rays"] = [[float(v) for v in r] for r in gen.rays]
        out["lineality"] = [[float(v) for v in b] for b in gen.lineality]
    except MpscError as err:
        out["error"] = str(err)
    return out


def cones_section(P, x, tol) -> dict:
    L = cn.linearization_cone(P, x, tol)
    C = cn.critical_cone(P, x, tol)
    B = cn.critical_subspace(P, x, tol)
    return {
        "linearization": {"pieces": [_piece_json(p, tol) for p in L.pieces]},
        "critical": {"pieces": [_piece_json(p, tol) for p in C.pieces]},
        "critical_subspace": [[float(v) for v in B[:, j]]
                              for j in range(B.shape[1])],
    }


def analyze(P: MpscProblem, x, tol: Tolerances, with_penalty=False) -> dict:
    """Full analysis pipeline; partial results on component errors."""
    x = np.asarray(x, float)
    report = {
        "version": SCHEMA_VERSION,
        "seed": tol.seed,
        "tolerances": _tol_echo(tol),
        "problem": problem_echo(P),
        "point": [float(v) for v in x],
        "errors": [],
    }
    r = float(P.residual(x))
    report["residual"] = r
    report["feasible"] = bool(r <= tol.tau_feas)
    if not report["feasible"]:
        report["note"] = "point is infeasible; analysis limited to the residual"
        return sanitize(report)

    def run(name, fn):
        try:
            return fn()
        except MpscError as err:
            report["errors"].append({"component": name, "message": str(err)})
            return None

    I = run("index_sets", lambda: index_sets(P, x, tol))
    if I is not None:
        report["index_sets"] = I.to_json()
        report["bipartitions"] = [[sorted(b.beta1), sorted(b.beta2)]
                                  for b in bipartitions(I)]
    report["cones"] = run("cones", lambda: cones_section(P, x, tol))

    sta = {}
    for kind, fn in (("W", st.check_w_stationary), ("M", st.check_m_stationary),
                     ("S", st.check_s_stationary)):
        v = run(f"stationarity.{kind}", lambda fn=fn: fn(P, x, tol))
        if v is not None:
            sta[kind] = v.to_json()
    oracle = run("stationarity.oracle", lambda: {
        "M": st.normal_cone_oracle(P, x, "M", tol),
        "S": st.normal_cone_oracle(P, x, "S", tol)})
    if oracle is not None:
        sta["normal_cone_oracle"] = oracle

    cq_table = run("cq", lambda: cqmod.run_all(P, x, tol))
    soc_out = {}
    if sta.get("S", {}).get("status") == "HOLDS":
        for kind, fn in (("WSONC", socmod.check_wsonc), ("SSONC", socmod.check_ssonc)):
            v = run(f"soc.{kind}", lambda fn=fn: fn(P, x, tol))
            if v is not None:
                soc_out[kind] = v.to_json()
    else:
        soc_out["note"] = ("skipped: second-order conditions presuppose an "
                           "S-stationary point and S-stationarity does not hold")

    report["verdicts"] = {
        "stationarity": sta,
        "cq": {k: v.to_json() for k, v in cq_table.items()} if cq_table else {},
        "soc": soc_out,
    }

    if with_penalty:
        eb = run("errorbound", lambda: pen.error_bound_probe(P, x, tol))
        if eb is not None:
            report["errorbound"] = eb.to_json()
        pr = run("penalty", lambda: pen.exact_penalty_probe(P, x, tol))
        if pr is not None:
            report["penalty"] = pr.to_json()
    return sanitize(report)
