"""Command-line surface: build energies from files, run the bound,
matching, arrangement, upsampling, and brute-force commands, and emit
JSON (CSV for fuzzy couplings).

File formats
    distances    headerless CSV of reals (square, symmetric, zero diagonal)
    features     headerless CSV, one row per item; converted to Euclidean
                 distances
    energies     JSON {"k", "n", "W", "c"?, "d"?}; W is either the dense
                 (k*n)-square matrix in row-major nested lists, acting on
                 the column-stacked matching matrix, or a builder spec
                 {"kind": "gw"|"loggw"|"gauss"|"graph", "source": ...,
                 "target": ..., "sigma"?}
    pins         JSON [[source, target], ...] or {"pairs": [...],
                 "weight": w}
    assignments  JSON with 0-based target indices; upsample accepts
                 optional "source_indices"/"target_indices" arrays
                 mapping coarse points into the fine sets (defaults: the
                 first k fine sources, targets used as-is)

Exit codes: 0 ok, 2 input error, 3 solver failure, 4 infeasible
constraints.  Numeric output carries 12 significant digits.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .core import (
    ConvergenceError,
    EnergySpec,
    DenseQuadratic,
    InfeasibleMarginalsError,
    Permutation,
    eval_energy,
)
from .energies import (
    MetricData,
    UserConstraints,
    coarse_to_fine_terms,
    fried_energy,
    fried_scale,
    gaussian_energy,
    graph_matching_energy,
    gw_energy,
    log_gw_energy,
)
from .homotopy import HomotopyConfig, bound_hierarchy, fuzzy_solve, homotopy_solve, relax_convex
from .matching import (
    augment_injective,
    greedy_interpolate,
    injective_marginals,
    limited_support_energy,
    sparsity_pattern,
    strip_slack,
)
from .oracle import brute_force_injective, brute_force_min
from .projection import l2_project

__all__ = ["main"]


def _num(v: float) -> float:
    """Round a float to 12 significant digits for output."""
    return float(f"{float(v):.12g}")


def _load_matrix(path: str) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)


def _load_metric_pair(args) -> MetricData:
    return MetricData(_load_matrix(args.source_dist), _load_matrix(args.target_dist))


def _metric_energy(kind: str, m: MetricData, sigma: float) -> EnergySpec:
    if kind == "gw":
        return gw_energy(m)
    if kind == "loggw":
        return log_gw_energy(m)
    if kind == "gauss":
        return gaussian_energy(m, sigma)
    raise ValueError(f"unknown energy kind {kind!r}")


def _energy_from_json(path: str) -> EnergySpec:
    with open(path) as fh:
        doc = json.load(fh)
    k, n = int(doc["k"]), int(doc["n"])
    W = doc["W"]
    c = np.asarray(doc.get("c", np.zeros(k * n)), dtype=float)
    d = float(doc.get("d", 0.0))
    if isinstance(W, dict):
        src = np.asarray(W["source"], dtype=float)
        tgt = np.asarray(W["target"], dtype=float)
        if W["kind"] == "graph":
            base = graph_matching_energy(src, tgt)
        else:
            base = _metric_energy(W["kind"], MetricData(src, tgt), float(W.get("sigma", 0.2)))
        if (base.k, base.n) != (k, n):
            raise ValueError(f"builder produces {(base.k, base.n)}, header says {(k, n)}")
        quad = base.quadratic
    else:
        Wm = np.asarray(W, dtype=float)
        if Wm.shape != (k * n, k * n):
            raise ValueError(f"W must be {(k * n, k * n)}, got {Wm.shape}")
        quad = DenseQuadratic(Wm)
    return EnergySpec(k, n, quad, c, d)


def _resolve_energy(args) -> EnergySpec:
    """Energy from --dense-energy JSON or a metric CSV pair + --energy."""
    if getattr(args, "dense_energy", None):
        return _energy_from_json(args.dense_energy)
    if not (args.source_dist and args.target_dist):
        raise ValueError("need --dense-energy or both --source-dist and --target-dist")
    return _metric_energy(args.energy, _load_metric_pair(args), args.sigma)


def _load_pins(path: str, k: int, n: int) -> UserConstraints:
    with open(path) as fh:
        doc = json.load(fh)
    if isinstance(doc, dict):
        pairs, weight = doc["pairs"], doc.get("weight")
    else:
        pairs, weight = doc, None
    pairs = [(int(s), int(t)) for s, t in pairs]
    for s, t in pairs:
        if not (0 <= s < k and 0 <= t < n):
            raise InfeasibleMarginalsError(f"pin ({s}, {t}) out of range for a {k}x{n} matching")
    try:
        return UserConstraints(tuple(pairs), None if weight is None else float(weight))
    except ValueError as exc:
        raise InfeasibleMarginalsError(str(exc)) from exc


def _assignment_payload(perm: Permutation, energy: float, bound: float) -> dict:
    return {
        "assignment": [int(v) for v in perm.assignment],
        "energy": _num(energy),
        "lower_bound": _num(bound),
    }


def cmd_bounds(args) -> dict:
    e = _resolve_energy(args)
    rep = bound_hierarchy(e, HomotopyConfig(num_samples=args.samples, seed=args.seed))
    payload = {}
    if rep.spectral is not None:
        payload["spectral"] = _num(rep.spectral)
    if rep.ds is not None:
        payload["ds"] = _num(rep.ds)
    payload["ds_plus"] = _num(rep.ds_plus)
    payload["ds_pp"] = _num(rep.ds_pp)
    payload["upper"] = _num(rep.upper)
    payload["assignment"] = [int(v) for v in rep.permutation.assignment]
    lower = {k: v for k, v in payload.items() if k in ("spectral", "ds", "ds_plus", "ds_pp")}
    payload["gaps"] = {name: _num(payload["upper"] - val) for name, val in lower.items()}
    return payload


def cmd_match(args) -> dict:
    m = _load_metric_pair(args)
    k, n = m.k, m.n
    if k > n:
        raise ValueError(f"source has {k} points but target only {n}")
    if args.injective is not None and args.injective != k:
        raise ValueError(f"--injective {args.injective} does not match the {k}-point source")
    e = _metric_energy(args.energy, m, args.sigma)
    rng = np.random.default_rng(args.seed)
    if args.pins:
        e = coarse_to_fine_terms(m, _load_pins(args.pins, k, n), e, rng=rng)
    cfg = HomotopyConfig(num_samples=args.samples, seed=args.seed)
    if k < n:
        aug = augment_injective(e)
        marg = injective_marginals(k, n)
        _, bound = relax_convex(aug, marg, rng=rng)
        _, trace = homotopy_solve(aug, replace(cfg, final_l2_projection=False), marg)
        perm = l2_project(strip_slack(trace.final_coupling.values))
        if args.fuzzy:
            soft, _ = fuzzy_solve(aug, cfg, marg)
            np.savetxt(args.fuzzy, strip_slack(soft.values), delimiter=",", fmt="%.12g")
    else:
        _, bound = relax_convex(e, rng=rng)
        perm, _ = homotopy_solve(e, cfg)
        if args.fuzzy:
            soft, _ = fuzzy_solve(e, cfg)
            np.savetxt(args.fuzzy, soft.values, delimiter=",", fmt="%.12g")
    return _assignment_payload(perm, eval_energy(e, perm), bound)


def _grid_distances(rows: int, cols: int) -> np.ndarray:
    coords = np.array([(r, c) for r in range(rows) for c in range(cols)], dtype=float)
    return squareform(pdist(coords))


def _layout_energy(d_items: np.ndarray, d_grid: np.ndarray, c_star: float,
                   assign: np.ndarray) -> float:
    sub = d_grid[np.ix_(assign, assign)]
    return float(np.abs(c_star * d_items - sub).sum())


def cmd_arrange(args) -> dict:
    if args.features:
        feats = np.loadtxt(args.features, delimiter=",", ndmin=2, dtype=float)
        d_items = squareform(pdist(feats))
    else:
        d_items = _load_matrix(args.dist)
    try:
        rows, cols = (int(v) for v in args.grid.lower().split("x"))
    except ValueError:
        raise ValueError(f"--grid must look like 4x5, got {args.grid!r}") from None
    n_items = d_items.shape[0]
    if rows < 1 or cols < 1 or rows * cols != n_items:
        raise ValueError(f"grid {rows}x{cols} holds {rows * cols} items, got {n_items}")
    d_grid = _grid_distances(rows, cols)
    e = fried_energy(d_items, d_grid)
    perm, _ = homotopy_solve(e, HomotopyConfig(num_samples=args.samples, seed=args.seed))
    assign = perm.assignment.copy()
    c_star = fried_scale(d_items, d_grid)
    energy_before = _layout_energy(d_items, d_grid, c_star, assign)
    energy = energy_before
    rng = np.random.default_rng(args.seed)
    for _ in range(args.swaps):
        i, j = rng.choice(n_items, size=2, replace=False)
        cand = assign.copy()
        cand[[i, j]] = cand[[j, i]]
        val = _layout_energy(d_items, d_grid, c_star, cand)
        if val < energy:
            assign, energy = cand, val
    grid = [[0] * cols for _ in range(rows)]
    for item, cell in enumerate(assign):
        grid[cell // cols][cell % cols] = int(item)
    return {
        "grid": grid,
        "energy": _num(energy),
        "energy_before_swaps": _num(energy_before),
    }


def _coarse_anchors(doc: dict, k: int, n: int) -> list[tuple[int, int]]:
    assign = [int(v) for v in doc["assignment"]]
    src_idx = [int(v) for v in doc.get("source_indices", range(len(assign)))]
    if len(src_idx) != len(assign):
        raise ValueError("source_indices length does not match the assignment")
    if "target_indices" in doc:
        tgt_idx = [int(v) for v in doc["target_indices"]]
        targets = []
        for j in assign:
            if not (0 <= j < len(tgt_idx)):
                raise ValueError(f"coarse target {j} outside target_indices")
            targets.append(tgt_idx[j])
    else:
        targets = assign
    pairs = list(zip(src_idx, targets))
    seen_s, seen_t = set(), set()
    for s, t in pairs:
        if not (0 <= s < k and 0 <= t < n):
            raise ValueError(f"anchor ({s}, {t}) outside the {k}x{n} fine index set")
        if s in seen_s or t in seen_t:
            raise ValueError(f"anchor ({s}, {t}) repeats a source or target")
        seen_s.add(s)
        seen_t.add(t)
    return pairs


def cmd_upsample(args) -> dict:
    with open(args.coarse) as fh:
        doc = json.load(fh)
    m = _load_metric_pair(args)
    k, n = m.k, m.n
    if k > n:
        raise ValueError(f"source has {k} points but target only {n}")
    anchors = _coarse_anchors(doc, k, n)
    anchor_of = dict(anchors)
    queries = [i for i in range(k) if i not in anchor_of]
    if not queries:
        assign = [anchor_of[i] for i in range(k)]
        provenance = ["anchor"] * k
    elif args.mode == "greedy":
        filled = greedy_interpolate(m, anchors, queries)
        assign, provenance = [], []
        fill = dict(zip(queries, (int(v) for v in filled)))
        for i in range(k):
            if i in anchor_of:
                assign.append(anchor_of[i])
                provenance.append("anchor")
            else:
                assign.append(fill[i])
                provenance.append("greedy")
    else:
        rng = np.random.default_rng(args.seed)
        pattern = sparsity_pattern(m, anchors, keep_frac=args.keep_frac)
        e = limited_support_energy(_metric_energy(args.energy, m, args.sigma),
                                   pattern, rho=args.rho, rng=rng)
        cfg = HomotopyConfig(num_samples=args.samples, seed=args.seed)
        if k < n:
            aug = augment_injective(e)
            _, trace = homotopy_solve(aug, replace(cfg, final_l2_projection=False),
                                      injective_marginals(k, n))
            perm = l2_project(strip_slack(trace.final_coupling.values))
        else:
            perm, _ = homotopy_solve(e, cfg)
        assign = [int(v) for v in perm.assignment]
        provenance = ["anchor" if i in anchor_of else "solved" for i in range(k)]
    payload = {"assignment": assign, "provenance": provenance}
    if len(set(assign)) == len(assign):
        base = _metric_energy(args.energy, m, args.sigma)
        payload["energy"] = _num(eval_energy(base, Permutation(np.array(assign))))
    return payload


def cmd_oracle(args) -> dict:
    e = _resolve_energy(args)
    if e.k == e.n:
        perm, value = brute_force_min(e, max_size=args.max_size)
    else:
        perm, value = brute_force_injective(e, max_count=args.max_count)
    return {"assignment": [int(v) for v in perm.assignment], "energy": _num(value)}


def _add_metric_args(p: argparse.ArgumentParser, energy_flag: bool = True) -> None:
    p.add_argument("--source-dist", help="source distance matrix CSV")
    p.add_argument("--target-dist", help="target distance matrix CSV")
    if energy_flag:
        p.add_argument("--energy", choices=("gw", "loggw", "gauss"), default="gw",
                       help="distortion penalty on distance pairs")
        p.add_argument("--sigma", type=float, default=0.2,
                       help="kernel width for --energy gauss")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--samples", type=int, default=10,
                   help="continuation stages, convex to concave")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="permqp",
        description="Bounds, matchings, arrangements, and upsampling for "
                    "quadratic energies over permutations.",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="lower-bound chain and rounded upper bound")
    p.add_argument("--dense-energy", help="energy JSON file")
    _add_metric_args(p)
    _add_common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("match", help="match source points to target points")
    _add_metric_args(p)
    p.add_argument("--injective", type=int, default=None,
                   help="expected source size for an injective match (k < n)")
    p.add_argument("--fuzzy", metavar="OUT.CSV",
                   help="also write the soft correspondence as a k x n CSV")
    p.add_argument("--pins", metavar="PINS.JSON",
                   help="known correspondences steering the match")
    _add_common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("arrange", help="arrange items on a grid by similarity")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--features", help="item feature CSV, one row per item")
    group.add_argument("--dist", help="item distance matrix CSV")
    p.add_argument("--grid", required=True, help="grid shape, e.g. 4x5")
    p.add_argument("--swaps", type=int, default=0,
                   help="random improving swaps applied after the solve")
    _add_common(p)
    p.set_defaults(func=cmd_arrange)

    p = sub.add_parser("upsample", help="extend a coarse matching to fine point sets")
    p.add_argument("--coarse", required=True, help="coarse assignment JSON")
    _add_metric_args(p)
    p.add_argument("--mode", choices=("limited", "greedy"), default="limited")
    p.add_argument("--rho", type=float, default=None,
                   help="penalty on correspondences outside the support (limited mode)")
    p.add_argument("--keep-frac", type=float, default=0.2,
                   help="fraction of candidate targets kept per point (limited mode)")
    _add_common(p)
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("oracle", help="exact brute-force minimum (small instances)")
    p.add_argument("--dense-energy", help="energy JSON file")
    _add_metric_args(p)
    p.add_argument("--max-size", type=int, default=8,
                   help="largest square size to enumerate")
    p.add_argument("--max-count", type=int, default=10 ** 6,
                   help="largest injective enumeration count")
    _add_common(p)
    p.set_defaults(func=cmd_oracle)

    return top


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        payload = args.func(args)
    except InfeasibleMarginalsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(payload, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
