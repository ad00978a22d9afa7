"""Config-driven experiment runner.

Subcommands: ``generate`` (graph + flow system), ``design`` (clustering +
observer via coordinate descent), ``simulate`` (trajectories + error
metrics), ``benchmark`` (gain-parameter search timing grid), ``compare``
(estimation-error envelopes for random-graph families).

Configuration is a single JSON document; command-line flags override fields.
All outputs are deterministic for a fixed config and seed (timing CSV
excepted) and carry a metadata block with the config hash, seed, and tool
version. Exit codes: 0 ok, 1 usage, 2 assumption gate, 3 not stabilizable.
"""

import argparse
import copy
import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import load_clustering, save_clustering
from .graph import Digraph, NodePartition, erdos_renyi, load_graph, neighbor_set_of_measured, save_graph, scale_free
from .numerics import hurwitz_margin
from .observer import PhiFamily, design_from_gain, load_design, save_design
from .optimize import DescentConfig, NotStabilizableError, PhiSearchConfig, constrained_initial_labels, coordinate_descent, phi_search
from .clustering import Clustering
from .sim import random_input, simulate, write_trajectory_csv, zeta_percent
from .system import check_assumptions, flow_system_from_graph, load_system, save_system

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ASSUMPTIONS = 2
EXIT_NOT_STABILIZABLE = 3

OUT_DIR_ENV = "NETOBS_OUT"

DEFAULT_CONFIG = {
    "out_dir": None,
    "seed": 1,
    "jobs": 1,
    "max_retries": 20,
    "m": 10,
    "k": 10,
    "p": 20,
    "b_density": 0.01,
    "graph": {
        "model": "er",
        "total_nodes": 110,
        "p_edge": 0.2,
        "weight_low": 0.01,
        "weight_high": 1.0,
        "bias": 2.2,
        "edge_count": 600,
        "path": None,
    },
    "phi": {
        "initial_step": 1.0,
        "reducer": 10.0,
        "tolerance": 1e-8,
        "initial_phi": -1.0,
        "max_expansions": 60,
    },
    "descent": {
        "max_outer_iterations": 10,
        "cost_tolerance": 1e-8,
        "clustering_tolerance": 1e-6,
    },
    "sim": {"dt": 0.01, "duration": 60.0, "tail_fraction": 0.1},
    "benchmark": {"grid": [], "p_edge": 0.05},
    "compare": {
        "er_instances": 20,
        "sf_instances": 20,
        "p_edge_low": 0.1,
        "p_edge_high": 0.25,
        "bias_low": 2.0,
        "bias_high": 2.5,
        "edge_count_low": 500,
        "edge_count_high": 1000,
    },
    "files": {
        "graph_csv": "graph.csv",
        "system": "system.json",
        "clustering": "clustering.json",
        "design": "design.json",
        "cost_trace": "cost_trace.csv",
        "trajectory": "trajectory.csv",
        "metrics": "metrics.json",
        "benchmark_csv": "benchmark.csv",
        "bands": "bands.csv",
        "compare_metrics": "compare_metrics.json",
    },
    "gain_path": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _deep_merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in extra.items():
        if key in out and isinstance(out[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise UsageError(f"unknown config section '{key}' in '{dotted}'")
        node = node[key]
    if keys[-1] not in node:
        raise UsageError(f"unknown config key '{dotted}'")
    node[keys[-1]] = value


def config_hash(cfg: dict) -> str:
    """Hash of the behavioural configuration (paths and worker count excluded)."""
    trimmed = copy.deepcopy(cfg)
    trimmed.pop("out_dir", None)
    trimmed.pop("jobs", None)
    trimmed.pop("files", None)
    return hashlib.sha256(json.dumps(trimmed, sort_keys=True).encode()).hexdigest()[:16]


def _meta(cfg: dict) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg["seed"], "version": __version__}


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _meta_sidecar(path: Path, cfg: dict) -> None:
    _write_json(path.with_suffix(".meta.json"), _meta(cfg))


def derived_seed(seed: int, *tags) -> int:
    """Independent child seed for a (seed, tags...) coordinate."""
    seq = np.random.SeedSequence((int(seed),) + tuple(int(t) for t in tags))
    return int(seq.generate_state(1)[0])


def _phi_config(cfg: dict) -> PhiSearchConfig:
    return PhiSearchConfig(**cfg["phi"])


def _descent_config(cfg: dict) -> DescentConfig:
    return DescentConfig(**cfg["descent"])


def _build_graph(cfg: dict, seed: int):
    gcfg = cfg["graph"]
    model = gcfg["model"]
    if model == "er":
        g = erdos_renyi(int(gcfg["total_nodes"]), float(gcfg["p_edge"]),
                        float(gcfg["weight_low"]), float(gcfg["weight_high"]), seed=seed)
        partition = _leading_partition(g.node_count, cfg["m"])
    elif model == "sf":
        g = scale_free(int(gcfg["total_nodes"]), float(gcfg["bias"]), int(gcfg["edge_count"]), seed=seed)
        partition = _leading_partition(g.node_count, cfg["m"])
    elif model == "file":
        if not gcfg.get("path"):
            raise UsageError("graph.path is required for the file model")
        g, partition = load_graph(gcfg["path"])
    else:
        raise UsageError(f"unknown graph model '{model}'")
    return g, partition


def _leading_partition(total: int, m: int) -> NodePartition:
    if not 1 <= m < total:
        raise UsageError(f"m={m} must lie strictly between 0 and total_nodes={total}")
    return NodePartition(tuple(range(m)), tuple(range(m, total)))


def _bernoulli_inputs(total: int, p: int, density: float, seed: int) -> np.ndarray:
    if p == 0:
        return np.zeros((total, 0))
    rng = np.random.default_rng(seed)
    return (rng.random((total, p)) < density).astype(float)


def _assemble_system(cfg: dict, seed: int):
    g, partition = _build_graph(cfg, seed)
    b = _bernoulli_inputs(g.node_count, int(cfg["p"]), float(cfg["b_density"]), derived_seed(seed, 1))
    sys_ = flow_system_from_graph(g, partition, b)
    return g, partition, sys_


def _gate_ok(report) -> bool:
    # The full-rank coupling is a hard requirement for any design; weak
    # connectivity of the unmeasured subgraph is required by the constrained
    # clustering initialisation. Edge-weight dominance is a sufficient
    # stability condition only, so it is reported but does not gate.
    return report.a1_rank_ok and report.a2_connected


def cmd_generate(cfg: dict) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    retries = int(cfg["max_retries"]) if cfg["graph"]["model"] != "file" else 0
    report = None
    for attempt in range(retries + 1):
        seed = int(cfg["seed"]) + attempt
        g, partition, sys_ = _assemble_system(cfg, seed)
        report = check_assumptions(sys_)
        print(f"seed {seed}: {report.summary()}")
        if _gate_ok(report):
            csv_path = out / cfg["files"]["graph_csv"]
            save_graph(g, partition.measured, csv_path)
            _meta_sidecar(csv_path, cfg)
            save_system(sys_, out / cfg["files"]["system"], meta=_meta(cfg))
            print(f"wrote {csv_path} and {out / cfg['files']['system']} "
                  f"(m={sys_.m}, n={sys_.n}, p={sys_.p}, edges={g.edge_count})")
            return EXIT_OK
        print("assumption gate failed, reseeding" if attempt < retries else "assumption gate failed")
    return EXIT_ASSUMPTIONS


def cmd_design(cfg: dict) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    sys_ = load_system(out / cfg["files"]["system"])
    report = check_assumptions(sys_)
    print(report.summary())
    if not _gate_ok(report):
        return EXIT_ASSUMPTIONS
    k = int(cfg["k"])
    if k > sys_.m:
        raise UsageError(
            f"cluster count k={k} exceeds measured node count m={sys_.m}; "
            "stabilizable designs require k <= m"
        )

    def progress(iteration, cost, phi):
        print(f"iteration {iteration}: cost={cost:.6g} phi={phi:.6g}")

    try:
        clustering, phi_star, design, trace = coordinate_descent(
            sys_, k, _descent_config(cfg), _phi_config(cfg), seed=int(cfg["seed"]), progress=progress
        )
    except NotStabilizableError as exc:
        print(f"design failed: {exc}", file=sys.stderr)
        return EXIT_NOT_STABILIZABLE

    save_clustering(clustering, out / cfg["files"]["clustering"], meta=_meta(cfg))
    save_design(design, out / cfg["files"]["design"], meta=_meta(cfg),
                extra={"phi_star": phi_star, "cost": trace[-1], "k": k})
    trace_path = out / cfg["files"]["cost_trace"]
    _write_csv(trace_path, ["iteration", "cost"], [(i + 1, c) for i, c in enumerate(trace)])
    _meta_sidecar(trace_path, cfg)
    print(f"phi_star={phi_star:.6g} cost={trace[-1]:.6g} "
          f"observer margin={hurwitz_margin(design.M):.6g}")
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    sys_ = load_system(out / cfg["files"]["system"])
    clustering = load_clustering(out / cfg["files"]["clustering"])
    if cfg.get("gain_path"):
        payload = json.loads(Path(cfg["gain_path"]).read_text())
        design = design_from_gain(sys_, clustering, np.array(payload["L"], dtype=float))
        print(f"using external gain from {cfg['gain_path']}")
    else:
        design = load_design(out / cfg["files"]["design"])

    seed = int(cfg["seed"])
    u = random_input(sys_.p, seed=derived_seed(seed, 2))
    x0 = np.random.default_rng(derived_seed(seed, 3)).random(sys_.m + sys_.n)
    res = simulate(sys_, clustering, design, x0=x0, u=u,
                   dt=float(cfg["sim"]["dt"]), duration=float(cfg["sim"]["duration"]))
    traj_path = out / cfg["files"]["trajectory"]
    write_trajectory_csv(res, traj_path)
    _meta_sidecar(traj_path, cfg)
    error_pct = zeta_percent(res, float(cfg["sim"]["tail_fraction"]))
    metrics = {
        "zeta_percent": error_pct,
        "observer_margin": hurwitz_margin(design.M),
        "dt": cfg["sim"]["dt"],
        "duration": cfg["sim"]["duration"],
        "meta": _meta(cfg),
    }
    _write_json(out / cfg["files"]["metrics"], metrics)
    print(f"zeta_percent={error_pct:.6g}")
    return EXIT_OK


def cmd_benchmark(cfg: dict) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg["benchmark"]["grid"]
    rows = []
    for entry in grid:
        n, k = int(entry[0]), int(entry[1])
        if k > int(cfg["m"]):
            raise UsageError(f"benchmark grid entry k={k} exceeds m={cfg['m']}")
        elapsed = _time_phi_search(cfg, n, k)
        rows.append((n, k, elapsed))
        print(f"n={n} k={k}: {elapsed:.4f} s")
    path = out / cfg["files"]["benchmark_csv"]
    _write_csv(path, ["n", "k", "seconds"], rows)
    _meta_sidecar(path, cfg)
    return EXIT_OK


def _time_phi_search(cfg: dict, n: int, k: int) -> float:
    m = int(cfg["m"])
    bench_cfg = _deep_merge(cfg, {"graph": {"model": "er", "total_nodes": n + m,
                                            "p_edge": cfg["benchmark"]["p_edge"]},
                                  "p": 0})
    sys_ = None
    for attempt in range(int(cfg["max_retries"]) + 1):
        seed = derived_seed(int(cfg["seed"]), 4, n, k, attempt)
        _, _, candidate = _assemble_system(bench_cfg, seed)
        if _gate_ok(check_assumptions(candidate)):
            sys_ = candidate
            break
    if sys_ is None:
        raise UsageError(f"could not generate an admissible benchmark instance for n={n}, k={k}")
    nset = neighbor_set_of_measured(sys_.A12)
    clustering = Clustering(tuple(constrained_initial_labels(sys_, nset, k)), k)
    phi_cfg = _phi_config(cfg)
    start = time.perf_counter()
    family = PhiFamily(sys_, clustering)
    phi_search(family.cost, family.is_hurwitz, phi_cfg)
    return time.perf_counter() - start


def _compare_instance(payload: dict) -> dict:
    """Pure per-seed pipeline: graph -> system -> design -> simulation."""
    cfg = payload["cfg"]
    family = payload["family"]
    index = payload["index"]
    base_seed = int(cfg["seed"])
    params_rng = np.random.default_rng(derived_seed(base_seed, 5, payload["family_tag"], index))
    gcfg = dict(cfg["graph"])
    ccfg = cfg["compare"]
    if family == "er":
        gcfg.update(model="er", p_edge=float(params_rng.uniform(ccfg["p_edge_low"], ccfg["p_edge_high"])))
    else:
        edge_count = int(params_rng.integers(int(ccfg["edge_count_low"]), int(ccfg["edge_count_high"]) + 1))
        gcfg.update(model="sf", bias=float(params_rng.uniform(ccfg["bias_low"], ccfg["bias_high"])),
                    edge_count=edge_count)
    icfg = _deep_merge(cfg, {"graph": gcfg})

    sys_ = None
    for attempt in range(int(cfg["max_retries"]) + 1):
        seed = derived_seed(base_seed, 6, payload["family_tag"], index, attempt)
        try:
            _, _, candidate = _assemble_system(icfg, seed)
        except ValueError as exc:
            return {"family": family, "index": index, "status": "skipped",
                    "reason": f"generation failed: {exc}"}
        if _gate_ok(check_assumptions(candidate)):
            sys_ = candidate
            break
    if sys_ is None:
        return {"family": family, "index": index, "status": "skipped", "reason": "assumption gate"}

    try:
        clustering, phi_star, design, trace = coordinate_descent(
            sys_, int(cfg["k"]), _descent_config(cfg), _phi_config(cfg), seed=base_seed
        )
    except NotStabilizableError as exc:
        return {"family": family, "index": index, "status": "skipped", "reason": str(exc)}

    u = random_input(sys_.p, seed=derived_seed(base_seed, 7, payload["family_tag"], index))
    x0 = np.random.default_rng(derived_seed(base_seed, 8, payload["family_tag"], index)).random(sys_.m + sys_.n)
    try:
        res = simulate(sys_, clustering, design, x0=x0, u=u,
                       dt=float(cfg["sim"]["dt"]), duration=float(cfg["sim"]["duration"]))
        error_pct = zeta_percent(res, float(cfg["sim"]["tail_fraction"]))
    except (FloatingPointError, ValueError) as exc:
        return {"family": family, "index": index, "status": "skipped", "reason": f"simulation: {exc}"}

    return {
        "family": family,
        "index": index,
        "status": "ok",
        "phi_star": float(phi_star),
        "cost": float(trace[-1]),
        "zeta_percent": float(error_pct),
        "times": res.times.tolist(),
        "zeta_norms": np.linalg.norm(res.zeta, axis=1).tolist(),
    }


def cmd_compare(cfg: dict) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    n_er = int(cfg["compare"]["er_instances"])
    n_sf = int(cfg["compare"]["sf_instances"])
    if n_er + n_sf == 0:
        raise UsageError("empty experiment: zero instances requested")
    payloads = [{"cfg": cfg, "family": "er", "family_tag": 0, "index": i} for i in range(n_er)]
    payloads += [{"cfg": cfg, "family": "sf", "family_tag": 1, "index": i} for i in range(n_sf)]

    jobs = int(cfg["jobs"])
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_compare_instance, payloads))
    else:
        results = [_compare_instance(p) for p in payloads]

    skipped = [r for r in results if r["status"] != "ok"]
    for rec in skipped:
        print(f"{rec['family']}[{rec['index']}] skipped: {rec['reason']}")
    survivors = {fam: [r for r in results if r["status"] == "ok" and r["family"] == fam]
                 for fam in ("er", "sf")}
    print(f"er: {len(survivors['er'])}/{n_er} ok, sf: {len(survivors['sf'])}/{n_sf} ok, "
          f"{len(skipped)} skipped")

    times = None
    for fam in ("er", "sf"):
        if survivors[fam]:
            times = survivors[fam][0]["times"]
            break
    bands_rows = []
    if times is not None:
        arrays = {fam: np.array([r["zeta_norms"] for r in survivors[fam]]) if survivors[fam] else None
                  for fam in ("er", "sf")}
        for idx, t in enumerate(times):
            row = [t]
            for fam in ("er", "sf"):
                if arrays[fam] is None:
                    row += [float("nan"), float("nan")]
                else:
                    row += [float(arrays[fam][:, idx].min()), float(arrays[fam][:, idx].max())]
            bands_rows.append(tuple(row))
    bands_path = out / cfg["files"]["bands"]
    _write_csv(bands_path, ["t", "er_min", "er_max", "sf_min", "sf_max"], bands_rows)
    _meta_sidecar(bands_path, cfg)

    summary = {
        "requested": {"er": n_er, "sf": n_sf},
        "ok": {fam: len(survivors[fam]) for fam in ("er", "sf")},
        "skipped": len(skipped),
        "instances": [{k: v for k, v in r.items() if k not in ("times", "zeta_norms")} for r in results],
        "meta": _meta(cfg),
    }
    _write_json(out / cfg["files"]["compare_metrics"], summary)
    return EXIT_OK


def _resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        try:
            user = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(user, dict):
            raise UsageError("config document must be a JSON object")
        cfg = _deep_merge(cfg, user)

    direct = {
        "seed": args.seed, "jobs": args.jobs, "m": args.m, "k": args.k, "p": args.p,
        "out_dir": args.out_dir, "gain_path": getattr(args, "gain_json", None),
    }
    for key, value in direct.items():
        if value is not None:
            cfg[key] = value
    if args.model is not None:
        cfg["graph"]["model"] = args.model
    if args.total_nodes is not None:
        cfg["graph"]["total_nodes"] = args.total_nodes
    if args.p_edge is not None:
        cfg["graph"]["p_edge"] = args.p_edge
    if args.graph_path is not None:
        cfg["graph"]["path"] = args.graph_path
    if args.dt is not None:
        cfg["sim"]["dt"] = args.dt
    if args.duration is not None:
        cfg["sim"]["duration"] = args.duration
    for assignment in args.set or []:
        if "=" not in assignment:
            raise UsageError(f"--set expects key=value, got '{assignment}'")
        dotted, raw = assignment.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set_path(cfg, dotted, value)

    if cfg["out_dir"] is None:
        cfg["out_dir"] = os.environ.get(OUT_DIR_ENV, ".")

    _validate_config(cfg)
    return cfg


def _validate_config(cfg: dict) -> None:
    if int(cfg["k"]) < 1:
        raise UsageError("k must be at least 1")
    if int(cfg["k"]) > int(cfg["m"]):
        raise UsageError(
            f"cluster count k={cfg['k']} exceeds measured node count m={cfg['m']}; "
            "stabilizable designs require k <= m"
        )
    if int(cfg["p"]) < 0:
        raise UsageError("p must be nonnegative")
    if float(cfg["sim"]["dt"]) <= 0 or float(cfg["sim"]["duration"]) < float(cfg["sim"]["dt"]):
        raise UsageError("sim.dt must be positive and sim.duration at least one step")
    try:
        _phi_config(cfg)
        _descent_config(cfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid solver configuration: {exc}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="netobs", description="Clustering-based average-state observer experiments")
    sub = parser.add_subparsers(dest="command")
    for name, help_text in (
        ("generate", "generate a graph and flow system, checking structural assumptions"),
        ("design", "cluster the unmeasured nodes and design the observer"),
        ("simulate", "simulate the plant and observer, exporting trajectories and metrics"),
        ("benchmark", "time the gain-parameter search over an (n, k) grid"),
        ("compare", "estimation-error envelopes over random-graph families"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON config file")
        cmd.add_argument("--out-dir", help=f"output directory (default: ${OUT_DIR_ENV} or '.')")
        cmd.add_argument("--seed", type=int)
        cmd.add_argument("--jobs", type=int, help="worker processes for batch commands")
        cmd.add_argument("--m", type=int, help="number of measured nodes")
        cmd.add_argument("--k", type=int, help="number of clusters")
        cmd.add_argument("--p", type=int, help="number of input channels")
        cmd.add_argument("--model", choices=("er", "sf", "file"), help="graph model")
        cmd.add_argument("--total-nodes", type=int)
        cmd.add_argument("--p-edge", type=float)
        cmd.add_argument("--graph-path", help="edge CSV for the file model")
        cmd.add_argument("--dt", type=float)
        cmd.add_argument("--duration", type=float)
        cmd.add_argument("--set", action="append", metavar="KEY=VALUE",
                         help="override any config field by dotted path, e.g. compare.er_instances=5")
        if name == "simulate":
            cmd.add_argument("--gain-json", help="JSON file with an externally computed gain matrix L")
    return parser


_COMMANDS = {
    "generate": cmd_generate,
    "design": cmd_design,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("a subcommand is required (generate, design, simulate, benchmark, compare)")
        cfg = _resolve_config(args)
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotStabilizableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_STABILIZABLE


if __name__ == "__main__":
    sys.exit(main())
