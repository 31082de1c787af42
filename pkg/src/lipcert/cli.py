"""Command-line interface: bound computation, BaB, oracles, monotonicity.

Exit codes: 0 on success, 2 on input errors (bad flags, malformed models,
dimension mismatches), 3 when an internal invariant is violated (the
compare command's dominance chain).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from .bab import BabConfig, run_bab
from .forward_bounds import BoxDomain
from .jacobian_bounds import jacobian_entry_bounds, lipschitz_upper_bound
from .model import ModelFormatError, Network, load_network
from .oracle import (
    UnstableCountError,
    enumerate_pattern_upper_bound,
    sample_lower_bound,
)

DOMINANCE_TOL = 1e-9


class DominanceViolation(Exception):
    """The linear <= interval <= naive chain failed on a model."""

    def __init__(self, message: str, record: dict):
        super().__init__(message)
        self.record = record


def parse_vector(text: str, dim: int, name: str) -> np.ndarray:
    """Parse a comma-separated vector; a single value broadcasts to dim."""
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as e:
        raise ValueError(f"could not parse {name} {text!r}: {e}") from e
    if len(values) == 1:
        values = values * dim
    if len(values) != dim:
        raise ValueError(f"{name} has {len(values)} entries, expected {dim}")
    return np.array(values)


def build_domain(args, net: Network) -> tuple[BoxDomain, float | None]:
    """Build the box from --center/--eps or --lo/--hi (exactly one form)."""
    ball = args.center is not None or args.eps is not None
    box = args.lo is not None or args.hi is not None
    if ball and box:
        raise ValueError("give either --center/--eps or --lo/--hi, not both")
    if ball:
        if args.center is None or args.eps is None:
            raise ValueError("--center and --eps must be given together")
        if args.eps < 0:
            raise ValueError("--eps must be non-negative")
        center = parse_vector(args.center, net.input_dim, "--center")
        return BoxDomain.ball(center, args.eps), float(args.eps)
    if box:
        if args.lo is None or args.hi is None:
            raise ValueError("--lo and --hi must be given together")
        lo = parse_vector(args.lo, net.input_dim, "--lo")
        hi = parse_vector(args.hi, net.input_dim, "--hi")
        return BoxDomain(lo, hi), None
    raise ValueError("no input domain: give --center/--eps or --lo/--hi")


def model_digest(path: str) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()[:12]


def _domain_echo(box: BoxDomain, eps: float | None) -> dict:
    if eps is not None:
        return {"center": box.center.tolist(), "eps": eps}
    return {"lo": box.lo.tolist(), "hi": box.hi.tolist()}


def _base_record(args, command: str, box: BoxDomain | None, eps: float | None) -> dict:
    record = {
        "schema": 1,
        "command": command,
        "model": args.model,
        "model_sha256": model_digest(args.model),
    }
    if box is not None:
        record["domain"] = _domain_echo(box, eps)
    return record


def cmd_bound(args) -> dict:
    net = load_network(args.model)
    box, eps = build_domain(args, net)
    report = lipschitz_upper_bound(net, box, args.mode, intermediate=args.intermediate)
    record = _base_record(args, "bound", box, eps)
    record.update(
        mode=args.mode,
        bound=report.bound,
        row_bounds=report.row_bounds.tolist(),
        runtime_s=report.runtime_s,
    )
    return record


def cmd_bab(args) -> dict:
    net = load_network(args.model)
    box, eps = build_domain(args, net)
    cfg = BabConfig(
        batch_size=args.batch,
        time_limit=args.time_limit,
        max_domains=args.max_domains,
        tilde_eps=args.tilde_eps,
    )
    start = time.perf_counter()
    result = run_bab(net, box, cfg)
    record = _base_record(args, "bab", box, eps)
    record.update(
        mode="bab",
        bound=result.bound,
        row_bounds=[result.bound],
        runtime_s=time.perf_counter() - start,
        bab={
            "initial_bound": result.history[0],
            "history": result.history,
            "complete": result.complete,
            "domains_explored": result.domains_explored,
            "domains_pruned": result.domains_pruned,
        },
    )
    return record


def cmd_oracle(args) -> dict:
    net = load_network(args.model)
    box, eps = build_domain(args, net)
    start = time.perf_counter()
    sample = sample_lower_bound(net, box, n_samples=args.samples, seed=args.seed)
    linear = lipschitz_upper_bound(net, box, "linear")
    try:
        pattern = enumerate_pattern_upper_bound(net, box)
        pattern_ub, refused = pattern.upper_bound, False
    except UnstableCountError:
        pattern_ub, refused = None, True
    record = _base_record(args, "oracle", box, eps)
    record.update(
        mode="oracle",
        bound=linear.bound,
        row_bounds=linear.row_bounds.tolist(),
        runtime_s=time.perf_counter() - start,
        sample_lower_bound=sample.lower_bound,
        sample_count=sample.samples,
        pattern_upper_bound=pattern_ub,
        pattern_enumeration_refused=refused,
    )
    return record


def _verdicts_for_baseline(net, baseline, ranges) -> list[list[str]]:
    """verdicts[class][feature] from the Clarke-Jacobian entry signs."""
    verdicts = [["unknown"] * net.input_dim for _ in range(net.output_dim)]
    for j in range(net.input_dim):
        lo = baseline.copy()
        hi = baseline.copy()
        lo[j], hi[j] = ranges[j]
        l1, u1 = jacobian_entry_bounds(net, BoxDomain(lo, hi))
        for k in range(net.output_dim):
            if l1[k, j] > 0:
                verdicts[k][j] = "increasing"
            elif u1[k, j] < 0:
                verdicts[k][j] = "decreasing"
    return verdicts


def cmd_monotone(args) -> dict:
    net = load_network(args.model)
    ranges = []
    for j, part in enumerate(args.ranges.split(",")):
        pieces = part.split(":")
        if len(pieces) != 2:
            raise ValueError(f"range {part!r} is not lo:hi")
        lo, hi = float(pieces[0]), float(pieces[1])
        if lo > hi:
            raise ValueError(f"feature {j} range is inverted: {lo} > {hi}")
        ranges.append((lo, hi))
    if len(ranges) != net.input_dim:
        raise ValueError(f"{len(ranges)} ranges given, model has {net.input_dim} features")

    if args.baselines_file is not None:
        with open(args.baselines_file) as f:
            rows = json.load(f)
        baselines = [parse_vector(",".join(map(str, row)), net.input_dim, "baseline") for row in rows]
    else:
        if args.baseline is None:
            raise ValueError("give --baseline or --baselines-file")
        baselines = [parse_vector(args.baseline, net.input_dim, "--baseline")]

    start = time.perf_counter()
    all_verdicts = [_verdicts_for_baseline(net, b, ranges) for b in baselines]
    record = {
        "schema": 1,
        "command": "monotone",
        "model": args.model,
        "model_sha256": model_digest(args.model),
        "mode": "monotone",
        "bound": 0.0,
        "row_bounds": [],
        "runtime_s": time.perf_counter() - start,
        "features": [list(r) for r in ranges],
        "baseline_count": len(baselines),
    }
    if len(baselines) == 1:
        record["verdicts"] = all_verdicts[0]
    else:
        pct = [
            [
                {
                    kind: 100.0
                    * sum(v[k][j] == kind for v in all_verdicts)
                    / len(all_verdicts)
                    for kind in ("increasing", "decreasing", "unknown")
                }
                for j in range(net.input_dim)
            ]
            for k in range(net.output_dim)
        ]
        record["verdict_percentages"] = pct
    return record


def cmd_compare(args) -> dict:
    net = load_network(args.model)
    box, eps = build_domain(args, net)
    results = {}
    for mode in ("naive", "interval", "linear"):
        report = lipschitz_upper_bound(net, box, mode)
        results[mode] = {"bound": report.bound, "runtime_s": report.runtime_s}
    if args.bab:
        cfg = BabConfig(
            batch_size=args.batch,
            time_limit=args.time_limit,
            max_domains=args.max_domains,
        )
        start = time.perf_counter()
        bab = run_bab(net, box, cfg)
        results["bab"] = {"bound": bab.bound, "runtime_s": time.perf_counter() - start}

    record = _base_record(args, "compare", box, eps)
    record.update(
        mode="compare",
        bound=results["linear"]["bound"],
        row_bounds=[results["linear"]["bound"]],
        runtime_s=sum(r["runtime_s"] for r in results.values()),
        results=results,
    )
    chain_ok = (
        results["linear"]["bound"] <= results["interval"]["bound"] + DOMINANCE_TOL
        and results["interval"]["bound"] <= results["naive"]["bound"] + DOMINANCE_TOL
    )
    if args.bab:
        chain_ok = chain_ok and results["bab"]["bound"] <= results["linear"]["bound"] + DOMINANCE_TOL
    record["dominance_ok"] = chain_ok
    if not chain_ok:
        raise DominanceViolation(
            "bound dominance chain violated: "
            + ", ".join(f"{m}={r['bound']:.12g}" for m, r in results.items()),
            record,
        )
    return record


def generate_model_dict(dims: list[int], seed: int = 0, scale: float = 1.0) -> dict:
    """A seeded random dense ReLU model in the version-1 JSON format."""
    if len(dims) < 2:
        raise ValueError("--dims needs at least input and output sizes")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        weight = rng.normal(0.0, scale / np.sqrt(fan_in), size=(fan_out, fan_in))
        bias = rng.normal(0.0, 0.1 * scale, size=fan_out)
        layers.append({"type": "dense", "weight": weight.tolist(), "bias": bias.tolist()})
        if i < len(dims) - 2:
            layers.append({"type": "relu"})
    return {"version": 1, "input_shape": [dims[0]], "layers": layers}


def cmd_gen(args) -> dict:
    dims = [int(v) for v in args.dims.split(",")]
    doc = generate_model_dict(dims, seed=args.seed, scale=args.scale)
    with open(args.out, "w") as f:
        json.dump(doc, f)
    return {
        "schema": 1,
        "command": "gen",
        "model": args.out,
        "model_sha256": model_digest(args.out),
        "mode": "gen",
        "bound": 0.0,
        "row_bounds": [],
        "runtime_s": 0.0,
        "dims": dims,
        "seed": args.seed,
    }


def _emit_table(record: dict) -> str:
    lines = []
    skip = {"schema", "row_bounds"}
    for key, value in record.items():
        if key in skip:
            continue
        if key == "results":
            lines.append(f"{'method':<10} {'value':>16} {'runtime_s':>12}")
            for mode, res in value.items():
                lines.append(f"{mode:<10} {res['bound']:>16.6f} {res['runtime_s']:>12.4f}")
        elif key == "verdicts":
            for k, row in enumerate(value):
                lines.append(f"class {k}: " + " ".join(row))
        elif key == "verdict_percentages":
            for k, row in enumerate(value):
                up = " ".join(f"{cell['increasing']:.0f}%" for cell in row)
                down = " ".join(f"{cell['decreasing']:.0f}%" for cell in row)
                lines.append(f"class {k} increasing: {up}")
                lines.append(f"class {k} decreasing: {down}")
        elif isinstance(value, float):
            lines.append(f"{key:<22} {value:.9g}")
        else:
            lines.append(f"{key:<22} {value}")
    return "\n".join(lines)


def _emit_csv(record: dict) -> str:
    eps = record.get("domain", {}).get("eps", "")
    lines = ["model,mode,eps,bound,runtime_s"]
    if "results" in record:
        for mode, res in record["results"].items():
            lines.append(
                f"{record['model']},{mode},{eps},{res['bound']:.12g},{res['runtime_s']:.6f}"
            )
    else:
        lines.append(
            f"{record['model']},{record['mode']},{eps},"
            f"{record['bound']:.12g},{record['runtime_s']:.6f}"
        )
    return "\n".join(lines)


def emit(record: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(record, indent=2))
    elif fmt == "csv":
        print(_emit_csv(record))
    else:
        print(_emit_table(record))


def _add_domain_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--center", help="domain center, comma-separated (scalar broadcasts)")
    p.add_argument("--eps", type=float, help="l-inf radius around --center")
    p.add_argument("--lo", help="explicit box lower corner, comma-separated")
    p.add_argument("--hi", help="explicit box upper corner, comma-separated")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="path to a version-1 JSON model")
    p.add_argument("--format", choices=("json", "csv", "table"), default="table")


def _add_bab_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--batch", type=int, default=4, help="domains split per iteration")
    p.add_argument("--time-limit", type=float, default=60.0, help="seconds before stopping")
    p.add_argument("--max-domains", type=int, default=100_000)
    p.add_argument("--tilde-eps", type=float, default=1e-9, help="sign-split margin")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipcert",
        description="Certified l-inf local Lipschitz bounds for ReLU networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="compute a certified bound in one mode")
    _add_common(p)
    _add_domain_args(p)
    p.add_argument("--mode", choices=("linear", "interval", "naive"), default="linear")
    p.add_argument(
        "--intermediate",
        choices=("backward", "interval"),
        default="backward",
        help="how pre-activation intervals are computed",
    )
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("bab", help="tighten the linear bound by branch-and-bound")
    _add_common(p)
    _add_domain_args(p)
    _add_bab_args(p)
    p.set_defaults(func=cmd_bab)

    p = sub.add_parser("oracle", help="sampled lower bound and pattern enumeration")
    _add_common(p)
    _add_domain_args(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("monotone", help="certify per-feature monotonicity")
    _add_common(p)
    p.add_argument("--ranges", required=True, help="per-feature lo:hi, comma-separated")
    p.add_argument("--baseline", help="fixed feature values, comma-separated")
    p.add_argument("--baselines-file", help="JSON file with a list of baselines")
    p.set_defaults(func=cmd_monotone)

    p = sub.add_parser("compare", help="run all modes and check the dominance chain")
    _add_common(p)
    _add_domain_args(p)
    p.add_argument("--bab", action="store_true", help="also run branch-and-bound")
    _add_bab_args(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen", help="write a seeded random dense model")
    p.add_argument("--dims", required=True, help="layer sizes, e.g. 8,16,16,3")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True, help="output model path")
    p.add_argument("--format", choices=("json", "csv", "table"), default="table")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        record = args.func(args)
    except DominanceViolation as e:
        emit(e.record, args.format)
        print(f"invariant violation: {e}", file=sys.stderr)
        return 3
    except (ModelFormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    emit(record, args.format)
    return 0


if __name__ == "__main__":
    sys.exit(main())
