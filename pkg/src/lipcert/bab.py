"""Branch-and-bound over unstable ReLU neurons to tighten the Lipschitz bound.

Each domain fixes the sign of some pre-activations; splitting an unstable
neuron at +/- tilde_eps makes its Clarke gradient certain on both children,
which are re-bounded with the sign constraints as interval overrides. The
pool is processed loosest-first so the global bound (the max over live
domains and resolved leaves) shrinks monotonically.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .forward_bounds import BoxDomain, InfeasibleDomainError
from .jacobian_bounds import BoundReport, DeltaState, lipschitz_upper_bound
from .model import Network


@dataclass(frozen=True, order=True)
class NeuronRef:
    """A hidden neuron: ``layer`` indexes net.layers (0-based, < n-1)."""

    layer: int
    neuron: int


@dataclass
class BabDomain:
    """One sub-domain: sign constraints plus its certified bound."""

    constraints: dict[NeuronRef, int]
    bound: float
    depth: int
    report: BoundReport | None = None


@dataclass
class BabConfig:
    batch_size: int = 4
    time_limit: float = 60.0
    max_domains: int = 100_000
    tilde_eps: float = 1e-9
    collect_domains: bool = False

    def __post_init__(self):
        if self.batch_size < 1 or self.max_domains < 1 or self.tilde_eps <= 0:
            raise ValueError("batch_size, max_domains and tilde_eps must be positive")


@dataclass
class BabResult:
    """Outcome of a branch-and-bound run.

    ``history`` records the global bound after initialization and after each
    batch; it is non-increasing and ends at ``bound``. ``complete`` is True
    when no domain with an unstable neuron remained.
    """

    bound: float
    domains_explored: int
    domains_pruned: int
    history: list[float]
    complete: bool
    domains: list[BabDomain] = field(default_factory=list)


def unstable_neurons(report: BoundReport) -> list[NeuronRef]:
    """Neurons whose Clarke gradient is still the full [0, 1] set."""
    refs = []
    for k, iv in enumerate(report.forward_intervals):
        for j in np.flatnonzero(DeltaState.from_intervals(iv).unstable):
            refs.append(NeuronRef(k, int(j)))
    return refs


def branch_score(
    dom: BabDomain,
    neuron: NeuronRef,
    jac_intervals=None,
    top_coeff=None,
) -> float:
    """Estimated bound improvement from branching one neuron.

    Half the squared width of the neuron's incoming Jacobian interval (the
    relaxation gap closed by fixing its gradient) scaled by the absolute
    coefficient the neuron received in the domain's bound propagation. Both
    inputs default to the domain's most recent report, argmax row.
    """
    if dom.report is None and (jac_intervals is None or top_coeff is None):
        raise ValueError("domain has no bound report to score against")
    if jac_intervals is None:
        jac_intervals = dom.report.jac_intervals[dom.report.argmax_row]
    if top_coeff is None:
        top_coeff = dom.report.branch_coeff
    iv = dom.report.forward_intervals[neuron.layer] if dom.report else None
    if iv is not None and not (iv.l[neuron.neuron] <= 0 <= iv.u[neuron.neuron]):
        raise ValueError(f"{neuron} is not unstable in this domain")
    nxt = jac_intervals[neuron.layer + 1]
    gap = nxt.U[neuron.neuron] - nxt.L[neuron.neuron]
    return float(0.5 * gap * gap * abs(top_coeff[neuron.layer][neuron.neuron]))


def split_domain(
    dom: BabDomain, neuron: NeuronRef, tilde_eps: float = 1e-9
) -> tuple[BabDomain, BabDomain]:
    """Split a domain on one unstable neuron's sign.

    The children inherit the parent's constraints plus neuron -> -1 / +1;
    their pre-activation intervals get clamped to (l, -tilde_eps) and
    (tilde_eps, u) when re-bounded. The parent's bound is carried over as a
    still-valid placeholder until each child is re-bounded.
    """
    if neuron in dom.constraints:
        raise ValueError(f"{neuron} is already constrained")
    neg = BabDomain({**dom.constraints, neuron: -1}, dom.bound, dom.depth + 1)
    pos = BabDomain({**dom.constraints, neuron: +1}, dom.bound, dom.depth + 1)
    return neg, pos


def _pick_branch_neuron(dom: BabDomain) -> NeuronRef:
    best, best_score = None, -1.0
    for ref in sorted(unstable_neurons(dom.report)):
        score = branch_score(dom, ref)
        if score > best_score:
            best, best_score = ref, score
    return best


def _overrides(dom: BabDomain) -> dict[tuple[int, int], int]:
    return {(ref.layer, ref.neuron): sign for ref, sign in dom.constraints.items()}


def run_bab(net: Network, box: BoxDomain, cfg: BabConfig | None = None) -> BabResult:
    """Tighten the linear-mode bound by branch-and-bound.

    Repeatedly pops the ``batch_size`` loosest domains, splits each on its
    highest-scoring unstable neuron (ties to the lowest (layer, neuron)),
    re-bounds the children and pushes them back. Stops when no branchable
    domain is left or the time / domain budget runs out; either way the
    returned bound is certified for the whole box.
    """
    cfg = cfg or BabConfig()
    start = time.perf_counter()
    counter = itertools.count()

    report = lipschitz_upper_bound(net, box, "linear", tilde_eps=cfg.tilde_eps)
    root = BabDomain({}, report.bound, 0, report)
    explored, pruned = 1, 0

    pool: list[tuple[float, int, BabDomain]] = []
    resolved: list[BabDomain] = []
    if unstable_neurons(report):
        heapq.heappush(pool, (-root.bound, next(counter), root))
    else:
        resolved.append(root)

    def global_bound() -> float:
        best = max((d.bound for d in resolved), default=-np.inf)
        if pool:
            best = max(best, -pool[0][0])
        return float(best)

    history = [global_bound()]
    budget_hit = False
    while pool:
        if time.perf_counter() - start >= cfg.time_limit or explored >= cfg.max_domains:
            budget_hit = True
            break
        batch = [heapq.heappop(pool)[2] for _ in range(min(cfg.batch_size, len(pool)))]
        for dom in batch:
            neuron = _pick_branch_neuron(dom)
            for child in split_domain(dom, neuron, cfg.tilde_eps):
                try:
                    child_report = lipschitz_upper_bound(
                        net, box, "linear",
                        overrides=_overrides(child),
                        tilde_eps=cfg.tilde_eps,
                        prior_intervals=dom.report.forward_intervals,
                    )
                except InfeasibleDomainError:
                    pruned += 1
                    continue
                explored += 1
                # the parent's bound stays valid on the sub-region, so
                # branching never loosens the result
                child.bound = min(child_report.bound, dom.bound)
                child.report = child_report
                if unstable_neurons(child_report):
                    heapq.heappush(pool, (-child.bound, next(counter), child))
                else:
                    resolved.append(child)
        history.append(global_bound())

    return BabResult(
        bound=history[-1],
        domains_explored=explored,
        domains_pruned=pruned,
        history=history,
        complete=not pool,
        domains=(resolved + [item[2] for item in pool]) if cfg.collect_domains else [],
    )
