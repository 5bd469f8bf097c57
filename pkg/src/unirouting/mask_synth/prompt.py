"""Synthesis tasks and the prompt sent to a program provider."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..instance import UnifiedInstance, generate_instance
from ..variants import ConstraintSpec

TEMPLATE_VERSION = 1

TEMPLATE = '''def mask(state, n, instance):
    """Return the selectable nodes for the next construction step.

    state    -- dict, see the state field glossary
    n        -- number of nodes
    instance -- dict, see the instance field glossary
    """
    # True = selectable, False = masked
    return [True] * n
'''

RETURN_CONTRACT = (
    "Return a list of exactly n booleans: True = selectable, False = masked. "
    "Customers already visited are masked for you; decide everything else."
)

STATE_GLOSSARY = """\
state fields:
  current          index of the node the vehicle stands at
  visited          indices of customers served so far
  load             remaining linehaul capacity as a fraction of vehicle capacity
  backhaul_load    pickup load on board as a fraction of vehicle capacity
  clock            current time on the active route
  route_length     distance travelled on the active route
  origin_depot     depot the active route started from (-1 if none)
  phase            "linehaul" or "backhaul"
  collected_prize  prize collected so far
instance fields:
  n, depots (list of depot indices), families (list of constraint family codes)
  dist             n x n distance matrix, dist[i][j] is the cost of going from i to j
  demand           per node: positive = delivery, negative = pickup, as capacity fractions
  earliest, latest, service   time window start, end and service duration per node
  prize, penalty   per node prize and skip penalty
  partner          paired node for pickup-delivery customers (-1 otherwise)
  params           variant parameters such as duration_limit, depot_end_time,
                   max_tour_length and required_prize (absent when unused)
"""

FAMILY_TEXT = {
    "C": "Capacity: the total delivery demand served on one route may not exceed the vehicle capacity (load never below zero).",
    "O": "Open routes: vehicles do not return to the depot, so return legs count toward neither cost nor limits.",
    "B": "Backhauls: pickup customers add load; on-board pickups may not exceed capacity. A route may not start with a pickup while deliveries remain.",
    "BP": "Backhaul precedence: on every route all deliveries come before any pickup.",
    "L": "Route length limit: the length of each route including its return leg (unless routes are open) may not exceed params['duration_limit'].",
    "TW": "Time windows: arrival at a customer may not be later than its latest time; early arrivals wait. Closed routes must be back at the depot by depot_end_time.",
    "MD": "Multiple depots: every route returns to the depot it started from; a vehicle at a depot may switch depot only before serving anyone.",
    "PC": "Prize collecting: a single tour from the depot; at least params['required_prize'] must be collected before returning to the depot.",
    "OP": "Orienteering: a single tour from the depot whose total length including the return may not exceed params['max_tour_length'].",
    "A": "Asymmetric distances: dist[i][j] may differ from dist[j][i].",
    "PD": "Pickup and delivery: a delivery node may be visited only after its partner pickup; all picked-up goods must be delivered before the route ends.",
}

VISIT_ONCE = "Every customer is visited at most once; mask the visited nodes in each step."


def describe(spec: ConstraintSpec) -> str:
    lines = [VISIT_ONCE]
    lines += [FAMILY_TEXT[f] for f in sorted(spec.families) if f in FAMILY_TEXT]
    return "\n".join(lines)


@dataclass
class SynthesisTask:
    constraint_description: str
    template: str
    spec: ConstraintSpec
    validation_instances: list
    rollouts_per_instance: int = 16
    rounds: int = 3
    candidates_per_round: int = 4
    timeout_ms: int = 2000
    visit_once: bool = True
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.constraint_description.strip() or not self.template.strip():
            raise ValueError("description and template must be non-empty")
        if self.rounds < 1 or self.candidates_per_round < 1 or self.rollouts_per_instance < 1:
            raise ValueError("budget fields must be positive")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        if not self.validation_instances:
            raise ValueError("at least one validation instance is required")
        for inst in self.validation_instances:
            if not isinstance(inst, UnifiedInstance) or inst.spec != self.spec:
                raise ValueError("validation instances must all share the task spec")

    @property
    def budget(self):
        return self.rounds, self.candidates_per_round


def make_task(spec: ConstraintSpec, n_instances=8, rollouts=16, seed=0, **kw) -> SynthesisTask:
    """Task with the default description and template and generated validation instances."""
    instances = [generate_instance(spec, seed * 1000 + i) for i in range(n_instances)]
    return SynthesisTask(describe(spec), TEMPLATE, spec, instances, rollouts, seed=seed, **kw)


def build_prompt(task: SynthesisTask, feedback: str = "") -> str:
    if not task.constraint_description.strip() or not task.template.strip():
        raise ValueError("description and template must be non-empty")
    parts = [
        "Write a Python function that masks infeasible nodes during route construction.",
        "Constraints:\n" + task.constraint_description.strip(),
        STATE_GLOSSARY.rstrip(),
        "Template:\n" + task.template.rstrip(),
        RETURN_CONTRACT,
    ]
    if feedback:
        parts.append("Previous attempts failed:\n" + feedback.strip())
    parts.append("Reply with the complete function in one python code block.")
    return "\n\n".join(parts) + "\n"
