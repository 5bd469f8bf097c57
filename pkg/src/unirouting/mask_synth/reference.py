"""Hand-written candidate programs: reference masks and deliberately broken ones."""

TSP_MASK = '''def mask(state, n, instance):
    # mask the visited nodes in each step
    seen = set(state["visited"])
    return [i not in seen for i in range(n)]
'''

CVRP_MASK = '''def mask(state, n, instance):
    depots = set(instance["depots"])
    seen = set(state["visited"])
    demand = instance["demand"]
    at_depot = state["current"] in depots
    left = [i for i in range(n) if i not in depots and i not in seen]
    out = []
    for i in range(n):
        if i in depots:
            # return only from a customer, or finish once everyone is served
            out.append(i == state["origin_depot"] and (not at_depot or not left))
        else:
            out.append(i not in seen and demand[i] <= state["load"] + 1e-9)
    return out
'''

ALLOW_ALL = '''def mask(state, n, instance):
    return [True] * n
'''

MASK_ALL = '''def mask(state, n, instance):
    return [False] * n
'''

WRONG_LENGTH = '''def mask(state, n, instance):
    return [True] * (n + 1)
'''

CRASHES = '''import os

def mask(state, n, instance):
    os._exit(3)
'''

RAISES = '''def mask(state, n, instance):
    raise RuntimeError("no idea")
'''

LOOPS = '''def mask(state, n, instance):
    while True:
        pass
'''

REFERENCES = {frozenset(): TSP_MASK, frozenset({"C"}): CVRP_MASK}

BROKEN = (MASK_ALL, WRONG_LENGTH, CRASHES, RAISES)


def reference_for(families):
    return REFERENCES.get(frozenset(families))


def as_completion(source: str) -> str:
    """Wrap a program the way a chat model would reply."""
    return f"Here is the mask generator.\n\n```python\n{source}```\n"
