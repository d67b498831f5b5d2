"""Spec builders for tests: hand-made shapes and two random generators.

``random_dag_spec`` draws arbitrary acyclic specs (merges, variant
constraints, all split/merge types; may be unsound or even statically
invalid). ``random_block_spec`` draws block-structured specs where every
split has a matching join, so every agent can fire in some run.
"""

from __future__ import annotations

import random

from abp.model import assemble_spec

FLOWS = ("AND", "OR", "XOR")


def ref(obj, variant="any"):
    return {"object": obj, "variant": variant}


def obj(oid, variants=(), kind="document", physical=False):
    return {"id": oid, "kind": kind, "variants": list(variants), "physical": physical}


def agent(aid, triggers, finals, goal, caps=("CREATE", "READ"), resources=(), behavior="stub"):
    return {
        "id": aid,
        "capabilities": list(caps),
        "triggers": list(triggers),
        "resources": list(resources),
        "finals": list(finals),
        "goal": goal,
        "behavior": behavior,
    }


def goal(gid, objects, split=None, merge="AND"):
    g = {"id": gid, "objects": list(objects), "merge": merge}
    if split is not None:
        g["split"] = split
    return g


def document(name, objects, goals, agents, start, end, resources=(), caps=None):
    if caps is None:
        caps = sorted({c for a in agents for c in a["capabilities"]})
    return {
        "name": name,
        "objects": objects,
        "goals": goals,
        "agents": agents,
        "start_objects": [ref(s) if isinstance(s, str) else s for s in start],
        "end_objects": [ref(e) if isinstance(e, str) else e for e in end],
        "resource_objects": list(resources),
        "capabilities": caps,
    }


def chain_doc(n=3):
    """order -> a1 -> G1 -> a2 -> G2 ... with no variants."""
    objs = [obj("o0")] + [obj(f"o{i}") for i in range(1, n + 1)]
    agents = [agent(f"a{i}", [ref(f"o{i - 1}")], [ref(f"o{i}")], f"G{i}") for i in range(1, n + 1)]
    goals = [goal(f"G{i}", [ref(f"o{i}")]) for i in range(1, n + 1)]
    return document("chain", objs, goals, agents, ["o0"], [f"o{n}"])


def diamond_doc(split="XOR", merge="XOR", data_driven=False):
    """Start -a1-> G1 -(a2|a3)-> G4 -a4-> G5.

    AND joins use one object per branch; XOR/OR joins share object ``j``.
    ``data_driven`` gives ``x`` variants A/B and constrains a2/a3 to them.
    """
    variants = ("A", "B") if data_driven else ()
    t2 = ref("x", "A") if data_driven else ref("x")
    t3 = ref("x", "B") if data_driven else ref("x")
    if merge == "AND":
        objs = [obj("order"), obj("x", variants), obj("y"), obj("z"), obj("done")]
        finals2, finals3 = [ref("y")], [ref("z")]
        g4 = [ref("y"), ref("z")]
    else:
        objs = [obj("order"), obj("x", variants), obj("j"), obj("done")]
        finals2 = finals3 = [ref("j")]
        g4 = [ref("j")]
    agents = [
        agent("a1", [ref("order")], [ref("x")], "G1"),
        agent("a2", [t2], finals2, "G4"),
        agent("a3", [t3], finals3, "G4"),
        agent("a4", g4, [ref("done")], "G5"),
    ]
    goals = [goal("G1", [ref("x")], split=split), goal("G4", g4, merge=merge), goal("G5", [ref("done")])]
    return document(f"diamond-{split}-{merge}", objs, goals, agents, ["order"], ["done"])


def cycle_doc():
    """G1 -a2-> G2 -a3-> G1: a precedence cycle behind a valid start."""
    objs = [obj(o) for o in ("s", "x", "w", "y", "e")]
    goals = [goal("G1", [ref("x"), ref("w")]), goal("G2", [ref("y")]), goal("G3", [ref("e")])]
    agents = [
        agent("a1", [ref("s")], [ref("x")], "G1"),
        agent("a2", [ref("x")], [ref("y")], "G2"),
        agent("a3", [ref("y")], [ref("w")], "G1"),
        agent("a4", [ref("w")], [ref("e")], "G3"),
    ]
    return document("cycle", objs, goals, agents, ["s"], ["e"])


# -- random, unstructured -------------------------------------------------------------


def random_dag_doc(rng: random.Random, max_agents=8, max_objects=10, max_variants=2) -> dict:
    objects: dict[str, list[str]] = {}

    def new_object():
        oid = f"o{len(objects)}"
        n = rng.choice([0, 0, min(2, max_variants)])
        objects[oid] = ["A", "B"][:n]
        return oid

    start = new_object()
    goals: list[dict] = []
    agents = []
    n_agents = rng.randint(1, max_agents)
    for i in range(1, n_agents + 1):
        src = rng.choice([-1] + [gi for gi, g in enumerate(goals) if g["objects"]])
        pool = [ref(start)] if src == -1 else goals[src]["objects"]
        triggers = []
        for r in rng.sample(pool, rng.randint(1, len(pool))):
            tags = objects[r["object"]]
            if tags and src != -1 and rng.random() < 0.5:
                triggers.append(ref(r["object"], rng.choice(tags)))
            else:
                triggers.append(ref(r["object"]))
        later = [gi for gi in range(len(goals)) if gi > src]
        if later and rng.random() < 0.35:
            target = goals[rng.choice(later)]
        else:
            target = goal(f"G{len(goals) + 1}", [], split=rng.choice(FLOWS + (None,)), merge=rng.choice(FLOWS))
            goals.append(target)
        if target["objects"] and (len(objects) >= max_objects or rng.random() < 0.5):
            out = rng.choice(target["objects"])["object"]
        elif len(objects) < max_objects:
            out = new_object()
        else:
            break
        tags = objects[out]
        final = ref(out, rng.choice(tags)) if tags and rng.random() < 0.3 else ref(out)
        if all(r["object"] != out for r in target["objects"]):
            target["objects"].append(ref(out))
        extra = rng.sample(["UPDATE", "DELETE", "ARCHIVE"], rng.randint(0, 1))
        agents.append(agent(f"a{i}", triggers, [final], target["id"], caps=["CREATE", "READ", *extra]))

    goals = [g for g in goals if g["objects"]]
    sources = {t["object"] for a in agents for t in a["triggers"]}
    end = sorted({r["object"] for g in goals for r in g["objects"]} - sources) or [goals[-1]["objects"][0]["object"]]
    objs = [obj(o, v) for o, v in objects.items()]
    return document(f"random-{rng.random():.6f}", objs, goals, agents, [start], end)


def random_dag_spec(rng: random.Random, **bounds):
    return assemble_spec(random_dag_doc(rng, **bounds))


# -- random, block-structured ---------------------------------------------------------------


class _BlockBuilder:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.objects: dict[str, list[str]] = {}
        self.goals: list[dict] = []
        self.agents: list[dict] = []

    def new_object(self, variants=()):
        oid = f"o{len(self.objects)}"
        self.objects[oid] = list(variants)
        return oid

    def new_goal(self, objects, split=None, merge="AND"):
        g = goal(f"G{len(self.goals) + 1}", objects, split=split, merge=merge)
        self.goals.append(g)
        return g["id"]

    def add_agent(self, triggers, finals, target):
        aid = f"a{len(self.agents) + 1}"
        self.agents.append(agent(aid, triggers, finals, target))

    def block(self, src, triggers, target, finals, depth):
        weights = [(0.2, 0.2, 0.6), (0.4, 0.3, 0.3), (1, 0, 0)][min(depth, 2)]
        kind = self.rng.choices(["seq", "seq2", "split"], weights)[0]
        if kind == "seq":
            self.add_agent(triggers, finals, target)
        elif kind == "seq2":
            m = self.new_object(self.rng.choice([(), ("A", "B")]))
            mid = self.new_goal([ref(m)])
            self.add_agent(triggers, [ref(m)], mid)
            self.block(mid, [ref(m)], target, finals, depth + 1)
        else:
            flow = self.rng.choice(FLOWS)
            data_driven = flow == "XOR" and self.rng.random() < 0.5
            s = self.new_object(("A", "B") if data_driven else ())
            split_goal = self.new_goal([ref(s)], split=flow)
            self.add_agent(triggers, [ref(s)], split_goal)
            branch_triggers = (
                [[ref(s, "A")], [ref(s, "B")]] if data_driven else [[ref(s)], [ref(s)]]
            )
            if flow == "AND":
                js = [self.new_object(), self.new_object()]
                join_refs = [ref(j) for j in js]
                branch_finals = [[ref(js[0])], [ref(js[1])]]
            else:
                j = self.new_object()
                join_refs = [ref(j)]
                branch_finals = [[ref(j)], [ref(j)]]
            join = self.new_goal(join_refs, merge=flow)
            for bt, bf in zip(branch_triggers, branch_finals):
                self.block(split_goal, bt, join, bf, depth + 1)
            self.block(join, join_refs, target, finals, depth + 1)


def random_block_doc(rng: random.Random, max_agents=8, max_objects=10) -> dict:
    while True:
        b = _BlockBuilder(rng)
        start = b.new_object()
        end = b.new_object()
        end_goal = b.new_goal([ref(end)])
        b.block("Start", [ref(start)], end_goal, [ref(end)], 0)
        if len(b.agents) <= max_agents and len(b.objects) <= max_objects:
            objs = [obj(o, v) for o, v in b.objects.items()]
            return document(f"block-{rng.random():.6f}", objs, b.goals, b.agents, [start], [end])


def random_block_spec(rng: random.Random, **bounds):
    return assemble_spec(random_block_doc(rng, **bounds))
