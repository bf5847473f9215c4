#!/usr/bin/env python3
"""Regenerate the replay fixtures under fixtures/.

Produces the five-problem corpus, two replay stores with canned model
responses (a self-contained "plain" variant and a "runtime" variant
whose programs import the minilp fixture solver), and the protocol
conformance vectors. Repair-prompt transcript keys embed real sandbox
error output, so the deliberately buggy programs are executed while
generating; tracebacks vary between interpreter versions, so regenerate
the fixtures after changing the Python used for tests.

After writing everything, the script replays both stores end to end
and asserts the expected outcomes, so a broken fixture can never land
silently.
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))
RUNTIME_SRC = ROOT / "solver_runtime" / "src"
sys.path.insert(0, str(RUNTIME_SRC))

from oragent.agents import (CodeArtifact, DEFAULT_PROTOCOL_SPEC,
                            MathModelDoc, build_code_prompt,
                            build_code_repair_prompt, build_math_prompt,
                            default_templates, extract_code_block)
from oragent.corpus import load_corpus
from oragent.gateway import (Gateway, GenerationConfig, ReplayBackend,
                             ReplayStore, strip_reasoning, transcript_key)
from oragent.loop import PipelineDeps, run_benchmark
from oragent.sandbox import Sandbox, SandboxLimits, parse_result

import minilp

FIXTURES = ROOT / "fixtures"
MODEL_ID = "fixture-model"
GEN_CONFIG = GenerationConfig(model_id=MODEL_ID, temperature=0.0)

CORPUS_RECORDS = [
    {
        "id": "p1",
        "question": (
            "A small workshop assembles two products, A and B. Each unit "
            "of A brings a profit of 3 dollars and each unit of B a profit "
            "of 5 dollars. At most 4 units of A can be assembled per day. "
            "Packaging can spend at most 12 hours per day and each unit of "
            "B takes 2 hours to package. The shared finishing line offers "
            "18 hours per day; a unit of A takes 3 hours of finishing and "
            "a unit of B takes 2 hours. How many units of each product "
            "should be made to maximize daily profit?"),
        "answer": 36,
        "source": "fixture",
    },
    {
        "id": "p2",
        "question": (
            "A feed mill needs at least 10 tons of grain per week in "
            "total, and contractual terms require at least 3 of those "
            "tons to come from supplier X. Supplier X charges 2 thousand "
            "dollars per ton and supplier Y charges 3 thousand dollars "
            "per ton. How much should be bought from each supplier to "
            "minimize the weekly cost, in thousands of dollars?"),
        "answer": 20,
        "source": "fixture",
    },
    {
        "id": "p3",
        "question": (
            "A furniture maker builds tables and chairs. A table earns 5 "
            "dollars and uses 6 board-feet of wood plus 1 hour of labor; "
            "a chair earns 4 dollars and uses 4 board-feet plus 2 hours. "
            "With 24 board-feet of wood and 6 labor hours available, what "
            "production plan maximizes earnings?"),
        "answer": 21,
        "source": "fixture",
    },
    {
        "id": "p4",
        "question": (
            "A snack stand can prepare at most 2 sandwiches and at most 3 "
            "drinks per minute. Every item sold earns the same margin. "
            "How many items can the stand sell per minute at most?"),
        "answer": 5,
        "source": "fixture",
    },
    {
        "id": "p5",
        "question": (
            "A farm allocates up to 100 hectares among wheat, barley, and "
            "oats, earning 10, 6, and 4 per hectare respectively. Water "
            "is limited to 600 units (wheat uses 10 per hectare, barley "
            "4, oats 5) and labor to 300 hours (wheat and barley use 2 "
            "hours per hectare, oats 6). What planting plan maximizes "
            "profit?"),
        "answer": 733.3333333333334,
        "source": "fixture",
    },
]

MATH_RESPONSES = {
    "p1": """<think>
Two decision variables. Profit 3 per A and 5 per B. Assembly caps x at
4, packaging gives 2y <= 12, finishing gives 3x + 2y <= 18.
</think>## Decision variables

- x: units of product A assembled per day
- y: units of product B assembled per day

## Objective

maximize 3x + 5y   (daily profit in dollars)

## Constraints

1. Assembly capacity: x <= 4
2. Packaging hours: 2y <= 12
3. Finishing line hours: 3x + 2y <= 18
4. Nonnegativity: x >= 0, y >= 0
""",
    "p2": """## Decision variables

- x: tons bought from supplier X per week
- y: tons bought from supplier Y per week

## Objective

minimize 2x + 3y   (weekly cost in thousands of dollars)

## Constraints

1. Total demand: x + y >= 10
2. Supplier X minimum: x >= 3
3. Nonnegativity: x >= 0, y >= 0
""",
    "p3": """## Decision variables

- t: tables built
- c: chairs built

## Objective

maximize 5t + 4c   (earnings in dollars)

## Constraints

1. Wood: 6t + 4c <= 24
2. Labor hours: t + 2c <= 6
3. Nonnegativity: t >= 0, c >= 0
""",
    "p4": """## Decision variables

- s: sandwiches sold per minute
- d: drinks sold per minute

## Objective

maximize s + d   (items sold per minute)

## Constraints

1. Sandwich capacity: s <= 2
2. Drink capacity: d <= 3
3. Nonnegativity: s >= 0, d >= 0
""",
    "p5": """## Decision variables

- x: hectares of wheat
- y: hectares of barley
- z: hectares of oats

## Objective

maximize 10x + 6y + 4z   (profit)

## Constraints

1. Land: x + y + z <= 100
2. Water: 10x + 4y + 5z <= 600
3. Labor: 2x + 2y + 6z <= 300
4. Nonnegativity: x, y, z >= 0
""",
}

PLAIN_CODE = {
    "p1": """The model is a two-variable LP, so checking the corner points of
the feasible region is enough; a full solver is not needed here.

```python
points = [(0, 0), (4, 0), (4, 3), (2, 6), (0, 6)]
best = None
for x, y in points:
    if x <= 4 and 2 * y <= 12 and 3 * x + 2 * y <= 18:
        profit = 3 * x + 5 * y
        if best is None or profit > best:
            best = profit
print("OPTIMAL_VALUE=%g" % best)
```
""",
    "p2": """Both constraints have integer data, so a small grid search over
whole tons finds the optimum.

```python
# minimize 2x + 3y subject to x + y >= 10, x >= 3
best = None
for x in range(3, 21):
    for y in range(0, 21):
        if x + y >= 10:
            cost = 2 * units_x + 3 * units_y
            if best is None or cost < best:
                best = cost
print("OPTIMAL_VALUE=%g" % best)
```
""",
    "p3": """<think>
Corners: wood 6t + 4c <= 24, labor t + 2c <= 6. Lines meet at t = 3,
c = 1.5 giving 21; axis corners give 20 and 12.
</think>Enumerating the corner points of the feasible region:

```python
def feasible(t, c):
    return 6 * t + 4 * c <= 24 and t + 2 * c <= 6 and t >= 0 and c >= 0

corners = [(0, 0), (4, 0), (3, 1.5), (0, 3)]
best = max(5 * t + 4 * c for t, c in corners if feasible(t, c))
print("OPTIMAL_VALUE=%g" % best)
```
""",
    "p4": """```python
# at most 2 sandwiches and 3 drinks per minute; maximize items sold
sandwiches = 2
drinks = 2
print("OPTIMAL_VALUE=%g" % (sandwiches + drinks))
```
""",
    "p5": """At the optimum the land and water constraints bind while labor
stays slack, and oats are dominated, so z = 0.

```python
# land: x + y + z <= 100 and water: 10x + 4y + 5z <= 600 bind, z = 0
x = (600 - 4 * 100) / 6.0
y = 100 - x
z = 0.0
value = 10 * x + 6 * y + 4 * z
print("OPTIMAL_VALUE=%r" % value)
```
""",
}

PLAIN_REPAIR = {
    "p2": """The loop body referenced names that were never defined; the loop
variables are x and y.

```python
# minimize 2x + 3y subject to x + y >= 10, x >= 3
best = None
for x in range(3, 21):
    for y in range(0, 21):
        if x + y >= 10:
            cost = 2 * x + 3 * y
            if best is None or cost < best:
                best = cost
print("OPTIMAL_VALUE=%g" % best)
```
""",
}

RUNTIME_CODE = {
    "p1": """```python
from minilp import LpProblem, emit_result, solve_lp

problem = LpProblem(
    objective=[3, 5],
    sense="maximize",
    constraints=[
        ([1, 0], "<=", 4),
        ([0, 2], "<=", 12),
        ([3, 2], "<=", 18),
    ],
)
emit_result(solve_lp(problem))
```
""",
    "p2": """```python
from minilp import LpProblem, emit_result, solve_lp

problem = LpProblem(
    objective=[2, 3],
    sense="minimize",
    constraints=[
        ([1, 1], ">=", 10),
        ([1, 0], ">=", 3),
    ],
)
emit_result(solve(problem))
```
""",
    "p3": """<think>
Straight translation of the two-constraint model; the solver handles
the rest.
</think>```python
from minilp import LpProblem, emit_result, solve_lp

problem = LpProblem(
    objective=[5, 4],
    sense="maximize",
    constraints=[
        ([6, 4], "<=", 24),
        ([1, 2], "<=", 6),
    ],
)
emit_result(solve_lp(problem))
```
""",
    "p4": """```python
from minilp import LpProblem, emit_result, solve_lp

problem = LpProblem(
    objective=[1, 1],
    sense="maximize",
    constraints=[
        ([1, 0], "<=", 2),
        ([0, 1], "<=", 2),
    ],
)
emit_result(solve_lp(problem))
```
""",
    "p5": """```python
from minilp import LpProblem, emit_result, solve_lp

problem = LpProblem(
    objective=[10, 6, 4],
    sense="maximize",
    constraints=[
        ([1, 1, 1], "<=", 100),
        ([10, 4, 5], "<=", 600),
        ([2, 2, 6], "<=", 300),
    ],
)
emit_result(solve_lp(problem))
```
""",
}

RUNTIME_REPAIR = {
    "p2": """The call used solve, but the imported function is solve_lp.

```python
from minilp import LpProblem, emit_result, solve_lp

problem = LpProblem(
    objective=[2, 3],
    sense="minimize",
    constraints=[
        ([1, 1], ">=", 10),
        ([1, 0], ">=", 3),
    ],
)
emit_result(solve_lp(problem))
```
""",
}

# Shared emit/parse contract: each verdict with the exact line a
# conforming runtime must print for it.
PROTOCOL_VECTORS = [
    ({"status": "optimal", "objective": 36.0}, "OPTIMAL_VALUE=36"),
    ({"status": "optimal", "objective": -2.5}, "OPTIMAL_VALUE=-2.5"),
    ({"status": "optimal", "objective": 0.0}, "OPTIMAL_VALUE=0"),
    ({"status": "optimal", "objective": 0.1}, "OPTIMAL_VALUE=0.1"),
    ({"status": "optimal", "objective": -0.75}, "OPTIMAL_VALUE=-0.75"),
    ({"status": "optimal", "objective": 733.3333333333334},
     "OPTIMAL_VALUE=733.3333333333334"),
    ({"status": "optimal", "objective": 1e-07}, "OPTIMAL_VALUE=1e-07"),
    ({"status": "optimal", "objective": 2.5e16},
     "OPTIMAL_VALUE=25000000000000000"),
    ({"status": "infeasible", "objective": None}, "MODEL_STATUS=INFEASIBLE"),
    ({"status": "unbounded", "objective": None}, "MODEL_STATUS=UNBOUNDED"),
]

# p4 is runnable but wrong on purpose (truth is 5); p5 differs in the
# last ulp between the variants because the plain program does its
# arithmetic in floats while the runtime solver is exact.
EXPECTED_PLAIN = {
    "p1": (36.0, 1),
    "p2": (20.0, 2),
    "p3": (21.0, 1),
    "p4": (4.0, 1),
    "p5": (733.3333333333333, 1),
}
EXPECTED_RUNTIME = {**EXPECTED_PLAIN, "p5": (733.3333333333334, 1)}


def write_corpus_file() -> Path:
    path = FIXTURES / "corpus5.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in CORPUS_RECORDS:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


VARIANTS = {
    "plain": (PLAIN_CODE, PLAIN_REPAIR, "Gurobi", None),
    "runtime": (RUNTIME_CODE, RUNTIME_REPAIR, "minilp", str(RUNTIME_SRC)),
}


def collect_responses(variant: str) -> dict[str, str]:
    """Map every transcript key a fixture run will issue to its canned
    response. Buggy programs are executed for real so the repair-prompt
    keys embed genuine sandbox error excerpts."""
    code_set, repair_set, solver_name, pythonpath = VARIANTS[variant]
    templates = default_templates()
    sandbox = Sandbox(SandboxLimits(wall_timeout=30),
                      extra_pythonpath=pythonpath)
    responses: dict[str, str] = {}

    for record in CORPUS_RECORDS:
        pid = record["id"]
        math_prompt = build_math_prompt(record["question"], templates)
        math_key = transcript_key(math_prompt, GEN_CONFIG)
        responses[math_key] = MATH_RESPONSES[pid]
        _, math_answer = strip_reasoning(MATH_RESPONSES[pid])
        math_doc = MathModelDoc(problem_id=pid, body=math_answer,
                                transcript_key=math_key)

        code_prompt = build_code_prompt(
            math_doc, templates, solver_name=solver_name,
            protocol_spec=DEFAULT_PROTOCOL_SPEC)
        code_key = transcript_key(code_prompt, GEN_CONFIG)
        responses[code_key] = code_set[pid]

        if pid in repair_set:
            _, code_answer = strip_reasoning(code_set[pid])
            buggy = CodeArtifact(
                problem_id=pid, source=extract_code_block(code_answer),
                attempt_index=0, provenance="initial",
                transcript_key=code_key)
            outcome = sandbox.execute(buggy)
            assert outcome.error is not None, f"{pid}: bug did not fail"
            assert outcome.error.kind == "nonzero_exit", outcome.error
            repair_prompt = build_code_repair_prompt(
                buggy, outcome.error, templates, solver_name=solver_name,
                protocol_spec=DEFAULT_PROTOCOL_SPEC)
            responses[transcript_key(repair_prompt, GEN_CONFIG)] = \
                repair_set[pid]
    return responses


def derive_keys(variant: str) -> list[str]:
    return sorted(collect_responses(variant))


def build_store(variant: str) -> Path:
    store_dir = FIXTURES / f"replay_{variant}"
    if store_dir.exists():
        shutil.rmtree(store_dir)
    store = ReplayStore(store_dir)
    for key, response in collect_responses(variant).items():
        store.put(key, response)
    return store_dir


def write_protocol_vectors() -> Path:
    path = FIXTURES / "protocol_vectors.jsonl"
    with path.open("w", encoding="utf-8") as fh:
        for verdict, line in PROTOCOL_VECTORS:
            fh.write(json.dumps({"verdict": verdict, "line": line},
                                ensure_ascii=False) + "\n")
    return path


def verify_protocol_vectors() -> None:
    for verdict_dict, line in PROTOCOL_VECTORS:
        verdict = minilp.LpVerdict(status=verdict_dict["status"],
                                   objective=verdict_dict["objective"])
        emitted = minilp.format_result(verdict)
        assert emitted == line, f"emit mismatch: {emitted!r} != {line!r}"
        parsed = parse_result(line + "\n")
        if verdict.status == "optimal":
            assert parsed.objective == verdict.objective, (parsed, verdict)
        else:
            expected_kind = f"model_{verdict.status}"
            assert parsed.kind == expected_kind, (parsed, verdict)


def verify_store(store_dir: Path, corpus_path: Path, solver_name: str,
                 pythonpath: str | None, expected: dict) -> None:
    corpus = load_corpus(corpus_path)
    deps = PipelineDeps(
        gateway=Gateway(ReplayBackend(ReplayStore(store_dir))),
        templates=default_templates(),
        sandbox=Sandbox(SandboxLimits(wall_timeout=30),
                        extra_pythonpath=pythonpath),
        gen_config=GEN_CONFIG,
        solver_name=solver_name,
        deterministic_clock=True)
    records = run_benchmark(corpus, "full", deps)
    for record in records:
        objective, n_attempts = expected[record.problem_id]
        assert record.solved, (record.problem_id, record.final_error)
        assert record.final_objective == objective, (
            record.problem_id, record.final_objective)
        assert len(record.attempts) == n_attempts, (
            record.problem_id, len(record.attempts))
    print(f"  verified replay of {store_dir.name}: "
          f"{len(records)} problems solved as expected")


def main() -> None:
    corpus_path = write_corpus_file()
    print(f"wrote {corpus_path}")
    plain = build_store("plain")
    print(f"wrote {plain} ({len(list(plain.glob('*.txt')))} responses)")
    runtime = build_store("runtime")
    print(f"wrote {runtime} ({len(list(runtime.glob('*.txt')))} responses)")
    vectors = write_protocol_vectors()
    print(f"wrote {vectors}")

    verify_protocol_vectors()
    verify_store(plain, corpus_path, "Gurobi", None, EXPECTED_PLAIN)
    verify_store(runtime, corpus_path, "minilp", str(RUNTIME_SRC),
                 EXPECTED_RUNTIME)
    print("all fixture verifications passed")


if __name__ == "__main__":
    main()
