"""Command-line workflows over scenario files.

Subcommands: validate | project | snell | decompose | stop | represent |
signal | oracle | suite.  A scenario comes from --scenario or, absent that,
is generated deterministically from --seed (or MEYERSTOP_SEED).  Reports
render as aligned text (table) or canonical JSON (machine); machine output
is byte-stable across runs and parallelism settings.

Exit status: 0 success, 1 validation failure, 2 property failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

from . import checks
from .enumeration import DEFAULT_GUARD, EnumerationGuardError, count_stopping_times
from .lattice import (
    AT,
    Instant,
    Kind,
    LatticeError,
    RandomInstant,
    validate_lattice,
)
from .projection import project
from .representation import (
    RepresentationError,
    forward_evaluate,
    solve_representation,
    universal_signal_check,
)
from .scenario import (
    RandomInstanceParams,
    Scenario,
    ScenarioError,
    generate_instance,
    parse_scenario,
)
from .snell import (
    delta_stop,
    expected_value,
    mertens_decompose,
    sigma_stop,
    snell_brute_force,
    snell_envelope,
)

OK = 0
VALIDATION_FAILURE = 1
PROPERTY_FAILURE = 2

COMMANDS = (
    "validate",
    "project",
    "snell",
    "decompose",
    "stop",
    "represent",
    "signal",
    "oracle",
    "suite",
)


def _fmt(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _proc_doc(lattice, process) -> dict:
    return {
        lattice.path_ids[p]: [_fmt(v) for v in process.values[p]]
        for p in range(lattice.n_paths)
    }


def _time_doc(lattice, T: RandomInstant) -> dict:
    return {
        lattice.path_ids[p]: repr(T.assignment[p]) for p in range(lattice.n_paths)
    }


def _pick_process(scenario: Scenario, name: str | None):
    if name is None:
        if scenario.reward is not None:
            name = scenario.reward
        elif "Z" in scenario.processes:
            name = "Z"
        elif scenario.processes:
            name = sorted(scenario.processes)[0]
        else:
            raise ScenarioError("scenario has no processes")
    if name not in scenario.processes:
        raise ScenarioError(f"unknown process {name!r}")
    return name, scenario.processes[name]


def run_command(
    scenario: Scenario,
    command: str,
    process: str | None = None,
    ell_grid=None,
    jobs: int = 1,
    guard: int = DEFAULT_GUARD,
) -> tuple[dict, int]:
    """Dispatch one subcommand; returns (report document, exit status)."""
    lattice, meyer = scenario.lattice, scenario.meyer
    if command == "validate":
        report = validate_lattice(lattice, meyer)
        doc = {
            "command": "validate",
            "ok": report.ok,
            "problems": list(report.problems),
        }
        return doc, OK if report.ok else VALIDATION_FAILURE

    if command == "project":
        name, proc = _pick_process(scenario, process)
        doc = {
            "command": "project",
            "process": name,
            "projections": {
                kind.value: _proc_doc(lattice, project(lattice, meyer, proc, kind))
                for kind in Kind
            },
        }
        return doc, OK

    if command == "snell":
        name, proc = _pick_process(scenario, process)
        zbar = snell_envelope(lattice, meyer, proc)
        brute = snell_brute_force(lattice, meyer, proc, guard)
        root = expected_value(lattice, zbar.slice_at(0))
        doc = {
            "command": "snell",
            "process": name,
            "envelope": _proc_doc(lattice, zbar),
            "value": _fmt(root),
            "brute_force_value": _fmt(brute.value),
            "optimizer_count": len(brute.optimizers),
            "matches_oracle": root == brute.value,
        }
        return doc, OK if root == brute.value else PROPERTY_FAILURE

    if command == "decompose":
        name, proc = _pick_process(scenario, process)
        zbar = snell_envelope(lattice, meyer, proc)
        d = mertens_decompose(lattice, meyer, zbar)
        doc = {
            "command": "decompose",
            "process": name,
            "envelope": _proc_doc(lattice, zbar),
            "martingale": _proc_doc(lattice, d.m),
            "martingale_terminal": [_fmt(v) for v in d.m.terminal],
            "predictable_compensator": _proc_doc(lattice, d.a),
            "predictable_terminal_jump": [_fmt(v) for v in d.a_terminal_jump],
            "jump_compensator": _proc_doc(lattice, d.b),
        }
        return doc, OK

    if command == "stop":
        name, proc = _pick_process(scenario, process)
        zbar = snell_envelope(lattice, meyer, proc)
        zero = RandomInstant.constant(lattice, Instant(0, AT))
        ds = delta_stop(lattice, meyer, proc, zero, zbar)
        ss = sigma_stop(lattice, meyer, proc, zero, zbar)
        from .lattice import from_divided_quadruple

        sigma_form = from_divided_quadruple(lattice, ss.quadruple)
        value_at_root = expected_value(lattice, zbar.slice_at(0))
        delta_value = expected_value(lattice, ds.T.value_of(proc))
        sigma_value = expected_value(lattice, sigma_form.value_of(proc))
        ok = value_at_root == delta_value == sigma_value
        doc = {
            "command": "stop",
            "process": name,
            "value": _fmt(value_at_root),
            "delta": {
                "time": _time_doc(lattice, ds.T),
                "value": _fmt(delta_value),
            },
            "sigma": {
                "time": _time_doc(lattice, ss.T),
                "reading": _time_doc(lattice, sigma_form),
                "value": _fmt(sigma_value),
                "k_minus": sorted(lattice.path_ids[p] for p in ss.k_minus),
                "k_on": sorted(lattice.path_ids[p] for p in ss.k_on),
                "k_plus": sorted(lattice.path_ids[p] for p in ss.k_plus),
            },
            "relaxation_exact": ok,
        }
        return doc, OK if ok else PROPERTY_FAILURE

    if command == "represent":
        problem = scenario.build_problem()
        if problem is None:
            raise ScenarioError("scenario carries no representation bundle (g, mu, signal/reward)")
        if problem.X is not None:
            L = solve_representation(problem, guard)
            doc = {
                "command": "represent",
                "direction": "solve",
                "signal": _proc_doc(lattice, L),
            }
        else:
            X = forward_evaluate(problem)
            doc = {
                "command": "represent",
                "direction": "forward",
                "reward": _proc_doc(lattice, X),
            }
        return doc, OK

    if command == "signal":
        problem = scenario.build_problem()
        if problem is None:
            raise ScenarioError("scenario carries no representation bundle (g, mu, signal/reward)")
        grid = ell_grid if ell_grid is not None else scenario.ell_grid
        if not grid:
            raise ScenarioError("no ell grid supplied (--ell-grid or scenario ell_grid)")
        report = universal_signal_check(problem, grid, guard, jobs)
        doc = {
            "command": "signal",
            "right_usc_holds": report.right_usc_holds,
            "rows": [
                {
                    "ell": _fmt(r.ell),
                    "variant_1": _fmt(r.value_variant_1),
                    "variant_2": _fmt(r.value_variant_2),
                    "brute_force": _fmt(r.brute_force),
                    "optimizers": r.optimizer_count,
                    "ok": r.ok,
                }
                for r in report.rows
            ],
            "ok": report.ok,
        }
        return doc, OK if report.ok else PROPERTY_FAILURE

    if command == "oracle":
        name, proc = _pick_process(scenario, process)
        brute = snell_brute_force(lattice, meyer, proc, guard)
        doc = {
            "command": "oracle",
            "process": name,
            "value": _fmt(brute.value),
            "stopping_time_count": count_stopping_times(lattice, meyer, Kind.LAMBDA),
            "optimizers": [_time_doc(lattice, T) for T in brute.optimizers],
        }
        return doc, OK

    if command == "suite":
        return run_suite(scenario, jobs=jobs, guard=guard)

    raise ScenarioError(f"unknown command {command!r}")


def _suite_checks(scenario: Scenario, guard: int):
    """The canonical (name, thunk) list for the regression battery."""
    lattice, meyer = scenario.lattice, scenario.meyer
    items = [
        ("lattice/valid", lambda: checks.check_lattice_valid(lattice, meyer)),
        (
            "projection/normalization",
            lambda: checks.check_projection_normalization(lattice, meyer),
        ),
    ]
    zero = RandomInstant.constant(lattice, Instant(0, AT))
    for name in sorted(scenario.processes):
        proc = scenario.processes[name]
        items.append(
            (f"projection/tower[{name}]",
             lambda p=proc: checks.check_projection_tower(lattice, meyer, p))
        )
        items.append(
            (f"projection/linearity[{name}]",
             lambda p=proc: checks.check_projection_linearity(lattice, meyer, p))
        )
        items.append(
            (f"projection/duality[{name}]",
             lambda p=proc: checks.check_projection_duality(lattice, meyer, p))
        )
        items.append(
            (f"projection/fatou[{name}]",
             lambda p=proc: checks.check_fatou(lattice, meyer, p, guard))
        )
        if checks.is_reward(lattice, meyer, proc):
            items.extend(
                [
                    (f"usc/equivalence[{name}]",
                     lambda p=proc: checks.check_usc_equivalence(lattice, meyer, p, guard)),
                    (f"snell/oracle[{name}]",
                     lambda p=proc: checks.check_snell_oracle(lattice, meyer, p, guard)),
                    (f"snell/dominance[{name}]",
                     lambda p=proc: checks.check_envelope_dominance(lattice, meyer, p)),
                    (f"mertens/identities[{name}]",
                     lambda p=proc: checks.check_mertens(lattice, meyer, p)),
                    (f"stop/delta[{name}]",
                     lambda p=proc: checks.check_delta(lattice, meyer, p, [zero], guard)),
                    (f"stop/sigma[{name}]",
                     lambda p=proc: checks.check_sigma(lattice, meyer, p, [zero])),
                    (f"optimality/certificates[{name}]",
                     lambda p=proc: checks.check_optimality_oracle(lattice, meyer, p, guard)),
                    (f"stop/sandwich[{name}]",
                     lambda p=proc: checks.check_sandwich(lattice, meyer, p, guard)),
                ]
            )
    problem = scenario.build_problem()
    if problem is not None:
        items.append(
            ("representation/round-trip",
             lambda: checks.check_representation_roundtrip(problem, guard))
        )
        if scenario.ell_grid:
            items.append(
                ("representation/universal-signal",
                 lambda: checks.check_universal_signal(problem, scenario.ell_grid, guard))
            )
    return items


def run_suite(scenario: Scenario, jobs: int = 1, guard: int = DEFAULT_GUARD) -> tuple[dict, int]:
    """Run every applicable named property; output order never depends on
    scheduling."""
    items = _suite_checks(scenario, guard)

    def run_one(item):
        name, thunk = item
        try:
            message = thunk()
        except EnumerationGuardError as exc:
            return {"property": name, "status": "SKIP", "detail": str(exc)}
        if message is None:
            return {"property": name, "status": "PASS", "detail": ""}
        if message.startswith("SKIP:"):
            return {"property": name, "status": "SKIP", "detail": message[5:].strip()}
        return {"property": name, "status": "FAIL", "detail": message}

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_one, items))
    else:
        rows = [run_one(item) for item in items]
    failed = [r for r in rows if r["status"] == "FAIL"]
    doc = {
        "command": "suite",
        "checks": rows,
        "passed": sum(1 for r in rows if r["status"] == "PASS"),
        "failed": len(failed),
        "skipped": sum(1 for r in rows if r["status"] == "SKIP"),
        "ok": not failed,
    }
    return doc, OK if not failed else PROPERTY_FAILURE


def render_table(doc: dict) -> str:
    """Deterministic plain-text rendering of a report document."""
    lines: list[str] = []

    def walk(value, indent: str, label: str | None) -> None:
        prefix = f"{indent}{label}: " if label is not None else indent
        if isinstance(value, dict):
            if label is not None:
                lines.append(f"{indent}{label}:")
            for key in value:
                walk(value[key], indent + ("  " if label is not None else ""), key)
        elif isinstance(value, list):
            if all(not isinstance(v, (dict, list)) for v in value):
                lines.append(prefix + "  ".join(str(v) for v in value))
            else:
                lines.append(f"{indent}{label}:")
                for i, v in enumerate(value):
                    walk(v, indent + "  ", f"[{i}]")
        else:
            lines.append(prefix + str(value))

    if doc.get("command") == "suite":
        for row in doc["checks"]:
            detail = f"  {row['detail']}" if row["detail"] else ""
            lines.append(f"{row['status']:4s} {row['property']}{detail}")
        lines.append(
            f"passed {doc['passed']}  failed {doc['failed']}  skipped {doc['skipped']}"
        )
    else:
        walk(doc, "", None)
    return "\n".join(lines) + "\n"


def render_machine(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="meyerstop",
        description="Exact optimal-stopping engine over finite information lattices",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", help="scenario JSON file (otherwise generated from the seed)")
    parser.add_argument("--process", help="process name for process-directed commands")
    parser.add_argument("--ell-grid", help="comma-separated rational levels for `signal`")
    parser.add_argument("--seed", type=int, default=None, help="seed for generated scenarios")
    parser.add_argument("--format", choices=("table", "machine"), default="table")
    parser.add_argument("--strict", action="store_true", help="reject unknown scenario fields")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers for suite/signal")
    parser.add_argument("--guard", type=int, default=DEFAULT_GUARD, help="enumeration size guard")
    parser.add_argument("--out", help="write the report here instead of stdout")
    args = parser.parse_args(argv)

    try:
        if args.scenario is not None:
            with open(args.scenario, "r", encoding="utf-8") as fh:
                text = fh.read()
            scenario = parse_scenario(text, strict=args.strict)
        else:
            seed = args.seed
            if seed is None:
                seed = int(os.environ.get("MEYERSTOP_SEED", "0"))
            scenario = generate_instance(RandomInstanceParams(seed=seed))
        ell_grid = None
        if args.ell_grid:
            ell_grid = tuple(Fraction(part) for part in args.ell_grid.split(","))
        doc, status = run_command(
            scenario,
            args.command,
            process=args.process,
            ell_grid=ell_grid,
            jobs=args.jobs,
            guard=args.guard,
        )
    except (RepresentationError, EnumerationGuardError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return PROPERTY_FAILURE
    except (ScenarioError, LatticeError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return VALIDATION_FAILURE

    text = render_machine(doc) if args.format == "machine" else render_table(doc)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
