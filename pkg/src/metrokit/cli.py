"""Batch command-line front end.

    metrokit --config run.json [--seed N] [--out DIR] [--jobs N] [--dry-run]

A run writes ``result.json``, ``table.csv`` and ``manifest.json`` into the
output directory. Exit status 2 means the configuration was rejected (nothing
is written), 3 means a numerical failure (only the manifest is written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .qcore import SIGMA_X, SIGMA_Y, SIGMA_Z, ket_to_dm, matrix_from_json, matrix_to_json

log = logging.getLogger("metrokit")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int1 = {"type": "integer", "minimum": 1}
_matrix = {
    "type": "object",
    "properties": {"dim": _int1, "re": {"type": "array"}, "im": {"type": "array"}},
    "required": ["dim", "re"],
    "additionalProperties": False,
}
_operator = {"oneOf": [{"enum": ["x", "y", "z"]}, _matrix]}
_channel = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["unitary", "dephasing", "amplitude-damping"]},
        "p": {"type": "number", "minimum": 0, "maximum": 1},
        "eta": {"type": "number", "minimum": 0, "maximum": 1},
        "generator": _operator,
    },
    "required": ["kind"],
    "additionalProperties": False,
}


def _params(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


PARAM_SCHEMAS = {
    "qfi": _params(
        {"channel": _channel, "x": _num, "dx": _pos, "method": {"enum": ["fd", "probe", "both"]}},
        ["channel"],
    ),
    "channel-fidelity": _params({"channel": _channel, "x1": _num, "x2": _num}, ["channel", "x1", "x2"]),
    "optimal-probe": _params({"channel": _channel, "x": _num, "dx": _pos}, ["channel"]),
    "grape": _params({
        "omega": _num, "gamma": {"type": "number", "minimum": 0}, "T": _pos, "steps": _int1,
        "iters": _int1, "epsilon": _pos, "bound": _pos, "probe_angle": _num,
        "gradient": {"enum": ["fd", "adjoint"]},
    }),
    "qec-code": _params({
        "signal": _operator, "noise": {"type": "array", "items": _operator}, "t": _pos,
        "norm": {"enum": ["trace", "op"]},
    }, ["signal"]),
    "adaptive-mzi": _params({
        "N": {"type": "integer", "minimum": 1, "maximum": 16}, "policy": {"enum": ["online", "fixed", "offline"]},
        "seeds": _int1, "grid_size": {"type": "integer", "minimum": 8}, "phi1": _num,
        "deltas": {"type": "array", "items": _num}, "input": {"enum": ["berry-wiseman", "fock"]},
    }, ["N"]),
    "state-opt": _params({
        "N": {"type": "integer", "minimum": 1, "maximum": 8}, "omega": _num,
        "gamma": {"type": "number", "minimum": 0}, "kind": {"enum": ["local", "collective"]}, "T": _pos,
        "symmetric": {"type": "boolean"}, "eps": _pos, "max_iter": _int1,
    }, ["N"]),
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": sorted(PARAM_SCHEMAS)},
        "parameters": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output_dir": {"type": "string"},
    },
    "required": ["command", "parameters"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
        jsonschema.validate(cfg["parameters"], PARAM_SCHEMAS[cfg["command"]])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"{path or '<root>'}: {exc.message}") from None
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# ---------------------------------------------------------------- fixtures


def _operator_of(desc) -> np.ndarray:
    if isinstance(desc, str):
        return {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}[desc]
    return matrix_from_json(desc)


def _channel_of(desc: dict):
    from . import channel as ch

    kind = desc["kind"]
    if kind == "unitary":
        return ch.unitary_channel(_operator_of(desc.get("generator", "z")))
    if kind == "dephasing":
        return ch.dephasing_channel(desc.get("p", 0.75))
    return ch.amplitude_damping_phase_channel(desc.get("eta", 0.1))


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# ---------------------------------------------------------------- commands


def cmd_qfi(p: dict, seed: int, jobs: int):
    from . import channel as ch

    pc = _channel_of(p["channel"])
    x = p.get("x", 0.0)
    dx = p.get("dx", ch.default_dx(x))
    method = p.get("method", "both")
    records = []
    if method in ("fd", "both"):
        records.append(dict(method="fd", value=ch.channel_qfi_fd(pc, x, dx), dx=dx, solver_status="optimal"))
    if method in ("probe", "both"):
        r = ch.optimal_probe(pc, x, dx)
        records.append(dict(method="probe", value=r.qfi, dx=dx, solver_status=r.status))
    result = dict(channel=pc.name, x=x, value=records[0]["value"], records=records)
    return result, _table(["method", "value", "dx", "solver_status"],
                          [[r["method"], r["value"], r["dx"], r["solver_status"]] for r in records])


def cmd_channel_fidelity(p: dict, seed: int, jobs: int):
    from . import channel as ch

    pc = _channel_of(p["channel"])
    f, W = ch.channel_fidelity(pc(p["x1"]), pc(p["x2"]))
    result = dict(channel=pc.name, x1=p["x1"], x2=p["x2"], value=f, bures_angle=float(np.arccos(min(f, 1.0))),
                  gauge=matrix_to_json(W))
    return result, _table(["x1", "x2", "fidelity"], [[float(p["x1"]), float(p["x2"]), f]])


def cmd_optimal_probe(p: dict, seed: int, jobs: int):
    from . import channel as ch

    pc = _channel_of(p["channel"])
    x = p.get("x", 0.0)
    r = ch.optimal_probe(pc, x, p.get("dx"))
    purity = float(np.trace(r.state @ r.state).real)
    result = dict(channel=pc.name, x=x, method="probe", value=r.qfi, dx=r.dx, solver_status=r.status,
                  trace_norm=r.trace_norm, purity=purity, purified=r.purified, state=matrix_to_json(r.state),
                  ancilla_free=ch.ancilla_free_check(pc, x, x + r.dx))
    return result, _table(["method", "value", "dx", "purity"], [["probe", r.qfi, r.dx, purity]])


def cmd_grape(p: dict, seed: int, jobs: int):
    from . import control as ctl

    omega, gamma = p.get("omega", 1.0), p.get("gamma", 0.1)
    bound = p.get("bound", 2.0)
    problem = ctl.ControlProblem(
        H0=lambda x: x * SIGMA_Z / 2, dH0=lambda x: SIGMA_Z / 2, x=omega,
        controls=[SIGMA_X, SIGMA_Y, SIGMA_Z], T=p.get("T", 5.0), steps=p.get("steps", 50),
        lindblad_ops=[SIGMA_Z], rates=[gamma], bounds=(-bound, bound),
    )
    a = p.get("probe_angle", np.pi / 4)
    rho = ket_to_dm(np.array([np.cos(a / 2), np.sin(a / 2)]))
    res = ctl.grape(problem, problem.zero_field(), rho, epsilon=p.get("epsilon", 0.01), iters=p.get("iters", 20),
                    gradient=p.get("gradient", "fd"))
    result = dict(baseline=res.qfi_history[0], value=res.qfi_history[-1], history=res.qfi_history,
                  stopped=res.stopped, field_csv=res.field.to_csv())
    return result, _table(["iter", "qfi"], [[i, f] for i, f in enumerate(res.qfi_history)])


def cmd_qec_code(p: dict, seed: int, jobs: int):
    from . import qec

    H = _operator_of(p["signal"])
    noise = [_operator_of(n) for n in p.get("noise", [])]
    span = qec.lindblad_span(noise, H.shape[0])
    rep = qec.hnls_decompose(H, span)
    result = dict(hnls=rep.hnls, perp_norm=rep.perp_norm, H_perp=matrix_to_json(rep.H_perp), span_dim=len(span.basis))
    rows = [["hnls", rep.hnls]]
    if rep.hnls:
        code = qec.build_code(rep.H_perp)
        check = qec.verify_code(code, noise, H)
        gap = qec.optimize_code_gap(rep.H_perp, span, p.get("norm", "trace"))
        t = p.get("t", 1.0)
        result.update(
            code=json.loads(code.to_json()),
            conditions=[check.condition1, check.condition2, check.condition3],
            code_gap=check.gap, effective_qfi=qec.effective_qfi(check.gap, t),
            primal=gap.primal_value, dual=gap.dual_value,
        )
        rows += [["code_gap", check.gap], ["effective_qfi", result["effective_qfi"]],
                 ["primal", gap.primal_value], ["dual", gap.dual_value]]
    return result, _table(["quantity", "value"], rows)


def _mzi_seed(args):
    from . import mzi

    policy, N, inp, grid, seed = args
    st = mzi.berry_wiseman_input(N) if inp == "berry-wiseman" else mzi.fock_state(N, N)
    # one generator per seed: first the true phase, then the detection outcomes
    rng = np.random.default_rng(seed)
    phi_true = float(rng.uniform(-np.pi, np.pi))
    run = mzi.simulate_adaptive(policy, st, phi_true, rng, grid)
    run.seed = seed
    return run.to_dict()


def cmd_adaptive_mzi(p: dict, seed: int, jobs: int):
    from . import mzi

    N = p["N"]
    kind = p.get("policy", "online")
    deltas = tuple(p.get("deltas", [0.0] * N)) if kind == "offline" else ()
    policy = mzi.AdaptivePolicy(kind, deltas, p.get("phi1", 0.0))
    inp = p.get("input", "berry-wiseman")
    grid = p.get("grid_size", mzi.GRID_SIZE)
    tasks = [(policy, N, inp, grid, seed + k) for k in range(p.get("seeds", 1))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            runs = list(ex.map(_mzi_seed, tasks))
    else:
        runs = [_mzi_seed(t) for t in tasks]
    st = mzi.berry_wiseman_input(N) if inp == "berry-wiseman" else mzi.fock_state(N, N)
    lik = mzi.likelihood_table(st, policy.phi1, grid)
    vh = [r["holevo_variance"] for r in runs]
    result = dict(policy=kind, N=N, median_holevo_variance=float(np.median(vh)), runs=runs,
                  first_round_likelihood=dict(phi=lik[:, 0].tolist(), p0=lik[:, 1].tolist(), p1=lik[:, 2].tolist()))
    rows = [[r["seed"], r["phi_true"], r["estimate"], r["holevo_variance"], "".join(map(str, r["outcomes"]))]
            for r in runs]
    return result, _table(["seed", "phi_true", "estimate", "holevo_variance", "outcomes"], rows)


def cmd_state_opt(p: dict, seed: int, jobs: int):
    from . import stateopt as so

    model = so.SpinModel(p["N"], p.get("omega", 1.0), p.get("gamma", 0.1), p.get("kind", "local"))
    cfg = so.NelderMeadConfig(eps=p.get("eps", 1e-9), max_iter=p.get("max_iter", 2000))
    T = p.get("T", 1.0)
    coeffs, res = so.dicke_search(model, T, p.get("symmetric", True), cfg)
    ghz = so.spin_dephasing_objective(model, T, so.ghz_coeffs(p["N"]))
    result = dict(value=-res.fun, objective=res.fun, coeffs=coeffs.tolist(), iterations=res.iterations,
                  converged=res.converged, ghz_objective=ghz)
    return result, _table(["iter", "f_best", "f_worst", "spread"], res.history)


COMMANDS = {
    "qfi": cmd_qfi,
    "channel-fidelity": cmd_channel_fidelity,
    "optimal-probe": cmd_optimal_probe,
    "grape": cmd_grape,
    "qec-code": cmd_qec_code,
    "adaptive-mzi": cmd_adaptive_mzi,
    "state-opt": cmd_state_opt,
}

# schema validation has already run, so remaining ValueErrors come from the numerics
NUMERIC_ERRORS = (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError)


def _write(path: Path, text: str) -> None:
    path.write_text(text)


def _jsonable(obj):
    """Strict JSON: non-finite floats become the strings ``inf``, ``-inf``, ``nan``."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def run(cfg: dict, seed: int | None = None, out: str | None = None, jobs: int = 1, dry_run: bool = False,
        stdout=sys.stdout) -> int:
    try:
        cfg = validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = cfg.get("seed", 0) if seed is None else seed
    if not 0 <= seed < 2**64:
        print("config error: seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out or cfg.get("output_dir") or "metrokit-out")
    plan = dict(command=cfg["command"], parameters=cfg["parameters"], seed=seed, output_dir=str(out_dir),
                jobs=jobs, config_hash=config_hash(cfg))
    if dry_run:
        print(json.dumps(plan, indent=2, sort_keys=True), file=stdout)
        return EXIT_OK
    manifest = dict(tool="metrokit", version=__version__, command=cfg["command"], config_hash=plan["config_hash"],
                    seed=seed)
    t0 = time.perf_counter()
    try:
        result, table = COMMANDS[cfg["command"]](cfg["parameters"], seed, jobs)
    except NUMERIC_ERRORS as exc:
        manifest.update(status="numerical-failure", error=type(exc).__name__, message=str(exc),
                        wall_time=time.perf_counter() - t0)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write(out_dir / "manifest.json", _dump(manifest))
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    manifest.update(status="ok", wall_time=time.perf_counter() - t0, outputs=["result.json", "table.csv"])
    out_dir.mkdir(parents=True, exist_ok=True)
    _write(out_dir / "result.json", _dump(dict(command=cfg["command"], seed=seed, result=result)))
    _write(out_dir / "table.csv", table)
    _write(out_dir / "manifest.json", _dump(manifest))
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="metrokit", description="Quantum metrology optimization toolkit")
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    ap.add_argument("--jobs", type=int, default=1, help="cap on concurrent evaluations")
    ap.add_argument("--dry-run", action="store_true", help="validate and print the plan only")
    args = ap.parse_args(argv)
    level = os.environ.get("METROKIT_LOG", "WARNING").upper()
    logging.basicConfig(level=level if level in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL") else "WARNING",
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg, args.seed, args.out, args.jobs, args.dry_run)


if __name__ == "__main__":
    sys.exit(main())
