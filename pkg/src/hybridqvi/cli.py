"""Command line entry point.

Exit codes: 0 success, 1 input error, 2 check failure, 3 numerical
non-achievement. Settings resolve as flags > ``--config`` file > defaults;
the resolved values and their sources go into ``manifest.json``, which is
written before any computation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from .finite_horizon import (
    SubIterationError,
    TerminalDataError,
    TimeGrid,
    backward_march,
    build_terminal_data,
    terminal_consistency_check,
)
from .grid import build_grid
from .model import HybridState, ModelError, load_model
from .stationary import ConvergenceError, Policy, SolveConfig, read_policy_csv, solve_stationary
from .trajectory import ExplicitControl, ModelConsistencyError, ZenoGuardError, simulate
from .validation import ValidationError, _json_default, validate_model
from .verification import default_grid_h, run_all, run_convergence

EXIT_OK, EXIT_INPUT, EXIT_CHECK, EXIT_NUMERIC = 0, 1, 2, 3

DEFAULTS = {
    "seed": 0,
    "tol": 1e-6,
    "dt": None,
    "grid_h": None,
    "trunc_radius": None,
    "max_iter": 200_000,
    "force": False,
    "sample_density": 9,
    # solve-finite
    "T": 1.0,
    "steps": None,
    "slices": None,
    # simulate
    "x0": None,
    "policy": None,
    "u": None,
    "v": 0,
    "jumps": None,
    "horizon": "stationary",
    "tail_tol": 1e-8,
    "s": 0.0,
    # verify
    "trials": 100,
    "inject_violation": False,
    # convergence
    "levels": 4,
    "h0": None,
    "threshold": 0.8,
    "kind": "stationary",
}


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybridqvi", description="Hybrid optimal control: validate, solve, simulate, verify.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--model", required=True, help="model JSON file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="JSON file of settings (overridden by flags)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--grid-h", dest="grid_h", type=float)
        sp.add_argument("--trunc-radius", dest="trunc_radius", type=float)
        sp.add_argument("--max-iter", dest="max_iter", type=int)
        sp.add_argument("--force", action="store_const", const=True, default=None,
                        help="proceed even if the assumption audit fails")
        return sp

    common(sub.add_parser("validate", help="audit model assumptions"))
    common(sub.add_parser("solve-stationary", help="discounted infinite-horizon value function"))
    sp = common(sub.add_parser("solve-finite", help="finite-horizon value function"))
    sp.add_argument("--T", dest="T", type=float)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--slices", help="comma-separated slice indices, or 'all'")
    sp = common(sub.add_parser("simulate", help="simulate a trajectory and its cost"))
    sp.add_argument("--x0", help="start state as 'chart:x1,x2,...' or 'x1,x2,...' (chart 0)")
    sp.add_argument("--policy", help="policy.csv from solve-stationary")
    sp.add_argument("--u", help="constant control vector 'u1,u2,...'")
    sp.add_argument("--v", type=int, help="index of the autonomous-jump control sample")
    sp.add_argument("--jumps", help="JSON list of [time, chart, [coords]] controlled jumps")
    sp.add_argument("--horizon", choices=["stationary", "finite"])
    sp.add_argument("--tail-tol", dest="tail_tol", type=float)
    sp.add_argument("--T", dest="T", type=float)
    sp.add_argument("--s", dest="s", type=float)
    sp = common(sub.add_parser("verify", help="run the verification suites"))
    sp.add_argument("--trials", type=int)
    sp.add_argument("--inject-violation", dest="inject_violation", action="store_const", const=True, default=None,
                    help="negative control: test a deliberately non-monotone sweep")
    sp = common(sub.add_parser("convergence", help="grid convergence against the model oracle"))
    sp.add_argument("--levels", type=int)
    sp.add_argument("--h0", type=float)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--kind", choices=["stationary", "finite"])
    sp.add_argument("--T", dest="T", type=float)
    return p


def _resolve(args) -> tuple[dict, dict]:
    cfg_file = {}
    if args.config:
        try:
            cfg_file = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg_file, dict):
            raise InputError("config file must hold a JSON object")
        cfg_file = {k.replace("-", "_"): v for k, v in cfg_file.items()}
        unknown = sorted(set(cfg_file) - set(DEFAULTS))
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
    settings, sources = {}, {}
    for key, default in DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key], sources[key] = flag, "flag"
        elif key in cfg_file:
            settings[key], sources[key] = cfg_file[key], "config"
        else:
            settings[key], sources[key] = default, "default"
    return settings, sources


def _threads() -> int | None:
    raw = os.environ.get("HYBRIDQVI_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"HYBRIDQVI_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise InputError(f"HYBRIDQVI_THREADS must be a positive integer, got {raw!r}")
    return n


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n", encoding="utf-8")


def _parse_state(text: str) -> HybridState:
    try:
        if ":" in text:
            c, xs = text.split(":", 1)
            return HybridState(int(c), np.array([float(v) for v in xs.split(",")]))
        return HybridState(0, np.array([float(v) for v in text.split(",")]))
    except ValueError:
        raise InputError(f"cannot parse state {text!r}; use 'chart:x1,x2,...'") from None


def _load(args, settings):
    model = load_model(args.model)
    if settings["trunc_radius"] is not None:
        model = model.with_changes(trunc_radius=float(settings["trunc_radius"]))
    return model


def _audit(model, settings, out: Path):
    rep = validate_model(model, settings["sample_density"], settings["seed"])
    _write_json(out / "validation.json", rep.to_dict())
    return rep


def cmd_validate(args, settings, out) -> int:
    model = _load(args, settings)
    rep = _audit(model, settings, out)
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_CHECK


def _grid(model, settings):
    return build_grid(model, settings["grid_h"] or default_grid_h(model))


def cmd_solve_stationary(args, settings, out) -> int:
    model = _load(args, settings)
    rep = _audit(model, settings, out)
    if not rep.passed and not settings["force"]:
        print(rep.summary(), file=sys.stderr)
        print("refusing to solve: assumption audit failed (use --force to override)", file=sys.stderr)
        return EXIT_CHECK
    grid = _grid(model, settings)
    cfg = SolveConfig(dt=settings["dt"], tol=settings["tol"], max_iter=settings["max_iter"], check_model=False)
    try:
        V, policy, diag = solve_stationary(model, grid, cfg)
    except ConvergenceError as exc:
        if exc.diagnostics is not None:
            _write_json(out / "diagnostics.json", exc.diagnostics.to_dict())
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    V.to_csv(out / "value.csv")
    V.to_binary(out / "value.bin")
    policy.to_csv(out / "policy.csv")
    d = diag.to_dict()
    d["grid"] = grid.to_dict()
    _write_json(out / "diagnostics.json", d)
    print(f"converged in {diag.iterations} sweeps; residual {diag.residual}")
    return EXIT_OK


def _slice_list(text, steps: int) -> list[int]:
    if text is None:
        return list(range(steps + 1)) if steps <= 20 else sorted(set(np.linspace(0, steps, 11).round().astype(int)))
    if text == "all":
        return list(range(steps + 1))
    try:
        idx = sorted({int(s) for s in str(text).split(",")})
    except ValueError:
        raise InputError(f"cannot parse slices {text!r}") from None
    if idx[0] < 0 or idx[-1] > steps:
        raise InputError(f"slice indices must lie in 0..{steps}")
    return idx


def cmd_solve_finite(args, settings, out) -> int:
    model = _load(args, settings)
    rep = _audit(model, settings, out)
    if not rep.passed and not settings["force"]:
        print(rep.summary(), file=sys.stderr)
        print("refusing to solve: assumption audit failed (use --force to override)", file=sys.stderr)
        return EXIT_CHECK
    grid = _grid(model, settings)
    T = float(settings["T"])
    if settings["steps"] is not None:
        tg = TimeGrid(T, int(settings["steps"]))
    elif settings["dt"] is not None:
        tg = TimeGrid(T, int(np.ceil(T / settings["dt"] - 1e-9)))
    else:
        tg = TimeGrid.for_grid(model, grid, T)
    try:
        tg.check(model, grid)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    try:
        td = build_terminal_data(model, grid, sample_density=settings["sample_density"], seed=settings["seed"])
    except TerminalDataError as exc:
        print(f"refusing: {exc}", file=sys.stderr)
        return EXIT_CHECK
    td.field.copy(time=T).to_csv(out / "terminal.csv")
    try:
        res = backward_march(model, grid, tg, td)
    except SubIterationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    written = []
    for n in _slice_list(settings["slices"], tg.steps):
        name = f"slice_{n:05d}"
        res.fields[n].to_csv(out / f"{name}.csv")
        res.fields[n].to_binary(out / f"{name}.bin")
        written.append({"n": n, "t": float(n * tg.dt), "file": f"{name}.csv"})
    index = res.index()
    index["files"] = written
    index["terminal_consistency"] = terminal_consistency_check(model, res, model.constants.R).tolist()
    _write_json(out / "index.json", index)
    worst = max(max(r.values()) for r in res.residuals)
    print(f"{tg.steps} steps of {tg.dt:.4g}; max one-step residual {worst:.3g}; wrote {len(written)} slices")
    return EXIT_OK if worst <= settings["tol"] else EXIT_NUMERIC


def cmd_simulate(args, settings, out) -> int:
    model = _load(args, settings)
    if settings["x0"] is None:
        raise InputError("simulate needs --x0")
    x0 = _parse_state(settings["x0"])
    model.check_chart(x0.chart)
    rep = _audit(model, settings, out)
    if not rep.passed and not settings["force"]:
        print("refusing to simulate: assumption audit failed (use --force to override)", file=sys.stderr)
        return EXIT_CHECK
    if settings["policy"] is not None:
        try:
            ctrl = read_policy_csv(settings["policy"], model)
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot read policy: {exc}") from None
    else:
        u = None
        if settings["u"] is not None:
            try:
                u = np.array([float(a) for a in str(settings["u"]).split(",")])
            except ValueError:
                raise InputError(f"cannot parse control {settings['u']!r}") from None
        jumps = None
        if settings["jumps"] is not None:
            try:
                raw = json.loads(settings["jumps"]) if isinstance(settings["jumps"], str) else settings["jumps"]
                jumps = [(float(t), HybridState(int(c), np.asarray(x, dtype=float))) for t, c, x in raw]
            except (ValueError, TypeError):
                raise InputError("--jumps must be a JSON list of [time, chart, [coords]]") from None
        ctrl = ExplicitControl(model, u=u, v=int(settings["v"]), jumps=jumps)
    kw = {"horizon": settings["horizon"], "dt": settings["dt"], "s": float(settings["s"])}
    if settings["horizon"] == "stationary":
        kw["tail_tol"] = float(settings["tail_tol"])
    else:
        kw["T"] = float(settings["T"])
    try:
        rec = simulate(model, x0, ctrl, **kw)
    except ModelConsistencyError as exc:
        print(f"model fault: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except ZenoGuardError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    rec.to_jsonl(out / "trajectory.jsonl")
    rec.to_csv(out / "summary.csv")
    _write_json(out / "result.json", {
        "total_cost": rec.total_cost, "ledger_total": rec.ledger_total(), "running_cost": rec.running_cost_integral,
        "terminal_cost": rec.terminal_cost, "events": len(rec.events), "horizon": rec.horizon,
        "truncation_bound": rec.truncation_bound,
    })
    print(f"total cost {rec.total_cost:.10g} with {len(rec.events)} jumps")
    return EXIT_OK


def cmd_verify(args, settings, out) -> int:
    model = _load(args, settings)
    reports = run_all(model, seed=settings["seed"], trials=settings["trials"], grid_h=settings["grid_h"],
                      inject_violation=bool(settings["inject_violation"]))
    _write_json(out / "verify.json", [r.to_dict() for r in reports])
    for r in reports:
        print(r.table())
    ok = all(r.passed for r in reports)
    print("all checks passed" if ok else f"{sum(len(r.failures) for r in reports)} check(s) failed")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_convergence(args, settings, out) -> int:
    model = _load(args, settings)
    if not model.has_oracle:
        raise InputError("the model file has no 'oracle' expression")
    try:
        st = run_convergence(model, None, int(settings["levels"]), settings["h0"], kind=settings["kind"],
                             T=float(settings["T"]), tol=min(float(settings["tol"]), 1e-9))
    except ConvergenceError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_NUMERIC
    d = st.to_dict()
    d["threshold"] = settings["threshold"]
    d["passed"] = st.meets(float(settings["threshold"]))
    _write_json(out / "convergence.json", d)
    for (h, dt), e in zip(st.levels, st.errors):
        print(f"h = {h:<10.4g} dt = {dt:<10.4g} error = {e:.4e}")
    print(f"empirical order {st.empirical_order:.3f} (threshold {settings['threshold']})")
    return EXIT_OK if d["passed"] else EXIT_NUMERIC


COMMANDS = {
    "validate": cmd_validate,
    "solve-stationary": cmd_solve_stationary,
    "solve-finite": cmd_solve_finite,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "convergence": cmd_convergence,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = Path(args.out)
    try:
        settings, sources = _resolve(args)
        threads = _threads()
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "manifest.json", {
            "subcommand": args.command,
            "model": str(args.model),
            "config_file": args.config,
            "settings": settings,
            "sources": sources,
            "precedence": "flags > config > defaults",
            "output_directory": str(out),
            "seed": settings["seed"],
            "threads": threads,
            "version": _version(),
        })
        return COMMANDS[args.command](args, settings, out)
    except (InputError, ModelError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValidationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CHECK
    except OSError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
