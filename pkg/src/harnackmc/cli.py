"""Command line runner: ``harnackmc <command> [options]``.

Every run writes ``<out>.report.json``, ``<out>.summary.csv`` and the resolved
configuration ``<out>.config.txt``; feeding the latter back through
``--config`` replays the run. Exit status: 0 when every check holds (possibly
within noise), 2 when one is violated, 1 on input or runtime errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import importlib.util
import json
import sys
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import bounds, functions, models
from .coupling import CouplingConfig, RefinementPolicy, simulate_coupled_batch, trajectory, write_trajectory_csv
from .errors import HarnackError, MonteCarloAbort
from .harnack import (
    SUB_COUPLED,
    RunParams,
    VerificationReport,
    mean_se,
    verify_harnack_power,
    verify_identity,
    verify_kernel_kl,
    verify_log_harnack,
    verify_weight_bounds,
)
from .sde_core import ModelSpec, RngStreamSpec, as_state, estimate_constants

COMMANDS = ("estimate-constants", "couple", "verify-log-harnack", "verify-harnack",
            "verify-identity", "verify-weights", "kernel-check")

DEFAULT_F = {
    "verify-log-harnack": "exp-clipped",
    "verify-harnack": "tanh-squared",
    "verify-identity": "tanh-squared",
}


@dataclass
class RunConfig:
    command: str = "couple"
    model: str = "ou"
    params: str = ""
    x: str = "1"
    y: str = "0"
    T: float = 1.0
    p: float | None = None
    theta: float | None = None
    dt: float = 1e-3
    dt_base: float = 1e-3
    xi_ref_frac: float | None = 0.05
    paths: int = 10_000
    seed: int = 0
    measure: str = "Q"
    couple_eps: float | None = None
    out: str = "run"
    k_sigma: float = 4.0
    f: str = ""
    f_params: str = ""
    n_pairs: int = 100_000
    box: float = 5.0
    dump_paths: int = 5
    eps_sensitivity: bool = True

    def dump(self) -> str:
        lines = []
        for fl in fields(self):
            v = getattr(self, fl.name)
            lines.append(f"{fl.name}={'' if v is None else v}")
        return "\n".join(lines) + "\n"


_TYPES = {fl.name: fl.type for fl in fields(RunConfig)}


def _coerce(name: str, raw: str):
    kind = _TYPES[name]
    if raw == "" and "None" in kind:
        return None
    if kind.startswith("bool"):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if kind.startswith("int"):
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if kind.startswith("float"):
        return float(raw)
    return raw


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ValueError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, val)
    return out


def parse_kv_list(text: str) -> dict:
    """``"a=0.5,sigma=1"`` -> ``{"a": 0.5, "sigma": 1.0}``; integral values stay ints."""
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise ValueError(f"expected key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        num = float(v)
        out[k] = int(num) if num.is_integer() and "." not in v and "e" not in v.lower() else num
    return out


def parse_vector(text: str, dim: int) -> np.ndarray:
    return as_state([float(s) for s in str(text).split(",") if s.strip()], dim)


def load_model(name: str, params: dict):
    """Zoo entry by name, or a Python file defining ``build(**params)`` or ``MODEL``."""
    if name in models.BUILDERS:
        entry = models.get(name, **params)
        return entry.model, entry
    path = Path(name)
    if not path.is_file():
        raise ValueError(f"unknown model {name!r}: not a zoo name or a file")
    spec = importlib.util.spec_from_file_location(path.stem, path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    obj = mod.build(**params) if hasattr(mod, "build") else mod.MODEL
    if isinstance(obj, models.ZooEntry):
        return obj.model, obj
    if not isinstance(obj, ModelSpec):
        raise ValueError(f"{name} did not provide a ModelSpec")
    return obj, None


def _run_params(cfg: RunConfig, couple_eps=None) -> RunParams:
    return RunParams(n_paths=cfg.paths, dt=cfg.dt, seed=cfg.seed, k_sigma=cfg.k_sigma, dt_base=cfg.dt_base,
                     couple_eps=cfg.couple_eps if couple_eps is None else couple_eps,
                     refinement=RefinementPolicy(cfg.xi_ref_frac))


def _coupling_config(cfg: RunConfig, x, y, theta, measure) -> CouplingConfig:
    return CouplingConfig(x=x, y=y, T=cfg.T, theta=theta, dt_base=cfg.dt_base,
                          refinement=RefinementPolicy(cfg.xi_ref_frac), measure=measure,
                          couple_eps=cfg.couple_eps)


def _test_function(cfg: RunConfig):
    name = cfg.f or DEFAULT_F.get(cfg.command, "tanh-squared")
    return functions.get(name, **parse_kv_list(cfg.f_params))


def _sensitivity(base_cfg: CouplingConfig, base_lhs: float, rerun) -> dict:
    """Re-run a coupled estimate with ``couple_eps`` ten times larger on the same streams."""
    eps = 10.0 * base_cfg.couple_eps
    lhs = rerun(eps)
    return {"couple_eps": base_cfg.couple_eps, "couple_eps_x10": eps, "lhs_x10": lhs,
            "delta_lhs": lhs - base_lhs}


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute one command; returns ``(exit_code, document)`` without writing files."""
    if cfg.command not in COMMANDS:
        raise ValueError(f"unknown command {cfg.command!r}")
    if cfg.measure not in ("P", "Q"):
        raise ValueError("measure must be P or Q")
    model, entry = load_model(cfg.model, parse_kv_list(cfg.params))
    d = model.dim
    reports: dict[str, VerificationReport] = {}
    extra: dict = {}
    x, y = parse_vector(cfg.x, d), parse_vector(cfg.y, d)

    if cfg.command == "estimate-constants":
        box = (np.full(d, -cfg.box), np.full(d, cfg.box))
        est = estimate_constants(model, box, cfg.n_pairs, RngStreamSpec(cfg.seed, 0, 7))
        extra["estimated"] = est.to_dict()
        exact = entry.exact_constants if entry is not None else model.declared_constants
        if exact is not None:
            extra["exact"] = exact.to_dict()
            tol = 1e-6
            reports["K"] = VerificationReport.inequality(est.K, 0, exact.K + tol, 0, exact.K, {"tol": tol})
            reports["lambda"] = VerificationReport.inequality(exact.lam - tol, 0, est.lam, 0, exact.lam, {"tol": tol})
            reports["delta"] = VerificationReport.inequality(est.delta, 0, exact.delta + tol, 0, exact.delta, {"tol": tol})

    elif cfg.command == "kernel-check":
        if entry is None or entry.name != "ou":
            raise ValueError("kernel-check needs the ou model (the only one with a known kernel)")
        reports["kernel_kl"] = verify_kernel_kl(entry.params["a"], entry.params["sigma"], x, y, cfg.T)

    elif cfg.command == "couple":
        theta = cfg.theta if cfg.theta is not None else 1.0
        ccfg = _coupling_config(cfg, x, y, theta, cfg.measure)
        stream = RngStreamSpec(cfg.seed, 0, SUB_COUPLED)
        batch = simulate_coupled_batch(model, ccfg, stream, cfg.paths)
        extra["status_counts"] = batch.status_counts()
        extra["grid_points"] = len(batch.grid)
        extra["couple_eps"] = ccfg.couple_eps
        taus = batch.tau[~np.isnan(batch.tau)]
        extra["mean_tau"] = float(taus.mean()) if taus.size else None
        meta = _run_params(cfg).meta(measure=cfg.measure, theta=theta, couple_eps=ccfg.couple_eps,
                                     coupled_fraction=batch.coupled_fraction)
        if cfg.measure == "P":
            m, se = mean_se(np.exp(batch.log_R))
            reports["martingale_mass"] = VerificationReport.equality(m, se, 1.0, 0.0, 1.0, meta, cfg.k_sigma)
        else:
            qb = bounds.quad_integral_bound(theta, bounds.BoundInputs(model.constants, cfg.T, ccfg.dist))
            m, se = mean_se(batch.quad)
            reports["quadratic_integral"] = VerificationReport.inequality(m, se, qb, 0.0, qb, meta, cfg.k_sigma)
        if cfg.eps_sensitivity:
            def rerun(eps):
                b = simulate_coupled_batch(model, dataclasses.replace(ccfg, couple_eps=eps), stream, cfg.paths)
                return mean_se(np.exp(b.log_R) if cfg.measure == "P" else b.quad)[0]
            extra["couple_eps_sensitivity"] = _sensitivity(ccfg, m, rerun)
        n_dump = min(cfg.dump_paths, cfg.paths)
        if n_dump > 0:
            rec = simulate_coupled_batch(model, ccfg, stream, n_dump, record=True)
            extra["_trajectories"] = [(i, trajectory(rec, i, cfg.measure)) for i in range(n_dump)]

    elif cfg.command == "verify-identity":
        f = _test_function(cfg)
        ccfg = _coupling_config(cfg, x, y, cfg.theta or 1.0, "P")
        rep = verify_identity(model, ccfg, f, _run_params(cfg))
        reports["identity"] = rep
        if cfg.eps_sensitivity:
            extra["couple_eps_sensitivity"] = _sensitivity(
                ccfg, rep.lhs,
                lambda eps: verify_identity(model, dataclasses.replace(ccfg, couple_eps=eps), f,
                                            _run_params(cfg, eps)).lhs)

    elif cfg.command == "verify-log-harnack":
        f = _test_function(cfg)
        reports["log_harnack"] = verify_log_harnack(model, x, y, cfg.T, f, _run_params(cfg))

    elif cfg.command == "verify-harnack":
        f = _test_function(cfg)
        p = cfg.p if cfg.p is not None else 4.0
        reports["harnack_power"] = verify_harnack_power(model, x, y, cfg.T, p, f, _run_params(cfg))

    elif cfg.command == "verify-weights":
        c = model.constants
        if cfg.theta is not None:
            theta = cfg.theta
        elif cfg.p is not None:
            theta = bounds.power_theta(cfg.p, c)
        else:
            theta = 1.0
        ccfg = _coupling_config(cfg, x, y, theta, "Q")
        moments = c.delta > 0
        if not moments:
            extra["moment_reports"] = "skipped: additive noise (delta = 0), every moment is finite"
        w = verify_weight_bounds(model, ccfg, _run_params(cfg), moments=moments)
        for name, rep in w._asdict().items():
            if rep is not None:
                reports[name] = rep
        if cfg.eps_sensitivity:
            extra["couple_eps_sensitivity"] = _sensitivity(
                ccfg, w.entropy.lhs,
                lambda eps: verify_weight_bounds(model, dataclasses.replace(ccfg, couple_eps=eps),
                                                 _run_params(cfg, eps), moments=False).entropy.lhs)

    code = 2 if any(r.verdict == "Violated" for r in reports.values()) else 0
    doc = {
        "command": cfg.command,
        "status": "violated" if code == 2 else "ok",
        "config": dataclasses.asdict(cfg),
        "reports": {k: r.to_dict() for k, r in reports.items()},
        "extra": extra,
    }
    return code, doc


def write_outputs(cfg: RunConfig, doc: dict) -> None:
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    trajs = doc["extra"].pop("_trajectories", None)
    body = dict(doc, timestamp=datetime.now(timezone.utc).isoformat())
    Path(f"{out}.report.json").write_text(json.dumps(body, indent=2, sort_keys=True, default=str) + "\n")
    lines = [",".join(VerificationReport.CSV_FIELDS)]
    for name, rep in doc["reports"].items():
        lines.append(VerificationReport(**rep).csv_row(name))
    Path(f"{out}.summary.csv").write_text("\n".join(lines) + "\n")
    Path(f"{out}.config.txt").write_text(cfg.dump())
    if trajs:
        write_trajectory_csv(f"{out}.trajectories.csv", trajs)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="harnackmc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd)
        sp.add_argument("--config", help="key=value file; flags override it")
        sp.add_argument("--model")
        sp.add_argument("--params", help="model parameters, e.g. a=0.5,sigma=1")
        sp.add_argument("--x")
        sp.add_argument("--y")
        sp.add_argument("--T", type=float)
        sp.add_argument("--p", type=float)
        sp.add_argument("--theta", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--dt-base", dest="dt_base", type=float)
        sp.add_argument("--xi-ref-frac", dest="xi_ref_frac", type=float)
        sp.add_argument("--paths", type=lambda s: int(float(s)))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--measure", choices=("P", "Q"))
        sp.add_argument("--couple-eps", dest="couple_eps", type=float)
        sp.add_argument("--out")
        sp.add_argument("--k-sigma", dest="k_sigma", type=float)
        sp.add_argument("--f")
        sp.add_argument("--f-params", dest="f_params")
        sp.add_argument("--n-pairs", dest="n_pairs", type=lambda s: int(float(s)))
        sp.add_argument("--box", type=float)
        sp.add_argument("--dump-paths", dest="dump_paths", type=int)
        sp.add_argument("--eps-sensitivity", dest="eps_sensitivity", action=argparse.BooleanOptionalAction)
    return ap


def resolve_config(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    values = {}
    if ns.config:
        values.update(read_config_file(ns.config))
    for fl in fields(RunConfig):
        v = getattr(ns, fl.name, None)
        if v is not None:
            values[fl.name] = v
    values["command"] = ns.command
    return RunConfig(**values)


def _fmt(v) -> str:
    return "nan" if v is None else f"{v:.6g}"


def main(argv=None) -> int:
    try:
        cfg = resolve_config(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    except (ValueError, OSError) as e:
        print(f"harnackmc: {e}", file=sys.stderr)
        return 1
    try:
        code, doc = run(cfg)
    except MonteCarloAbort as e:
        doc = {"command": cfg.command, "status": "aborted", "error": str(e),
               "guard_fraction": e.guard_fraction, "config": dataclasses.asdict(cfg), "reports": {},
               "extra": {}}
        write_outputs(cfg, doc)
        print(f"harnackmc: {e}", file=sys.stderr)
        return 1
    except (HarnackError, ValueError, KeyError) as e:
        print(f"harnackmc: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    write_outputs(cfg, doc)
    for name, rep in doc["reports"].items():
        print(f"{name}: lhs={_fmt(rep['lhs'])} rhs={_fmt(rep['rhs'])} verdict={rep['verdict']}")
    return code


if __name__ == "__main__":
    sys.exit(main())
