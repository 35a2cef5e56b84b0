"""Command-line front end.

Subcommands:

* ``run``       -- one study from a JSON config file (flags override file
  values); writes report.csv / report.json / convergence.png into
  ``<out>/<config-hash>/`` and exits 0 iff every verdict passes.
* ``sweep``     -- the built-in acceptance matrix of studies.
* ``mesh-dump`` -- plain-text mesh dump for external viewers.
* ``selftest``  -- fast property suites of every module.

Config schema (JSON object): domain, problem, method, degree, penalty,
levels ("A..B"), n_eigs, reference ("analytic" or "fine:L").  Unknown
keys are rejected.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import harness, report, selftest
from .assembly import default_penalty
from .harness import METHOD_PROBLEM, StudyConfig, run_study
from .mesh import DOMAINS, build_mesh, write_mesh_text

__all__ = ["parse_config", "config_hash", "sweep_configs", "main"]

_CONFIG_KEYS = {
    "domain",
    "problem",
    "method",
    "degree",
    "penalty",
    "levels",
    "n_eigs",
    "reference",
}

_DEFAULT_DEGREE = {"conforming": 1, "sipdg": 1, "cr": 1, "c0ipg": 2, "morley": 2}


class ConfigError(ValueError):
    pass


def _parse_levels(spec) -> tuple[int, ...]:
    if isinstance(spec, str):
        lo, sep, hi = spec.partition("..")
        if sep != ".." or not lo.strip().isdigit() or not hi.strip().isdigit():
            raise ConfigError(f"levels must look like 'A..B', got {spec!r}")
        a, b = int(lo), int(hi)
    elif isinstance(spec, (list, tuple)) and len(spec) == 2:
        a, b = int(spec[0]), int(spec[1])
    else:
        raise ConfigError(f"levels must be 'A..B' or [A, B], got {spec!r}")
    if b < a:
        raise ConfigError(f"empty level range {a}..{b}")
    return tuple(range(a, b + 1))


def parse_config(text: str, overrides: dict | None = None) -> StudyConfig:
    """Parse and validate a study config, applying defaults and overrides."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if overrides:
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}

    method = raw.get("method")
    if method not in METHOD_PROBLEM:
        raise ConfigError(f"method must be one of {sorted(METHOD_PROBLEM)}, got {method!r}")
    domain = raw.get("domain", "unit_square")
    problem = raw.get("problem", METHOD_PROBLEM[method])
    degree = int(raw.get("degree", _DEFAULT_DEGREE[method]))
    penalty = raw.get("penalty")
    if penalty is not None:
        penalty = float(penalty)
        if penalty <= 0:
            raise ConfigError("penalty must be positive")
    if penalty is None:
        penalty = default_penalty(method, degree)
    levels = _parse_levels(raw.get("levels", "3..6"))
    n_eigs = int(raw.get("n_eigs", 4))
    reference = raw.get("reference")
    if reference is None:
        if domain == "unit_square" and problem == "dirichlet":
            reference = "analytic"
        else:
            reference = f"fine:{levels[-1] + 1}"
    try:
        return StudyConfig(
            domain=domain,
            problem=problem,
            method=method,
            degree=degree,
            penalty=penalty,
            levels=levels,
            n_eigs=n_eigs,
            reference=str(reference),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(config: StudyConfig) -> str:
    payload = json.dumps(
        {
            "domain": config.domain,
            "problem": config.problem,
            "method": config.method,
            "degree": config.degree,
            "penalty": config.penalty,
            "levels": list(config.levels),
            "n_eigs": config.n_eigs,
            "reference": config.reference,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def sweep_configs(overrides: dict | None = None) -> list[StudyConfig]:
    """The built-in acceptance matrix (one study per guaranteed-rate claim)."""
    base = [
        {"domain": "unit_square", "method": "conforming", "degree": 1},
        {"domain": "l_shape", "method": "conforming", "degree": 1, "reference": "fine:7"},
        {"domain": "unit_square", "method": "sipdg", "degree": 1, "penalty": 10.0},
        {"domain": "unit_square", "method": "cr"},
        {"domain": "unit_square", "method": "c0ipg", "degree": 2, "penalty": 20.0,
         "reference": "fine:7"},
        {"domain": "unit_square", "method": "morley", "reference": "fine:7"},
    ]
    configs = []
    for raw in base:
        merged = dict(raw)
        if overrides:
            for key, value in overrides.items():
                if value is not None:
                    merged[key] = value
        configs.append(parse_config(json.dumps(merged)))
    return configs


def _write_study_outputs(config: StudyConfig, out_dir: Path) -> tuple[Path, bool]:
    rep = run_study(config)
    study_dir = out_dir / config_hash(config)
    report.write_csv(rep, study_dir / "report.csv")
    report.write_json(rep, study_dir / "report.json")
    report.render_figure(rep, study_dir / "convergence.png")
    return study_dir, rep.all_pass


def _override_dict(args) -> dict:
    return {
        "levels": args.levels,
        "penalty": args.penalty,
        "n_eigs": args.n_eigs,
        "reference": args.reference,
    }


def _cmd_run(args) -> int:
    try:
        config = parse_config(Path(args.config).read_text(), _override_dict(args))
    except (ConfigError, OSError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    study_dir, ok = _write_study_outputs(config, out_dir)
    print(f"report written to {study_dir}")
    if not ok:
        print(json.dumps({"failed": [config_hash(config)]}))
        return 1
    return 0


def _cmd_sweep(args) -> int:
    try:
        configs = sweep_configs(_override_dict(args))
    except ConfigError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    failures = []
    lines = []
    for config in configs:
        study_dir, ok = _write_study_outputs(config, out_dir)
        tag = config_hash(config)
        lines.append(
            f"{tag},{config.method},{config.domain},{'pass' if ok else 'fail'}"
        )
        print(f"{config.method:11s} {config.domain:12s} -> {study_dir} "
              f"[{'pass' if ok else 'FAIL'}]")
        if not ok:
            failures.append(tag)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep_summary.csv").write_text(
        "study,method,domain,verdict\n" + "\n".join(lines) + "\n"
    )
    if failures:
        print(json.dumps({"failed": failures}))
        return 1
    return 0


def _cmd_mesh_dump(args) -> int:
    domain = DOMAINS.get(args.domain)
    if domain is None:
        print(json.dumps({"error": f"unknown domain {args.domain!r}"}), file=sys.stderr)
        return 2
    try:
        mesh = build_mesh(domain, args.level)
    except ValueError as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        write_mesh_text(mesh, fh)
    print(f"mesh written to {out}")
    return 0


def _cmd_selftest(_args) -> int:
    return selftest.run_selftest()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="femeig",
        description="Finite element eigenvalue convergence studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--levels", default=None, help="level range A..B")
    common.add_argument("--penalty", type=float, default=None)
    common.add_argument("--n-eigs", dest="n_eigs", type=int, default=None)
    common.add_argument(
        "--reference", default=None, help="'analytic' or 'fine:LEVEL'"
    )

    p_run = sub.add_parser("run", parents=[common], help="run one study")
    p_run.add_argument("--config", required=True, help="JSON config path")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser(
        "sweep", parents=[common], help="run the acceptance matrix"
    )
    p_sweep.set_defaults(func=_cmd_sweep)

    p_dump = sub.add_parser("mesh-dump", help="write a plain-text mesh dump")
    p_dump.add_argument("--domain", default="unit_square")
    p_dump.add_argument("--level", type=int, default=0)
    p_dump.add_argument("--out", default="mesh.txt")
    p_dump.set_defaults(func=_cmd_mesh_dump)

    p_self = sub.add_parser("selftest", help="run the module property suites")
    p_self.set_defaults(func=_cmd_selftest)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
