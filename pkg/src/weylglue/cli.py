"""Command line front end: ``weyl-glue coeffs | verify | glue``.

Exit status is 0 when everything passes, 1 when a check fails and 2 for usage
or configuration errors. Config files hold flat ``key = value`` lines; flags
override file values.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import energy_balance as eb
from . import series_correction as sc
from . import sphere_quadrature as sq
from . import tensor_core as tc
from . import verification
from .errors import ConfigurationError, DivergenceError, DomainError, WeylGlueError

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


# ---------------------------------------------------------------------------
# configuration


def _float_list(text: str) -> list[float]:
    items = [v.strip() for v in text.split(",") if v.strip()]
    try:
        return [float(v) for v in items]
    except ValueError as exc:
        raise ConfigurationError(f"expected a comma list of numbers, got {text!r}") from exc


def _boolean(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in {"true", "yes", "1", "on"}:
        return True
    if lowered in {"false", "no", "0", "off"}:
        return False
    raise ConfigurationError(f"expected true or false, got {text!r}")


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ConfigurationError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


COMMON_KEYS: dict[str, Callable[[str], Any]] = {"seed": int}

COMMAND_KEYS: dict[str, dict[str, Callable[[str], Any]]] = {
    "coeffs": {"t_list": _float_list},
    "verify": {"suite": _choice("all", *verification.SUITES)},
    "glue": {
        "t": float,
        "a": float,
        "gamma": float,
        "eps_chart": float,
        "delta_chart": float,
        "chi_start": float,
        "chi_end": float,
        "weyl": _choice("eigenvalues", "random"),
        "sd_eigenvalues": _float_list,
        "asd_eigenvalues": _float_list,
        "weyl_scale": float,
        "align": _boolean,
        "neck": _boolean,
        "quotient_model": str,
        "sweep_gammas": _float_list,
    },
}

GLUE_DEFAULTS: dict[str, Any] = {
    "t": 1.05,
    "a": 1e-4,
    "gamma": 5e-3,
    "eps_chart": 0.5,
    "delta_chart": 0.5,
    "chi_start": 0.25,
    "chi_end": 0.75,
    "weyl": "eigenvalues",
    "sd_eigenvalues": [2.0, -0.5, -1.5],
    "asd_eigenvalues": [1.0, 0.3, -1.3],
    "weyl_scale": 1.0,
    "align": True,
    "neck": True,
}

GLUE_TOLERANCES = {"quotient.truncation": 1e-13}


def parse_config_text(text: str, allowed: dict[str, Callable[[str], Any]]) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are rejected."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        try:
            out[key] = allowed[key](value)
        except ValueError as exc:
            raise ConfigurationError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    return out


@dataclass
class RunConfig:
    command: str
    params: dict[str, Any]
    seed: int
    out: Path | None
    tolerances: dict[str, float] = field(default_factory=dict)
    base_dir: Path = Path(".")


def _parse_tolerances(items: Sequence[str] | None) -> dict[str, float]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigurationError(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError as exc:
            raise ConfigurationError(f"--tol {name}: {value!r} is not a number") from exc
    return out


def build_run_config(args: argparse.Namespace) -> RunConfig:
    allowed = {**COMMON_KEYS, **COMMAND_KEYS[args.command]}
    params: dict[str, Any] = {}
    base_dir = Path(".")
    if args.config:
        path = Path(args.config)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        params.update(parse_config_text(text, allowed))
        base_dir = path.parent
    if getattr(args, "suite", None) is not None:
        params["suite"] = allowed["suite"](args.suite)
    if getattr(args, "t", None) is not None:
        params["t_list"] = _float_list(args.t)
    seed = args.seed if args.seed is not None else int(params.pop("seed", 0))
    params.pop("seed", None)
    return RunConfig(args.command, params, seed, Path(args.out) if args.out else None,
                     _parse_tolerances(args.tol), base_dir)


# ---------------------------------------------------------------------------
# output


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def dump_json(payload: dict[str, Any]) -> str:
    return json.dumps(_plain(payload), indent=2, ensure_ascii=False, allow_nan=True) + "\n"


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8", newline="")


# ---------------------------------------------------------------------------
# commands


def cmd_coeffs(run: RunConfig) -> int:
    t_list = run.params.get("t_list")
    if not t_list:
        raise ConfigurationError("coeffs needs a non-empty --t list")
    for t in t_list:
        if not t > 1.0:
            raise ConfigurationError(f"t = {t!r} must exceed 1")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(["t", "C0", "C1", "C2", "C2_asymptotic", "ratio"])
    for t in t_list:
        c0, c1, c2 = sc.coeff_c0(t).value, sc.coeff_c1(t).value, sc.coeff_c2(t).value
        asym = sc.c2_asymptotic(t)
        writer.writerow([repr(float(v)) for v in (t, c0, c1, c2, asym, c2 / asym)])
    _emit(buffer.getvalue(), run.out)
    return EXIT_OK


def cmd_verify(run: RunConfig) -> int:
    suite = run.params.get("suite", "all")
    results = verification.run_suites(suite, run.seed, run.tolerances)
    failed = sum(not c.passed for checks in results.values() for c in checks)
    total = sum(len(checks) for checks in results.values())
    payload = {
        "command": "verify",
        "seed": run.seed,
        "suite": suite,
        "tolerance_overrides": dict(sorted(run.tolerances.items())),
        "passed": failed == 0,
        "checks": total,
        "failed": failed,
        "suites": {name: [c.record() for c in checks] for name, checks in results.items()},
    }
    _emit(dump_json(payload), run.out)
    return EXIT_OK if failed == 0 else EXIT_FAILED


def _glue_weyl(params: dict[str, Any], seed: int) -> tc.WeylData:
    if params["weyl"] == "random":
        return tc.WeylData.random(np.random.default_rng(seed), scale=params["weyl_scale"])
    sd, asd = params["sd_eigenvalues"], params["asd_eigenvalues"]
    if len(sd) != 3 or len(asd) != 3:
        raise ConfigurationError("sd_eigenvalues and asd_eigenvalues need three entries each")
    for name, vals in (("sd", sd), ("asd", asd)):
        if abs(sum(vals)) > 1e-12 * max(1.0, max(abs(v) for v in vals)):
            raise ConfigurationError(f"{name}_eigenvalues must sum to zero")
    return tc.WeylData.from_eigenvalues(sd, asd)


def default_sweep(gamma: float, collar: float) -> tuple[float, ...]:
    """Three radii from ``gamma`` up to ``min(2 gamma, 0.9 collar)``."""
    top = min(2.0 * gamma, 0.9 * collar)
    return tuple(float(g) for g in np.geomspace(min(gamma, top / 1.5), top, 3))


def _messages(caught) -> list[str]:
    seen: list[str] = []
    for item in caught:
        text = f"{item.category.__name__}: {item.message}"
        if text not in seen:
            seen.append(text)
    return seen


def cmd_glue(run: RunConfig) -> int:
    params = {**GLUE_DEFAULTS, **run.params}
    unknown = set(run.tolerances) - set(GLUE_TOLERANCES)
    if unknown:
        raise ConfigurationError(f"unknown tolerance {sorted(unknown)[0]!r}")
    truncation_tol = run.tolerances.get("quotient.truncation", GLUE_TOLERANCES["quotient.truncation"])
    cfg = eb.GluingConfig(a=params["a"], gamma=params["gamma"], eps_chart=params["eps_chart"],
                          delta_chart=params["delta_chart"], chi_start=params["chi_start"],
                          chi_end=params["chi_end"])
    w = _glue_weyl(params, run.seed)
    model = None
    if params.get("quotient_model"):
        path = run.base_dir / params["quotient_model"]
        try:
            model = sc.QuotientModel.load(path, t=params["t"])
        except OSError as exc:
            raise ConfigurationError(f"cannot read quotient model {path}: {exc}") from exc
        if model.t != params["t"]:
            model = model.at_t(params["t"])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        verdict = eb.interaction_sign(w, t=params["t"], model=model)
        aligned = w.rotated(verdict.frame) if params["align"] else w
        if model is None:
            jet = sc.correction_jet_cylinder(aligned, sc.CylinderParams(params["t"]))
            remainders = []
        else:
            jet, remainders = sc.correction_jet_quotient(aligned, model, truncation_tol)
        report = eb.energy_balance(aligned, jet, cfg, neck=params["neck"])
        gammas = params.get("sweep_gammas") or default_sweep(cfg.gamma, jet.collar_radius)
        sweeps = [sq.gamma_sweep(jet, aligned, gammas=tuple(gammas), kind=kind)
                  for kind in ("divergence", "nondivergence")]
    payload = {
        "command": "glue",
        "seed": run.seed,
        "config": {key: params[key] for key in sorted(params)},
        "weyl": {
            "norm_sq": aligned.norm_sq,
            "sd_block": aligned.sd_block,
            "asd_block": aligned.asd_block,
        },
        "sign": report.sign.value,
        "sign_verdict": {
            "anchor": "optimal frame maximizes the eigenvalue pairing",
            "sign": verdict.sign.value,
            "reason": verdict.reason,
            "eigen_sum": verdict.eigen_sum,
            "reflection_contraction": verdict.contraction,
            "star_product": verdict.star,
            "t": verdict.t,
            "interaction": verdict.interaction,
            "frame": verdict.frame.matrix,
            "admissible_t": None if verdict.admissible is None else {
                "t_grid": verdict.admissible.t_grid,
                "leading": verdict.admissible.leading,
                "remainder": verdict.admissible.remainder,
                "t_star": verdict.admissible.t_star,
            },
        },
        "energy_report": {
            "anchor": "W(g_X) - W(g_M) = (2 pi^2/3) a^4 W . d^2 A(0) + budget",
            **report.record(),
            "budget_notes": {line.name: line.note for line in report.error_budget},
            "notes": list(report.notes),
        },
        "quotient_remainders": [
            {"tau": r.tau, "scale": r.scale, "bound": r.bound} for r in remainders
        ],
        "gamma_sweep": [
            {
                "anchor": f"{fit.kind} boundary term affine in gamma^2",
                "kind": fit.kind,
                "gammas": fit.gammas,
                "order_one": fit.order_one,
                "intercept": fit.intercept,
                "expected": fit.expected,
                "slope": fit.slope,
                "r_squared": fit.r_squared,
            }
            for fit in sweeps
        ],
        "warnings": _messages(caught),
    }
    _emit(dump_json(payload), run.out)
    return EXIT_OK


COMMANDS = {"coeffs": cmd_coeffs, "verify": cmd_verify, "glue": cmd_glue}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weyl-glue", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", metavar="PATH", help="key = value config file")
        p.add_argument("--seed", type=int, help="random seed (recorded in the output)")
        p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
        p.add_argument("--tol", action="append", metavar="NAME=VALUE", help="tolerance override")

    coeffs = sub.add_parser("coeffs", help="table of C0, C1, C2 and the C2 asymptote")
    common(coeffs)
    coeffs.add_argument("--t", metavar="LIST", help="comma list of dilation factors t > 1")

    verify = sub.add_parser("verify", help="run the invariant suites")
    common(verify)
    verify.add_argument("--suite", help=f"all or one of {', '.join(verification.SUITES)}")

    glue = sub.add_parser("glue", help="energy balance report for one gluing")
    common(glue)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = build_run_config(args)
        return COMMANDS[args.command](run)
    except (ConfigurationError, DomainError, DivergenceError) as exc:
        print(f"weyl-glue {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except WeylGlueError as exc:
        print(f"weyl-glue {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
