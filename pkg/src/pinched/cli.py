"""Command-line entry point: ``pinched {boundary,attractor,check,counterexample,probe}``.

Exit codes: 0 ok, 1 a checked property failed, 2 configuration error,
3 numerical failure, 4 no convergence (partial output is kept).
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import check_conditions, find_alpha0, lyapunov_on_graph, worked_example_report
from .boundary import boundary_line, density_probe, upper_bounding_graph
from .circle_rotation import diophantine_fit
from .config import ConfigError, RunConfig, apply_pairs, load_config_file, validate
from .counterexample import (
    CounterexampleSpec, build_g, counterexample_system, isolated_point_certificate, log_boundary_values,
    log_min_ax, rule_from_name, smooth_variant, verify_claim1, verify_claim2,
)
from .errors import NotConverged, PinchedError
from .export import write_csv, write_graph_csv, write_json, write_manifest, write_svg
from .systems import PinchedSystem, ReferenceSpec, reference_system, tanh_family, tanh_spec

log = logging.getLogger("pinched")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4


class Run:
    """Output directory plus the list of files written so far."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def finish(self):
        write_manifest(self.out, self.files, self.cfg.hash(), __version__, time.perf_counter() - self.t0)


def parse_length(text, omega: float) -> Optional[float]:
    """A float, or ``omega^k`` for a power of the rotation number."""
    if text is None:
        return None
    s = str(text).strip().replace("**", "^")
    if s.startswith("omega"):
        k = s[len("omega"):].lstrip("^") or "1"
        try:
            return omega ** int(k)
        except ValueError:
            raise ConfigError(f"cannot read length {text!r}") from None
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"cannot read length {text!r}") from None


def build_system(cfg: RunConfig) -> PinchedSystem:
    omega = cfg.resolved_omega()
    if cfg.family == "tanh":
        return tanh_family(cfg.alpha, omega, split=cfg.resolved_split())
    if cfg.family == "reference":
        return reference_system(ReferenceSpec(cfg.ref_a, parse_length(cfg.ref_b, omega)), omega)
    spec = ce_spec(cfg)
    return counterexample_system(spec)


def ce_spec(cfg: RunConfig) -> CounterexampleSpec:
    try:
        return CounterexampleSpec(rule_from_name(cfg.coeff_rule), cfg.base_a, cfg.depth_k)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_boundary(cfg: RunConfig) -> int:
    sys_ = build_system(cfg)
    run = Run(cfg)
    width = max(3, len(str(cfg.n_max)))
    series = []
    for n in range(cfg.n_max + 1):
        phi = boundary_line(sys_, n, cfg.grid_n)
        write_graph_csv(run.path(f"phi_{n:0{width}d}.csv"), phi)
        series.append((phi.theta, phi.values))
    if cfg.svg:
        write_svg(run.path("phi_overlay.svg"), series, sys_.L)
    run.finish()
    return EXIT_OK


def _attractor(cfg: RunConfig, sys_: PinchedSystem):
    """phi+ and whether it converged; NotConverged keeps the partial graph."""
    try:
        return upper_bounding_graph(sys_, cfg.grid_n, cfg.n_max, cfg.tol, strict=True, l1_tol=cfg.l1_tol), True
    except NotConverged as exc:
        return exc.result, False


def cmd_attractor(cfg: RunConfig) -> int:
    sys_ = build_system(cfg)
    run = Run(cfg)
    phi, converged = _attractor(cfg, sys_)
    write_graph_csv(run.path("phi_plus.csv"), phi)
    lyap = None
    if converged:
        try:
            res = lyapunov_on_graph(sys_, phi)
            lyap = {"value": res.value, "quadrature_n": res.quadrature_n, "stability": res.stability,
                    "invariance_residual": res.invariance_residual, "singular_cells": res.singular_cells}
        except PinchedError as exc:
            lyap = {"error": f"{type(exc).__name__}: {exc}"}
    meta = {k: v for k, v in phi.meta.items() if k != "history"}
    meta["history"] = [list(h) for h in phi.meta.get("history", [])]
    write_json(run.path("attractor.json"), {
        "system": sys_.name,
        "L": sys_.L,
        "grid_n": cfg.grid_n,
        "convergence": meta,
        "median_phi_over_L": float(np.median(phi.values) / sys_.L),
        "mean_phi_over_L": float(np.mean(phi.values) / sys_.L),
        "fraction_below_tenth_L": float(np.mean(phi.values < 0.1 * sys_.L)),
        "lyapunov": lyap,
    })
    if cfg.svg:
        write_svg(run.path("phi_plus.svg"), [(phi.theta, phi.values)], sys_.L)
    run.finish()
    if not converged:
        log.error("phi+ did not converge within n_max=%d; partial output kept", cfg.n_max)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    run = Run(cfg)
    status = EXIT_OK
    if cfg.worked_example:
        rep = worked_example_report()
        write_json(run.path("worked_example.json"), rep)
        pub = rep["published_comparisons"]
        if not all(v for k, v in pub.items() if isinstance(v, bool)):
            status = EXIT_FAIL
    omega = cfg.resolved_omega()
    est = diophantine_fit(omega, cfg.dio_n)
    if cfg.find_alpha0:
        if cfg.family != "tanh":
            raise ConfigError("find_alpha0 is implemented for the tanh family")
        res = find_alpha0(tanh_spec, est)
        write_json(run.path("alpha0.json"), {
            "alpha0": res.alpha0, "split": list(res.split) if res.split else None,
            "diagnostic": res.diagnostic, "evaluated": res.evaluated,
            "report": res.report.as_dict() if res.report else None,
        })
        if not res.found:
            status = EXIT_FAIL
    if not (cfg.worked_example or cfg.find_alpha0) or cfg.explicit & {"alpha", "split", "family"}:
        if cfg.family == "counterexample":
            raise ConfigError("check applies to the tanh and reference families")
        sys_ = build_system(cfg)
        overrides = {}
        if cfg.m is not None:
            overrides["m"] = cfg.m
        if cfg.a is not None:
            overrides["a"] = cfg.a
        if cfg.b is not None:
            overrides["b"] = parse_length(cfg.b, omega)
        rep = check_conditions(sys_, est, overrides=overrides or None)
        d = rep.as_dict()
        d["overrides"] = overrides
        write_json(run.path("check.json"), d)
        if not rep.passed:
            log.info("conditions failing: %s", ", ".join(rep.failures()) or "lambda_decay")
            status = EXIT_FAIL
    run.finish()
    return status


def cmd_counterexample(cfg: RunConfig) -> int:
    spec = ce_spec(cfg)
    run = Run(cfg)
    g = build_g(spec)
    theta = np.arange(cfg.grid_n) / cfg.grid_n
    write_csv(run.path("g.csv"), theta, g(theta))
    c1 = verify_claim1(spec, cfg.n_iter, g)
    c2 = verify_claim2(spec, cfg.n_iter, g=g)
    write_json(run.path("claim1.json"), {"spec": spec.as_dict(), **c1.as_dict()})
    write_json(run.path("claim2.json"), {
        "spec": spec.as_dict(), **c2.as_dict(),
        "integral_log_g": g.integral_log(),
        "integral_abs_log_g_bound": 0.5 * math.log(spec.base_a),
        "certificate": isolated_point_certificate(c1, c2),
    })
    lphi = log_boundary_values(g, spec.omega, log_min_ax(spec.base_a), cfg.n_iter, theta)
    write_csv(run.path("phi_plus_ce.csv"), theta, np.exp(lphi))
    ok = c1.passed and c2.passed
    if cfg.smooth:
        _, vr = smooth_variant(spec, n_iter=cfg.n_iter, g=g)
        write_json(run.path("variant.json"), vr.as_dict())
        ok = ok and vr.passed
    if cfg.svg:
        write_svg(run.path("phi_plus_ce.svg"), [(theta, np.exp(lphi))], 1.0)
    run.finish()
    return EXIT_OK if ok else EXIT_FAIL


def cmd_probe(cfg: RunConfig) -> int:
    sys_ = build_system(cfg)
    run = Run(cfg)
    phi, converged = _attractor(cfg, sys_)
    rep = density_probe(sys_, phi, cfg.n_samples, cfg.delta, cfg.epsilon, cfg.seed)
    write_json(run.path("probe.json"), {"system": sys_.name, "grid_n": cfg.grid_n,
                                        "phi_plus_converged": converged, **rep.as_dict()})
    run.finish()
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


COMMANDS = {
    "boundary": (cmd_boundary, "iterated upper boundary lines phi_0 .. phi_n"),
    "attractor": (cmd_attractor, "upper bounding graph phi+ with convergence metadata"),
    "check": (cmd_check, "standing assumptions for a system (exit 0 iff all pass)"),
    "counterexample": (cmd_counterexample, "non-dense counterexample and its claims"),
    "probe": (cmd_probe, "seeded density probe of the region below phi+"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pinched", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value file")
        p.add_argument("--set", dest="pairs", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--grid-n", type=int)
        p.add_argument("--n-max", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--out")
        p.add_argument("--family", choices=("tanh", "reference", "counterexample"))
        p.add_argument("--alpha", type=float)
        p.add_argument("--split", help="a1,a2 with a1*a2 = alpha")
        p.add_argument("--omega", help="float, 'golden', or 'cf:a1,a2,...'")
        p.add_argument("--svg", action="store_true", help="also write a polyline SVG")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "check":
            p.add_argument("--find-alpha0", action="store_true")
            p.add_argument("--worked-example", action="store_true")
        if name == "counterexample":
            p.add_argument("--smooth", action="store_true", help="also run the smooth variant")
    return parser


_FLAG_KEYS = ("seed", "grid_n", "n_max", "tol", "out", "family", "alpha", "split", "omega")


def config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if args.command == "counterexample":
        cfg.grid_n = 20_001
    if args.config:
        apply_pairs(cfg, load_config_file(args.config))
    apply_pairs(cfg, args.pairs)
    for key in _FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
            cfg.explicit.add(key)
    for key in ("svg", "find_alpha0", "worked_example", "smooth"):
        if getattr(args, key, False):
            setattr(cfg, key, True)
    return validate(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command][0](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except PinchedError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
