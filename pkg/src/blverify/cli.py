"""Command-line driver: build transports, simulate embeddings, verify.

Subcommands
-----------
run       full pipeline: report.json, summary.csv, ensemble CSVs, plotdata/
embed     ensembles only
verify    quadrature-only verdicts (no Monte Carlo; n_paths forced to 0)
sandwich  residual local-time curves: lower bound / MC estimate / upper bounds
appendix  slope-map measures only

Exit status: 0 when every pass flag is true, 1 when an inequality or check
fails, 2 on configuration or usage errors (in which case nothing is written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bass_embedding import (ClarkIntegrand, EmbeddingEnsemble,
                             embedded_law_check, simulate_embedding,
                             t_bound_check, wald_check)
from .convex_tests import convex_test_from_spec
from .local_time import est1_lower, est2_upper, local_time_gap_mc
from .potentials import SlopeMap, builtin_potential, builtin_slope_map
from .transport import (DivergentNormalizerError, NonFinitePotentialError,
                        TransportMap, build_transport)
from .verifier import (SlopeBoundError, appendix_transport, format_float,
                       mc_crosscheck, verify_appendix, verify_theorem)

__all__ = ["ExperimentConfig", "default_matrix_config", "main", "run"]


class ConfigError(ValueError):
    """Configuration file or flag usage is invalid."""


@dataclass
class ExperimentConfig:
    """Validated experiment settings (see README for the JSON schema)."""

    potentials: list
    A: float = 1.0
    psis: list = dataclasses.field(
        default_factory=lambda: ["abs", "square", {"power": 3},
                                 {"call": 1.0}, {"corridor": 1.0}])
    p_list: list = dataclasses.field(default_factory=lambda: [1.5, 2.0, 4.0])
    n_paths: int = 100_000
    n_steps: int = 2048
    seed: int = 42
    quadrature_tol: float = 1e-10
    output_dir: str = "out"

    def validate(self) -> "ExperimentConfig":
        if not isinstance(self.potentials, list) or not self.potentials:
            raise ConfigError("config requires a nonempty 'potentials' list")
        if not (self.A > 0.0 and math.isfinite(self.A)):
            raise ConfigError(f"'A' must be a positive variance, got {self.A}")
        if not isinstance(self.psis, list) or not self.psis:
            raise ConfigError("config requires a nonempty 'psis' list")
        if any(not (float(p) > 1.0) for p in self.p_list):
            raise ConfigError("'p_list' entries must all exceed 1")
        if self.n_paths < 0:
            raise ConfigError("'n_paths' must be >= 0")
        if self.n_steps < 16:
            raise ConfigError("'n_steps' must be >= 16")
        if not (self.quadrature_tol > 0.0):
            raise ConfigError("'quadrature_tol' must be positive")
        for spec in self.potentials:
            _parse_potential_entry(spec, self.A, self.quadrature_tol,
                                   build=False)
        for spec in self.psis:
            try:
                convex_test_from_spec(spec)
            except ValueError as exc:
                raise ConfigError(f"bad psi entry {spec!r}: {exc}") from exc
        return self

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**{k: raw[k] for k in raw})
        cfg.A = float(cfg.A)
        cfg.p_list = [float(p) for p in cfg.p_list]
        cfg.n_paths = int(cfg.n_paths)
        cfg.n_steps = int(cfg.n_steps)
        cfg.seed = int(cfg.seed)
        cfg.quadrature_tol = float(cfg.quadrature_tol)
        cfg.output_dir = str(cfg.output_dir)
        return cfg.validate()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def default_matrix_config(**overrides) -> ExperimentConfig:
    """The standard verification matrix: four convex tilts of N(0, 1) plus
    the two slope-map measures, against the five catalog test functions."""
    base = {
        "potentials": [
            {"family": "zero"},
            {"family": "linear", "params": {"c": 1.0}},
            {"family": "quadratic", "params": {"c": 1.0}},
            {"family": "abs", "params": {"c": 1.0}},
            {"slope_map": {"name": "cubic"}},
            {"slope_map": {"name": "log_mixture",
                           "params": {"p": 0.5, "q": 0.5 * math.sqrt(2.0),
                                      "a": 1.0, "b": 2.0}},
             "beta": 2.0},
        ],
    }
    base.update(overrides)
    return ExperimentConfig.from_dict(base)


# ---------------------------------------------------------------------------
# config parsing helpers
# ---------------------------------------------------------------------------

def _parse_potential_entry(spec, variance: float, tol: float,
                           build: bool = True):
    """Returns (kind, tmap, slope_map, alpha, beta, improved_alpha)."""
    if not isinstance(spec, dict):
        raise ConfigError(f"potential entry must be an object, got {spec!r}")
    if "family" in spec:
        try:
            pot = builtin_potential(spec["family"], spec.get("params"))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad potential entry {spec!r}: {exc}") from exc
        if not build:
            return None
        return ("theorem", build_transport(pot, variance, tol),
                None, None, None, None)
    if "slope_map" in spec:
        sm_spec = spec["slope_map"]
        try:
            sm = builtin_slope_map(sm_spec["name"], sm_spec.get("params"))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad slope map entry {spec!r}: {exc}") from exc
        alpha = float(spec.get("alpha", sm.alpha))
        beta = spec.get("beta", sm.beta)
        beta = None if beta is None else float(beta)
        improved = spec.get("improved_alpha")
        improved = None if improved is None else float(improved)
        if not build:
            return None
        return ("appendix", appendix_transport(sm, alpha, tol),
                sm, alpha, beta, improved)
    raise ConfigError(f"potential entry needs 'family' or 'slope_map': {spec!r}")


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", label).strip("_")


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _check_dict(obj) -> dict:
    out = {}
    for k, v in dataclasses.asdict(obj).items():
        out[k] = format_float(v) if isinstance(v, float) else v
    return out


def _process_entry(spec, cfg: ExperimentConfig, with_mc: bool):
    kind, tmap, sm, alpha, beta, improved = _parse_potential_entry(
        spec, cfg.A, cfg.quadrature_tol)
    entry = {
        "kind": kind,
        "label": tmap.potential.label,
        "gaussian_variance": format_float(tmap.A),
        "mean_x": format_float(tmap.mean_mu),
        "var_x": format_float(tmap.var_mu),
    }
    ensemble = None
    if with_mc and cfg.n_paths > 0:
        clark = ClarkIntegrand(tmap)
        ensemble = simulate_embedding(clark, cfg.n_paths, cfg.n_steps,
                                      cfg.seed)
        entry["wald"] = _check_dict(wald_check(ensemble, tmap.var_mu))
        entry["t_bound"] = _check_dict(t_bound_check(ensemble))
        entry["embedded_law"] = _check_dict(embedded_law_check(ensemble, tmap))

    reports = []
    for psi_spec in cfg.psis:
        psi = convex_test_from_spec(psi_spec)
        if kind == "theorem":
            rep = verify_theorem(psi, tmap, p_list=tuple(cfg.p_list))
        else:
            rep = verify_appendix(psi, sm, alpha=alpha, beta=beta,
                                  p_list=tuple(cfg.p_list), tmap=tmap)
        if ensemble is not None:
            rep.mc = mc_crosscheck(psi, ensemble, tmap, reference=rep.rhs)
            rep.passes["mc"] = rep.mc.within_3se
        reports.append(rep)
        if kind == "appendix" and improved is not None:
            imp = verify_appendix(psi, sm, alpha=improved, p_list=(),
                                  require_slope_bound=False)
            imp.psi_label += "~improved_alpha"
            reports.append(imp)
    return entry, tmap, ensemble, reports


def _ensemble_checks_pass(entry: dict) -> bool:
    for key in ("wald", "t_bound", "embedded_law"):
        if key in entry and not entry[key]["passed"]:
            return False
    return True


def _write_summary_csv(path: Path, rows: list) -> None:
    cols = ["potential", "A", "psi", "p", "q", "lhs", "rhs", "var_x",
            "bl1_margin", "bl2_correction", "bl2_margin", "bl3_constant",
            "bl3_margin", "bl3_skipped", "passed"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) for c in cols) + "\n")


def _summary_rows(reports) -> list:
    rows = []
    for rep in reports:
        base = {
            "potential": rep.potential_label, "A": format_float(rep.gaussian_variance),
            "psi": rep.psi_label, "lhs": format_float(rep.lhs),
            "rhs": format_float(rep.rhs), "var_x": format_float(rep.var_x),
            "bl1_margin": format_float(rep.bl1_margin),
            "bl2_correction": format_float(rep.bl2_correction),
            "bl2_margin": format_float(rep.bl2_margin),
            "passed": rep.all_passed,
        }
        if rep.bl3:
            for e in rep.bl3:
                rows.append({**base, "p": format_float(e.p),
                             "q": format_float(e.q),
                             "bl3_constant": format_float(e.constant),
                             "bl3_margin": format_float(e.margin),
                             "bl3_skipped": e.skipped})
        else:
            rows.append({**base, "p": "", "q": "", "bl3_constant": "",
                         "bl3_margin": "", "bl3_skipped": ""})
    return rows


def _write_transport_plotdata(path: Path, tmap: TransportMap) -> None:
    xs = np.linspace(-8.0, 8.0, 321)
    g = np.asarray(tmap.g(xs), float)
    gp = np.asarray(tmap.g_prime(xs), float)
    sa = math.sqrt(tmap.A)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,g,g_prime,sqrt_A\n")
        for i, x in enumerate(xs):
            fh.write(f"{x:.17g},{g[i]:.17g},{gp[i]:.17g},{sa:.17g}\n")


def _write_margins_plotdata(path: Path, reports) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("potential,psi,p,bl1_margin,bl2_margin,bl3_margin\n")
        for rep in reports:
            if rep.bl3:
                for e in rep.bl3:
                    fh.write(f"{rep.potential_label},{rep.psi_label},"
                             f"{e.p:.17g},{rep.bl1_margin:.17g},"
                             f"{rep.bl2_margin:.17g},{e.margin:.17g}\n")
            else:
                fh.write(f"{rep.potential_label},{rep.psi_label},,"
                         f"{rep.bl1_margin:.17g},{rep.bl2_margin:.17g},\n")


def _sandwich_rows(tmap: TransportMap, ensemble: EmbeddingEnsemble,
                   x_grid, p_list):
    rows = []
    ok = True
    for x in x_grid:
        gap = local_time_gap_mc(ensemble, x)
        lo = est1_lower(x, tmap.A, tmap.var_mu)
        row = {"x": x, "est1_lower": lo, "gap_mc": gap.estimate,
               "gap_se": gap.std_error}
        if lo > gap.estimate + 3.0 * gap.std_error + 1e-12:
            ok = False
        for p in p_list:
            hi = est2_upper(x, tmap.A, tmap.var_mu, p)
            row[f"est2_p{p:g}"] = hi
            if gap.estimate - 3.0 * gap.std_error > hi + 1e-12:
                ok = False
        rows.append(row)
    return rows, ok


def _write_sandwich_plotdata(path: Path, rows, p_list) -> None:
    cols = ["x", "est1_lower", "gap_mc", "gap_se"] + [f"est2_p{p:g}" for p in p_list]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(f"{r[c]:.17g}" for c in cols) + "\n")


def _load_config(args) -> ExperimentConfig:
    if args.config and args.matrix:
        raise ConfigError("--config and --matrix are mutually exclusive")
    if args.matrix:
        if args.matrix != "default":
            raise ConfigError(f"unknown matrix {args.matrix!r}")
        cfg = default_matrix_config()
    elif args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {args.config}: {exc}") from exc
        cfg = ExperimentConfig.from_dict(raw)
    else:
        raise ConfigError("either --config PATH or --matrix default is required")
    for name, attr in (("seed", "seed"), ("paths", "n_paths"),
                       ("steps", "n_steps"), ("out", "output_dir")):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, attr, val)
    return cfg.validate()


def run(cfg: ExperimentConfig, mode: str = "run") -> int:
    """Execute one experiment; returns the process exit status."""
    with_mc = mode in ("run", "embed", "sandwich") and cfg.n_paths > 0
    if mode in ("embed", "sandwich") and cfg.n_paths < 1:
        raise ConfigError(f"'{mode}' needs n_paths >= 1")
    if mode == "appendix":
        specs = [s for s in cfg.potentials if "slope_map" in s]
        if not specs:
            raise ConfigError("'appendix' needs at least one slope_map entry")
    else:
        specs = cfg.potentials

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    plotdir = out / "plotdata"
    if mode != "embed":
        plotdir.mkdir(exist_ok=True)

    entries = []
    all_reports = []
    all_ok = True
    single = len(specs) == 1
    for idx, spec in enumerate(specs):
        entry, tmap, ensemble, reports = _process_entry(spec, cfg, with_mc)
        slug = _slug(entry["label"])
        if ensemble is not None:
            name = "ensemble.csv" if single else f"ensemble_{idx:02d}_{slug}.csv"
            ensemble.to_csv(out / name)
            entry["ensemble_csv"] = name
            all_ok &= _ensemble_checks_pass(entry)
        if mode != "embed":
            entry["reports"] = [rep.to_json_dict() for rep in reports]
            all_reports.extend(reports)
            all_ok &= all(rep.all_passed for rep in reports)
            _write_transport_plotdata(plotdir / f"transport_{slug}.csv", tmap)
        if mode in ("run", "sandwich") and ensemble is not None:
            x_grid = getattr(cfg, "sandwich_x_grid", [0.0, 0.5, 1.0, 2.0])
            rows, ok = _sandwich_rows(tmap, ensemble, x_grid, cfg.p_list)
            _write_sandwich_plotdata(plotdir / f"sandwich_{slug}.csv",
                                     rows, cfg.p_list)
            entry["sandwich_passed"] = ok
            all_ok &= ok
        entries.append(entry)

    if mode != "embed":
        _write_margins_plotdata(plotdir / "margins.csv", all_reports)
        _write_summary_csv(out / "summary.csv", _summary_rows(all_reports))
        report = {
            "config": cfg.to_dict(),
            "mode": mode,
            "potentials": entries,
            "all_passed": bool(all_ok),
        }
        with open(out / "report.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--matrix", help="named built-in matrix ('default')")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--paths", type=int, help="override n_paths")
    p.add_argument("--steps", type=int, help="override n_steps")
    p.add_argument("--out", help="override the output directory")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="blverify",
        description="Verify Gaussian moment-domination inequalities by "
                    "quadrature and Skorokhod-embedding Monte Carlo.")
    sub = parser.add_subparsers(dest="command")
    for name, help_txt in (
            ("run", "full pipeline: verify + simulate + write everything"),
            ("embed", "write embedding ensembles only"),
            ("verify", "quadrature-only verification (no Monte Carlo)"),
            ("sandwich", "residual local-time bound curves"),
            ("appendix", "slope-map measures only")):
        sp = sub.add_parser(name, help=help_txt)
        _add_common(sp)
        if name == "sandwich":
            sp.add_argument("--x-grid", type=float, nargs="+",
                            help="levels for the residual curves")
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2

    try:
        cfg = _load_config(args)
        if args.command == "verify":
            cfg.n_paths = 0
        if args.command == "sandwich" and getattr(args, "x_grid", None):
            cfg.sandwich_x_grid = list(args.x_grid)
        return run(cfg, mode=args.command)
    except (ConfigError, SlopeBoundError, DivergentNormalizerError,
            NonFinitePotentialError, OSError) as exc:
        # a measure that cannot be built or a misdeclared bound is a
        # configuration problem, not an inequality failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
