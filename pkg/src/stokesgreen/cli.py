"""Config-driven experiment pipelines and the command-line interface.

Pipelines: build domain -> coefficients -> Green sweep -> estimate reports,
with every artifact exported alongside a manifest carrying the full
configuration digest.  Subcommands:

  run     execute the estimates selected in the config
  verify  run the acceptance-criteria suite (presets smoke/standard/deep),
          or re-check a stored fixture when ``fixture_dir`` is set
  export  build and export domain/coefficients/Green fields, no estimates

Exit codes: 0 pass, 1 estimate failure, 2 config error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from . import estimates as est
from .acceptance import MEMORY_REQUIREMENT_MB, AcceptanceSuite, PRESET_SIZES
from .coefficients import adjoint_field, build_coefficients, validate_ellipticity
from .domain import build_domain, dist_to_boundary
from .errors import ConfigError, SolverError, StokesGreenError
from .green import (
    GreenApprox,
    averaging_identity_check,
    check_green_invariants,
    compute_adjoint_green,
    compute_green,
    representation_check,
    symmetry_check,
)
from .system import ConormalOperator, poincare_constant, solve_divergence

VALID_ESTIMATES = (
    [f"T1-{k}" for k in ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii")]
    + [f"T2-{k}" for k in ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii")]
    + ["decay", "symmetry", "representation", "caccioppoli", "oscillation",
       "bogovskii", "poincare"]
)

PRESET_CONFIGS = {
    "smoke": {
        "domain": {"kind": "box", "extent": [1.0, 1.0, 1.0], "h": 1.0 / 16},
        "coefficients": {"kind": "identity"},
        "poles": "auto-boundary",
        "eps_sweep": "auto",
        "estimates": ["decay"],
    },
    "standard": {
        "domain": {"kind": "box", "extent": [1.0, 1.0, 1.0], "h": 1.0 / 24},
        "coefficients": {"kind": "identity"},
        "poles": "auto",
        "eps_sweep": "auto",
        "estimates": ["decay", "T1-i", "T1-ii", "bogovskii", "poincare"],
    },
    "deep": {
        "domain": {"kind": "box", "extent": [1.0, 1.0, 1.0], "h": 1.0 / 32},
        "coefficients": {"kind": "identity"},
        "poles": "auto",
        "eps_sweep": "auto",
        "estimates": list(VALID_ESTIMATES),
    },
}


@dataclass
class ExperimentConfig:
    """Validated experiment description; all defaults centralized here."""

    domain: dict
    coefficients: dict = dc_field(default_factory=lambda: {"kind": "identity"})
    poles: object = "auto"
    eps_sweep: object = "auto"
    solver: dict = dc_field(
        default_factory=lambda: {"tol": 1e-9, "max_iter": None, "c_s": 0.1,
                                 "method": "auto"}
    )
    estimates: list = dc_field(default_factory=list)
    R0: float = 0.5
    out: str = "stokesgreen-out"
    seed: int = 0
    workers: int = 1
    memory_budget_mb: int = 8192
    fixture_dir: str | None = None
    preset: str | None = None

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "domain" not in raw:
            raise ConfigError("config requires a 'domain' descriptor")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self):
        if not isinstance(self.domain, dict) or "kind" not in self.domain:
            raise ConfigError("'domain' must be a mapping with a 'kind'")
        if not isinstance(self.coefficients, dict) or "kind" not in self.coefficients:
            raise ConfigError("'coefficients' must be a mapping with a 'kind'")
        for eid in self.estimates:
            if eid not in VALID_ESTIMATES:
                raise ConfigError(
                    f"unknown estimate id {eid!r}; valid: {VALID_ESTIMATES}"
                )
        if self.poles != "auto" and self.poles != "auto-boundary":
            if not isinstance(self.poles, list) or not all(
                isinstance(p, (list, tuple)) and len(p) == 3 for p in self.poles
            ):
                raise ConfigError("'poles' must be 'auto' or a list of 3-vectors")
        if self.eps_sweep != "auto":
            if not isinstance(self.eps_sweep, list) or not all(
                isinstance(e, (int, float)) and e > 0 for e in self.eps_sweep
            ):
                raise ConfigError("'eps_sweep' must be 'auto' or positive lengths")
        if not (isinstance(self.R0, (int, float)) and 0 < self.R0 <= 1):
            raise ConfigError("'R0' must lie in (0, 1]")
        if not isinstance(self.seed, int):
            raise ConfigError("'seed' must be an integer")
        if not (isinstance(self.workers, int) and self.workers >= 1):
            raise ConfigError("'workers' must be a positive integer")
        sol = dict(self.solver)
        tol = sol.get("tol", 1e-9)
        if not (isinstance(tol, (int, float)) and tol > 0):
            raise ConfigError("solver.tol must be positive")
        if self.preset is not None and self.preset not in PRESET_SIZES:
            raise ConfigError(f"unknown preset {self.preset!r}")

    def canonical(self):
        keys = sorted(self.__dataclass_fields__)
        return json.dumps({k: getattr(self, k) for k in keys}, sort_keys=True)

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]


def _auto_poles(domain, kinds=("interior", "boundary")):
    h = domain.h
    shape = domain.shape
    poles = []
    if "interior" in kinds:
        poles.append(("interior", (np.array(shape) // 2 + 0.5) * h))
    if "boundary" in kinds:
        poles.append(
            ("boundary",
             np.array([4.5 * h, (shape[1] // 2 + 0.5) * h, (shape[2] // 2 + 0.5) * h]))
        )
    return poles


class Pipeline:
    """Executes one experiment config, keeping partial results on failure."""

    def __init__(self, config):
        self.config = config
        self.out = Path(config.out)
        self.reports = []
        import scipy

        self.manifest = {
            "version": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "config_digest": config.digest(),
            "seed": config.seed,
            "stages": {},
            "status": "incomplete",
        }
        self._greens = {}

    # -- construction stages ----------------------------------------------

    def _stage(self, name, fn):
        t0 = time.time()
        out = fn()
        self.manifest["stages"][name] = round(time.time() - t0, 3)
        return out

    def build(self):
        cfg = self.config
        self.domain = self._stage("domain", lambda: build_domain(cfg.domain))
        self.coeffs = self._stage(
            "coefficients", lambda: build_coefficients(self.domain, cfg.coefficients)
        )
        ok, worst = validate_ellipticity(self.coeffs, trials=16, seed=cfg.seed)
        if not ok:
            raise ConfigError(
                f"coefficient field failed ellipticity validation (worst {worst:.4g})"
            )
        self.operator = self._stage(
            "assemble",
            lambda: ConormalOperator(self.domain, self.coeffs,
                                     cfg.solver.get("c_s", 0.1)),
        )
        self.adjoint_operator = None
        if cfg.poles in ("auto", "auto-boundary"):
            kinds = ("boundary",) if cfg.poles == "auto-boundary" else (
                "interior", "boundary")
            self.poles = _auto_poles(self.domain, kinds)
        else:
            self.poles = [(f"pole{i}", np.asarray(p, dtype=float))
                          for i, p in enumerate(cfg.poles)]
        h = self.domain.h
        if cfg.eps_sweep == "auto":
            self.eps_sweep = [8 * h, 6 * h, 4 * h, 2 * h]
        else:
            self.eps_sweep = [float(e) for e in cfg.eps_sweep]

    def _adjoint(self):
        if self.adjoint_operator is None:
            self.adjoint_operator = ConormalOperator(
                self.domain, adjoint_field(self.coeffs),
                self.config.solver.get("c_s", 0.1),
            )
        return self.adjoint_operator

    def green(self, pole, eps):
        key = (tuple(np.round(pole, 12)), round(eps, 12))
        if key not in self._greens:
            self._greens[key] = compute_green(
                self.domain, self.coeffs, pole, eps,
                tol=self.config.solver.get("tol", 1e-9), operator=self.operator,
                workers=self.config.workers,
            )
        return self._greens[key]

    def pole(self, kind):
        for name, p in self.poles:
            if name == kind:
                return p
        return self.poles[0][1]

    # -- estimate runners ---------------------------------------------------

    def _profile_grid(self, green, variant):
        h = self.domain.h
        lo = 2 * green.eps + h / 2
        if variant == "interior":
            hi = dist_to_boundary(self.domain, green.y) / 2
        else:
            hi = self.config.R0 * 0.9
        if hi <= lo:
            hi = lo + 4 * h
        return [lo + k * (hi - lo) / 5.0 for k in range(6)]

    def _variant(self, eid):
        return "interior" if eid.startswith("T1") else "global"

    def _green_for(self, eid):
        h = self.domain.h
        kind = "interior" if eid.startswith("T1") or eid == "decay" else "boundary"
        return self.green(self.pole(kind), 2 * h)

    def run_estimate(self, eid):
        cfg = self.config
        policy = est.TolerancePolicy()
        dom = self.domain
        h = dom.h
        if eid in ("T1-i", "T1-ii", "T2-i", "T2-ii"):
            variant = self._variant(eid)
            g = self._green_for(eid)
            grid = self._profile_grid(g, variant)
            part = "G_DG" if eid.endswith("-i") else "Pi"
            return [est.annulus_norms(dom, g, grid, policy, variant, cfg.R0,
                                      estimate_id=eid, fit_part=part)]
        if eid in ("T1-iii", "T1-iv", "T1-v", "T2-iii", "T2-iv", "T2-v"):
            variant = self._variant(eid)
            g = self._green_for(eid)
            name = {"iii": "G", "iv": "DG", "v": "Pi"}[eid.split("-")[1]]
            values = {"G": g.magnitude, "DG": lambda: g.grad_magnitude(dom),
                      "Pi": g.pressure_magnitude}[name]()
            p = est.WEAK_TYPE_EXPONENTS[name]
            base = cfg.R0 if variant == "global" else min(
                cfg.R0, dist_to_boundary(dom, g.y))
            floor = base ** est.WEAK_TYPE_FLOOR_POWER[name]
            srt = np.sort(values)[::-1]
            tmax = min(floor * 100.0, srt[min(26, len(srt) - 1)] * 0.999)
            if tmax <= floor * 1.01:
                rep = est.EstimateReport(
                    estimate_id=eid,
                    rule={"kind": "envelope", "max_ratio": policy.envelope_ratio_max},
                    samples={"measured": 0.0},
                    flags=["field max at or below threshold floor; vacuous"],
                    passed=True, policy=policy.as_dict(),
                    context={"floor": floor, "field": name},
                )
                return [rep]
            tgrid = np.geomspace(floor * 1.01, tmax, 12)
            return [est.weak_type_profile(dom, values, p, tgrid, floor, policy, eid)]
        if eid in ("T1-vi", "T1-vii", "T1-viii", "T2-vi", "T2-vii", "T2-viii"):
            variant = self._variant(eid)
            g = self._green_for(eid)
            grid = self._profile_grid(g, variant)
            name = {"vi": "G", "vii": "DG", "viii": "Pi"}[eid.split("-")[1]]
            reps = est.local_lq_norms(dom, g, grid, [1.0], policy, variant,
                                      cfg.R0, id_prefix=eid, fields=(name,))
            return list(reps.values())
        if eid == "decay":
            out = []
            for kind, variant in (("interior", "interior"), ("boundary", "global")):
                g = self.green(self.pole(kind), 2 * h)
                if variant == "interior":
                    hi = dist_to_boundary(dom, g.y) / 2
                else:
                    hi = cfg.R0 * 0.9
                lo = 4 * h
                if hi < lo + 2 * h:
                    hi = min(8 * h, cfg.R0)
                radii = sorted({lo + k * (hi - lo) / 4.0 for k in range(5)})
                out.append(est.decay_profile(dom, g, radii, policy,
                                             estimate_id=f"decay-{kind}"))
            return out
        if eid == "symmetry":
            # opposite near-boundary poles keep the mollifier balls
            # separated even on coarse grids
            shape = dom.shape
            y = np.array([4.5 * h, (shape[1] // 2 + 0.5) * h,
                          (shape[2] // 2 + 0.5) * h])
            x = np.array([dom.extent[0] - 4.5 * h, y[1], y[2]])
            eps = sigma = 2 * h
            gd = self.green(y, eps)
            ga = compute_adjoint_green(dom, self.coeffs, x, sigma,
                                       tol=cfg.solver.get("tol", 1e-9),
                                       operator=self._adjoint())
            sc = symmetry_check(dom, gd, ga)
            ac = averaging_identity_check(dom, gd, ga)
            reps = []
            for name, check in (("symmetry", sc), ("averaging", ac)):
                rep = est.EstimateReport(
                    estimate_id=name,
                    rule={"kind": "bound", "max": 0.15},
                    samples={"measured": check.discrepancy},
                    fitted=check.discrepancy,
                    policy={"bound": 0.15},
                    context={"x": x.tolist(), "y": y.tolist(), "eps": eps},
                )
                rep.passed = rep.recompute_pass()
                reps.append(rep)
            return reps
        if eid == "representation":
            g = self.green(self.pole("interior"), 4 * h)
            ctr = dom.cell_centers
            rng = np.random.default_rng(cfg.seed + 11)
            f = rng.standard_normal((3, dom.ncells))
            f -= f.mean(axis=1, keepdims=True)
            gd = np.sin(np.pi * ctr[:, 0]) * np.cos(np.pi * ctr[:, 1])
            rc = representation_check(dom, self.coeffs, g, f=f, g=gd,
                                      tol=cfg.solver.get("tol", 1e-9),
                                      adjoint_operator=self._adjoint())
            rep = est.EstimateReport(
                estimate_id="representation",
                rule={"kind": "bound", "max": 1e-6},
                samples={"measured": rc.error_avg, "point_error": rc.error_point},
                fitted=rc.error_avg,
                policy={"bound": 1e-6},
                context={"pole": g.y.tolist(), "eps": g.eps},
            )
            rep.passed = rep.recompute_pass()
            return [rep]
        if eid == "caccioppoli":
            g = self.green(self.pole("interior"), 4 * h)
            u, p = g.G[:, 0, :], g.Pi[0]
            f_inf = 1.0 / dom.volume
            ext = min(dom.extent)
            xi = dom.cell_centers[dom.nearest_cell(np.full(3, 0.7 * ext))]
            R = min(0.28 * ext, dist_to_boundary(dom, xi) * 0.95)
            policy = est.TolerancePolicy()
            reps = [est.caccioppoli_sweep(dom, u, p, f_inf, xi,
                                          [R, R / np.sqrt(2), R / 2], policy,
                                          "interior",
                                          estimate_id="caccioppoli-interior")]
            xb = dom.boundary_face_centroids[-1]
            Rb = min(0.4 * ext, cfg.R0 * 0.9)
            reps.append(est.caccioppoli_sweep(dom, u, p, f_inf, xb,
                                              [Rb, Rb / np.sqrt(2), Rb / 2], policy,
                                              "boundary", theta=2.0, R0=cfg.R0,
                                              estimate_id="caccioppoli-boundary"))
            return reps
        if eid == "oscillation":
            from .coefficients import Frame, partial_oscillation
            from .domain import BallQuery

            ext = min(dom.extent)
            radius = min(ext / 2, max(ext / 4, 4 * h))
            ball = BallQuery(tuple(np.array(dom.extent) / 2), radius)
            gamma = partial_oscillation(self.coeffs, Frame.identity(), ball)
            rep = est.EstimateReport(
                estimate_id="oscillation",
                rule={"kind": "bound", "max": float("inf")},
                samples={"measured": gamma},
                fitted=gamma,
                policy={"bound": "informational"},
                context={"frame": "identity", "R": ball.radius},
            )
            rep.passed = True
            return [rep]
        if eid == "bogovskii":
            gpat = np.where(dom.cell_centers[:, 0] < dom.extent[0] / 2, 1.0, -1.0)
            gpat -= gpat.mean()
            sol = solve_divergence(dom, gpat, tol=cfg.solver.get("tol", 1e-9))
            rep = est.EstimateReport(
                estimate_id="bogovskii",
                rule={"kind": "bound", "max": float("inf")},
                samples={"measured": sol.quotient,
                         "div_residual": sol.div_residual},
                fitted=sol.quotient,
                policy={"bound": "informational"},
                context={"sweeps": sol.sweeps},
            )
            rep.passed = True
            return [rep]
        if eid == "poincare":
            k0 = poincare_constant(dom, probes=8, seed=cfg.seed)
            rep = est.EstimateReport(
                estimate_id="poincare",
                rule={"kind": "bound", "max": float("inf")},
                samples={"measured": k0},
                fitted=k0,
                policy={"bound": "informational"},
                context={"probes": 8},
            )
            rep.passed = True
            return [rep]
        raise ConfigError(f"unknown estimate id {eid!r}")

    # -- outputs ------------------------------------------------------------

    def export_artifacts(self):
        self.out.mkdir(parents=True, exist_ok=True)
        self.domain.export_mask(self.out / "domain.bin")
        (self.out / "config.json").write_text(self.config.canonical())
        for (pole, eps), g in self._greens.items():
            tag = f"green_y{'_'.join(f'{v:.6g}' for v in pole)}_eps{eps:.6g}"
            g.export(self.out / f"{tag}.bin",
                     extra_meta={"coefficients": self.config.coefficients})

    def finalize(self, status):
        self.out.mkdir(parents=True, exist_ok=True)
        if self.reports:
            est.write_csv(self.reports, self.out / "reports.csv")
            est.write_records(self.reports, self.out / "reports.txt")
        self.manifest["status"] = status
        self.manifest["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        (self.out / "manifest.json").write_text(json.dumps(self.manifest, indent=1))


def run_experiment(config):
    """Execute the configured pipeline; returns the process exit code."""
    pipe = Pipeline(config)
    try:
        pipe.build()
        for eid in config.estimates:
            t0 = time.time()
            reports = pipe.run_estimate(eid)
            for rep in reports:
                rep.context.setdefault("coefficients_digest", pipe.coeffs.digest())
            pipe.reports.extend(reports)
            pipe.manifest["stages"][f"estimate:{eid}"] = round(time.time() - t0, 3)
        pipe.export_artifacts()
    except SolverError as exc:
        pipe.manifest["error"] = f"solver failure: {exc}"
        pipe.finalize("failed")
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return 3
    except ConfigError:
        raise
    except StokesGreenError as exc:
        pipe.manifest["error"] = f"{type(exc).__name__}: {exc}"
        pipe.finalize("failed")
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    all_pass = all(r.passed for r in pipe.reports)
    pipe.finalize("ok" if all_pass else "estimate-failures")
    for r in pipe.reports:
        print(f"{r.estimate_id}: {'PASS' if r.passed else 'FAIL'}")
    return 0 if all_pass else 1


def verify_fixture(config):
    """Re-check a stored Green export against its invariants."""
    fdir = Path(config.fixture_dir)
    cfg_path = fdir / "config.json"
    if not cfg_path.exists():
        raise ConfigError(f"fixture dir {fdir} has no config.json")
    stored = ExperimentConfig.from_dict(json.loads(cfg_path.read_text()))
    from .domain import build_domain
    from .coefficients import build_coefficients

    domain = build_domain(stored.domain)
    coeffs = build_coefficients(domain, stored.coefficients)
    exports = sorted(fdir.glob("green_*.bin"))
    if not exports:
        raise ConfigError(f"fixture dir {fdir} has no green exports")
    operator = ConormalOperator(domain, coeffs)
    adjoint = ConormalOperator(domain, adjoint_field(coeffs))
    failures = []
    for path in exports:
        green = GreenApprox.import_file(path, domain)
        inv = check_green_invariants(domain, green)
        if not inv["ok"]:
            failures.append(f"{path.name}: divergence/normalization check failed")
        rng = np.random.default_rng(stored.seed + 5)
        f = rng.standard_normal((3, domain.ncells))
        f -= f.mean(axis=1, keepdims=True)
        rc = representation_check(domain, coeffs, green, f=f,
                                  tol=stored.solver.get("tol", 1e-9),
                                  adjoint_operator=adjoint)
        if rc.error_avg > 1e-6:
            failures.append(
                f"{path.name}: representation check failed (err {rc.error_avg:.3e})"
            )
    for line in failures:
        print(f"FAIL {line}")
    if not failures:
        print(f"OK fixture {fdir}: {len(exports)} exports verified")
    return 1 if failures else 0


def verify(config):
    """Run the acceptance suite for the configured preset."""
    if config.fixture_dir:
        return verify_fixture(config)
    preset = config.preset or "smoke"
    need = MEMORY_REQUIREMENT_MB[preset]
    if config.memory_budget_mb is not None and config.memory_budget_mb < need:
        print(
            f"SKIP preset {preset}: requires ~{need} MB, budget is "
            f"{config.memory_budget_mb} MB"
        )
        return 0
    suite = AcceptanceSuite(preset=preset, seed=config.seed,
                            tol=config.solver.get("tol", 1e-9))
    results = suite.run()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = [r for res in results for r in res.reports]
    if reports:
        est.write_csv(reports, out / "acceptance_reports.csv")
        est.write_records(reports, out / "acceptance_reports.txt")
    manifest = {
        "version": __version__,
        "preset": preset,
        "config_digest": config.digest(),
        "criteria": {r.cid: {"passed": r.passed, "seconds": round(r.seconds, 2)}
                     for r in results},
        "status": "ok" if all(r.passed for r in results) else "criterion-failures",
    }
    (out / "verify_manifest.json").write_text(json.dumps(manifest, indent=1))
    return 0 if all(r.passed for r in results) else 1


def export(config):
    pipe = Pipeline(config)
    pipe.build()
    for kind, pole in pipe.poles:
        for eps in pipe.eps_sweep:
            if eps >= 2 * pipe.domain.h:
                pipe.green(pole, eps)
        break  # first pole only; exports are per-pole heavy
    pipe.export_artifacts()
    pipe.finalize("ok")
    print(f"exported {len(pipe._greens)} Green fields to {pipe.out}")
    return 0


def _load_config(args):
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
    elif args.preset:
        raw = dict(PRESET_CONFIGS[args.preset])
        raw["preset"] = args.preset
        cfg = ExperimentConfig.from_dict(raw)
    else:
        raise ConfigError("either --config or --preset is required")
    if args.preset:
        cfg.preset = args.preset
    if args.out:
        cfg.out = args.out
    if args.workers:
        cfg.workers = args.workers
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="stokesgreen",
        description="Green functions of conormal Stokes systems: experiment runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "run the configured estimate pipeline"),
        ("verify", "run the acceptance-criteria suite"),
        ("export", "build and export fields without estimates"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", help="path to a JSON experiment config")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--workers", type=int, help="worker cap override")
        p.add_argument("--preset", choices=sorted(PRESET_SIZES),
                       help="built-in preset (smoke/standard/deep)")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "run":
            return run_experiment(cfg)
        if args.command == "verify":
            return verify(cfg)
        return export(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
