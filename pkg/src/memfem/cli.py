"""Command line driver: single runs, convergence studies, stability
certificates, and history-recurrence audits.

Configuration is a single JSON document; individual keys can be
overridden on the command line with ``--set key=value`` (dotted paths
reach into the kernel block, values parsed as JSON when possible).

Exit codes: 0 success, 2 configuration error, 3 solver or estimator
failure, 4 time-step stability gate violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import beam as beam_mod
from . import laplace_mem as laplace_mod
from .errors import (
    ConfigError,
    EstimatorError,
    MemfemError,
    OracleError,
    SaddleSolverError,
    StabilityGateError,
)
from .kernels import MemoryKernel, PronySLS, beam_kernel
from .report import ConvergenceReport, LevelRow, render_csv, render_markdown, render_svg
from .sparsela import infsup_estimate, kernel_ellipticity, operator_norm_estimate
from .volterra import TimeGrid, error_constants, stability_constants, trapezoid_weights

__all__ = ["main", "load_config", "run_study", "emit_report", "emit_certificate"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_GATE = 4

BEAM_DEFAULTS = {
    "problem": "beam",
    "profile": "joined",
    "d": 0.001,
    "nu": 0.35,
    "ks": 5.0 / 6.0,
    "T": 15.0,
    "n_steps": 1500,
    "n_elements": 40,
    "levels": [20, 40, 80, 160],
    "ref_factor": 64,
    "kernel": {"type": "sls", "k1": 1.0, "k2": 1.0, "eta2": 1.0},
    "output_dir": "out",
    "audit_history": False,
    "emit_svg": False,
}

LAPLACE_DEFAULTS = {
    "problem": "laplace",
    "delta": 0.01,
    "T": 1.0,
    "n_steps": 2000,
    "m": 32,
    "levels": [8, 16, 32, 64],
    "probe": [0.5, 0.5],
    "kernel": {"type": "fickian"},
    "output_dir": "out",
    "audit_history": False,
    "emit_svg": False,
}

FULL_SCALE = {
    "beam": {"T": 15.0, "n_steps": 5000},
    "laplace": {"T": 4.5, "n_steps": 3000},
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path=None, overrides=(), paper_scale: bool = False) -> dict:
    """Merge defaults, the JSON document, and --set overrides."""
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
    def effective(key, default):
        value = doc.get(key, default)
        for item in overrides:
            if item.startswith(f"{key}="):
                value = _parse_value(item.partition("=")[2])
        return value

    problem = effective("problem", "beam")
    if problem not in ("beam", "laplace"):
        raise ConfigError(f"unknown problem {problem!r} (beam or laplace)")
    cfg = json.loads(json.dumps(
        BEAM_DEFAULTS if problem == "beam" else LAPLACE_DEFAULTS))
    kernel_given = "kernel" in doc or any(o.startswith("kernel") for o in overrides)
    if problem == "beam" and effective("profile", "joined") == "smooth" \
            and not kernel_given:
        # printed relaxation modulus E(t) = 0.5 (1 + e^{-t}): dE/dt/E(0)
        cfg["kernel"] = {"type": "custom_exp", "c": -0.5, "rate": 1.0, "e0": 1.0}
    cfg.update(doc)
    if paper_scale:
        cfg.update(FULL_SCALE[problem])
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        target = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"cannot override through scalar key {part!r}")
        target[parts[-1]] = _parse_value(raw)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    def need(key, types, positive=False):
        if key not in cfg:
            raise ConfigError(f"missing config key {key!r}")
        val = cfg[key]
        if not isinstance(val, types) or isinstance(val, bool):
            raise ConfigError(f"config key {key!r} has wrong type {type(val).__name__}")
        if positive and not val > 0:
            raise ConfigError(f"config key {key!r} must be positive, got {val}")
        if isinstance(val, float) and not math.isfinite(val):
            raise ConfigError(f"config key {key!r} must be finite")

    need("T", (int, float), positive=True)
    need("n_steps", int, positive=True)
    levels = cfg.get("levels")
    if not isinstance(levels, list) or not levels:
        raise ConfigError("config key 'levels' must be a non-empty list")
    if any(not isinstance(l, int) or l < 1 for l in levels):
        raise ConfigError("mesh levels must be positive integers")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("mesh levels must be strictly refining")
    kernel = cfg.get("kernel")
    if not isinstance(kernel, dict) or "type" not in kernel:
        raise ConfigError("config key 'kernel' must be an object with a type")
    if kernel["type"] not in ("sls", "fickian", "custom_exp", "none"):
        raise ConfigError(f"unknown kernel type {kernel['type']!r}")
    if cfg["problem"] == "beam":
        need("d", (int, float), positive=True)
        need("nu", (int, float))
        need("ks", (int, float), positive=True)
        need("n_elements", int, positive=True)
        if cfg.get("profile") not in ("joined", "smooth"):
            raise ConfigError(f"unknown beam profile {cfg.get('profile')!r}")
    else:
        need("delta", (int, float), positive=True)
        need("m", int, positive=True)
        probe = cfg.get("probe")
        if probe is not None:
            if (not isinstance(probe, list) or len(probe) != 2
                    or not all(isinstance(c, (int, float)) for c in probe)):
                raise ConfigError("probe must be a coordinate pair")


def config_hash(cfg: dict) -> str:
    payload = json.dumps(cfg, sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:12]


def build_kernel(cfg: dict):
    """Memory kernel and E(0) divisor from the kernel config block."""
    spec = cfg["kernel"]
    kind = spec["type"]
    if kind == "none":
        return None, 1.0
    if kind == "sls":
        try:
            sls = PronySLS(k1=float(spec.get("k1", 1.0)),
                           k2=float(spec.get("k2", 1.0)),
                           eta2=float(spec.get("eta2", 1.0)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return beam_kernel(sls), sls.e0
    if kind == "custom_exp":
        for key in ("c", "rate"):
            if key not in spec:
                raise ConfigError(f"custom_exp kernel needs key {key!r}")
        try:
            kern = MemoryKernel.exp_convolution(float(spec["c"]),
                                                float(spec["rate"]))
            return kern, float(spec.get("e0", 1.0))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad custom_exp kernel: {exc}") from exc
    # fickian: the Laplace driver wires the sign itself from delta
    delta = float(spec.get("delta", cfg.get("delta", 0.01)))
    if delta <= 0:
        raise ConfigError(f"fickian kernel needs positive delta, got {delta}")
    return "from_delta", 1.0


def build_beam_problem(cfg: dict, n_elements: int):
    try:
        if cfg["profile"] == "joined":
            bc = beam_mod.joined_profile(d=float(cfg["d"]), nu=float(cfg["nu"]),
                                         ks=float(cfg["ks"]))
        else:
            bc = beam_mod.smooth_profile(nu=float(cfg["nu"]), ks=float(cfg["ks"]))
        kernel, e0 = build_kernel(cfg)
        if kernel == "from_delta":
            raise ConfigError("fickian kernels apply to the laplace problem")
        return beam_mod.BeamProblem(bc, n_elements, kernel, e0,
                                    lambda x: np.exp(x), None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_laplace_problem(cfg: dict, m: int):
    if cfg["kernel"]["type"] not in ("fickian", "none"):
        raise ConfigError(
            "the laplace driver's manufactured data supports kernel types "
            f"'fickian' and 'none', got {cfg['kernel']['type']!r}")
    kernel, _ = build_kernel(cfg)
    delta = float(cfg["delta"])
    if kernel is None:
        return laplace_mod.LaplaceProblem(m, delta=None, kernel=None)
    return laplace_mod.LaplaceProblem(m, delta=delta)


class RunNorms:
    """Trapezoid-in-time L1 norms of a run: solution and dual load data."""

    def __init__(self, gram_v, gram_q, grid: TimeGrid):
        self.gram_v = sp.csr_matrix(gram_v)
        self.gram_q = sp.csr_matrix(gram_q)
        self._gq_diag = None
        diag = self.gram_q.diagonal()
        if abs(self.gram_q - sp.diags(diag)).max() == 0.0:
            self._gq_diag = diag
        else:
            self._gq_lu = spla.splu(sp.csc_matrix(self.gram_q))
        self._gv_lu = None
        self.weights = trapezoid_weights(grid, grid.n_steps)
        self.u_l1 = 0.0
        self.p_l1 = 0.0
        self.f_dual_l1 = 0.0
        self.g_dual_l1 = 0.0

    def add(self, n: int, u, p, f, g):
        w = self.weights[n]
        self.u_l1 += w * math.sqrt(float(u @ (self.gram_v @ u)))
        self.p_l1 += w * math.sqrt(float(p @ (self.gram_q @ p)))
        if np.any(f):
            if self._gv_lu is None:
                self._gv_lu = spla.splu(sp.csc_matrix(self.gram_v))
            self.f_dual_l1 += w * math.sqrt(float(f @ self._gv_lu.solve(f)))
        if np.any(g):
            if self._gq_diag is not None:
                z = g / self._gq_diag
            else:
                z = self._gq_lu.solve(g)
            self.g_dual_l1 += w * math.sqrt(float(g @ z))


def _single_problem(cfg: dict):
    if cfg["problem"] == "beam":
        return build_beam_problem(cfg, int(cfg["n_elements"]))
    return build_laplace_problem(cfg, int(cfg["m"]))


def _grams(cfg: dict, prob):
    if cfg["problem"] == "beam":
        return beam_mod.beam_gram_v(prob.mesh), beam_mod.beam_gram_q(prob.mesh)
    return laplace_mod.gram_hdiv(prob.space), laplace_mod.gram_p0(prob.space)


def run_study(cfg: dict) -> ConvergenceReport:
    """Assemble, step, and measure every mesh level of the study."""
    grid = TimeGrid(T=float(cfg["T"]), n_steps=int(cfg["n_steps"]))
    levels = cfg["levels"]
    rows = []
    started = time.perf_counter()
    problem = cfg["problem"]
    if problem == "beam":
        coarse = build_beam_problem(cfg, levels[0])
        ref = beam_mod.beam_exact_reference(
            coarse.cfg, coarse.f_space, coarse.g_space, grid,
            coarse.kernel, e0=coarse.e0,
            n_ref=int(cfg["ref_factor"]) * max(levels))
        fields = beam_mod.BEAM_FIELDS
    else:
        fields = laplace_mod.LAPLACE_FIELDS
    for level in levels:
        try:
            if problem == "beam":
                prob = build_beam_problem(cfg, level)
                errors, _ = prob.run(grid, reference=ref,
                                     audit=bool(cfg["audit_history"]))
                rows.append(LevelRow(dofs=prob.dofs, h=prob.cfg.L / level,
                                     errors=errors))
            else:
                prob = build_laplace_problem(cfg, level)
                errors, _, _ = prob.run(grid, audit=bool(cfg["audit_history"]))
                rows.append(LevelRow(dofs=prob.dofs, h=prob.h, errors=errors))
        except MemfemError as exc:
            if rows:
                partial = ConvergenceReport(
                    fields=fields, rows=rows, problem=problem,
                    config_hash=config_hash(cfg),
                    wall_time=time.perf_counter() - started)
                emit_report(partial, cfg, suffix="_partial")
            raise type(exc)(f"level {level}: {exc}") from exc
    return ConvergenceReport(fields=fields, rows=rows, problem=problem,
                             config_hash=config_hash(cfg),
                             wall_time=time.perf_counter() - started)


def emit_report(report: ConvergenceReport, cfg: dict, suffix: str = ""):
    """Write CSV and Markdown (and optionally SVG); returns the paths."""
    out_dir = Path(cfg.get("output_dir", "out"))
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {}
        base = f"{report.problem}_convergence{suffix}"
        csv_path = out_dir / f"{base}.csv"
        csv_path.write_text(render_csv(report))
        paths["csv"] = csv_path
        md_path = out_dir / f"{base}.md"
        md_path.write_text(render_markdown(report))
        paths["md"] = md_path
        if cfg.get("emit_svg"):
            svg_path = out_dir / f"{base}.svg"
            svg_path.write_text(render_svg(report))
            paths["svg"] = svg_path
        return paths
    except OSError as exc:
        raise ConfigError(f"cannot write to {out_dir}: {exc}") from exc


def emit_certificate(cfg: dict, stream=None) -> dict:
    """Run one level, estimate the constants, and check the bound.

    Returns a dict with the estimates, the constants, the measured
    discrete norms, and the inequality slack (nonnegative when the
    stability bound holds for the run).
    """
    stream = stream or sys.stdout
    grid = TimeGrid(T=float(cfg["T"]), n_steps=int(cfg["n_steps"]))
    prob = _single_problem(cfg)
    gram_v, gram_q = _grams(cfg, prob)
    if not cfg.get("estimators", True):
        missing = [k for k in ("alpha0", "beta", "norm_a") if k not in cfg]
        if missing:
            raise ConfigError(
                "estimators disabled and no explicit values given for "
                f"{missing}; enable the estimator pass with "
                '"estimators": true or supply alpha0/beta/norm_a')
        alpha0, beta, norm_a = (float(cfg[k]) for k in ("alpha0", "beta", "norm_a"))
        null_dim = None
    else:
        system = prob.system
        ke = kernel_ellipticity(system.a, system.b, gram_v)
        alpha0, null_dim = ke.alpha, ke.null_dim
        beta = infsup_estimate(gram_v, gram_q, system.b)
        norm_a = operator_norm_estimate(system.a, gram_v)

    norms = RunNorms(gram_v, gram_q, grid)

    def collect(n, t, u, p):
        f, g = prob.rhs(t)
        norms.add(n, u, p, f, g)

    if cfg["problem"] == "beam":
        prob.run(grid, reference=None, collect=collect)
    else:
        prob.run(grid, collect=collect)

    kern = prob.kernel
    c_k = kern.bound if kern is not None else 0.0
    T = grid.T
    stab = stability_constants(alpha0, beta, norm_a, c_k1=0.0, c_k2=0.0,
                               c_k3=c_k, c_ktilde=c_k, T=T)
    norm_b = operator_norm_b(prob.system.b, gram_v, gram_q)
    err = error_constants(alpha0, beta, norm_a, norm_b, c_k1=0.0, c_k2=0.0,
                          c_k3=c_k, c_ktilde=c_k, T=T)
    lhs = norms.u_l1 + norms.p_l1
    rhs = (stab.c1 + stab.c3) * norms.f_dual_l1 \
        + (stab.c2 + stab.c4) * norms.g_dual_l1
    slack = rhs - lhs

    print(f"stability certificate: {cfg['problem']} "
          f"(T={T:g}, n_steps={grid.n_steps})", file=stream)
    print(f"  estimates: alpha0={alpha0:.6e} beta={beta:.6e} "
          f"norm_a={norm_a:.6e} norm_b={norm_b:.6e} C_k={c_k:.6e}",
          file=stream)
    if null_dim is not None:
        print(f"  null(B) dimension: {null_dim}", file=stream)
    print(f"  constants: C1={stab.c1:.6e} C2={stab.c2:.6e} "
          f"C3={stab.c3:.6e} C4={stab.c4:.6e}", file=stream)
    print(f"  starred:   C1*={err.c1s:.6e} C2*={err.c2s:.6e} "
          f"C3*={err.c3s:.6e} C4*={err.c4s:.6e}", file=stream)
    print(f"  error:     C1u={err.c1u:.6e} C1p={err.c1p:.6e} "
          f"C2u={err.c2u:.6e} C2p={err.c2p:.6e}", file=stream)
    print(f"  norms: |u|_L1(V)={norms.u_l1:.6e} |p|_L1(Q)={norms.p_l1:.6e} "
          f"|f|_L1(V')={norms.f_dual_l1:.6e} |g|_L1(Q')={norms.g_dual_l1:.6e}",
          file=stream)
    print(f"  bound: lhs={lhs:.6e} rhs={rhs:.6e} slack={slack:.6e} "
          f"({'OK' if slack >= 0 else 'VIOLATED'})", file=stream)
    return {"alpha0": alpha0, "beta": beta, "norm_a": norm_a,
            "norm_b": norm_b, "c_k": c_k, "stability": stab, "error": err,
            "lhs": lhs, "rhs": rhs, "slack": slack, "null_dim": null_dim}


def operator_norm_b(b, gram_v, gram_q) -> float:
    """Norm of the constraint form: largest weighted singular value.

    Square root of the largest eigenvalue of the pencil
    (B Gv^{-1} B^T, Gq), evaluated densely like the inf-sup estimator
    (the spectrum clusters at the top, which defeats power iteration).
    """
    import scipy.linalg

    from .sparsela import _dense_schur
    s = _dense_schur(gram_v, b)
    gq = sp.csr_matrix(gram_q).toarray()
    eigs = scipy.linalg.eigh(s, gq, eigvals_only=True)
    return math.sqrt(max(float(eigs[-1]), 0.0))


def _cmd_run(cfg: dict) -> int:
    grid = TimeGrid(T=float(cfg["T"]), n_steps=int(cfg["n_steps"]))
    out_dir = Path(cfg.get("output_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg["problem"] == "laplace":
        prob = build_laplace_problem(cfg, int(cfg["m"]))
        probe_pt = cfg.get("probe")
        errors, probe, _ = prob.run(grid, probe_point=probe_pt)
        print(f"laplace m={cfg['m']}: e0(sigma)={errors['sigma']['e0']:.6e} "
              f"e0(u)={errors['u']['e0']:.6e}")
        if probe is not None:
            man = prob.manufactured
            lines = ["t,u_h,u_exact"]
            for n, t in enumerate(grid.times):
                exact = man.u(probe_pt[0], probe_pt[1], t)
                lines.append("%.6e,%.6e,%.6e" % (t, probe[n], exact))
            path = out_dir / "probe.csv"
            path.write_text("\n".join(lines) + "\n")
            print(f"probe series written to {path}")
        return EXIT_OK
    prob = build_beam_problem(cfg, int(cfg["n_elements"]))
    last = {}

    def keep(n, t, u, p):
        last["u"], last["p"] = u, p

    prob.run(grid, collect=keep)
    n = prob.mesh.n_elements
    nodes = prob.mesh.nodes
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    nodal = ["x,M,V"]
    for i in range(n + 1):
        nodal.append("%.6e,%.6e,%.6e"
                     % (nodes[i], last["u"][i], last["u"][n + 1 + i]))
    cells = ["x,beta,w"]
    for i in range(n):
        cells.append("%.6e,%.6e,%.6e"
                     % (mids[i], last["p"][i], last["p"][n + i]))
    (out_dir / "beam_nodal.csv").write_text("\n".join(nodal) + "\n")
    (out_dir / "beam_cells.csv").write_text("\n".join(cells) + "\n")
    print(f"beam n={n}: final fields written to {out_dir}/beam_nodal.csv "
          f"and {out_dir}/beam_cells.csv")
    return EXIT_OK


def _cmd_convergence(cfg: dict) -> int:
    report = run_study(cfg)
    paths = emit_report(report, cfg)
    print(render_markdown(report))
    print(f"report written to {paths['csv']}")
    return EXIT_OK


def _cmd_certificate(cfg: dict) -> int:
    import io
    buf = io.StringIO()
    out = emit_certificate(cfg, stream=buf)
    text = buf.getvalue()
    sys.stdout.write(text)
    out_dir = Path(cfg.get("output_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "certificate.txt").write_text(text)
    return EXIT_OK if out["slack"] >= 0.0 else EXIT_SOLVER


def _cmd_audit(cfg: dict) -> int:
    grid = TimeGrid(T=float(cfg["T"]), n_steps=int(cfg["n_steps"]))
    prob = _single_problem(cfg)
    if cfg["problem"] == "beam":
        _, stepper = prob.run(grid, reference=None, audit=True)
    else:
        _, _, stepper = prob.run(grid, audit=True)
    hist = stepper.hist
    print(f"audited {hist.audit_steps} steps: max relative deviation "
          f"between direct and recurrence history sums = "
          f"{hist.audit_max_rel:.3e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memfem",
        description="Mixed finite elements for saddle-point Volterra systems")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("run", "single simulation with probe/field CSV output"),
            ("convergence", "mesh refinement study and rate report"),
            ("certificate", "stability constants and bound check"),
            ("audit", "compare direct and recurrence history sums")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON configuration file")
        cmd.add_argument("--set", action="append", default=[],
                         metavar="KEY=VALUE",
                         help="override a configuration key")
        cmd.add_argument("--paper-scale", action="store_true",
                         help="full-scale experiment protocols instead of "
                              "the desk-scale defaults")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "convergence": _cmd_convergence,
                "certificate": _cmd_certificate, "audit": _cmd_audit}
    try:
        cfg = load_config(args.config, overrides=args.set,
                          paper_scale=args.paper_scale)
        return handlers[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityGateError as exc:
        print(f"stability gate: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (SaddleSolverError, EstimatorError, OracleError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
