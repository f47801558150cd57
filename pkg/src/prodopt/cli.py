"""Config-driven experiment runner.

Subcommands: cca, tsvd, trcomp, ellipsoid, spectrum, generate, compare.
Each run consumes an INI config (see config.py), synthesizes its inputs
from the seed unless [data] points at files, and writes a per-run trace
CSV, a JSON summary and (by default) a rendered figure into the output
directory.  Identical configs and seeds reproduce identical traces; wall
times are recorded for information only.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import cca, ellipsoid, fileio, geometry, report, spectrum, trcomp, tsvd
from .config import ConfigError, ExperimentConfig, load_config
from .solvers import LineSearchParams, StoppingCriteria, gauss_newton, rcg, rgd

__all__ = ["main"]


def _repeat_rngs(seed: int, repeat: int) -> list[np.random.Generator]:
    return [np.random.default_rng(child)
            for child in np.random.SeedSequence(seed).spawn(repeat)]


def _require(problem: dict, keys) -> None:
    for key in keys:
        if key not in problem:
            raise ConfigError(f"problem.{key}: required field is missing")


def _run_name(cfg: ExperimentConfig, metric: str) -> str:
    return f"{cfg.application}_{cfg.solver}_{metric}"


def _out_paths(cfg: ExperimentConfig, metric: str, rep: int):
    base = _run_name(cfg, metric)
    if cfg.repeat > 1:
        base = f"{base}_r{rep}"
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / f"{base}.csv", out / f"{base}.json", out / f"{base}.png"


def _write_run(cfg, metric, rep, run_report, kappas, figures) -> Path:
    csv_path, json_path, png_path = _out_paths(cfg, metric, rep)
    report.write_trace(csv_path, run_report, cfg.application)
    payload = report.summary_payload(run_report, cfg.application, cfg.raw,
                                     kappas)
    fileio.write_json(json_path, payload)
    if figures:
        report.render_trace_figure(png_path, run_report, cfg.application,
                                   _run_name(cfg, metric))
    print(f"wrote {csv_path} ({run_report.termination}, "
          f"{run_report.iterations} iterations)")
    return json_path


def _first_order(cfg, problem, x0):
    if cfg.solver == "rcg":
        return rcg(problem, x0, cfg.linesearch, cfg.stopping, cfg.cg_params())
    return rgd(problem, x0, cfg.linesearch, cfg.stopping)


def _cca_problem(cfg: ExperimentConfig) -> cca.CcaProblem:
    p = cfg.problem
    metric = p.get("metric", "LR12")
    delta = p.get("delta", 1e-15)
    lam_x = p.get("lambda_x", 1e-6)
    lam_y = p.get("lambda_y", lam_x)
    if "x" in cfg.data and "y" in cfg.data:
        x = fileio.read_matrix(cfg.data["x"])
        y = fileio.read_matrix(cfg.data["y"])
    else:
        _require(p, ("n", "dx", "dy"))
        rng = np.random.default_rng(cfg.seed)
        x = rng.random((p["n"], p["dx"]))
        y = rng.random((p["n"], p["dy"]))
    return cca.build_from_data(x, y, lam_x, lam_y, p["m"],
                               delta=delta, metric_tag=metric)


def run_cca(cfg: ExperimentConfig, with_spectrum: bool, figures: bool) -> int:
    problem = _cca_problem(cfg)
    solution = cca.closed_form_solution(problem)
    mp = cca.make_manifold_problem(problem, solution)
    kappas = None
    if with_spectrum:
        inputs = cca.spectrum_inputs(problem)
        kappas = {"kappa_l12": spectrum.kappa_cca_l12(inputs),
                  "kappa_lr12": spectrum.kappa_cca_lr12(inputs)}
    for rep, rng in enumerate(_repeat_rngs(cfg.seed, cfg.repeat)):
        x0 = geometry.random_point(mp.kinds, rng)
        _write_run(cfg, problem.metric_tag, rep, _first_order(cfg, mp, x0),
                   kappas, figures)
    return 0


def run_tsvd(cfg: ExperimentConfig, with_spectrum: bool, figures: bool) -> int:
    p = cfg.problem
    metric = p.get("metric", "R12")
    delta = p.get("delta", 1e-15)
    if "a" in cfg.data:
        a = fileio.read_matrix(cfg.data["a"])
        weights = np.arange(p["p"], 0, -1, dtype=float)
        problem = tsvd.SvdProblem(a, weights, delta, metric)
        u_ref = fileio.read_matrix(cfg.data["ustar"]) \
            if "ustar" in cfg.data else None
        v_ref = fileio.read_matrix(cfg.data["vstar"]) \
            if "vstar" in cfg.data else None
        sigma = None
    else:
        _require(p, ("m", "n", "gamma"))
        spec_b = tsvd.SvdBenchmarkSpec(p["m"], p["n"], p["p"], p["gamma"],
                                       cfg.seed)
        problem, u_ref, v_ref = tsvd.build_benchmark(spec_b, delta, metric)
        sigma = np.append(p["gamma"] ** np.arange(p["p"]), 0.0)
    mp = tsvd.make_manifold_problem(problem, u_ref, v_ref)
    kappas = None
    if with_spectrum:
        if sigma is None:
            sigma = np.linalg.svd(problem.a, compute_uv=False)[:problem.p + 1]
        inputs = spectrum.SpectrumInputs(sigma, problem.weights, problem.delta)
        kappas = {"kappa_e": spectrum.kappa_svd(inputs, "euclidean"),
                  "kappa_r12": spectrum.kappa_svd(inputs, "r12")}
    for rep, rng in enumerate(_repeat_rngs(cfg.seed, cfg.repeat)):
        x0 = geometry.random_point(mp.kinds, rng)
        _write_run(cfg, problem.metric_tag, rep, _first_order(cfg, mp, x0),
                   kappas, figures)
    return 0


def _tr_defaults(cfg: ExperimentConfig) -> tuple[LineSearchParams,
                                                 StoppingCriteria]:
    """Completion defaults (rho=0.3, a=2^-13; the four stopping rules),
    overridden by any explicitly configured keys."""
    ls_raw = cfg.raw.get("linesearch", {})
    stop_raw = cfg.raw.get("stopping", {})
    ls = LineSearchParams(
        s0=float(ls_raw.get("s0", 1.0)),
        rho=float(ls_raw.get("rho", 0.3)),
        sufficient_decrease=float(ls_raw.get("sufficient_decrease", 2.0**-13)),
        max_backtracks=int(ls_raw.get("max_backtracks", 60)),
        warm_start=ls_raw.get("warm_start", "true").lower()
        in ("1", "true", "yes", "on"),
    )
    stop = StoppingCriteria(
        gnorm_tol=float(stop_raw.get("gnorm_tol", 0.0)),
        max_iters=int(stop_raw.get("max_iters", 1000)),
        rel_change_tol=float(stop_raw.get("rel_change_tol", 1e-8)),
        min_stepsize=float(stop_raw.get("min_stepsize", 1e-10)),
        cost_tol=float(stop_raw.get("cost_tol", 1e-14)),
    )
    return ls, stop


def run_trcomp(cfg: ExperimentConfig, with_spectrum: bool,
               figures: bool) -> int:
    p = cfg.problem
    delta = p.get("delta", 1e-15)
    ranks = p["ranks"]
    if "train" in cfg.data and "test" in cfg.data:
        omega = fileio.read_sampling(cfg.data["train"])
        gamma = fileio.read_sampling(cfg.data["test"])
        dims = omega.dims
    else:
        _require(p, ("dims", "rate"))
        dims = p["dims"]
        omega, gamma, _, _ = trcomp.exact_recovery_instance(
            dims, ranks, p["rate"], cfg.seed, p.get("test_count", 100))
    ls, stop = _tr_defaults(cfg)
    metric_label = "GN" if cfg.solver == "gn" else "TR"
    for rep, rng in enumerate(_repeat_rngs(cfg.seed, cfg.repeat)):
        init = trcomp.random_cores(dims, ranks, rng)
        if cfg.solver == "gn":
            problem = trcomp.make_residual_problem(omega, init, gamma)
            run_report = gauss_newton(problem, init.flatten(), stop)
        else:
            mp = trcomp.make_manifold_problem(omega, init, delta, gamma)
            x0 = list(init.cores)
            if cfg.solver == "rcg":
                run_report = rcg(mp, x0, ls, stop, cfg.cg_params())
            else:
                run_report = rgd(mp, x0, ls, stop)
        _write_run(cfg, metric_label, rep, run_report, None, figures)
    return 0


def _ellipsoid_problem(cfg: ExperimentConfig) -> ellipsoid.EllipsoidProblem:
    p = cfg.problem
    return ellipsoid.EllipsoidProblem(np.diag(p["b_diag"]),
                                      np.asarray(p["b"], dtype=float))


def run_ellipsoid(cfg: ExperimentConfig, with_spectrum: bool,
                  figures: bool) -> int:
    p = cfg.problem
    problem = _ellipsoid_problem(cfg)
    lo = p.get("lambda_min", -0.120)
    hi = p.get("lambda_max", 1.000)
    step = p.get("lambda_step", 0.005)
    grid = np.round(np.arange(lo, hi + 1e-12, step), 10)
    pairs = ellipsoid.kappa_sweep(problem, grid)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lams = np.array([lam for lam, _ in pairs])
    kappas = np.array([k for _, k in pairs])
    csv_path = out / "ellipsoid_sweep.csv"
    fileio.write_csv(csv_path, {"lam": lams, "kappa": kappas})
    finite = np.isfinite(kappas)
    argmin = float(lams[finite][np.argmin(kappas[finite])])
    payload = {
        "application": "ellipsoid",
        "final": {"iterations": 0, "gnorm": 0.0,
                  "kappa_argmin": argmin,
                  "kappa_min": float(np.nanmin(kappas))},
        "termination": "sweep_complete",
        "timing": {"total_s": 0.0},
        "config": cfg.raw,
    }
    fileio.write_json(out / "ellipsoid_sweep.json", payload)
    if figures:
        report.render_sweep_figure(out / "ellipsoid_sweep.png", lams, kappas,
                                   "ellipsoid metric sweep")
    print(f"wrote {csv_path} (argmin lambda = {argmin})")
    return 0


def run_spectrum(cfg: ExperimentConfig, with_spectrum: bool,
                 figures: bool) -> int:
    p = cfg.problem
    target = p["target"]
    delta = p.get("delta", 1e-15)
    numerical = p.get("numerical", True)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if target == "tsvd":
        _require(p, ("m", "n", "p", "gamma"))
        spec_b = tsvd.SvdBenchmarkSpec(p["m"], p["n"], p["p"], p["gamma"],
                                       cfg.seed)
        problem, u_star, v_star = tsvd.build_benchmark(spec_b, delta, "R12")
        inputs = tsvd.benchmark_spectrum_inputs(spec_b, delta)
        kappas = {"kappa_e": spectrum.kappa_svd(inputs, "euclidean"),
                  "kappa_r12": spectrum.kappa_svd(inputs, "r12")}
        reports = {}
        if numerical:
            for tag in ("E", "R12"):
                tagged = tsvd.SvdProblem(problem.a, problem.weights, delta, tag)
                mp = tsvd.make_manifold_problem(tagged)
                reports[tag] = spectrum.numerical_spectrum(mp,
                                                           [u_star, v_star])
    elif target == "cca":
        _require(p, ("dx", "dy", "m"))
        problem = cca.build_known_spectrum(p["dx"], p["dy"], p["m"],
                                           delta=delta, seed=cfg.seed)
        inputs = cca.spectrum_inputs(problem)
        kappas = {"kappa_l12": spectrum.kappa_cca_l12(inputs),
                  "kappa_lr12": spectrum.kappa_cca_lr12(inputs)}
        reports = {}
        if numerical:
            solution = cca.closed_form_solution(problem)
            for tag in ("L12", "LR12"):
                tagged = cca.CcaProblem(problem.sigma_xx, problem.sigma_yy,
                                        problem.sigma_xy, problem.weights,
                                        delta, tag)
                mp = cca.make_manifold_problem(tagged)
                reports[tag] = spectrum.numerical_spectrum(
                    mp, [solution.U, solution.V])
    else:
        raise ConfigError("problem.target: must be 'tsvd' or 'cca'")

    payload = {"application": "spectrum", "formulas": kappas,
               "config": cfg.raw}
    columns = {}
    for tag, rep in reports.items():
        payload.setdefault("numerical", {})[tag] = {
            "kappa": rep.kappa, "dimension": rep.dimension,
            "sym_residual": rep.sym_residual}
        columns[f"eig_{tag}"] = rep.eigenvalues
    json_path = out / "spectrum.json"
    fileio.write_json(json_path, payload)
    if columns:
        fileio.write_csv(out / "spectrum_eigenvalues.csv", columns)
    print(f"wrote {json_path}: " + ", ".join(
        f"{k}={v:.6g}" for k, v in kappas.items()))
    return 0


def run_generate(cfg: ExperimentConfig) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.problem
    rng = np.random.default_rng(cfg.seed)
    written: list[Path] = []
    if cfg.application == "cca":
        _require(p, ("n", "dx", "dy"))
        x = rng.random((p["n"], p["dx"]))
        y = rng.random((p["n"], p["dy"]))
        for name, mat in (("X.mat", x), ("Y.mat", y)):
            fileio.write_matrix(out / name, mat)
            written.append(out / name)
    elif cfg.application == "tsvd":
        _require(p, ("m", "n", "p", "gamma"))
        spec_b = tsvd.SvdBenchmarkSpec(p["m"], p["n"], p["p"], p["gamma"],
                                       cfg.seed)
        problem, u_star, v_star = tsvd.build_benchmark(spec_b)
        for name, mat in (("A.mat", problem.a), ("Ustar.mat", u_star),
                          ("Vstar.mat", v_star)):
            fileio.write_matrix(out / name, mat)
            written.append(out / name)
    elif cfg.application == "trcomp":
        _require(p, ("dims", "rate"))
        omega, gamma, _, _ = trcomp.exact_recovery_instance(
            p["dims"], p["ranks"], p["rate"], cfg.seed,
            p.get("test_count", 100))
        fileio.write_sampling(out / "train.samples", omega)
        fileio.write_sampling(out / "test.samples", gamma)
        written.extend([out / "train.samples", out / "test.samples"])
    else:
        raise ConfigError(
            f"generate does not apply to application {cfg.application!r}")
    for path in written:
        print(f"wrote {path}")
    return 0


def run_compare(paths, out_path) -> int:
    rows = report.comparison_table(paths)
    csv_text, aligned = report.format_table(rows)
    if out_path:
        Path(out_path).write_text(csv_text)
        print(f"wrote {out_path}")
    sys.stdout.write(aligned)
    return 0


_RUNNERS = {
    "cca": run_cca,
    "tsvd": run_tsvd,
    "trcomp": run_trcomp,
    "ellipsoid": run_ellipsoid,
    "spectrum": run_spectrum,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prodopt",
        description="Riemannian optimization on product manifolds with "
                    "preconditioned metrics")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", required=True, help="INI config file")
        sp.add_argument("--seed", type=int, default=None,
                        help="override experiment.seed")
        sp.add_argument("--out", default=None,
                        help="override output.directory")
        sp.add_argument("--repeat", type=int, default=None,
                        help="override experiment.repeat")
        sp.add_argument("--with-spectrum", action="store_true",
                        help="add condition-number formulas to the summary")
        sp.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering")

    for name in ("cca", "tsvd", "trcomp", "ellipsoid", "spectrum"):
        add_common(sub.add_parser(name, help=f"run a {name} experiment"))

    gen = sub.add_parser("generate", help="write synthetic input files")
    gen.add_argument("--config", required=True)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", default=None)

    cmp_p = sub.add_parser("compare", help="tabulate run summaries")
    cmp_p.add_argument("summaries", nargs="+", help="summary JSON paths")
    cmp_p.add_argument("--out", default=None, help="CSV output path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return run_compare(args.summaries, args.out)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if getattr(args, "repeat", None) is not None:
            cfg.repeat = args.repeat
        if args.command == "generate":
            return run_generate(cfg)
        if cfg.application != args.command:
            raise ConfigError(
                f"experiment.application: config says {cfg.application!r} "
                f"but the {args.command!r} subcommand was invoked")
        return _RUNNERS[args.command](cfg, args.with_spectrum,
                                      not args.no_figures)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
