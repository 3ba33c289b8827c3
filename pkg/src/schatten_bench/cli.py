"""Command line: ``run <config.json>``, ``verify <suite>``, ``plot <report.json> <out.svg>``.

Exit codes: 0 success, 1 failed verification, 2 configuration or report
errors, 3 dimension or feasibility errors, 4 I/O errors.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from . import analysis as an
from .hilbert import DimensionError
from .learners import ExpertsConfig, ExpertsLearner, OgdConfig, OgdLearner, ZeroLearner
from .spectral import BallSpec, parse_p, schatten_norm
from .streams import BallViolation, KernelSpec, StreamFormatError, StreamSpec, kernel_l2_norm, kernel_operator
from .svgplot import ReportError, report_svg

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_FEASIBILITY, EXIT_IO = 0, 1, 2, 3, 4

TOP_KEYS = {"experiment", "seed", "trials", "output_dir", "emit"}
EMIT_KINDS = ("csv", "json", "svg")
STREAM_KEYS = {"kind", "T", "d", "p", "c", "k_star", "instance_mode", "noise", "path"}
LEARNER_KEYS = {"kind", "p", "c", "eta"}
ANALYSIS_KEYS = {
    "regret": {"kind", "comparator"},
    "rate_fit": {"kind", "comparator", "horizons"},
    "rademacher_sum": {"kind", "tree", "T", "d", "qs", "c1", "c2", "svd_method"},
    "batch": {"kind", "construction", "p", "c", "ns", "learners"},
    "kernel": {"kind", "kernels", "dims", "c"},
    "witness": {"kind", "horizons"},
}
NEEDS_STREAM = {"regret", "rate_fit"}


def _sign_flip_rate(p, horizons):
    return {
        "stream": {"kind": "schatten_lower", "p": p, "c": 1.0},
        "learner": {"kind": "ogd"},
        "analysis": {"kind": "rate_fit", "horizons": horizons},
    }


PRESETS = {
    "thm2-p1": _sign_flip_rate(1, [16, 32, 64, 128, 256]),
    "thm2-p2": _sign_flip_rate(2, [64, 128, 256, 512, 1024]),
    "thm2-pinf": _sign_flip_rate("inf", [16, 32, 64, 128, 256]),
    "thm4-separation": {
        "stream": {"kind": "separation_realizable", "T": 256, "d": 256, "instance_mode": "dense"},
        "learner": {"kind": "experts"},
        "analysis": {"kind": "regret"},
    },
    "lemma1-tree": {"analysis": {"kind": "rademacher_sum", "tree": "random", "T": 16, "qs": [1, 2, 4]}},
    "b1-batch": {
        "analysis": {"kind": "batch", "construction": "b1", "p": 2, "c": 1.0, "ns": [8, 16],
                     "learners": ["erm", "online_to_batch"]}
    },
    "b2-batch": {
        "analysis": {"kind": "batch", "construction": "b2", "p": 2, "c": 1.0, "ns": [8, 32],
                     "learners": ["erm", "online_to_batch"]}
    },
    "kernel-hs": {
        "analysis": {
            "kind": "kernel",
            "kernels": [{"kernel": "gaussian", "params": {"bandwidth": 0.1}},
                        {"kernel": "constant", "params": {"value": 1.0}}],
            "dims": [16, 64, 256],
        }
    },
}


class ConfigError(ValueError):
    pass


# -- configuration --------------------------------------------------------------


def _require_keys(obj, allowed: set, where: str) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    return obj


def _int(value, where: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def _p(value, where: str) -> float:
    try:
        return parse_p(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return raw


def resolve(raw: dict) -> dict:
    """Validate a parsed config and expand presets; returns the run plan."""
    _require_keys(raw, TOP_KEYS, "config")
    if "experiment" not in raw:
        raise ConfigError("config: missing key experiment")
    exp = raw["experiment"]
    name = "experiment"
    if isinstance(exp, str):
        if exp not in PRESETS:
            raise ConfigError(f"experiment: unknown preset {exp!r} (known: {', '.join(sorted(PRESETS))})")
        name, exp = exp, copy.deepcopy(PRESETS[exp])
    _require_keys(exp, {"stream", "learner", "analysis"}, "experiment")
    analysis = exp.get("analysis")
    if not isinstance(analysis, dict) or "kind" not in analysis:
        raise ConfigError("experiment.analysis: missing kind")
    kind = analysis["kind"]
    if kind not in ANALYSIS_KEYS:
        raise ConfigError(f"experiment.analysis.kind: unknown analysis {kind!r}")
    _require_keys(analysis, ANALYSIS_KEYS[kind], "experiment.analysis")
    if kind in NEEDS_STREAM:
        for part, keys in (("stream", STREAM_KEYS), ("learner", LEARNER_KEYS)):
            if part not in exp:
                raise ConfigError(f"experiment.{part}: required for analysis {kind!r}")
            _require_keys(exp[part], keys, f"experiment.{part}")
        if "p" in exp["stream"]:
            _p(exp["stream"]["p"], "experiment.stream.p")
        if "p" in exp["learner"]:
            _p(exp["learner"]["p"], "experiment.learner.p")
        if exp["learner"].get("kind") not in ("zero", "ogd", "experts"):
            raise ConfigError(f"experiment.learner.kind: unknown learner {exp['learner'].get('kind')!r}")
        if kind == "rate_fit":
            hz = analysis.get("horizons")
            if not isinstance(hz, list) or len(hz) < 3:
                raise ConfigError("experiment.analysis.horizons: need a list of at least 3 horizons")
            for i, h in enumerate(hz):
                _int(h, f"experiment.analysis.horizons[{i}]", 1)
        elif "T" not in exp["stream"] and exp["stream"].get("kind") != "file":
            raise ConfigError("experiment.stream.T: required for a regret run")
    emit = raw.get("emit", ["csv", "json"])
    if not isinstance(emit, list) or any(e not in EMIT_KINDS for e in emit):
        raise ConfigError(f"emit: expected a subset of {list(EMIT_KINDS)}, got {emit!r}")
    out = raw.get("output_dir", "results")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir: expected a nonempty string")
    return {
        "name": name,
        "experiment": exp,
        "seed": _int(raw.get("seed", 0), "seed", 0),
        "trials": _int(raw.get("trials", 20), "trials", 2),
        "output_dir": out,
        "emit": [e for e in EMIT_KINDS if e in emit],
    }


# -- experiment execution ----------------------------------------------------------


def _stream_spec(stream_cfg: dict, seed: int, T: int | None = None) -> StreamSpec:
    fields = dict(stream_cfg)
    if T is not None:
        fields["T"] = T
    if fields.get("kind") == "schatten_lower" and "d" not in fields:
        fields["d"] = fields.get("T")
    return StreamSpec(seed=seed, **fields)


def _learner_factory(learner_cfg: dict, stream_cfg: dict):
    kind = learner_cfg["kind"]
    if kind == "zero":
        return lambda s: ZeroLearner(s.d_out, s.d_in)
    if kind == "experts":
        return lambda s: ExpertsLearner(ExpertsConfig(s.T, s.d_in, learner_cfg.get("eta", "auto")))
    p = learner_cfg.get("p", stream_cfg.get("p", 2))
    c = float(learner_cfg.get("c", stream_cfg.get("c", 1.0)))
    ball = BallSpec(p, c)
    eta = learner_cfg.get("eta", "auto")

    def ogd(s):
        return OgdLearner(OgdConfig(ball, eta=eta, T_hint=s.T, target_radius=s.target_radius), s.d_in, s.d_out)

    return ogd


def _ball_for(exp: dict) -> BallSpec:
    # same defaults as the OGD learner, so the solver comparator matches its class
    stream_cfg, learner_cfg = exp["stream"], exp["learner"]
    p = learner_cfg.get("p", stream_cfg.get("p", 2))
    return BallSpec(p, float(learner_cfg.get("c", stream_cfg.get("c", 1.0))))


def _regret_batch(exp, seed, trials, T=None):
    stream_cfg = exp["stream"]
    factory = _learner_factory(exp["learner"], stream_cfg)
    comparator = exp["analysis"].get("comparator", "auto")
    ball = _ball_for(exp)
    seeds = an.trial_seeds(seed, trials)
    reports = []

    def one(s):
        stream = _stream_spec(stream_cfg, s, T).build()
        return an.run_regret(factory(stream), stream, ball=ball, comparator=comparator)

    reports = [one(s) for s in seeds] if an.thread_count() == 1 else _threaded(one, seeds)
    regrets = np.array([r.regret for r in reports])
    return reports, regrets


def _threaded(fn, seeds):
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=an.thread_count()) as pool:
        return list(pool.map(fn, seeds))


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(repr(v) if isinstance(v, float) else str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _envelope(stream_kind: str, params: dict, T: int) -> dict | None:
    if stream_kind == "schatten_lower":
        p, c = params["p"], params["c"]
        return {
            "label": "6c^2 T^max(1/2,1-1/p)",
            "value": float(an.minimax_envelope(T, p, c)),
            "lower": float(an.lower_envelope(T, p, c)),
        }
    if stream_kind.startswith("separation"):
        return {"label": "2 + 8 sqrt(T ln 2T)", "value": an.experts_envelope(T)}
    return None


def _report_dict(rep: an.RegretReport) -> dict:
    d = rep.to_dict()
    d["metadata"] = {k: (_jsonable(v)) for k, v in d["metadata"].items()}
    return d


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def execute(plan: dict, say) -> tuple[dict, str, dict | None]:
    """Run a resolved plan. Returns (results, csv text, svg source dict)."""
    exp, seed, trials, name = plan["experiment"], plan["seed"], plan["trials"], plan["name"]
    kind = exp["analysis"]["kind"]

    if kind == "regret":
        reports, regrets = _regret_batch(exp, seed, trials)
        first = reports[0]
        mean, se = an.mean_stderr(regrets)
        env = _envelope(first.metadata["stream"], first.metadata, len(first.per_round))
        rep = _report_dict(first)
        if env:
            rep["metadata"]["envelope"] = env
        results = {
            "regret_report": rep,
            "mc": {"trials": trials, "mean": mean, "stderr": se, "regrets": regrets.tolist()},
            "envelope": env,
        }
        if env:
            results["within_envelope"] = bool(np.all(regrets <= env["value"]))
        env_txt = f" envelope={env['value']:.3f}" if env else ""
        say(f"{name}: T={len(first.per_round)} trials={trials} mean_regret={mean:.4f} stderr={se:.4f}{env_txt}")
        return results, first.to_csv(), {"results": results}

    if kind == "rate_fit":
        horizons = exp["analysis"]["horizons"]
        means, ses, last = [], [], None
        for T in horizons:
            reports, regrets = _regret_batch(exp, seed, trials, T=T)
            mean, se = an.mean_stderr(regrets)
            means.append(mean)
            ses.append(se)
            last = reports[0]
            say(f"{name}: T={T} trials={trials} mean_regret={mean:.4f} stderr={se:.4f}")
        fit = an.rate_fit(horizons, means, ses)
        fit_d = fit.to_dict()
        meta = last.metadata
        if "p" in meta:
            fit_d["p"], fit_d["c"] = _jsonable(meta["p"]), meta.get("c", 1.0)
        rep = _report_dict(last)
        env = _envelope(meta["stream"], meta, horizons[-1])
        if env:
            rep["metadata"]["envelope"] = env
        say(f"{name}: rate fit slope={fit.slope:.4f} r2={fit.r_squared:.4f}")
        results = {"regret_report": rep, "rate_fit": fit_d}
        return results, last.to_csv(), {"results": results}

    if kind == "rademacher_sum":
        a = exp["analysis"]
        T = _int(a.get("T", 16), "experiment.analysis.T", 1)
        d = _int(a.get("d", T), "experiment.analysis.d", T)
        c1, c2 = float(a.get("c1", 1.0)), float(a.get("c2", 1.0))
        tree_kind = a.get("tree", "random")
        if tree_kind == "orthogonal":
            tree = an.orthogonal_tree(T, d)
        elif tree_kind == "random":
            tree = an.random_predictable_tree(T, d, seed, c1, c2)
        elif tree_kind == "sign_aligned":
            tree = an.sign_aligned_tree(T, d)
        else:
            raise ConfigError(f"experiment.analysis.tree: unknown tree {tree_kind!r}")
        qs = [_p(q, "experiment.analysis.qs") for q in a.get("qs", [1, 2, 4])]
        norms = an.rademacher_sum_norms(tree, qs, trials, seed, a.get("svd_method", "jacobi"))
        rows, out = [], []
        for q in qs:
            mean, se = an.mean_stderr(norms[q])
            bound = an.rademacher_sum_bound(T, q, tree.c1, tree.c2)
            holds = an.RademacherSumCheck(mean, se, bound).holds
            rows.append([_jsonable(q), mean, se, bound, holds])
            out.append({"q": _jsonable(q), "mean": mean, "stderr": se, "bound": bound, "holds": holds})
            say(f"{name}: tree={tree_kind} T={T} q={q:g} trials={trials} mean={mean:.4f} bound={bound:.4f}")
        return {"rademacher_sum": out}, _csv(["q", "mean", "stderr", "bound", "holds"], rows), None

    if kind == "batch":
        a = exp["analysis"]
        construction = a.get("construction", "b1")
        p, c = _p(a.get("p", 2), "experiment.analysis.p"), float(a.get("c", 1.0))
        rules = {"erm": an.erm_rule(), "online_to_batch": an.online_to_batch_rule()}
        learners = a.get("learners", ["erm"])
        rows, out = [], []
        for n in a.get("ns", [8]):
            n = _int(n, "experiment.analysis.ns", 2)
            for lname in learners:
                if lname not in rules:
                    raise ConfigError(f"experiment.analysis.learners: unknown batch learner {lname!r}")
                res = an.batch_lower_bound_check(rules[lname], p, c, n, trials, seed, construction)
                rows.append([n, lname, res.mean_excess, res.stderr, res.bound, res.proof_bound, res.holds])
                out.append({"n": n, "learner": lname, **res._asdict(), "holds": res.holds})
                say(f"{name}: {construction} n={n} {lname} trials={trials} "
                    f"mean_excess={res.mean_excess:.5f} bound={res.bound:.5f}")
        header = ["n", "learner", "mean_excess", "stderr", "bound", "proof_bound", "holds"]
        return {"batch": out, "construction": construction}, _csv(header, rows), None

    if kind == "kernel":
        a = exp["analysis"]
        rows, out = [], []
        for spec_cfg in a.get("kernels", [{"kernel": "gaussian"}]):
            _require_keys(spec_cfg, {"kernel", "params"}, "experiment.analysis.kernels[]")
            for d in a.get("dims", [16]):
                spec = KernelSpec(spec_cfg["kernel"], _int(d, "experiment.analysis.dims", 2),
                                  spec_cfg.get("params", {}), a.get("c"))
                hs = schatten_norm(kernel_operator(spec), 2)
                l2 = kernel_l2_norm(spec)
                rows.append([spec_cfg["kernel"], d, hs, l2])
                out.append({"kernel": spec_cfg["kernel"], "d": d, "schatten2": hs, "kernel_l2": l2})
                say(f"{name}: kernel={spec_cfg['kernel']} d={d} ||f_K||_2={hs:.6f} ||K||_L2={l2:.6f}")
        return {"kernel": out}, _csv(["kernel", "d", "schatten2", "kernel_l2"], rows), None

    if kind == "witness":
        rows, out = [], []
        for T in exp["analysis"].get("horizons", [8, 64, 512]):
            res = an.rad_separation_witness(_int(T, "experiment.analysis.horizons", 1), trials, seed)
            rows.append([T, res.mc_mean, res.stderr, res.exact])
            out.append({"T": T, **res._asdict(), "holds": res.holds})
            say(f"{name}: T={T} trials={trials} witness_mean={res.mc_mean:.3f} exact={res.exact:g}")
        return {"witness": out}, _csv(["T", "mc_mean", "stderr", "exact"], rows), None

    raise ConfigError(f"experiment.analysis.kind: unknown analysis {kind!r}")


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _with_metadata(svg: str, raw: dict) -> str:
    echo = json.dumps({"version": __version__, "config": raw}, sort_keys=True)
    head, rest = svg.split("\n", 1)
    return f"{head}\n<metadata>{escape(echo)}</metadata>\n{rest}"


def cmd_run(config_path, quiet: bool = False, stream_path: str | None = None) -> int:
    say = (lambda msg: None) if quiet else print
    try:
        raw = load_config(config_path)
        plan = resolve(raw)
        if stream_path is not None:
            if plan["experiment"]["analysis"]["kind"] != "regret":
                raise ConfigError("--stream: only valid for a regret analysis")
            plan["experiment"]["stream"] = {"kind": "file", "path": stream_path}
        results, csv_text, svg_src = execute(plan, say)
        files = {}
        if "csv" in plan["emit"]:
            files[f"{plan['name']}.csv"] = csv_text
        if "json" in plan["emit"]:
            doc = {"kind": "experiment", "version": __version__, "config": raw, "results": results}
            if stream_path is not None:
                doc["stream_file"] = stream_path
            files[f"{plan['name']}.json"] = json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"
        if "svg" in plan["emit"] and svg_src is not None:
            files[f"{plan['name']}.svg"] = _with_metadata(report_svg(svg_src), raw)
        out = Path(plan["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        for fname, text in files.items():
            _atomic_write(out / fname, text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DimensionError, BallViolation) as exc:
        print(f"dimension/feasibility error: {exc}", file=sys.stderr)
        return EXIT_FEASIBILITY
    except (OSError, StreamFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"dimension/feasibility error: {exc}", file=sys.stderr)
        return EXIT_FEASIBILITY
    return EXIT_OK


def cmd_verify(suite: str, trials: int | None = None) -> int:
    from .acceptance import run_suite

    results = run_suite(suite, trials=trials, echo=print)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_plot(report_path, out_svg) -> int:
    try:
        report = json.loads(Path(report_path).read_text())
        svg = report_svg(report)
        out = Path(out_svg)
        out.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(out, svg)
    except (json.JSONDecodeError, ReportError) as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="schatten-bench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--quiet", action="store_true", help="suppress summary lines")
    run.add_argument("--stream", metavar="PATH", help="replace the experiment's stream by a JSON-lines file")
    ver = sub.add_parser("verify", help="run acceptance criteria")
    ver.add_argument("suite", choices=["unit", "paper", "all"])
    ver.add_argument("--trials", type=int, default=None, help="override Monte-Carlo trial counts")
    plot = sub.add_parser("plot", help="render a report JSON to SVG")
    plot.add_argument("report")
    plot.add_argument("out_svg")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config, quiet=args.quiet, stream_path=args.stream)
    if args.command == "verify":
        return cmd_verify(args.suite, args.trials)
    return cmd_plot(args.report, args.out_svg)


if __name__ == "__main__":
    sys.exit(main())
