"""Acceptance criteria as runnable checks.

Each check returns ``(passed, detail)``. ``run_suite`` is shared by the
``verify`` command and the test-suite, so both report identical verdicts.
Tolerances are fixed here and nowhere else.
"""

from __future__ import annotations

import json
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import analysis as an
from .hilbert import apply, inner, trace_pairing
from .learners import (
    ExpertsConfig,
    ExpertsLearner,
    OgdConfig,
    OgdLearner,
    ZeroLearner,
    binary_index_operator,
    binary_index_rank_one,
    squared_loss_total,
)
from .spectral import BallSpec, project_schatten_ball, schatten_norm, svd
from .streams import (
    KernelSpec,
    kernel_l2_norm,
    kernel_operator,
    schatten_lower_stream,
    separation_stream,
)

P_GRID = (1, 1.5, 2, 3, math.inf)

SVD_TOL = 1e-8
NORM_ORACLE_RTOL = 1e-8
TRACE_TOL = 1e-10
PROJ_FEAS_RTOL = 1e-9
PROJ_IDEM_TOL = 1e-8
PROJ_VI_RTOL = 1e-7
COMPARATOR_NORM_TOL = 1e-9
COMPARATOR_LOSS_TOL = 1e-8
TIGHT_TREE_TOL = 1e-9
KERNEL_TOL = 1e-8


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    suite: str  # "unit" (property/oracle) or "paper" (Monte-Carlo and end-to-end)
    check: Callable[[int | None], tuple[bool, str]]


@dataclass(frozen=True)
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:>2} {self.title}: {self.detail} ({self.seconds:.1f}s)"


def _trials(override: int | None, default: int) -> int:
    return default if override is None else max(2, override)


def _random_matrix(rng: np.random.Generator, max_d: int) -> np.ndarray:
    m, n = rng.integers(1, max_d + 1, size=2)
    kind = rng.integers(0, 4)
    a = rng.normal(size=(m, n))
    if kind == 1:
        # low rank
        r = int(rng.integers(1, min(m, n) + 1))
        a = rng.normal(size=(m, r)) @ rng.normal(size=(r, n))
    elif kind == 2:
        # sparse, often monomial or with zero columns
        a = a * (rng.random((m, n)) < 1.5 / max(m, n))
    elif kind == 3:
        # graded singular values over many orders of magnitude
        a = a * np.logspace(0, -10, n)[None, :]
    return a


# -- independent oracle ----------------------------------------------------------


def oracle_symmetric_eigenvalues(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by classical two-sided cyclic Jacobi.

    Deliberately shares no code with the SVD: it rotates rows and columns of
    the symmetric matrix itself, one scalar pair at a time.
    """
    A = np.array(a, dtype=float)
    n = A.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(A[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        scale = math.sqrt(sum(A[i, i] ** 2 for i in range(n))) or 1.0
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp, akq = A[k, p], A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk, aqk = A[p, k], A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
    return np.array([A[i, i] for i in range(n)])


# -- property / oracle suite ------------------------------------------------------


def check_svd_invariants(trials=None) -> tuple[bool, str]:
    rng = np.random.default_rng(101)
    worst = {"orth": 0.0, "recon": 0.0}
    unsorted = 0
    for _ in range(500):
        a = _random_matrix(rng, 64)
        U, S, V = svd(a)
        r = min(a.shape)
        worst["orth"] = max(
            worst["orth"],
            float(np.abs(U.T @ U - np.eye(r)).max()),
            float(np.abs(V.T @ V - np.eye(r)).max()),
        )
        worst["recon"] = max(worst["recon"], float(np.abs((U * S) @ V.T - a).max()))
        if np.any(np.diff(S) > 0) or np.any(S < 0):
            unsorted += 1
    ok = worst["orth"] <= SVD_TOL and worst["recon"] <= SVD_TOL and unsorted == 0
    return ok, f"500 matrices, max orth err {worst['orth']:.1e}, max recon err {worst['recon']:.1e}, unsorted {unsorted}"


def check_norm_oracle(trials=None) -> tuple[bool, str]:
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(40):
        # dense Gaussian: the F^T F route cannot resolve singular values below
        # sqrt(eps) * s_max, so rank-deficient inputs are left to other checks
        m, n = rng.integers(1, 17, size=2)
        a = rng.normal(size=(m, n))
        # f^T f and f f^T share their nonzero spectrum; the smaller Gram has no
        # structural zero eigenvalues for roundoff to pollute
        gram = a.T @ a if m >= n else a @ a.T
        eig = np.clip(oracle_symmetric_eigenvalues(gram), 0.0, None)
        for p in (1, 1.5, 2, 3, 4):
            want = float(np.sum(eig ** (p / 2.0)))
            got = schatten_norm(a, p) ** p
            worst = max(worst, abs(got - want) / max(1.0, abs(want)))
    return worst <= NORM_ORACLE_RTOL, f"max relative gap to Jacobi-eigen oracle {worst:.1e}"


def check_trace_identity(trials=None) -> tuple[bool, str]:
    rng = np.random.default_rng(103)
    worst = 0.0
    for _ in range(200):
        m, n = rng.integers(1, 12, size=2)
        f = rng.normal(size=(m, n))
        v = rng.normal(size=n)
        w = rng.normal(size=m)
        worst = max(worst, abs(trace_pairing(f, v, w) - inner(apply(f, v), w)))
    return worst <= TRACE_TOL, f"200 triples, max |tr(f o (v x w)) - <f v, w>| = {worst:.1e}"


def check_projection(trials=None) -> tuple[bool, str]:
    rng = np.random.default_rng(104)
    worst = {"feas": 0.0, "idem": 0.0, "vi": -math.inf}
    for p in P_GRID:
        for _ in range(100):
            m, n = rng.integers(1, 9, size=2)
            f = rng.normal(size=(m, n)) * rng.uniform(0.1, 4.0)
            ball = BallSpec(p, float(rng.uniform(0.2, 2.0)))
            P = project_schatten_ball(f, ball)
            worst["feas"] = max(worst["feas"], schatten_norm(P, p) / ball.c - 1.0)
            worst["idem"] = max(worst["idem"], float(np.abs(project_schatten_ball(P, ball) - P).max()))
            r = f - P
            for _ in range(5):
                g = rng.normal(size=(m, n))
                g *= ball.c * rng.uniform(0, 1) / max(schatten_norm(g, p), 1e-300)
                d = g - P
                scale = max(1e-300, float(np.linalg.norm(r) * np.linalg.norm(d)))
                worst["vi"] = max(worst["vi"], float(np.sum(r * d)) / scale)
    ok = worst["feas"] <= PROJ_FEAS_RTOL and worst["idem"] <= PROJ_IDEM_TOL and worst["vi"] <= PROJ_VI_RTOL
    return ok, (
        f"p in {{1,1.5,2,3,inf}} x 100: feasibility excess {worst['feas']:.1e}, "
        f"idempotence {worst['idem']:.1e}, normalized <f-Pf, g-Pf> <= {worst['vi']:.1e}"
    )


def check_comparator(trials=None) -> tuple[bool, str]:
    worst_norm = worst_loss = 0.0
    for T in (4, 16, 64):
        for p in P_GRID:
            s = schatten_lower_stream(T, p, 1.0, seed=T)
            worst_norm = max(worst_norm, abs(schatten_norm(s.comparator, p) - 1.0))
            want = 0.0 if math.isinf(p) else T * (1.0 - T ** (-1.0 / p)) ** 2
            worst_loss = max(worst_loss, abs(squared_loss_total(s.comparator, s.xs, s.ys) - want))
    ok = worst_norm <= COMPARATOR_NORM_TOL and worst_loss <= COMPARATOR_LOSS_TOL
    return ok, f"max |norm - c| {worst_norm:.1e}, max |loss - closed form| {worst_loss:.1e}"


def check_separation_structure(trials=None) -> tuple[bool, str]:
    rng = np.random.default_rng(106)
    problems = []
    # |S_t| <= 4T for unit-ball targets, including the extremal flat target
    max_ratio = 0.0
    for T in (1, 4, 16, 64):
        learner = ExpertsLearner(ExpertsConfig(T, 8 * T))
        flat = np.zeros(8 * T)
        flat[: 4 * T] = 1.0 / math.sqrt(4 * T)
        targets = [flat] + [rng.normal(size=8 * T) for _ in range(50)]
        for y in targets:
            y = y / max(1.0, np.linalg.norm(y))
            max_ratio = max(max_ratio, learner.index_set(y).size / (4 * T))
    if max_ratio > 1:
        problems.append("|S_t| > 4T")
    # ||f_k(x)|| <= 1 on the l1 ball for k up to 2^16
    worst_fk = 0.0
    d_in = (2**16).bit_length()
    for _ in range(1000):
        k = int(rng.integers(0, 2**16 + 1))
        x = rng.normal(size=d_in)
        x *= rng.uniform(0, 1) ** 0.25 / np.abs(x).sum()
        worst_fk = max(worst_fk, float(np.linalg.norm(apply(binary_index_rank_one(k, d_in), x))))
    if worst_fk > 1 + 1e-12:
        problems.append("||f_k(x)|| > 1")
    # switch identity and per-round case analysis on generated streams
    switch_mismatch = 0
    worst_term = -math.inf
    for s in range(50):
        T = int(rng.choice([16, 32, 64]))
        k = int(rng.integers(1, T + 1))
        mode = "dense" if s % 2 else "basis"
        noise = 0.0 if s % 3 else 0.05
        stream = separation_stream(T, T, k, seed=1000 + s, instance_mode=mode, noise=noise)
        learner = ExpertsLearner(ExpertsConfig(T, T))
        for x, y in stream:
            learner.update(x, y)
        terms = an.separation_case_terms(stream, k)
        if terms.size:
            worst_term = max(worst_term, float(terms.max()) * T)
        t_star = an.switch_round(stream, k)
        if t_star is None:
            continue
        r_star = int(np.flatnonzero(learner.sorted_list(t_star) == k)[0]) + 1
        f_k = binary_index_operator(k, T)
        for t in range(t_star + 1, T + 1):
            x = stream.xs[t - 1]
            if not np.array_equal(learner.expert_predict(t_star, r_star, t, x), f_k @ x):
                switch_mismatch += 1
    if switch_mismatch:
        problems.append(f"{switch_mismatch} switch-identity mismatches")
    if worst_term > 1:
        problems.append("2ac - a^2 > 1/T")
    detail = (
        f"max |S_t|/4T {max_ratio:.3f}, max ||f_k(x)|| {worst_fk:.6f}, "
        f"switch mismatches {switch_mismatch}, max T(2ac - a^2) {worst_term:.3f}"
    )
    return not problems, detail


def check_witness(trials=None) -> tuple[bool, str]:
    n = _trials(trials, 200)
    parts, ok = [], True
    for T in (8, 64, 512):
        res = an.rad_separation_witness(T, n, seed=107 + T)
        ok &= res.exact == T / 2 and res.holds
        parts.append(f"T={T}: {res.mc_mean:.2f} vs {res.exact:g} (se {res.stderr:.2f})")
    return ok, "; ".join(parts)


# -- quantitative reproductions ----------------------------------------------------


def _lower_bound_learners(p):
    def zero(s):
        return ZeroLearner(s.d_out, s.d_in)

    def ogd(s):
        return OgdLearner(OgdConfig(BallSpec(p, 1.0), T_hint=s.T, target_radius=1.0), s.d_in)

    def experts(s):
        return ExpertsLearner(ExpertsConfig(s.T, s.d_in))

    return {"zero": zero, "ogd": ogd, "experts": experts}


def check_adversarial_lower_bound(trials=None) -> tuple[bool, str]:
    n = _trials(trials, 200)
    T = 256
    parts, ok = [], True
    for p in (2, 4, math.inf):
        target = T ** (1.0 - (0.0 if math.isinf(p) else 1.0 / p))
        for name, factory in _lower_bound_learners(p).items():
            seeds = an.trial_seeds(108, n)
            regrets, losses = [], []
            for s in seeds:
                stream = schatten_lower_stream(T, p, 1.0, s)
                rep = an.run_regret(factory(stream), stream)
                regrets.append(rep.regret)
                losses.append(rep.learner_loss)
            mean, se = an.mean_stderr(regrets)
            good = mean >= target - 3 * se
            if math.isinf(p):
                good &= float(np.mean(losses)) >= T * (1 - 0.05)
            ok &= good
            parts.append(f"p={p:g} {name} {mean:.1f}>={target:.1f}")
    return ok, ", ".join(parts)


def check_ogd_sandwich(trials=None) -> tuple[bool, str]:
    n = _trials(trials, 200)
    ok, parts = True, []

    def factory(s):
        return OgdLearner(OgdConfig(BallSpec(2, 1.0), T_hint=s.T, target_radius=1.0), s.d_in)

    for T in (256, 1024):
        mean, se = an.mc_expected_regret(factory, lambda s, T=T: schatten_lower_stream(T, 2, 1.0, s), n, 109)
        env = 8 * math.sqrt(T)
        ok &= mean <= env + 3 * se
        parts.append(f"T={T}: {mean:.1f} <= {env:.0f}")
    horizons = [64, 128, 256, 512, 1024, 2048, 4096]
    fit_trials = min(n, 10)
    means, ses = [], []
    for T in horizons:
        m, se = an.mc_expected_regret(
            factory, lambda s, T=T: schatten_lower_stream(T, 2, 1.0, s), fit_trials, 110
        )
        means.append(m)
        ses.append(se)
    fit = an.rate_fit(horizons, means, ses)
    ok &= 0.4 <= fit.slope <= 0.6
    parts.append(f"slope over 64..4096 = {fit.slope:.3f} (r2 {fit.r_squared:.4f})")
    return ok, "; ".join(parts)


def check_experts_regret(trials=None) -> tuple[bool, str]:
    ok, parts = True, []
    rng = np.random.default_rng(111)
    for T in (64, 256):
        env = an.experts_envelope(T)
        worst = -math.inf
        for s in range(50):
            k = int(rng.integers(1, T + 1))
            stream = separation_stream(T, T, k, seed=2000 + s, instance_mode="dense")
            rep = an.run_regret(ExpertsLearner(ExpertsConfig(T, T)), stream, comparator="both")
            worst = max(worst, rep.regret)
        ok &= worst <= env
        parts.append(f"T={T}: worst {worst:.2f} <= {env:.1f}")
    return ok, "; ".join(parts)


def check_rademacher_sums(trials=None) -> tuple[bool, str]:
    n = _trials(trials, 500)
    ok, parts = True, []
    for T in (16, 128):
        trees = [
            (an.orthogonal_tree(T), "jacobi"),
            (an.random_predictable_tree(T, T, seed=112), "lapack"),
        ]
        for tree, method in trees:
            norms = an.rademacher_sum_norms(tree, [1, 2, 4], n, 113 + T, svd_method=method)
            for q, vals in norms.items():
                mean, se = an.mean_stderr(vals)
                bound = an.rademacher_sum_bound(T, q)
                ok &= an.RademacherSumCheck(mean, se, bound).holds
                if tree.name == "orthogonal" and q == 2:
                    ok &= abs(mean - bound) <= TIGHT_TREE_TOL and se <= TIGHT_TREE_TOL
            parts.append(f"T={T} {tree.name} ok")
    return ok, f"{n} paths, q in {{1,2,4}}: " + ", ".join(parts)


def check_batch(trials=None) -> tuple[bool, str]:
    n_trials = _trials(trials, 100)
    rules = {"erm": an.erm_rule(), "o2b": an.online_to_batch_rule()}
    ok, parts = True, []
    for construction in ("b1", "b2"):
        for n in (8, 32):
            for name, rule in rules.items():
                res = an.batch_lower_bound_check(rule, 2, 1.0, n, n_trials, 114 + n, construction)
                ok &= res.holds
                parts.append(f"{construction} n={n} {name} {res.mean_excess:.4f}>={res.bound:.4f}")
    for n in (8, 32):
        for name, rule in rules.items():
            res = an.batch_lower_bound_check(rule, 64, 1.0, n, n_trials, 115 + n, "b1")
            ok &= res.mean_excess >= 1.0 / 20.0
            parts.append(f"b1 p=64 n={n} {name} {res.mean_excess:.3f}>=0.05")
    return ok, ", ".join(parts)


def check_kernel(trials=None) -> tuple[bool, str]:
    ok, worst = True, -math.inf
    for kernel, params in (("gaussian", {"bandwidth": 0.1}), ("constant", {"value": 1.0})):
        for d in (16, 64, 256):
            spec = KernelSpec(kernel, d, params)
            gap = schatten_norm(kernel_operator(spec), 2) - kernel_l2_norm(spec)
            worst = max(worst, gap)
            ok &= gap <= KERNEL_TOL
    return ok, f"max ||f_K||_2 - ||K||_L2 = {worst:.1e}"


def check_cli_determinism(trials=None) -> tuple[bool, str]:
    from .cli import main

    outputs = []
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "out"
        cfg = Path(tmp) / "config.json"
        config = {"experiment": "thm2-p2", "seed": 7, "trials": 4, "emit": ["csv", "json"], "output_dir": str(out)}
        cfg.write_text(json.dumps(config))
        for _ in range(2):
            code = main(["run", str(cfg), "--quiet"])
            if code != 0:
                return False, f"run exited with {code}"
            outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
            for p in out.iterdir():
                p.unlink()
    a, b = outputs
    return a == b and bool(a), f"two runs, files {sorted(a)} byte-identical: {a == b}"


CRITERIA: list[Criterion] = [
    Criterion(1, "SVD invariants", "unit", check_svd_invariants),
    Criterion(2, "Schatten norm vs eigen oracle", "unit", check_norm_oracle),
    Criterion(3, "trace identity", "unit", check_trace_identity),
    Criterion(4, "Schatten-ball projection", "unit", check_projection),
    Criterion(5, "lower-bound comparator exactness", "unit", check_comparator),
    Criterion(6, "separation-class structure", "unit", check_separation_structure),
    Criterion(7, "Rademacher separation witness", "unit", check_witness),
    Criterion(8, "adversarial lower bound", "paper", check_adversarial_lower_bound),
    Criterion(9, "OGD sandwich and rate", "paper", check_ogd_sandwich),
    Criterion(10, "experts regret on separation streams", "paper", check_experts_regret),
    Criterion(11, "Rademacher sums of rank-one operators", "paper", check_rademacher_sums),
    Criterion(12, "batch excess-risk lower bounds", "paper", check_batch),
    Criterion(13, "kernel operator HS bound", "paper", check_kernel),
    Criterion(14, "end-to-end determinism", "paper", check_cli_determinism),
]


def select(suite: str = "all") -> list[Criterion]:
    if suite == "all":
        return list(CRITERIA)
    if suite not in ("unit", "paper"):
        raise ValueError(f"unknown suite {suite!r}")
    return [c for c in CRITERIA if c.suite == suite]


def run_criterion(criterion: Criterion, trials: int | None = None) -> CriterionResult:
    start = time.perf_counter()
    try:
        passed, detail = criterion.check(trials)
    except Exception as exc:  # a crash is a failed criterion, reported not raised
        passed, detail = False, f"error: {type(exc).__name__}: {exc}"
    return CriterionResult(criterion.number, criterion.title, bool(passed), detail, time.perf_counter() - start)


def run_suite(suite: str = "all", trials: int | None = None, echo: Callable[[str], None] | None = None):
    results = []
    for criterion in select(suite):
        res = run_criterion(criterion, trials)
        if echo:
            echo(res.line())
        results.append(res)
    return results
