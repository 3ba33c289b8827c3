"""Minimal self-contained SVG line charts for regret reports and rate fits."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .analysis import experts_envelope, lower_envelope, ogd_envelope, minimax_envelope

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 50
COLORS = {"curve": "#1f77b4", "comparator": "#444444", "envelope": "#d62728", "fit": "#2ca02c",
          "reference": "#9467bd", "lower": "#ff7f0e"}


class ReportError(ValueError):
    pass


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Canvas:
    def __init__(self, xlim, ylim, logx=False, logy=False):
        self.logx, self.logy = logx, logy
        self.x0, self.x1 = (self._tx(v) for v in xlim)
        self.y0, self.y1 = (self._ty(v) for v in ylim)
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.items: list[str] = []
        self.legend: list[tuple[str, str, str]] = []

    def _tx(self, v):
        return math.log10(v) if self.logx else float(v)

    def _ty(self, v):
        return math.log10(v) if self.logy else float(v)

    def px(self, v) -> float:
        return LEFT + (self._tx(v) - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)

    def py(self, v) -> float:
        return HEIGHT - BOTTOM - (self._ty(v) - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)

    def polyline(self, xs, ys, role: str, label: str, dashed=False, extra=""):
        pts = " ".join(f"{_fmt(self.px(x))},{_fmt(self.py(y))}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.items.append(
            f'<polyline class="{role}" points="{pts}" fill="none" stroke="{COLORS[role]}" '
            f'stroke-width="2"{dash}{extra}/>'
        )
        self.legend.append((role, label, "dash" if dashed else "solid"))

    def line(self, xa, ya, xb, yb, role: str, label: str, extra=""):
        self.items.append(
            f'<line class="{role}" x1="{_fmt(self.px(xa))}" y1="{_fmt(self.py(ya))}" '
            f'x2="{_fmt(self.px(xb))}" y2="{_fmt(self.py(yb))}" stroke="{COLORS[role]}" '
            f'stroke-width="1.5" stroke-dasharray="3,3"{extra}/>'
        )
        self.legend.append((role, label, "dash"))

    def points(self, xs, ys, errs, role: str):
        for x, y, e in zip(xs, ys, errs):
            if e > 0 and (not self.logy or y - e > 0):
                self.items.append(
                    f'<line class="errorbar" x1="{_fmt(self.px(x))}" y1="{_fmt(self.py(y - e))}" '
                    f'x2="{_fmt(self.px(x))}" y2="{_fmt(self.py(y + e))}" stroke="{COLORS[role]}"/>'
                )
            self.items.append(
                f'<circle class="{role}" cx="{_fmt(self.px(x))}" cy="{_fmt(self.py(y))}" r="3.5" '
                f'fill="{COLORS[role]}"/>'
            )

    def _ticks(self, lo, hi, log):
        if log:
            a, b = math.floor(lo), math.ceil(hi)
            return [10.0**k for k in range(a, b + 1) if lo - 1e-9 <= k <= hi + 1e-9] or [10.0**lo]
        return list(np.linspace(lo, hi, 5))

    def render(self, title: str, xlabel: str, ylabel: str) -> str:
        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
            f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
            f'<rect x="{LEFT}" y="{TOP}" width="{WIDTH - LEFT - RIGHT}" height="{HEIGHT - TOP - BOTTOM}" '
            'fill="none" stroke="black"/>',
        ]
        for t in self._ticks(self.x0, self.x1, self.logx):
            v = t if self.logx else t
            x = LEFT + ((math.log10(v) if self.logx else v) - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
            out.append(f'<text x="{_fmt(x)}" y="{HEIGHT - BOTTOM + 15}" text-anchor="middle">{v:g}</text>')
        for t in self._ticks(self.y0, self.y1, self.logy):
            y = HEIGHT - BOTTOM - ((math.log10(t) if self.logy else t) - self.y0) / (self.y1 - self.y0) * (
                HEIGHT - TOP - BOTTOM
            )
            out.append(f'<text x="{LEFT - 6}" y="{_fmt(y + 4)}" text-anchor="end">{t:.4g}</text>')
        out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
        out.append(
            f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" transform="rotate(-90 16 {HEIGHT / 2})">'
            f"{escape(ylabel)}</text>"
        )
        out.append(f'<clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{WIDTH - LEFT - RIGHT}" '
                   f'height="{HEIGHT - TOP - BOTTOM}"/></clipPath>')
        out.append('<g clip-path="url(#plot)">')
        out.extend(self.items)
        out.append("</g>")
        for i, (role, label, style) in enumerate(self.legend):
            y = TOP + 14 + 14 * i
            dash = ' stroke-dasharray="6,4"' if style == "dash" else ""
            out.append(
                f'<line x1="{LEFT + 10}" y1="{y}" x2="{LEFT + 34}" y2="{y}" stroke="{COLORS[role]}" '
                f'stroke-width="2"{dash}/>'
            )
            out.append(f'<text x="{LEFT + 40}" y="{y + 4}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def _find(report: dict, kind: str) -> dict | None:
    if report.get("kind") == kind:
        return report
    results = report.get("results")
    if isinstance(results, dict) and isinstance(results.get(kind), dict):
        return results[kind]
    return None


def regret_svg(rep: dict) -> str:
    rows = rep.get("per_round")
    if not isinstance(rows, list) or not rows:
        raise ReportError("report has an empty per_round list")
    try:
        ts = [int(r["t"]) for r in rows]
        cum = [float(r["cumulative"]) for r in rows]
        comp = float(rep["comparator_loss"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportError(f"malformed regret report: {exc}") from None
    meta = rep.get("metadata", {})
    T = ts[-1]
    env_label, env = None, None
    if meta.get("stream") == "schatten_lower" and "p" in meta:
        env = comp + float(minimax_envelope(T, meta["p"], float(meta.get("c", 1.0))))
        env_label = "comparator + 6c^2 T^max(1/2,1-1/p)"
    elif str(meta.get("stream", "")).startswith("separation"):
        env = comp + experts_envelope(T)
        env_label = "comparator + 2 + 8 sqrt(T ln 2T)"
    ymax = max(max(cum), comp, env or 0.0) * 1.05 or 1.0
    cv = _Canvas((0, T), (0, ymax))
    cv.polyline([0] + ts, [0.0] + cum, "curve", "cumulative learner loss")
    cv.line(0, comp, T, comp, "comparator", f"comparator loss {comp:.4g}")
    if env is not None:
        cv.line(0, env, T, env, "envelope", env_label)
    return cv.render(f"regret {cum[-1] - comp:.4g} over T={T}", "round t", "cumulative loss")


def rate_svg(fit: dict) -> str:
    try:
        T = [float(v) for v in fit["horizons"]]
        y = [float(v) for v in fit["means"]]
        se = [float(v) for v in fit.get("stderrs", [0.0] * len(y))]
        slope, intercept = float(fit["slope"]), float(fit.get("intercept", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ReportError(f"malformed rate fit: {exc}") from None
    if not T or len(T) != len(y) or min(y) <= 0 or min(T) <= 0:
        raise ReportError("rate fit needs matching positive horizons and means")
    if "intercept" not in fit:
        intercept = float(np.mean(np.log(y)) - slope * np.mean(np.log(T)))
    curves = {}
    p, c = fit.get("p"), float(fit.get("c", 1.0))
    if p is not None:
        curves["lower"] = lower_envelope(T, p, c)
        p_val = math.inf if str(p) == "inf" else float(p)
        if p_val <= 2:
            curves["envelope"] = ogd_envelope(T, c)
    fitted = [math.exp(intercept) * t**slope for t in T]
    ref = [y[0] * (t / T[0]) ** 0.5 for t in T]
    everything = y + fitted + ref + [v for arr in curves.values() for v in arr]
    lo, hi = min(everything) / 1.5, max(everything) * 1.5
    cv = _Canvas((T[0], T[-1]), (lo, hi), logx=True, logy=True)
    cv.points(T, y, se, "curve")
    cv.polyline(T, fitted, "fit", f"fit slope {slope:.3f}", extra=f' data-slope="{slope:.6f}"')
    cv.line(T[0], ref[0], T[-1], ref[-1], "reference", "reference slope 0.5", extra=' data-slope="0.5"')
    if "lower" in curves:
        cv.polyline(T, curves["lower"], "lower", "c^2 T^(1-1/p)", dashed=True)
    if "envelope" in curves:
        cv.polyline(T, curves["envelope"], "envelope", "8 c^2 sqrt(T)", dashed=True)
    return cv.render("regret vs horizon (log-log)", "horizon T", "mean regret")


def report_svg(report: dict) -> str:
    """SVG for a rate fit, a regret report, or an experiment output holding either."""
    if not isinstance(report, dict):
        raise ReportError("report must be a JSON object")
    fit = _find(report, "rate_fit")
    if fit is not None:
        return rate_svg(fit)
    rep = _find(report, "regret_report")
    if rep is not None:
        return regret_svg(rep)
    raise ReportError("no regret_report or rate_fit found in report")
