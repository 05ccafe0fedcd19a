"""Subcommand pipelines and their tabular outputs.

Every pipeline returns a :class:`Report`: a fixed column list, rows of
plain values and a short text summary.  Rows are produced in a fixed
order and numbers are formatted deterministically, so a CSV depends only
on the configuration and never on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from . import chaos, feynman_kac, variational
from .config import ConfigError, echo
from .model import (EngineError, ResourceCapError, hypercontract_map, lyapunov_prediction,
                    time_rate_exponent, white_noise_rate)

REPORT_COLUMNS = ("kind", "engine", "p", "q", "lambda", "t", "value", "stderr",
                  "normalized", "normalized_err", "prediction", "margin", "diagnostic", "status")
PLOT_COLUMNS = ("series", "engine", "p", "q", "lambda", "x_name", "x", "y", "yerr")


@dataclass
class Report:
    command: str
    columns: tuple
    rows: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    E1: float = math.nan
    maximizers: dict = field(default_factory=dict)

    def add(self, **values):
        unknown = set(values) - set(self.columns)
        if unknown:
            raise KeyError(f"unknown columns {sorted(unknown)}")
        self.rows.append(tuple(values.get(c, "") for c in self.columns))

    def records(self):
        return [dict(zip(self.columns, row)) for row in self.rows]

    def to_csv(self, config):
        buf = io.StringIO()
        buf.write(echo(config))
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def summary_text(self, config):
        return echo(config) + "\n".join(self.summary) + "\n"


def fmt(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _normalized(log_value, t, model):
    return log_value * t ** -time_rate_exponent(model)


def _failure(cfg, exc):
    """Row marker for a failed engine call; only ``report`` keeps going."""
    if cfg.command != "report":
        raise exc
    return f"error:{type(exc).__name__}:{exc}"


# ---------------------------------------------------------------- variational

def run_variational(cfg):
    """Variational constant at each lambda; lambda = 1 is always included."""
    rep = Report("variational", ("lambda", "value", "iterations", "residual", "converged",
                                 "leakage"))
    if any(v <= 0 for v in cfg.lambdas):
        raise ConfigError("variational runs need positive lambdas")
    lambdas = sorted(set(cfg.lambdas) | {1.0})
    acfg = variational.AscentConfig(cfg.step, cfg.max_iter, cfg.tol)
    rows = variational.scaling_check(cfg.model(), lambdas, cfg.var_M, cfg.var_N,
                                     cfg.var_L or None, acfg)
    for lam, value, resid, res in rows:
        rep.add(**{"lambda": lam, "value": value, "iterations": res.iterations,
                   "residual": resid, "converged": res.converged,
                   "leakage": res.meta["leakage"]})
        rep.summary.append(f"E({fmt(lam)}) = {fmt(value)}  scaling residual {fmt(resid)}")
        if lam == 1.0:
            rep.E1 = value
    rep.maximizers = {lam: res.maximizer for lam, _, _, res in rows}
    return rep


def maximizer_csv(g):
    """Flat CSV ``s, x1..xd, g`` of a grid function (cell centres)."""
    import numpy as np

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["s"] + [f"x{i + 1}" for i in range(g.d)] + ["g"])
    s = (np.arange(g.M) + 0.5) * g.h
    x = g.centers()
    for idx in np.ndindex(g.values.shape):
        writer.writerow([fmt(float(s[idx[0]]))] + [fmt(float(x[i])) for i in idx[1:]]
                        + [fmt(float(g.values[idx]))])
    return buf.getvalue()


# ---------------------------------------------------------------- engines

def _fk_rows(cfg, lam, t, rep, E1=None):
    model = cfg.model(lam)
    for n in cfg.n:
        row = {"kind": "moment", "engine": "fk", "p": float(n), "lambda": lam, "t": t}
        try:
            est = feynman_kac.estimate_moment(n, t, model, cfg.samples, cfg.steps, cfg.seed,
                                              cfg.workers)
            err = est.stderr / est.value if est.value > 0 else math.inf
            scale = t ** -time_rate_exponent(model)
            row.update(value=est.value, stderr=est.stderr,
                       normalized=_normalized(est.log_value, t, model),
                       normalized_err=err * scale,
                       diagnostic="heavy_tail" if est.heavy_tail else "", status="ok")
        except (EngineError, ResourceCapError) as exc:
            row["status"] = _failure(cfg, exc)
        if E1 is not None:
            row["prediction"] = lyapunov_prediction(model, float(n), E1).coefficient
        rep.add(**row)


def _chaos_solution(cfg, lam, t):
    grid = chaos.SpaceTimeGrid(t, cfg.chaos_M, cfg.chaos_N, cfg.chaos_L, cfg.d,
                               grading=cfg.grading)
    return chaos.build_kernels(grid, cfg.model(lam), cfg.K)


def _chaos_rows(cfg, lam, t, rep, E1=None):
    model = cfg.model(lam)
    try:
        sol = _chaos_solution(cfg, lam, t)
        comps = (chaos.sample_components(sol, cfg.chaos_samples, cfg.seed, cfg.workers)
                 if lam > 0 and cfg.K <= chaos.MAX_SAMPLING_ORDER else None)
    except (EngineError, ResourceCapError) as exc:
        rep.add(kind="moment", engine="chaos", **{"lambda": lam}, t=t, status=_failure(cfg, exc))
        return
    if cfg.K <= 3:
        row = {"kind": "moment", "engine": "chaos-exact", "p": 2.0, "lambda": lam, "t": t}
        try:
            m2 = chaos.second_moment_exact(sol)
            proxy = chaos.tail_proxy(sol)
            row.update(value=m2, stderr=0.0, normalized=_normalized(math.log(m2), t, model),
                       normalized_err=0.0, diagnostic=f"truncation_proxy={fmt(proxy)}",
                       status="ok")
        except (EngineError, ResourceCapError) as exc:
            row["status"] = _failure(cfg, exc)
        if E1 is not None:
            row["prediction"] = lyapunov_prediction(model, 2.0, E1).coefficient
        rep.add(**row)
    for p in cfg.p:
        row = {"kind": "moment", "engine": "chaos", "p": p, "lambda": lam, "t": t}
        try:
            est = chaos.estimate_Lp(sol, p, cfg.chaos_samples, cfg.seed, cfg.workers, comps)
            err = est.stderr / est.value if est.value > 0 else math.inf
            scale = t ** -time_rate_exponent(model)
            row.update(value=est.value, stderr=est.stderr,
                       normalized=_normalized(est.log_value, t, model),
                       normalized_err=err * scale, status="ok")
        except (EngineError, ResourceCapError, ValueError) as exc:
            row["status"] = _failure(cfg, exc)
        if E1 is not None:
            row["prediction"] = lyapunov_prediction(model, p, E1).coefficient
        rep.add(**row)


def _hyper_rows(cfg, lam, t, rep, seed=None):
    seed = cfg.seed if seed is None else seed
    try:
        sol = _chaos_solution(cfg, lam, t)
        comps = chaos.sample_components(sol, cfg.chaos_samples, seed, cfg.workers)
    except (EngineError, ResourceCapError) as exc:
        rep.add(kind="hyper", engine="chaos", **{"lambda": lam}, t=t, status=_failure(cfg, exc))
        return []
    out = []
    for p, q in cfg.pairs:
        cmp_ = chaos.compare_norms(sol, p, q, comps)
        out.append(cmp_)
        rep.add(kind="hyper", engine="chaos", p=p, q=q, **{"lambda": lam}, t=t,
                value=cmp_.lhs, stderr=cmp_.combined_stderr, margin=cmp_.margin,
                diagnostic=f"rhs={fmt(cmp_.rhs)}", status="pass" if cmp_.passed else "fail")
    return out


FK_COLUMNS = ("n", "t", "lambda", "value", "log_value", "stderr", "normalized",
              "normalized_err", "samples", "heavy_tail")


def run_fk(cfg):
    rep = Report("fk", FK_COLUMNS)
    model = cfg.model()
    scale_exp = time_rate_exponent(model)
    for t in cfg.t:
        for n in cfg.n:
            est = feynman_kac.estimate_moment(n, t, model, cfg.samples, cfg.steps, cfg.seed,
                                              cfg.workers)
            rel = est.stderr / est.value if est.value > 0 else math.inf
            rep.add(n=n, t=t, **{"lambda": cfg.lam}, value=est.value, log_value=est.log_value,
                    stderr=est.stderr, normalized=est.log_value * t ** -scale_exp,
                    normalized_err=rel * t ** -scale_exp, samples=est.samples,
                    heavy_tail=est.heavy_tail)
            rep.summary.append(f"E u^{n}(t={fmt(t)}) = {fmt(est.value)} +/- {fmt(est.stderr)}"
                               + ("  [heavy tail]" if est.heavy_tail else ""))
    return rep


def run_simulate(cfg):
    rep = Report("simulate", REPORT_COLUMNS)
    for t in cfg.t:
        _chaos_rows(cfg, cfg.lam, t, rep)
    for r in rep.records():
        rep.summary.append(f"{r['engine']}: E|u|^{fmt(r['p'])}(t={fmt(r['t'])}) = "
                           f"{fmt(r['value'])} +/- {fmt(r['stderr'])} {r['diagnostic']}")
    return rep


def run_hyper(cfg):
    rep = Report("hyper", REPORT_COLUMNS)
    results = []
    for lam in cfg.lambdas:
        for t in cfg.t:
            results += _hyper_rows(cfg, lam, t, rep)
    passed = sum(r.passed for r in results)
    rep.summary.append(f"hypercontractive comparison passed {passed}/{len(results)}")
    return rep


def run_rates(cfg):
    rep = Report("rates", ("quantity", "argument", "value"))
    model = cfg.model()
    rep.add(quantity="time_rate_exponent", argument="", value=time_rate_exponent(model))
    rep.add(quantity="scaling_power", argument="", value=model.scaling_power)
    for n in cfg.n:
        rep.add(quantity="white_noise_rate", argument=f"n={n}",
                value=white_noise_rate(n, cfg.lam))
    for p, q in cfg.pairs:
        tau, factor = hypercontract_map(p, q)
        rep.add(quantity="hypercontract_factor", argument=f"p={fmt(p)};q={fmt(q)}", value=factor)
        rep.add(quantity="hypercontract_tau", argument=f"p={fmt(p)};q={fmt(q)}", value=tau)
    for r in rep.records():
        rep.summary.append(f"{r['quantity']}({r['argument']}) = {fmt(r['value'])}")
    return rep


def run_report(cfg):
    """Variational constant, predictions, engine estimates and comparisons."""
    rep = Report("report", REPORT_COLUMNS)
    model1 = cfg.model(1.0)
    acfg = variational.AscentConfig(cfg.step, cfg.max_iter, cfg.tol)
    res = variational.solve(model1, cfg.var_M, cfg.var_N, cfg.var_L or None, acfg)
    rep.E1 = res.value
    rep.add(kind="variational", engine="ascent", **{"lambda": 1.0}, value=res.value,
            diagnostic=f"iterations={res.iterations};leakage={fmt(res.meta['leakage'])}",
            status="ok" if res.converged else "not_converged")
    hyper = []
    for lam in cfg.lambdas:
        for t in cfg.t:
            _fk_rows(cfg, lam, t, rep, res.value)
            _chaos_rows(cfg, lam, t, rep, res.value)
            hyper += _hyper_rows(cfg, lam, t, rep)
    k = cfg.model().scaling_power
    rep.summary += [
        f"variational constant E(1) = {fmt(res.value)} "
        f"(M={cfg.var_M}, N={cfg.var_N}, converged={res.converged})",
        f"time exponent = {fmt(time_rate_exponent(model1))}, lambda exponent = {fmt(k)}",
        "",
        "normalized log-moments t^-exponent log E|u|^p against p((p-1)/2)^k lambda^k E(1):",
    ]
    for r in rep.records():
        if r["kind"] != "moment":
            continue
        line = (f"  {r['engine']:<12} p={fmt(r['p']):<4} lambda={fmt(r['lambda']):<6} "
                f"t={fmt(r['t']):<6} ")
        if r["status"] == "ok":
            line += (f"{fmt(r['normalized'])} +/- {fmt(r['normalized_err'])}  "
                     f"prediction {fmt(r['prediction'])}")
            if r["diagnostic"]:
                line += f"  [{r['diagnostic']}]"
        else:
            line += r["status"]
        rep.summary.append(line)
    passed = sum(h.passed for h in hyper)
    rep.summary += ["", f"hypercontractive comparisons passed: {passed}/{len(hyper)}"]
    for r in rep.records():
        if r["kind"] == "hyper" and r["status"] in ("pass", "fail"):
            rep.summary.append(f"  p={fmt(r['p'])} q={fmt(r['q'])} lambda={fmt(r['lambda'])} "
                               f"t={fmt(r['t'])} margin={fmt(r['margin'])} "
                               f"+/- {fmt(r['stderr'])} {r['status']}")
    return rep


def emit_plotdata(report):
    """Long-format plot table: normalized log-moment against ``t`` and margin against ``q``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PLOT_COLUMNS)
    for r in report.records():
        kind = r.get("kind")
        if r.get("status") not in ("ok", "pass", "fail"):
            continue
        if kind == "moment":
            writer.writerow(["normalized_log_moment", r["engine"], fmt(r["p"]), "",
                             fmt(r["lambda"]), "t", fmt(r["t"]), fmt(r["normalized"]),
                             fmt(r["normalized_err"])])
        elif kind == "hyper":
            writer.writerow(["margin", r["engine"], fmt(r["p"]), fmt(r["q"]), fmt(r["lambda"]),
                             "q", fmt(r["q"]), fmt(r["margin"]), fmt(r["stderr"])])
    return buf.getvalue()


RUNNERS = {"variational": run_variational, "fk": run_fk, "simulate": run_simulate,
           "hyper": run_hyper, "report": run_report, "rates": run_rates}


def run(cfg):
    return RUNNERS[cfg.command](cfg)
