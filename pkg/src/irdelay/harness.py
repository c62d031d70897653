"""Config-driven pipeline: analytics, simulation, tail fits, comparisons.

One JSON document describes a whole experiment (channel, codeword law,
protocol, run sizes, analysis settings). Each command reads it, does its
stage, and writes plain CSV/JSON artifacts into a per-run directory named
by config hash and seed, so outputs are reproducible byte-for-byte apart
from the wall-time entry in the manifest.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import estimator, protocols, ratefn
from .channel import ChannelSpec, iid_spec, markov_spec
from .protocols import CodewordDist, ProtocolConfig


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "channel": {"k": 0, "gamma": 0.25},
    "codeword": {"lambda": 0.01, "mean": None, "bound": None, "min_length": 1},
    "protocol": {"beta": 0.5, "r": 1, "mode": "memory",
                 "max_attempts": protocols.DEFAULT_MAX_ATTEMPTS},
    "run": {"n_trials": 100_000, "master_seed": 1, "output_dir": "runs"},
    "analysis": {"n_max": 200, "fit_window": None,
                 "b_grid": [200, 400, 600, 800], "tolerance": 0.15},
}


def _merge(base, override):
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    spec: ChannelSpec
    dist: CodewordDist
    protocol: ProtocolConfig
    n_trials: int
    master_seed: int
    output_dir: str
    n_max: int
    fit_window: tuple | None
    b_grid: list
    tolerance: float

    @classmethod
    def from_dict(cls, doc):
        doc = _merge(DEFAULT_CONFIG, doc)
        ch = doc["channel"]
        try:
            if ch.get("k", 0) == 0:
                spec = iid_spec(ch["gamma"])
            else:
                spec = markov_spec(ch["k"], ch["transition"])
        except KeyError as exc:
            raise ConfigError(f"channel config missing field {exc}") from exc
        cw = doc["codeword"]
        if cw.get("lambda") is not None:
            dist = CodewordDist(lam=cw["lambda"], bound=cw.get("bound"),
                                min_length=cw.get("min_length", 1))
        elif cw.get("mean") is not None:
            dist = CodewordDist.from_mean(cw["mean"], bound=cw.get("bound"),
                                          min_length=cw.get("min_length", 1))
        else:
            raise ConfigError("codeword config needs 'lambda' or 'mean'")
        pr = doc["protocol"]
        protocol = ProtocolConfig(spec=spec, dist=dist, beta=pr["beta"],
                                  r=pr["r"], mode=pr["mode"],
                                  max_attempts=pr["max_attempts"])
        run = doc["run"]
        an = doc["analysis"]
        window = an.get("fit_window")
        return cls(
            raw=doc,
            spec=spec,
            dist=dist,
            protocol=protocol,
            n_trials=int(run["n_trials"]),
            master_seed=int(run["master_seed"]),
            output_dir=run["output_dir"],
            n_max=int(an["n_max"]),
            fit_window=tuple(window) if window else None,
            b_grid=list(an["b_grid"]),
            tolerance=float(an["tolerance"]),
        )

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def rate_params(self):
        return ratefn.RateParams(beta=self.protocol.beta, lam=self.dist.lam,
                                 r=self.protocol.r, spec=self.spec,
                                 n_max=self.n_max)

    def run_dir(self):
        tag = f"{protocols.config_hash(self.protocol)}-s{self.master_seed}"
        path = os.path.join(self.output_dir, tag)
        os.makedirs(path, exist_ok=True)
        return path


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_rates(config, out_dir=None):
    """Compute the full analytical report and write rates.json."""
    report = ratefn.build_report(config.rate_params(), b_grid=config.b_grid)
    out_dir = out_dir or config.run_dir()
    doc = report.to_dict()
    _write_json(os.path.join(out_dir, "rates.json"), doc)
    return report


def format_rates(report):
    lines = [f"alpha                 {report.alpha}"]
    for n in sorted(report.lambda_n):
        lines.append(f"Lambda_{n:<3d}            {report.lambda_n[n]:.6g}"
                     f"   (mu_{n} = {report.mu[n]:.6g})")
    lines += [
        f"Lambda1_o / Lambda2_o  {report.lambda1_o:.6g} / {report.lambda2_o:.6g}",
        f"Lambda3_o              {report.lambda3_o:.6g}",
        f"n1_o / n2_o            {report.n1_o} / {report.n2_o}",
        f"memory decay bounds    [{report.memory_bounds[0]:.6g}, "
        f"{report.memory_bounds[1]:.6g}]  (r=1 exact "
        f"{report.memory_rate_r1:.6g})",
        f"waist multiplier       {report.finite_waist_multiplier}",
        f"main-body rate         {report.lambda_b:.6g}",
    ]
    thr = report.threshold
    if thr.kind == "heavy":
        extra = " (zero throughput)" if thr.zero_throughput else ""
        lines.append(f"tail class             heavy, exponent "
                     f"{thr.exponent:.4g}{extra}")
    elif thr.kind == "light":
        lines.append(f"tail class             light, rate {thr.rate:.6g}")
    else:
        lines.append("tail class             boundary (beta == gamma)")
    for b, entry in report.nb.items():
        lines.append(f"n_b(b={b})             {entry['value']:.6g} "
                     f"[{entry['branch']}, asymptote {entry['asymptote']:.6g}]")
    if report.throughput_exponent is not None:
        lines.append(f"throughput exponent    {report.throughput_exponent:.6g}")
    return "\n".join(lines)


def cmd_simulate(config, out_dir=None):
    """Run the configured batch; write trials.csv and manifest.json."""
    records, manifest = protocols.run_batch(config.protocol, config.n_trials,
                                            config.master_seed)
    out_dir = out_dir or config.run_dir()
    protocols.records_to_csv(records, os.path.join(out_dir, "trials.csv"))
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return records, manifest


def theory_prediction(config):
    """Theoretical tail prediction for the configured protocol."""
    params = config.rate_params()
    if config.protocol.mode == "no-memory":
        thr = ratefn.threshold_classify(params)
        if thr.kind == "heavy":
            return {"kind": "power-law", "value": thr.exponent}
        if thr.kind == "light":
            return {"kind": "exponential", "value": thr.rate}
        return {"kind": "boundary", "value": None}
    lower, upper, exact_r1 = ratefn.memory_decay_bounds(params)
    if config.protocol.r == 1:
        return {"kind": "exponential", "value": exact_r1,
                "bracket": [lower, upper]}
    return {"kind": "exponential", "value": 0.5 * (lower + upper),
            "bracket": [lower, upper]}


def cmd_estimate(config, records, out_dir=None):
    """Fit the delay tail and compare against the theory prediction."""
    delays = np.array([r.delay for r in records], dtype=float)
    censored = np.array([r.censored for r in records], dtype=bool)
    censor_frac = censored.mean() if censored.size else 0.0
    values, tail, _ = estimator.empirical_ccdf(delays, censored)
    prediction = theory_prediction(config)
    result = {
        "prediction": prediction,
        "censoring_fraction": float(censor_frac),
    }
    if censor_frac > 0.05:
        result["status"] = "INVALID"
        result["reason"] = "censoring fraction above 5%"
        window = None
    else:
        window = config.fit_window or estimator.default_window(
            values, tail, len(records))
        result["window"] = list(window)
    if window is None:
        pass
    elif prediction["kind"] == "power-law":
        fit = estimator.fit_power_law(values, tail, window)
        alt = estimator.fit_exponential(values, tail, window)
        ratio = fit.slope / prediction["value"]
        ok = abs(ratio - 1.0) <= config.tolerance and \
            fit.r_squared > alt.r_squared
        result.update(fit=fit.to_dict(), alt_fit=alt.to_dict(),
                      ratio=ratio, status="PASS" if ok else "FAIL")
    elif prediction["kind"] == "exponential":
        fit = estimator.fit_exponential(values, tail, window)
        if "bracket" in prediction:
            lo, hi = prediction["bracket"]
            ok = (1 - config.tolerance) * lo <= fit.slope \
                <= (1 + config.tolerance) * hi
            ratio = fit.slope / prediction["value"]
        else:
            ratio = fit.slope / prediction["value"]
            ok = abs(ratio - 1.0) <= config.tolerance
        result.update(fit=fit.to_dict(), ratio=ratio,
                      status="PASS" if ok else "FAIL")
    else:
        result["status"] = "SKIPPED"
        result["reason"] = "beta == gamma boundary case"
    out_dir = out_dir or config.run_dir()
    _write_json(os.path.join(out_dir, "estimate.json"), result)
    estimator.ccdf_to_csv(values, tail, os.path.join(out_dir, "ccdf.csv"))
    return result


def cmd_throughput(config, b_grid=None, out_dir=None):
    """Measured throughput over a bound grid vs the predicted decay rate."""
    b_grid = b_grid or config.b_grid
    params = config.rate_params()
    predicted = ratefn.throughput_exponent(params)
    rows = []
    for b in b_grid:
        dist = CodewordDist(lam=config.dist.lam, bound=b,
                            min_length=config.dist.min_length)
        proto = ProtocolConfig(spec=config.spec, dist=dist,
                               beta=config.protocol.beta, r=1,
                               mode="no-memory",
                               max_attempts=config.protocol.max_attempts)
        records, _ = protocols.run_batch(proto, config.n_trials,
                                         config.master_seed + b)
        total_l = sum(r.length for r in records)
        total_t = sum(r.delay for r in records)
        rows.append({"b": b,
                     "throughput": config.protocol.beta * total_l / total_t})
    slope = None
    if len(rows) >= 2:
        xs = [row["b"] for row in rows]
        ys = [-math.log(row["throughput"]) for row in rows]
        slope, _, _ = estimator._linear_fit(xs, ys)
    doc = {"rows": rows, "fitted_decay": slope, "predicted_decay": predicted}
    if predicted is None:
        doc["status"] = "NOT_APPLICABLE"
        doc["reason"] = "needs beta > gamma and lambda < Lambda_1"
    else:
        doc["status"] = "PASS" if slope is not None and \
            slope >= 0.7 * predicted else "FAIL"
    out_dir = out_dir or config.run_dir()
    _write_json(os.path.join(out_dir, "throughput.json"), doc)
    return doc


EXAMPLE_SETTINGS = {
    1: {"channel": {"k": 0, "gamma": 0.25},
        "codeword": {"lambda": 0.01},
        "protocol": {"beta": 0.5, "mode": "memory"},
        "sweep": {"r": [1, 3, 5], "bound": [None]}},
    2: {"channel": {"k": 0, "gamma": 0.1},
        "codeword": {"lambda": 0.01},
        "protocol": {"beta": 0.75, "r": 1, "mode": "memory"},
        "sweep": {"r": [1], "bound": [200, 400, 600, 800, None]}},
    3: {"channel": {"k": 0, "gamma": 0.2},
        "codeword": {"lambda": 0.01},
        "protocol": {"beta": 0.25, "r": 1, "mode": "no-memory"},
        "sweep": {"r": [1], "bound": [200, 400, 600, 800, None]}},
}


def cmd_reproduce(example, out_root, n_trials=200_000, master_seed=7):
    """Re-run one of the three benchmark scenarios and emit CCDF CSVs."""
    if example not in EXAMPLE_SETTINGS:
        raise ConfigError(f"unknown example {example}; choose 1, 2 or 3")
    setting = EXAMPLE_SETTINGS[example]
    os.makedirs(out_root, exist_ok=True)
    summary = {"example": example, "n_trials": n_trials, "cells": []}
    for r in setting["sweep"]["r"]:
        for bound in setting["sweep"]["bound"]:
            doc = {
                "channel": setting["channel"],
                "codeword": dict(setting["codeword"], bound=bound),
                "protocol": dict(setting["protocol"], r=r),
                "run": {"n_trials": n_trials, "master_seed": master_seed,
                        "output_dir": out_root},
            }
            config = ExperimentConfig.from_dict(doc)
            records, manifest = protocols.run_batch(config.protocol, n_trials,
                                                    master_seed)
            tag = f"r{r}-b{bound if bound is not None else 'inf'}"
            delays = np.array([rec.delay for rec in records], dtype=float)
            attempts = np.array([rec.attempts for rec in records], dtype=float)
            cens = np.array([rec.censored for rec in records], dtype=bool)
            dv, dt, _ = estimator.empirical_ccdf(delays, cens)
            av, at, _ = estimator.empirical_ccdf(attempts, cens)
            estimator.ccdf_to_csv(dv, dt, os.path.join(
                out_root, f"ccdf-delay-{tag}.csv"))
            estimator.ccdf_to_csv(av, at, os.path.join(
                out_root, f"ccdf-attempts-{tag}.csv"))
            cell = {"tag": tag, "r": r, "bound": bound,
                    "censored": int(cens.sum())}
            cell["theory"] = theory_prediction(config)
            if bound is not None:
                fs = ratefn.finite_support_report(config.rate_params(), bound)
                cell["theory_waist_delay"] = fs["waist"]
                nb_value, branch, asym = ratefn.n_b(config.spec,
                                                    config.protocol.beta,
                                                    bound)
                cell["theory_nb"] = {"value": nb_value, "branch": branch,
                                     "asymptote": asym}
            summary["cells"].append(cell)
    _write_json(os.path.join(out_root, "summary.json"), summary)
    return summary
