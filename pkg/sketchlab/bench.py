from __future__ import division

import json
import time
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
import tqdm
from scipy import linalg
from terminaltables import AsciiTable

from sketchlab import multipliers as mp
from sketchlab import recipes
from sketchlab.rangefinder import (
    ErrorEstimator, doubling_block_sizes, range_finder, recursive_range_finder, theoretical_error_bound)
from sketchlab.utils.datasets import TrialInputs, known_tail
from sketchlab.utils.linalg import singular_values
from sketchlab.utils.parse_config import load_config
from sketchlab.utils.utils import InvalidArgument, RngStream, SketchlabError, as_rng, trial_seed


SCHEMA_VERSION = 1


class ExperimentConfig(object):
    """Settings of one experiment; unknown keys are rejected.

    ``multiplier`` is a recipe name (see ``recipes.RECIPES``) or a descriptor
    (dict or JSON string). ``l`` wins over ``oversampling`` (l = r + oversampling);
    ``block_sizes`` (a list adding up to n, or ``doubling`` for 8, 8, 16, 32, ...)
    switches to the recursive range finder. ``tau`` is a number,
    ``auto`` for tau_factor * sigma_{r+1}(M), or ``bound`` for the Markov tolerance
    E(f) * sigma_{r+1}(M) / failure_probability from the ``tau_bound`` (primal or dual)
    error-factor bound. ``r`` defaults to the generator's rank or to
    numerical_rank(M, xi).
    """

    defaults = {
        "name": "experiment",
        "input": "svd",
        "input_params": {"n": 256, "r": 8},
        "multiplier": "gaussian",
        "l": None,
        "oversampling": 12,
        "block_sizes": None,
        "random_columns": False,
        "normalize": False,
        "tau": "auto",
        "tau_factor": 10.0,
        "tau_bound": "dual",
        "failure_probability": 0.05,
        "estimator": "exact",
        "frievalds_k": 8,
        "power_iterations": 0,
        "trials": 10,
        "seed": 0,
        "xi": 1e-5,
        "r": None,
        "fresh_input": True,
        "workers": 1,
        "logdir": None,
    }

    def __init__(self, **kwargs):
        unknown = set(kwargs) - set(self.defaults)
        if unknown:
            raise InvalidArgument(f"unknown experiment settings: {', '.join(sorted(unknown))}")
        for key, value in self.defaults.items():
            setattr(self, key, kwargs.get(key, value))
        self.input_params = dict(self.input_params or {})
        if int(self.trials) < 1:
            raise InvalidArgument(f"trials must be at least 1, got {self.trials}")
        if self.tau not in ("auto", "bound") and not float(self.tau) >= 0:
            raise InvalidArgument(f"tau must be 'auto', 'bound' or non-negative, got {self.tau}")
        if self.tau_bound not in ("primal", "dual"):
            raise InvalidArgument(f"tau_bound must be primal or dual, got {self.tau_bound!r}")
        if not 0 < float(self.failure_probability) < 1:
            raise InvalidArgument(f"failure_probability must lie in (0, 1), got {self.failure_probability}")
        if self.tau == "bound" and self.block_sizes:
            raise InvalidArgument("tau='bound' needs a fixed l and cannot drive the recursive range finder")
        if self.estimator not in ("exact", "frievalds"):
            raise InvalidArgument(f"unknown estimator {self.estimator!r}")
        if isinstance(self.block_sizes, int):
            self.block_sizes = [self.block_sizes]
        if isinstance(self.block_sizes, str) and self.block_sizes != "doubling":
            raise InvalidArgument(f"block_sizes must be a list of sizes or 'doubling', got {self.block_sizes!r}")

    def __repr__(self):
        return f"ExperimentConfig({self.to_dict()})"

    def to_dict(self):
        return {key: getattr(self, key) for key in self.defaults}

    def replace(self, **kwargs):
        settings = self.to_dict()
        settings.update(kwargs)
        return ExperimentConfig(**settings)


def experiment_config_from_sections(config):
    """Maps the [experiment], [input], [multiplier] and [estimator] sections onto an ExperimentConfig."""
    settings = dict(config.get("experiment", {}))
    if "input" in config:
        params = dict(config["input"])
        settings["input"] = params.pop("kind", settings.get("input", "svd"))
        settings["input_params"] = params
    if "multiplier" in config:
        section = dict(config["multiplier"])
        if "descriptor" in section:
            settings["multiplier"] = section.pop("descriptor")
        elif "recipe" in section:
            settings["multiplier"] = section.pop("recipe")
        settings.update(section)
    if "estimator" in config:
        section = config["estimator"]
        settings["estimator"] = section.get("mode", "exact")
        if "k" in section:
            settings["frievalds_k"] = section["k"]
    return ExperimentConfig(**settings)


def load_experiment_config(path, **overrides):
    cfg = experiment_config_from_sections(load_config(path))
    overrides = {key: value for key, value in overrides.items() if value is not None}
    return cfg.replace(**overrides) if overrides else cfg


def build_multiplier(spec, n, rng):
    """n x n multiplier from a recipe name or a descriptor."""
    if isinstance(spec, dict) or (isinstance(spec, str) and spec.lstrip().startswith("{")):
        B = mp.create_multiplier(spec)
        if B.n != n:
            raise InvalidArgument(f"descriptor builds a {B.shape} multiplier for an input with {n} columns")
        return B
    return recipes.build(spec, n, rng)


TrialOutcome = namedtuple("TrialOutcome", ["index", "seed", "delta", "flops", "success", "l_used", "stage", "r", "tau"])


class _InputProfile(object):
    def __init__(self, M, cfg):
        self.sigma = None
        r = cfg.r
        if r is None:
            r = cfg.input_params.get("r") if cfg.input in ("svd", "factor-gaussian") else None
        if r is None:
            self.sigma = singular_values(M)
            r = int(np.count_nonzero(self.sigma > cfg.xi))
        self.r = int(r)
        self.tail = None
        self.tau = None
        if cfg.tau in ("auto", "bound"):
            tail = known_tail(cfg.input, cfg.input_params)
            if tail is None:
                if self.sigma is None:
                    self.sigma = singular_values(M)
                tail = self.sigma[self.r] if self.r < self.sigma.size else 0.0
            self.tail = float(tail)
            if cfg.tau == "auto":
                self.tau = float(cfg.tau_factor) * self.tail
        else:
            self.tau = float(cfg.tau)

    def tolerance(self, M, B, cfg):
        """tau for multiplier B; the Markov tolerance when tau is 'bound'."""
        if self.tau is not None:
            return self.tau
        return bound_tolerance(M.shape[0], M.shape[1], self.r, B, self.tail, cfg.tau_bound, cfg.failure_probability)


def bound_tolerance(m, n, r, B, tail, kind="dual", failure_probability=0.05):
    """E(f) * tail / failure_probability, so that P(Delta > tau) <= failure_probability by Markov.

    kappa(B) is 1 for multipliers unitary up to scaling and the condition number of
    the densified B otherwise.
    """
    kappa = 1.0 if B.unitary_scale() is not None else float(np.linalg.cond(mp.densify(B)))
    bound = theoretical_error_bound(m, n, r, B.width, kappa, kind)
    factor = bound.expected_f_dual if kind == "dual" else bound.expected_f
    return float(factor) * float(tail) / float(failure_probability)


def run_trial(cfg, inputs, index, profile=None):
    seed = trial_seed(cfg.seed, index)
    rng = RngStream(seed)
    M = inputs[index]
    profile = profile or _InputProfile(M, cfg)
    Bhat = build_multiplier(cfg.multiplier, M.shape[1], rng)
    estimator = ErrorEstimator(cfg.estimator, cfg.frievalds_k, seed)
    if cfg.block_sizes:
        tau = profile.tolerance(M, Bhat, cfg)
        sizes = doubling_block_sizes(Bhat.width) if cfg.block_sizes == "doubling" else cfg.block_sizes
        result = recursive_range_finder(M, Bhat, sizes, tau, estimator,
                                        power_iterations=int(cfg.power_iterations))
    else:
        l = int(cfg.l) if cfg.l is not None else profile.r + int(cfg.oversampling)
        if not 1 <= l <= Bhat.width:
            raise InvalidArgument(f"l = {l} outside 1..{Bhat.width}")
        B = mp.restrict_columns(Bhat, l=l, random=cfg.random_columns, rng=rng)
        if cfg.normalize:
            B = mp.frobenius_normalized(B)
        tau = profile.tolerance(M, B, cfg)
        result = range_finder(M, B, tau, estimator, int(cfg.power_iterations))
    return TrialOutcome(index, seed, result.delta, result.flops.total(), result.success, result.l_used, result.stage,
                        profile.r, tau)


class ExperimentReport(object):
    """Per-trial error norms of an experiment and their aggregates."""

    def __init__(self, config, outcomes, wall_time, schema_version=SCHEMA_VERSION):
        self.schema_version = schema_version
        self.config = dict(config)
        self.outcomes = [TrialOutcome(*o) for o in outcomes]
        self.wall_time = float(wall_time)
        deltas = self.deltas
        self.mean = float(np.mean(deltas))
        self.std = float(np.std(deltas))
        self.max = float(np.max(deltas))
        self.flops_mean = float(np.mean([o.flops for o in self.outcomes]))
        self.success_rate = float(np.mean([o.success for o in self.outcomes]))

    def __repr__(self):
        return (f"ExperimentReport(name={self.config.get('name')!r}, trials={len(self.outcomes)}, "
                f"mean={self.mean:.3e}, success_rate={self.success_rate:.3f})")

    @property
    def deltas(self):
        return np.array([o.delta for o in self.outcomes])

    @property
    def seeds(self):
        return [o.seed for o in self.outcomes]

    def aggregates_consistent(self):
        deltas = self.deltas
        return (self.mean == float(np.mean(deltas)) and self.std == float(np.std(deltas))
                and self.max == float(np.max(deltas)))

    def to_dict(self):
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "seeds": self.seeds,
            "deltas": self.deltas.tolist(),
            "trials": [o._asdict() for o in self.outcomes],
            "mean": self.mean,
            "std": self.std,
            "max": self.max,
            "flops_mean": self.flops_mean,
            "success_rate": self.success_rate,
            "wall_time": self.wall_time,
        }

    def to_frame(self):
        return pd.DataFrame([o._asdict() for o in self.outcomes])

    def save(self, path, fmt="json"):
        if fmt == "json":
            with open(path, "w") as fp:
                json.dump(self.to_dict(), fp, indent=2, default=_json_default)
        elif fmt == "csv":
            self.to_frame().to_csv(path, index=False)
        else:
            raise InvalidArgument(f"unknown report format {fmt!r}")

    @classmethod
    def from_dict(cls, data):
        if data.get("schema_version") != SCHEMA_VERSION:
            raise InvalidArgument(f"unsupported report schema {data.get('schema_version')}")
        outcomes = [TrialOutcome(**trial) for trial in data["trials"]]
        return cls(data["config"], outcomes, data["wall_time"], data["schema_version"])

    @classmethod
    def load(cls, path):
        with open(path, "r") as fp:
            return cls.from_dict(json.load(fp))


def _json_default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def run_experiment(cfg, logger=None, progress=True):
    """Runs ``cfg.trials`` range finder trials with seeds base ^ index.

    :param cfg: Experiment settings
    :type cfg: ExperimentConfig
    :param logger: Tensorboard logger for per-trial scalars, defaults to the one of ``cfg.logdir``
    :type logger: Logger, optional
    :param progress: Show a tqdm progress bar, defaults to True
    :type progress: bool, optional
    :return: Returns the report with trials in index order
    :rtype: ExperimentReport
    """
    start = time.time()
    inputs = TrialInputs(cfg.input, cfg.input_params, cfg.seed, cfg.trials, cfg.fresh_input)
    profile = None
    if not inputs.fresh:
        profile = _InputProfile(inputs[0], cfg)
    owned = logger is None and bool(cfg.logdir)
    if owned:
        from sketchlab.utils.logger import Logger
        logger = Logger(cfg.logdir)

    def trial(index):
        try:
            return run_trial(cfg, inputs, index, profile)
        except SketchlabError as exc:
            raise SketchlabError(f"trial {index} (seed {trial_seed(cfg.seed, index)}) failed: {exc}") from exc
        except (ValueError, linalg.LinAlgError) as exc:
            raise SketchlabError(f"trial {index} (seed {trial_seed(cfg.seed, index)}) failed: {exc}") from exc

    indices = range(int(cfg.trials))
    bar = tqdm.tqdm(total=int(cfg.trials), desc=cfg.name, disable=not progress)
    outcomes = []
    if int(cfg.workers) > 1:
        with ThreadPoolExecutor(max_workers=int(cfg.workers)) as pool:
            for outcome in pool.map(trial, indices):
                outcomes.append(outcome)
                bar.update(1)
    else:
        for index in indices:
            outcomes.append(trial(index))
            bar.update(1)
    bar.close()

    if logger is not None:
        for outcome in outcomes:
            logger.trial_summary(cfg.name, outcome.index, outcome.delta, outcome.flops, outcome.success)
        if owned:
            logger.close()
    return ExperimentReport(cfg.to_dict(), outcomes, time.time() - start)


# Tables ------------------------------------------------------------------

DESK_TRIALS = 100
FULL_TRIALS = 1000
SVD_ROWS = [(256, 8), (256, 32), (512, 8), (512, 32), (1024, 8), (1024, 32)]

BRACKETS = {
    2: (1e-9, 1e-6),
    3: (1e-9, 1e-5),
    4: (1e-9, 1e-5),
    5: (1e-9, 1e-5),
    6: (1e-7, 1e-3),
    7: (1e-6, 1e-2),
    8: (1e-9, 1e-6),
    9: (1e-9, 1e-6),
}
SVD_TABLE_MULTIPLIERS = {
    2: ["3-AH", "3-ASPH", "ternary"],
    3: ["gaussian"],
    4: ["gaussian-subcirculant"],
    5: ["sign-subcirculant"],
}
STRUCTURED_TABLE_MULTIPLIERS = ["gaussian", "toeplitz", "circulant", "3-APF", "3-APH"]
SVD_OVERSAMPLING = 2
POWER_ITERATIONS = 3


class TableRow(object):
    """One printed row; ``cells`` maps a column label to its ExperimentReport."""

    def __init__(self, label, cells, bracket):
        self.label = label
        self.cells = cells
        self.bracket = bracket

    def within(self):
        low, high = self.bracket
        return {column: low <= report.mean <= high for column, report in self.cells.items()}

    def all_within(self):
        return all(self.within().values())


class TableReport(object):
    def __init__(self, table_id, scale, rows):
        self.table_id = table_id
        self.scale = scale
        self.rows = rows

    @property
    def reports(self):
        return [report for row in self.rows for report in row.cells.values()]

    def all_within(self):
        return all(row.all_within() for row in self.rows)

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "table": self.table_id,
            "scale": self.scale,
            "rows": [{"label": row.label, "bracket": list(row.bracket),
                      "cells": {column: report.to_dict() for column, report in row.cells.items()}}
                     for row in self.rows],
        }

    def to_frame(self):
        records = []
        for row in self.rows:
            within = row.within()
            for column, report in row.cells.items():
                records.append({"table": self.table_id, "row": row.label, "column": column, "mean": report.mean,
                                "std": report.std, "max": report.max, "success_rate": report.success_rate,
                                "flops_mean": report.flops_mean, "within": within[column]})
        return pd.DataFrame(records)

    def save(self, path, fmt="json"):
        if fmt == "json":
            with open(path, "w") as fp:
                json.dump(self.to_dict(), fp, indent=2, default=_json_default)
        elif fmt == "csv":
            self.to_frame().to_csv(path, index=False)
        else:
            raise InvalidArgument(f"unknown report format {fmt!r}")

    def print_table(self):
        columns = list(self.rows[0].cells) if self.rows else []
        table = [["row"] + [f"{c} mean" for c in columns] + ["bracket", "ok"]]
        for row in self.rows:
            table.append([row.label] + [f"{row.cells[c].mean:.2e}" for c in columns]
                         + [f"[{row.bracket[0]:.0e}, {row.bracket[1]:.0e}]", "yes" if row.all_within() else "NO"])
        print(AsciiTable(table, f" Table {self.table_id} ({self.scale}) ").table)


def _svd_config(n, r, multiplier, trials, seed, workers):
    return ExperimentConfig(name=f"svd n={n} r={r} {multiplier}", input="svd", input_params={"n": n, "r": r},
                            multiplier=multiplier, oversampling=SVD_OVERSAMPLING, trials=trials, seed=seed,
                            workers=workers)


def _structured_config(kind, params, label, multiplier, trials, seed, workers):
    return ExperimentConfig(name=f"{label} {multiplier}", input=kind, input_params=params, multiplier=multiplier,
                            oversampling=0, power_iterations=POWER_ITERATIONS, trials=trials, seed=seed,
                            fresh_input=False, workers=workers)


def _table_layout(table_id, scale):
    """(row label, {column: config kwargs builder}) pairs for every row of a table."""
    desk = scale == "desk"
    rows = []
    if table_id in SVD_TABLE_MULTIPLIERS:
        for n, r in SVD_ROWS:
            rows.append((f"n={n} r={r}", {name: ("svd", (n, r, name)) for name in SVD_TABLE_MULTIPLIERS[table_id]}))
    elif table_id == 6:
        for n in ((200, 400) if desk else (200, 400, 2000, 4000)):
            for name in STRUCTURED_TABLE_MULTIPLIERS:
                rows.append((f"n={n} {name}", {name: ("laplacian", ({"n": n}, f"laplacian n={n}", name))}))
    elif table_id == 7:
        for preset in ("small", "medium", "large"):
            for name in STRUCTURED_TABLE_MULTIPLIERS:
                rows.append((f"{preset} {name}", {name: ("finite-difference",
                                                         ({"preset": preset}, f"fd {preset}", name))}))
    elif table_id == 8:
        for n, r in SVD_ROWS:
            rows.append((f"n={n} r={r}", {f"class {i}": ("svd", (n, r, f"class8-{i}")) for i in range(1, 9)}))
    elif table_id == 9:
        for i in range(18):
            cells = {"SVD": ("svd", (1024, 32, f"class-{i}"))}
            if not desk:
                cells["Laplacian"] = ("laplacian", ({"n": 400}, "laplacian n=400", f"class-{i}"))
                cells["FD"] = ("finite-difference", ({"preset": "large"}, "fd large", f"class-{i}"))
            rows.append((f"class {i}", cells))
    else:
        raise InvalidArgument(f"unknown table {table_id}, expected 2..9")
    return rows


def reproduce_table(table_id, scale="desk", trials=None, seed=0, workers=1, progress=False, rows=None):
    """Runs every cell of one of the tables 2 to 9, or of the rows with the given indices.

    Desk scale caps trials at 100 and the order at 1024; full scale runs the 1000
    trial protocol on all sizes. SVD-generated inputs use l = r + 2 and a fresh
    input per trial; the Laplacian and finite-difference inputs use l = r with
    three power iterations on one fixed matrix.
    """
    if scale not in ("desk", "full"):
        raise InvalidArgument(f"scale must be desk or full, got {scale!r}")
    table_id = int(table_id)
    if table_id not in BRACKETS:
        raise InvalidArgument(f"unknown table {table_id}, expected 2..9")
    if trials is None:
        trials = DESK_TRIALS if scale == "desk" else FULL_TRIALS
    elif scale == "desk":
        trials = min(int(trials), DESK_TRIALS)
    brackets = {"SVD": BRACKETS[table_id], "Laplacian": BRACKETS[6], "FD": BRACKETS[7]}

    layout = _table_layout(table_id, scale)
    if rows is not None:
        if any(not 0 <= i < len(layout) for i in rows):
            raise InvalidArgument(f"table {table_id} has rows 0..{len(layout) - 1}, got {list(rows)}")
        layout = [layout[i] for i in rows]

    selected = []
    for label, cells in layout:
        reports = {}
        for column, (kind, args) in cells.items():
            if kind == "svd":
                cfg = _svd_config(*args, trials=trials, seed=seed, workers=workers)
            else:
                cfg = _structured_config(kind, *args, trials=trials, seed=seed, workers=workers)
            reports[column] = run_experiment(cfg, progress=progress)
        column = next(iter(cells))
        bracket = brackets.get(column, BRACKETS[table_id]) if table_id == 9 else BRACKETS[table_id]
        selected.append(TableRow(label, reports, bracket))
    return TableReport(table_id, scale, selected)


# Gaussian norms -----------------------------------------------------------

NormSummary = namedtuple("NormSummary", [
    "m", "n", "trials", "mean_norm", "se_norm", "norm_bound", "norm_ok",
    "mean_pinv", "se_pinv", "pinv_bound", "pinv_ok", "tail_fraction", "tail_bound", "tail_ok",
    "pinv_tail_fraction", "pinv_tail_bound", "pinv_tail_ok", "notice"])


def monte_carlo_gaussian_norms(m, n, trials=500, rng=None, t=2.0):
    """Empirical means of ||G|| and ||G^+|| for m x n Gaussian G against their bounds.

    E||G|| < 1 + sqrt(m) + sqrt(n), E||G^+|| <= e sqrt(max(m, n)) / |m - n| (m != n),
    P{||G|| > t + sqrt(m) + sqrt(n)} <= exp(-t^2 / 2) and, for m = n,
    P{||G^+|| >= x} <= 2.35 sqrt(n) / x at x = 4.7 sqrt(n).
    """
    if int(trials) < 1 or int(m) < 1 or int(n) < 1:
        raise InvalidArgument(f"need positive m, n and trials, got {m}, {n}, {trials}")
    rng = as_rng(rng) if rng is not None else RngStream(0)
    norms, pinvs = [], []
    for _ in range(int(trials)):
        sigma = singular_values(rng.standard_normal((int(m), int(n))))
        norms.append(sigma[0])
        pinvs.append(1.0 / sigma[-1] if sigma[-1] > 0 else np.inf)
    norms, pinvs = np.asarray(norms), np.asarray(pinvs)
    se = lambda x: float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0

    norm_bound = 1.0 + np.sqrt(m) + np.sqrt(n)
    threshold = t + np.sqrt(m) + np.sqrt(n)
    tail_fraction = float(np.mean(norms > threshold))
    tail_bound = float(np.exp(-t ** 2 / 2.0))
    notice = ""
    if m == n:
        pinv_bound, pinv_ok, mean_pinv, se_pinv = float("nan"), None, float(np.median(pinvs)), 0.0
        notice = "E||G^+|| bound requires m != n; expectation check skipped"
        x = 4.7 * np.sqrt(n)
        pinv_tail_fraction = float(np.mean(pinvs >= x))
        pinv_tail_bound = 2.35 * np.sqrt(n) / x
        pinv_tail_ok = pinv_tail_fraction <= pinv_tail_bound
    else:
        pinv_bound = float(np.e * np.sqrt(max(m, n)) / abs(m - n))
        mean_pinv, se_pinv = float(np.mean(pinvs)), se(pinvs)
        pinv_ok = bool(mean_pinv <= pinv_bound)
        pinv_tail_fraction, pinv_tail_bound, pinv_tail_ok = float("nan"), float("nan"), None
    return NormSummary(int(m), int(n), int(trials), float(norms.mean()), se(norms), float(norm_bound),
                       bool(norms.mean() < norm_bound), mean_pinv, se_pinv, pinv_bound, pinv_ok,
                       tail_fraction, tail_bound, bool(tail_fraction <= tail_bound),
                       pinv_tail_fraction, pinv_tail_bound, pinv_tail_ok, notice)


def norms_ok(summary):
    checks = [summary.norm_ok, summary.pinv_ok, summary.tail_ok, summary.pinv_tail_ok]
    return all(check for check in checks if check is not None)


# Flop audit ---------------------------------------------------------------

AuditRow = namedtuple("AuditRow", ["family", "n", "additions", "multiplications", "flops", "flop_bound",
                                   "random_variables", "rv_bound", "exact", "ok"])

AUDIT_FAMILIES = ("AH", "ASPH", "AF", "ASPF", "random-abridged-H", "random-abridged-F", "sparse-circulant",
                  "sparse-circulant-complex", "uniformly-sparse", "abridged-f-circulant", "inverse-bidiagonal",
                  "givens", "gaussian", "toeplitz", "ternary")


def _audit_subject(family, n, d, q, rng):
    """(multiplier, flop bound, random-variable bound, bound holds with equality) for one family."""
    if family == "AH":
        return mp.abridged_hadamard(n, d), d * n, 0, True
    if family == "ASPH":
        return mp.abridged_hadamard(n, d, "ASPH", rng), (d + 1) * n, 2 * n, False
    if family == "AF":
        return mp.abridged_fourier(n, d), 1.5 * d * n, 0, False
    if family == "ASPF":
        return mp.abridged_fourier(n, d, "ASPF", rng), (1.5 * d + 1) * n, 2 * n, False
    if family == "random-abridged-H":
        return mp.randomized_abridged(n, d, "H", rng), 2 * d * n, 4 * n, False
    if family == "random-abridged-F":
        return mp.randomized_abridged(n, d, "F", rng), 2.5 * d * n, 4 * n, False
    if family == "sparse-circulant":
        return mp.sparse_f_circulant(n, q, 1.0, rng, values="sign"), q * n, 2 * q + 1, False
    if family == "sparse-circulant-complex":
        return mp.sparse_f_circulant(n, q, "random", rng, values="unit"), (2 * q - 1) * n, 2 * q + 1, False
    if family == "uniformly-sparse":
        return mp.uniformly_sparse(n, q, rng), q * n, 2 * q * n, False
    if family == "abridged-f-circulant":
        return mp.abridged_f_circulant(n, d, 1.0, rng), (3 * d + 3) * n, n, False
    if family == "inverse-bidiagonal":
        return mp.inverse_bidiagonal(n, rng), n - 1, n - 1, True
    if family == "givens":
        return mp.givens_chain(n, d, rng), 1.5 * d * n + 16 * n, 7 * n, False
    if family == "gaussian":
        return mp.gaussian(n, rng), (2 * n - 1) * n, n * n, True
    if family == "toeplitz":
        return mp.gaussian_toeplitz(n, rng), (2 * n - 1) * n, 2 * n - 1, True
    if family == "ternary":
        return mp.ternary(n, rng), (2 * n - 1) * n, n * n, True
    raise InvalidArgument(f"unknown audit family {family!r}")


def flop_audit(families=None, n=1024, params=None, seed=0):
    """Measured flops per vector apply and random variables per family against the flop table.

    ``params`` may set the depth ``d`` (default 3) and the sparsity ``q`` (default 10).
    """
    params = dict(params or {})
    d, q = int(params.get("d", 3)), int(params.get("q", 10))
    rng = RngStream(seed)
    rows = []
    for family in families or AUDIT_FAMILIES:
        B, flop_bound, rv_bound, exact = _audit_subject(family, int(n), d, q, rng)
        tally = B.flops_per_vector()
        measured = tally.additions if family in ("AH", "inverse-bidiagonal") else tally.total()
        ok = measured <= flop_bound and B.random_variables() <= rv_bound
        if exact:
            ok = ok and measured == flop_bound
        rows.append(AuditRow(family, int(n), tally.additions, tally.multiplications, tally.total(), flop_bound,
                             B.random_variables(), rv_bound, exact, bool(ok)))
    return rows


def print_audit(rows):
    table = [["family", "n", "adds", "mults", "flops", "bound", "random vars", "rv bound", "ok"]]
    for row in rows:
        table.append([row.family, row.n, row.additions, row.multiplications, row.flops, f"{row.flop_bound:g}",
                      row.random_variables, row.rv_bound, "yes" if row.ok else "NO"])
    print(AsciiTable(table, " Flop audit ").table)


def print_report(report):
    table = [["trials", "mean", "std", "max", "flops/apply", "success", "wall time"],
             [len(report.outcomes), f"{report.mean:.3e}", f"{report.std:.3e}", f"{report.max:.3e}",
              f"{report.flops_mean:.0f}", f"{report.success_rate:.3f}", f"{report.wall_time:.1f}s"]]
    print(AsciiTable(table, f" {report.config.get('name')} ").table)
