"""Command-line front end.

Subcommands::

    pcgoo run <config.json> --out DIR
    pcgoo audit <config.json> --out DIR
    pcgoo figure-means --lmax N --decay R --out DIR
    pcgoo ingest-check <data.csv> [--normalize]

Exit codes: 0 success, 1 malformed input, 2 target missed, 3 audit failed,
4 audit unsupported for the configured mechanism.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import objectives as obj
from .core import Dataset, FiniteSet, ParamBall, linear_objective
from .errors import InvalidInputError, UnsupportedAuditError
from .oracles import ExactOracle, ExpMechOracle, JsonlTrace, NoisySGDOracle, wrap_divergence_oracle
from .privacy import PrivacyBudget, sensitive_swaps
from .solvers import (
    SolverConfig,
    brute_force_cgoo,
    solve_exponential_sampling,
    solve_frank_wolfe,
    solve_iterative_lopt,
)
from .synthetic import ball_net, ball_uniform, table_instance, threshold_data

EXIT_OK, EXIT_CONFIG, EXIT_TARGET, EXIT_AUDIT, EXIT_UNSUPPORTED = 0, 1, 2, 3, 4

OBJECTIVES = ("equalized_odds", "demographic_parity", "gini", "confusion_measure", "weighted_ls", "lower_bound", "table")
SOLVERS = ("exp_sampling", "iterative_lopt", "frank_wolfe")
ORACLES = ("exact", "expmech", "noisy_sgd")
AUDIT_MAX_ROWS = 200
# the injected bug under-calibrates the score sensitivity tenfold
BUG_SCALE = 0.1


class ConfigError(InvalidInputError):
    pass


class ParseError(InvalidInputError):
    pass


# ----------------------------------------------------------------- csv ingest

def ingest_csv(path, normalize: bool = False) -> Dataset:
    """Read ``feature_0..feature_{d-1},sensitive,label`` rows into a dataset.

    ``normalize`` scales rows with norm above 1 back onto the unit sphere.
    Errors name the offending line (the header is line 1).
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 3 or header[-2:] != ["sensitive", "label"]:
        raise ParseError(f"{path}: line 1: header must end with 'sensitive,label'")
    d = len(header) - 2
    expected = [f"feature_{i}" for i in range(d)]
    if header[:d] != expected:
        raise ParseError(f"{path}: line 1: expected feature columns {','.join(expected)}")
    if len(rows) == 1:
        raise ParseError(f"{path}: no data rows")
    x, a, y = [], [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: line {line}: expected {len(header)} columns, got {len(row)}")
        try:
            feats = [float(v) for v in row[:d]]
        except ValueError:
            raise ParseError(f"{path}: line {line}: non-numeric feature") from None
        if not all(math.isfinite(v) for v in feats):
            raise ParseError(f"{path}: line {line}: non-finite feature")
        for name, raw, dest in (("sensitive", row[d], a), ("label", row[d + 1], y)):
            try:
                dest.append(int(raw))
            except ValueError:
                raise ParseError(f"{path}: line {line}: {name} must be an integer") from None
        if a[-1] < 1:
            raise ParseError(f"{path}: line {line}: sensitive ids start at 1")
        x.append(feats)
    X = np.array(x, dtype=np.float64).reshape(len(x), d)
    if normalize:
        X = X / np.maximum(1.0, np.linalg.norm(X, axis=1, keepdims=True))
    try:
        return Dataset(X, np.array(a), np.array(y))
    except InvalidInputError as e:
        raise ParseError(f"{path}: {e}") from None


def write_csv(path, header, rows):
    """CSV with shortest round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


# ----------------------------------------------------------------- scenarios

@dataclass
class Scenario:
    data: Dataset
    loss: object
    f: object
    g: object
    candidates: FiniteSet | None
    ball: ParamBall | None = None
    extras: dict = field(default_factory=dict)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "RUN_SEED" in os.environ:
        try:
            cfg["seed"] = int(os.environ["RUN_SEED"])
        except ValueError:
            raise ConfigError("RUN_SEED must be an integer") from None
    return cfg


def _need(cfg: dict, key: str, choices=None):
    if key not in cfg:
        raise ConfigError(f"config is missing {key!r}")
    v = cfg[key]
    if choices is not None and v not in choices:
        raise ConfigError(f"unknown {key} {v!r}; choose from {', '.join(choices)}")
    return v


def _objective_spec(cfg: dict) -> dict:
    spec = _need(cfg, "objective")
    if isinstance(spec, str):
        spec = {"name": spec}
    if not isinstance(spec, dict):
        raise ConfigError("objective must be a name or an object with a 'name'")
    _need(spec, "name", OBJECTIVES)
    return spec


def _dataset(cfg: dict, default: str, seed: int) -> Dataset:
    spec = cfg.get("dataset", {"synthetic": default})
    if "path" in spec:
        return ingest_csv(spec["path"], bool(spec.get("normalize", False)))
    kind = spec.get("synthetic", default)
    n = int(spec.get("n", 200))
    s = int(spec.get("seed", seed))
    if kind == "threshold":
        return threshold_data(s, n, tuple(spec.get("base_rates", (0.3, 0.6))), float(spec.get("shift", 0.3)))
    if kind == "ball":
        dim = int(spec.get("dim", 2))
        k = int(spec.get("groups", 1))
        x = ball_uniform(s, n, dim)
        rng = np.random.default_rng([s, 1])
        a = np.arange(n) % k + 1
        truth = rng.normal(size=dim)
        y = (x @ truth + 0.1 * rng.normal(size=n) > 0).astype(np.int64)
        return Dataset(x, a, y)
    raise ConfigError(f"unknown synthetic generator {kind!r}")


def _threshold_candidates(cfg: dict, data: Dataset) -> FiniteSet:
    spec = cfg.get("candidates", {"kind": "threshold_grid"})
    kind = spec.get("kind", "threshold_grid")
    if kind == "threshold_grid":
        lo = float(spec.get("lo", data.features[:, 0].min()))
        hi = float(spec.get("hi", data.features[:, 0].max()))
        return FiniteSet(obj.threshold_grid(lo, hi, int(spec.get("m", 41))))
    if kind == "list":
        return FiniteSet([obj.ThresholdClassifier(float(t)) for t in _need(spec, "thresholds")])
    raise ConfigError(f"candidate kind {kind!r} does not fit a threshold scenario")


def _ball_candidates(cfg: dict, dim: int) -> FiniteSet:
    spec = cfg.get("candidates", {"kind": "ball_net"})
    if spec.get("kind", "ball_net") == "list":
        return FiniteSet([np.asarray(c, dtype=np.float64) for c in _need(spec, "points")])
    if spec.get("kind", "ball_net") != "ball_net":
        raise ConfigError("ball scenarios take a 'ball_net' or 'list' candidate set")
    return FiniteSet(list(ball_net(dim, int(spec.get("m", 200)))))


def build_scenario(cfg: dict) -> Scenario:
    seed = int(cfg.get("seed", 0))
    alpha = float(cfg.get("alpha", 0.2))
    eta = float(cfg.get("eta", 50.0))
    spec = _objective_spec(cfg)
    name = spec["name"]
    smoothing = spec.get("smoothing", "smax")

    if name == "table":
        inst = table_instance(int(spec.get("instance_seed", seed)))
        data = inst.dataset(int(cfg.get("dataset", {}).get("n", 200)))
        return Scenario(data, inst.loss, inst.f, inst.g, inst.candidates)

    if name in ("equalized_odds", "demographic_parity", "gini", "confusion_measure"):
        data = _dataset(cfg, "threshold", seed)
        A = data.n_groups
        cands = _threshold_candidates(cfg, data)
        if name == "equalized_odds":
            return Scenario(data, obj.EqualizedOddsLoss(A), obj.classification_error_objective(A),
                            obj.equalized_odds_constraint(alpha, eta, A, smoothing), cands)
        if name == "demographic_parity":
            M, c = obj.parity_moments(A, float(spec.get("slack", 0.1)))
            f = linear_objective(np.eye(A + 1)[0], name="error")
            return Scenario(data, obj.ParityLoss(A), f, obj.demographic_parity_constraint(M, c, eta, smoothing), cands)
        if name == "gini":
            f = linear_objective(np.ones(A) / A, name="mean_group_error")
            return Scenario(data, obj.GroupErrorLoss(A), f, obj.gini_constraint(float(spec.get("theta", 0.3)), A, eta, smoothing), cands)
        # binary confusion matrix with classes 1 (label 0) and 2 (label 1)
        loss = _ConfusionLoss()
        f = linear_objective([0.0, 1.0, 1.0, 0.0], name="error")
        g = linear_objective([0.0, 0.0, 1.0, 0.0], -float(spec.get("theta", 0.15)), name="false_negative_share")
        return Scenario(data, loss, f, g, cands)

    if name == "weighted_ls":
        data = _dataset(cfg, "ball", seed)
        K = int(spec.get("groups", data.n_groups))
        loss = obj.weighted_ls_itemized_loss(K)
        f = linear_objective(np.ones(K) / K, name="mean_group_loss")
        g = linear_objective(np.eye(K)[0], -float(spec.get("theta", 0.1)), name="group_1_cap")
        return Scenario(data, loss, f, g, _ball_candidates(cfg, data.dim), ParamBall(data.dim))

    # lower_bound
    dspec = cfg.get("dataset", {})
    dim = int(dspec.get("dim", 2))
    pts = ball_uniform(int(dspec.get("seed", seed)), int(dspec.get("n", 20)), dim)
    inst = obj.lower_bound_instance(pts)
    data = Dataset(pts, np.ones(len(pts), dtype=np.int64), np.zeros(len(pts), dtype=np.int64))
    f, g = obj.lower_bound_objectives(inst)
    return Scenario(data, obj.ShiftedLinearLoss(dim), f, g, _ball_candidates(cfg, dim), ParamBall(dim), {"instance": inst})


class _ConfusionLoss(obj.ItemizedGroupLoss):
    """Binary confusion matrix flattened row-major; each row is one-hot."""

    k = 4

    def itemized(self, classifier, d):
        pred = np.asarray(classifier.predict(d.features), dtype=np.int64)
        out = np.zeros((d.n, 4))
        out[np.arange(d.n), 2 * d.labels.astype(np.int64) + pred] = 1.0
        return out


def _privacy(cfg: dict) -> PrivacyBudget | None:
    p = cfg.get("privacy")
    if p is None:
        return None
    return PrivacyBudget(float(_need(p, "epsilon")), float(p.get("delta", 0.0)))


def _oracle(cfg: dict, sc: Scenario, privacy):
    name = cfg.get("oracle", "exact")
    if name not in ORACLES:
        raise ConfigError(f"unknown oracle {name!r}; choose from {', '.join(ORACLES)}")
    if name == "exact":
        return ExactOracle(sc.candidates, sc.loss, sc.data)
    if name == "expmech":
        scale = BUG_SCALE if cfg.get("sensitivity_bug") else float(cfg.get("sensitivity_scale", 1.0))
        return ExpMechOracle(sc.candidates, sc.loss, sc.data, sensitivity_scale=scale)
    if sc.ball is None:
        raise ConfigError("the noisy_sgd oracle needs a ball-parameterized scenario")
    opts = cfg.get("noisy_sgd", {})
    sigma = 0.0 if privacy is None else opts.get("sigma")
    return NoisySGDOracle(sc.ball, sc.loss, sc.data, steps=int(opts.get("steps", 200)),
                          step_size=opts.get("step_size"), sigma=sigma)


def _solver_config(cfg: dict, privacy) -> SolverConfig:
    return SolverConfig(
        alpha=float(cfg.get("alpha", 0.2)), T=cfg.get("T", 100), G=cfg.get("G", "auto"),
        tau=cfg.get("tau", "auto"), seed=int(cfg.get("seed", 0)), privacy=privacy,
        cap=int(cfg.get("cap", 10**6)), theta=float(cfg.get("theta", 0.1)),
        weight_mode=cfg.get("weight_mode", "cumulative"), pure_oracle=bool(cfg.get("pure_oracle", False)),
        literal_pseudocode=bool(cfg.get("literal_pseudocode", False)), lifted=bool(cfg.get("lifted", False)),
    )


def _clean(x):
    """JSON-safe copy: numpy scalars become floats and infinities strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run_scenario(config_path, out_dir, reproducible: bool = False) -> int:
    t0 = time.perf_counter()
    cfg = load_config(config_path)
    solver = _need(cfg, "solver", SOLVERS)
    privacy = _privacy(cfg)
    sc = build_scenario(cfg)
    conf = _solver_config(cfg, privacy)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    baseline = None
    if sc.candidates is not None:
        baseline = brute_force_cgoo(sc.candidates, sc.loss, sc.f, sc.g, sc.data)
    if cfg.get("strict") and baseline is not None and not baseline.feasible:
        print("no candidate satisfies the constraint and strict mode is on", file=sys.stderr)
        return EXIT_TARGET

    trace_path = None
    if solver == "exp_sampling":
        if privacy is None:
            raise ConfigError("exp_sampling needs a privacy section")
        res = solve_exponential_sampling(sc.candidates, sc.loss, sc.f, sc.g, sc.data, conf)
    elif solver == "frank_wolfe":
        res = solve_frank_wolfe(sc.candidates, sc.f, sc.g, conf, sc.loss, sc.data)
    else:
        oracle = _oracle(cfg, sc, privacy)
        if cfg.get("trace"):
            trace_path = str(out / "trace.jsonl")
            Path(trace_path).unlink(missing_ok=True)
            oracle.trace = JsonlTrace(trace_path)
        res = solve_iterative_lopt(oracle, sc.f, sc.g, conf, sc.loss, sc.data, trace_path=trace_path)

    report = {"result": res.to_dict(), "objective": _objective_spec(cfg)["name"], "alpha": conf.alpha}
    report["resolved"] = res.resolved
    miss = res.g_value > conf.alpha
    if baseline is not None:
        report["baseline"] = {"feasible": baseline.feasible, "f_star": baseline.f_star, "index": baseline.index}
        if baseline.feasible:
            report["baseline"]["f_gap"] = res.f_value - baseline.f_star
            miss = miss or res.f_value > baseline.f_star + conf.alpha
    report["target_met"] = not miss
    if "instance" in sc.extras:
        report["lower_bound_check"] = _lower_bound_check(sc.extras["instance"], res)
    if privacy is not None and cfg.get("oracle") == "expmech" and sc.data.n <= AUDIT_MAX_ROWS:
        report["audit"] = _audit(cfg, sc, res.resolved["eps_prime"] or privacy.epsilon).to_dict()
    if not reproducible:
        report["wall_time_s"] = time.perf_counter() - t0

    (out / "report.json").write_text(json.dumps(_clean(report), indent=2, sort_keys=True) + "\n")
    write_csv(out / "iterations.csv", ["t", "h"], [(t + 1, h) for t, h in enumerate(res.history)])
    if report.get("audit") and not report["audit"]["pass"]:
        return EXIT_AUDIT
    return EXIT_TARGET if miss else EXIT_OK


def _lower_bound_check(inst, res) -> dict:
    worst = 0.0
    members = [np.asarray(m, dtype=np.float64) for m in res.decision.members]
    for c in members:
        nrm = np.linalg.norm(c)
        if nrm == 0:
            continue
        c = c / nrm
        worst = max(worst, abs(inst.excess(c) - inst.excess_closed_form(c)))
    mean_c = np.mean(members, axis=0) if members else np.zeros_like(inst.c_star)
    return {"c_star": inst.c_star.tolist(), "f_c_star": inst.f(inst.c_star), "excess_of_mean": inst.excess(mean_c),
            "max_identity_error_on_sphere": worst}


def _audit(cfg: dict, sc: Scenario, epsilon: float):
    oracle = _oracle(cfg, sc, PrivacyBudget(epsilon, 0.0))
    if cfg.get("oracle", "expmech") == "expmech":
        oracle = oracle.with_budget(epsilon)
    # default weight: the first group statistic alone
    w = np.asarray(cfg.get("weights", np.eye(sc.loss.k)[0]), dtype=np.float64)
    wrapped = wrap_divergence_oracle(oracle, "pure", epsilon)
    return wrapped.audit(w, sc.data, sensitive_swaps(sc.data), mechanism=cfg.get("oracle", "expmech"))


def audit_command(config_path, out_dir) -> int:
    cfg = load_config(config_path)
    sc = build_scenario(cfg)
    privacy = _privacy(cfg) or PrivacyBudget(float(cfg.get("epsilon", 1.0)))
    if sc.data.n > AUDIT_MAX_ROWS:
        raise ConfigError(f"audits enumerate every neighbor; keep n <= {AUDIT_MAX_ROWS}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = _audit(cfg, sc, privacy.epsilon)
    except UnsupportedAuditError as e:
        (out / "audit.json").write_text(json.dumps({"mechanism": cfg.get("oracle"), "error": str(e)}, indent=2) + "\n")
        print(f"unsupported audit: {e}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    (out / "audit.json").write_text(json.dumps(_clean(report.to_dict()), indent=2, sort_keys=True) + "\n")
    return EXIT_OK if report.passed else EXIT_AUDIT


def emit_figure_means(L_max: int, decay: float, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = obj.figure_means(L_max, decay)
    path = out / "figure_means.csv"
    write_csv(path, obj.FIGURE_COLUMNS, [[r[c] for c in obj.FIGURE_COLUMNS] for r in rows])
    return path


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pcgoo", description="Private constrained group-objective optimization")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="solve a configured scenario")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.add_argument("--reproducible", action="store_true", help="omit wall-clock fields from the report")
    p = sub.add_parser("audit", help="exact privacy audit over sensitive-attribute swaps")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p = sub.add_parser("figure-means", help="G-mean / H-mean sweep as CSV")
    p.add_argument("--lmax", type=int, default=10)
    p.add_argument("--decay", type=float, default=1 / 3)
    p.add_argument("--out", default="out")
    p = sub.add_parser("ingest-check", help="validate a dataset CSV")
    p.add_argument("csv")
    p.add_argument("--normalize", action="store_true")
    args = ap.parse_args(argv)

    try:
        if args.cmd == "run":
            return run_scenario(args.config, args.out, args.reproducible)
        if args.cmd == "audit":
            return audit_command(args.config, args.out)
        if args.cmd == "figure-means":
            print(emit_figure_means(args.lmax, args.decay, args.out))
            return EXIT_OK
        d = ingest_csv(args.csv, args.normalize)
        print(json.dumps({"n": d.n, "dim": d.dim, "groups": d.n_groups, "labels": sorted(set(d.labels.tolist()))}))
        return EXIT_OK
    except (InvalidInputError, KeyError, TypeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
