"""Seeded simulation and experiment orchestration.

An experiment is described by a JSON document (see ``configs/`` in the
repository) with ``"schema": "mixfilter.experiment/1"``.  Every requested
method sees the same simulated stream, so method-to-method differences are
paired.

Random streams
--------------
Replicate ``r`` of an experiment with seed ``s`` draws from
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(r,))))``.  The
stream of a replicate does not depend on how many replicates are run, and
replicate 0 is the one used for the per-step trace.
"""

from dataclasses import dataclass, field
import csv
import io
import json
import math
import os

import numpy as np

from . import dirichlet, gaussian_mean, oracle, weight
from .densities import KnownDensityPair, KnownDensitySet, density_from_dict
from .errors import DomainError, MixFilterError, ZeroInformationError
from .special import SolverSettings
from .states import BetaState, CountedGaussianState, DirichletState, GaussianState

SCHEMA = "mixfilter.experiment/1"
MODEL_KINDS = ("mean-mixture", "known-pair", "known-set")
METHODS = ("adf", "qb", "pe", "kl", "vb", "confirmed", "ep", "dirichlet-pe")
COMPATIBLE = {
    "mean-mixture": {"adf", "qb", "confirmed"},
    "known-pair": {"qb", "pe", "kl", "vb", "confirmed", "ep"},
    "known-set": {"qb", "confirmed", "dirichlet-pe"},
}
TRACE_TAIL = ("E", "V", "L", "w1", "epsilon", "mass_increment")


class StepError(MixFilterError):
    """A module error re-raised with the method and step that triggered it."""

    def __init__(self, method, step, cause):
        super().__init__(f"{method} failed at step {step}: {type(cause).__name__}: {cause}")
        self.method = method
        self.step = step
        self.cause = cause


@dataclass
class ExperimentConfig:
    kind: str
    model: object
    truth: object
    prior: object
    n: int
    seed: int
    methods: tuple
    replicates: int = 1
    oracle: dict = field(default_factory=dict)
    ep: dict = field(default_factory=dict)
    solver: SolverSettings = field(default_factory=SolverSettings)
    policy: str = "avg-variance"
    trace_name: str = "trace"
    summary_name: str = "summary.json"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def symmetric(self):
        return self.kind == "mean-mixture" and gaussian_mean._is_symmetric(self.model)


def _parse_model(spec):
    kind = spec.get("kind")
    if kind == "mean-mixture":
        preset = spec.get("preset")
        if preset == "symmetric":
            return kind, gaussian_mean.symmetric_model()
        if preset == "clutter":
            return kind, gaussian_mean.clutter_model(float(spec["v"]))
        if preset is not None:
            raise DomainError(f"unknown mean-mixture preset {preset!r}")
        comps = [(float(c["c"]), float(c["sigma"]), float(c["v"])) for c in spec["components"]]
        return kind, gaussian_mean.MeanMixtureModel.from_components(comps)
    if kind == "known-pair":
        f1, f2 = (density_from_dict(d) for d in spec["densities"])
        return kind, KnownDensityPair(f1, f2)
    if kind == "known-set":
        return kind, KnownDensitySet([density_from_dict(d) for d in spec["densities"]])
    raise DomainError(f"model kind must be one of {MODEL_KINDS}, got {kind!r}")


def _parse_truth(kind, model, truth):
    if kind == "mean-mixture":
        return float(truth["mu"])
    if kind == "known-pair":
        beta = float(truth["beta"])
        if not 0.0 <= beta <= 1.0:
            raise DomainError(f"true beta must lie in [0, 1], got {beta!r}")
        return beta
    weights = np.asarray(truth["weights"], dtype=float)
    if weights.size != len(model) or np.any(weights < 0.0) or abs(weights.sum() - 1.0) > 1e-12:
        raise DomainError("true weights must be a simplex vector with one entry per density")
    return weights


def _parse_prior(kind, model, prior):
    if kind == "mean-mixture":
        return GaussianState(float(prior["mean"]), float(prior["var"]))
    if kind == "known-pair":
        return BetaState(float(prior["a"]), float(prior["b"]))
    alpha = prior.get("alpha", [1.0] * len(model))
    if len(alpha) != len(model):
        raise DomainError("Dirichlet prior needs one hyperparameter per density")
    return DirichletState(tuple(alpha))


def load_config(source, seed=None):
    """Parse and validate an experiment config from a path or a dict.

    ``seed`` overrides the seed in the document.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source) as fh:
            raw = json.load(fh)
    else:
        raw = dict(source)
    if raw.get("schema") != SCHEMA:
        raise DomainError(f"config schema must be {SCHEMA!r}, got {raw.get('schema')!r}")
    kind, model = _parse_model(raw["model"])
    n = int(raw["n"])
    if n < 1:
        raise DomainError("n must be >= 1")
    methods = tuple(raw.get("methods", ()))
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise DomainError(f"unknown methods {sorted(unknown)}")
    bad = set(methods) - COMPATIBLE[kind]
    if bad:
        raise DomainError(f"methods {sorted(bad)} are not available for a {kind} model")
    seed = int(raw.get("seed", 0) if seed is None else seed)
    if not 0 <= seed < 2**64:
        raise DomainError("seed must be an unsigned 64-bit integer")
    config = ExperimentConfig(
        kind=kind,
        model=model,
        truth=_parse_truth(kind, model, raw["truth"]),
        prior=_parse_prior(kind, model, raw.get("prior", {})),
        n=n,
        seed=seed,
        methods=methods,
        replicates=int(raw.get("replicates", 1)),
        oracle=dict(raw.get("oracle", {})),
        ep=dict(raw.get("ep", {})),
        solver=SolverSettings(**raw.get("solver", {})),
        policy=raw.get("policy", "avg-variance"),
        trace_name=raw.get("output", {}).get("trace", "trace"),
        summary_name=raw.get("output", {}).get("summary", "summary.json"),
        raw=raw,
    )
    if config.replicates < 1:
        raise DomainError("replicates must be >= 1")
    if config.kind == "mean-mixture" and {"qb", "confirmed"} & set(methods) and not config.symmetric:
        raise DomainError("qb and confirmed for a mean mixture need the symmetric model")
    if config.policy not in dirichlet.POLICIES:
        raise DomainError(f"policy must be one of {dirichlet.POLICIES}")
    return config


def replicate_rng(seed, replicate=0):
    """Generator for one replicate (see the module docstring)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replicate,))))


def simulate(config, replicate=0, n=None):
    """Draw ``n`` observations by ancestral sampling.

    Returns ``(x, z)`` with 1-based component labels ``z``.
    """
    n = config.n if n is None else n
    rng = replicate_rng(config.seed, replicate)
    if config.kind == "mean-mixture":
        return gaussian_mean.sample(config.model, config.truth, rng, n)
    if config.kind == "known-pair":
        weights = np.array([config.truth, 1.0 - config.truth])
    else:
        weights = config.truth
    labels = rng.choice(len(config.model), size=n, p=weights)
    x = np.empty(n)
    for j, dens in enumerate(config.model.densities):
        hit = labels == j
        x[hit] = dens.sample(rng, int(hit.sum()))
    return x, labels + 1


# -- per-step traces ---------------------------------------------------------

def _row(method, step, hyper, E, V, L, w1=None, epsilon=None, mass_increment=None):
    return {
        "method": method, "n": step, "hyper": list(hyper), "E": E, "V": V, "L": L,
        "w1": w1, "epsilon": epsilon, "mass_increment": mass_increment,
    }


def _beta_row(method, step, state, diag=None, prev=None):
    if diag is None:
        inc = None if prev is None else state.mass - prev.mass
        eps = None
        w1 = None
    else:
        inc, eps, w1 = diag.mass_increment, diag.epsilon, diag.w1
    return _row(method, step, state.as_tuple(), state.mean, state.variance, state.mass, w1, eps, inc)


def _trace_beta(config, x, z):
    pair, prior = config.model, config.prior
    rows, finals = [], {}
    for method in config.methods:
        if method == "ep":
            continue
        state = prior
        for i, xi in enumerate(x, start=1):
            try:
                if method == "confirmed":
                    new = weight.confirmed_update(state, int(z[i - 1]))
                    rows.append(_beta_row(method, i, new, prev=state))
                else:
                    if method == "qb":
                        new, diag = weight.quasi_bayes_update(pair, state, xi)
                    elif method == "pe":
                        new, diag = weight.pe_update(pair, state, xi)
                    elif method == "kl":
                        new, diag = weight.kl_update(pair, state, xi, config.solver)
                    else:
                        new, diag = weight.vb_recursive_update(pair, state, xi)
                    rows.append(_beta_row(method, i, new, diag))
            except MixFilterError as exc:
                raise StepError(method, i, exc) from exc
            state = new
        finals[method] = state
    if "ep" in config.methods:
        opts = config.ep
        try:
            result = weight.ep_fit(
                pair, prior, x,
                update_rule=opts.get("rule", "moment-match"),
                max_sweeps=int(opts.get("max_sweeps", 50)),
                tolerance=float(opts.get("tolerance", 1e-10)),
                settings=config.solver,
            )
        except MixFilterError as exc:
            raise StepError("ep", 0, exc) from exc
        prev = prior
        for sweep, state in enumerate(result.history, start=1):
            rows.append(_beta_row("ep", sweep, state, prev=prev))
            prev = state
        finals["ep"] = result.state
        finals["_ep_result"] = result
    return rows, finals


def _trace_gaussian(config, x, z):
    model, prior = config.model, config.prior
    rows, finals = [], {}
    for method in config.methods:
        state = prior
        cstate = CountedGaussianState(prior, 0)
        for i, xi in enumerate(x, start=1):
            try:
                if method == "adf":
                    A, B, w = gaussian_mean.adf_moments(model, state.a, state.b, xi)
                    new = GaussianState(float(A), float(B))
                    w1 = float(w[0])
                elif method == "qb":
                    cstate = gaussian_mean.quasi_bayes_update(model, cstate, xi)
                    new, w1 = cstate.state, None
                else:
                    cstate = gaussian_mean.confirmed_update(cstate, xi, int(z[i - 1]))
                    new, w1 = cstate.state, None
            except MixFilterError as exc:
                raise StepError(method, i, exc) from exc
            rows.append(_row(method, i, (new.a, new.b), new.a, new.b, None, w1))
            state = new
        finals[method] = state
    return rows, finals


def _trace_dirichlet(config, x, z):
    dset, prior = config.model, config.prior
    rows, finals = [], {}
    for method in config.methods:
        state = prior
        for i, xi in enumerate(x, start=1):
            try:
                w = dirichlet.dir_responsibilities(dset, state, xi)
                if method == "dirichlet-pe":
                    new = dirichlet.dir_pe_update(dset, state, xi, config.policy)
                elif method == "qb":
                    new = dirichlet.dir_quasi_bayes_update(dset, state, xi)
                else:
                    new = dirichlet.dir_confirmed_update(state, int(z[i - 1]))
            except MixFilterError as exc:
                raise StepError(method, i, exc) from exc
            rows.append(_row(
                method, i, new.alpha, float(new.means[0]), float(new.variances[0]), new.mass,
                float(w[0]), None, new.mass - state.mass,
            ))
            state = new
        finals[method] = state
    return rows, finals


def trace(config, x, z):
    """Run every method over one stream; returns ``(rows, final_states)``."""
    if config.kind == "known-pair":
        return _trace_beta(config, x, z)
    if config.kind == "mean-mixture":
        return _trace_gaussian(config, x, z)
    return _trace_dirichlet(config, x, z)


def trace_columns(rows):
    width = max((len(r["hyper"]) for r in rows), default=2)
    return ["method", "n"] + [f"hyper_{k}" for k in range(1, width + 1)] + list(TRACE_TAIL)


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_trace(rows, path, fmt="csv"):
    """Write trace rows as CSV (fixed column order, header row) or JSON."""
    columns = trace_columns(rows)
    if fmt == "json":
        records = []
        for r in rows:
            rec = {"method": r["method"], "n": r["n"]}
            rec.update({f"hyper_{k}": float(v) for k, v in enumerate(r["hyper"], start=1)})
            rec.update({k: (None if r[k] is None else float(r[k])) for k in TRACE_TAIL})
            records.append(rec)
        with open(path, "w") as fh:
            json.dump({"columns": columns, "rows": records}, fh, indent=1)
            fh.write("\n")
        return
    width = len(columns) - 2 - len(TRACE_TAIL)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        hyper = [_cell(v) for v in r["hyper"]] + [""] * (width - len(r["hyper"]))
        writer.writerow([r["method"], r["n"]] + hyper + [_cell(r[k]) for k in TRACE_TAIL])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


# -- replicate batches ---------------------------------------------------------

def beta_terminal_states(pair, prior, data, methods, labels=None, settings=None):
    """Advance Beta filters over a ``(replicates, n)`` data matrix, all
    replicates at once.  Returns ``{method: (a, b)}`` arrays of terminal
    hyperparameters."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    logs = pair.log_evaluate(data)
    R, n = data.shape
    out = {}
    for method in methods:
        a = np.full(R, float(prior.a))
        b = np.full(R, float(prior.b))
        for i in range(n):
            l1, l2 = logs[:, i, 0], logs[:, i, 1]
            if method == "qb":
                a, b, _ = weight.quasi_bayes_step(a, b, l1, l2)
            elif method == "pe":
                a, b, _, _ = weight.pe_step(a, b, l1, l2)
            elif method == "kl":
                a, b, _ = weight.kl_step(a, b, l1, l2, settings)
            elif method == "vb":
                a, b, _ = weight.vb_step(a, b, l1, l2)
            elif method == "confirmed":
                if labels is None:
                    raise DomainError("confirmed updates need the component labels")
                first = np.atleast_2d(labels)[:, i] == 1
                a, b = a + first, b + ~first
            else:
                raise DomainError(f"method {method!r} has no batch kernel")
        out[method] = (a, b)
    return out


def adf_terminal_states(model, prior, data):
    """Gaussian ADF over a ``(replicates, n)`` data matrix; returns ``(a, b)``."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    a = np.full(data.shape[0], float(prior.a))
    b = np.full(data.shape[0], float(prior.b))
    for i in range(data.shape[1]):
        a, b, _ = gaussian_mean.adf_moments(model, a, b, data[:, i])
    return a, b


def simulate_replicates(config, replicates, n=None):
    xs, zs = zip(*(simulate(config, r, n) for r in range(replicates)))
    return np.vstack(xs), np.vstack(zs)


def _beta_variance(a, b):
    total = a + b
    return a * b / (total * total * (total + 1.0))


# -- summaries -----------------------------------------------------------------

def _finite(value):
    value = float(value)
    return value if math.isfinite(value) else None


def _beta_oracle(config, x):
    pair, beta, n = config.model, config.truth, config.n
    block = {}
    if 0.0 < beta < 1.0:
        info = oracle.fisher_information_beta(pair, beta)
        block["fisher_information"] = info
        block["inverse_information"] = _finite(1.0 / info) if info > 0 else None
        block["pe_information"] = oracle.pe_information_beta(pair, beta)
    if n <= int(config.oracle.get("max_grid_n", 5000)) and config.oracle.get("grid", True):
        grid = oracle.grid_beta_posterior(pair, config.prior, x)
        block["grid"] = grid.as_dict()
        block["V_exact"] = grid.variance
    if n <= int(config.oracle.get("max_enumeration_n", 12)) and config.oracle.get("enumeration", True):
        exact, _ = oracle.exact_beta_posterior(pair, config.prior, x)
        block["enumeration"] = exact.as_dict()
    return block


def _beta_predictions(config):
    beta = config.truth
    if not 0.0 < beta < 1.0:
        return {"undefined": "true beta on the boundary"}
    try:
        return weight.asymptotic_variances(config.model, beta, config.n).as_dict()
    except ZeroInformationError:
        complete = beta * (1.0 - beta) / config.n
        return {"V_CO": complete, "V_QB": complete, "V_VA": complete,
                "V_ML": None, "V_PE": None, "zero_information": True}


def _method_block(E, V, L, n, info, v_exact, hyper):
    block = {"hyper": [float(h) for h in hyper], "E": float(E), "V": float(V), "nV": float(n * V)}
    if L is not None:
        block["L"] = float(L)
    if info is not None:
        block["nVI"] = float(n * V * info)
    if v_exact is not None:
        block["V_over_V_exact"] = float(V / v_exact)
    return block


def summarize(config, x, finals):
    n = config.n
    summary = {"schema": SCHEMA, "kind": config.kind, "n": n, "seed": config.seed,
               "methods": {}, "oracle": {}, "predictions": {}}
    if config.kind == "known-pair":
        orc = _beta_oracle(config, x)
        info, v_exact = orc.get("fisher_information"), orc.get("V_exact")
        for method, state in finals.items():
            if method.startswith("_"):
                continue
            summary["methods"][method] = _method_block(
                state.mean, state.variance, state.mass, n, info, v_exact, state.as_tuple())
        if "_ep_result" in finals:
            res = finals["_ep_result"]
            summary["methods"]["ep"].update(
                sweeps_used=res.sweeps_used, converged=res.converged, skipped=len(res.skipped))
        summary["oracle"] = orc
        summary["predictions"] = _beta_predictions(config)
    elif config.kind == "mean-mixture":
        info = oracle.fisher_information_mu(config.model, config.truth)
        orc = {"fisher_information": info,
               "inverse_information": _finite(1.0 / info) if info > 0 else None,
               "complete_information": oracle.complete_information_mu(config.model)}
        v_exact = None
        if n <= int(config.oracle.get("max_grid_n", 5000)) and config.oracle.get("grid", True):
            grid = oracle.grid_mu_posterior(config.model, config.prior, x)
            orc["grid"] = grid.as_dict()
            v_exact = orc["V_exact"] = grid.variance
        for method, state in finals.items():
            summary["methods"][method] = _method_block(
                state.a, state.b, None, n, info, v_exact, (state.a, state.b))
        summary["oracle"] = orc
        summary["predictions"] = {
            "V_ML": _finite(1.0 / (n * info)) if info > 0 else None,
            "V_complete": 1.0 / (n * orc["complete_information"]),
        }
    else:
        for method, state in finals.items():
            summary["methods"][method] = {
                "hyper": list(state.alpha), "E": state.means.tolist(),
                "V": state.variances.tolist(), "L": state.mass,
            }
    return summary


def _replicate_block(config):
    R = config.replicates
    xs, zs = simulate_replicates(config, R)
    block = {"count": R}
    if config.kind == "known-pair":
        batch = [m for m in config.methods if m in ("qb", "pe", "kl", "vb", "confirmed")]
        states = beta_terminal_states(config.model, config.prior, xs, batch, zs, config.solver)
        for method, (a, b) in states.items():
            nV = config.n * _beta_variance(a, b)
            block[method] = {"median_nV": float(np.median(nV)), "nV": nV.tolist(),
                             "E": (a / (a + b)).tolist()}
    elif config.kind == "mean-mixture" and "adf" in config.methods:
        a, b = adf_terminal_states(config.model, config.prior, xs)
        block["adf"] = {"median_nV": float(np.median(config.n * b)), "E": a.tolist()}
    return block


def run(config, out_dir, fmt="csv"):
    """Simulate replicate 0, run every method, and write the trace and the
    JSON summary into ``out_dir``.  Returns the summary dict."""
    os.makedirs(out_dir, exist_ok=True)
    x, z = simulate(config)
    rows, finals = trace(config, x, z)
    write_trace(rows, os.path.join(out_dir, f"{config.trace_name}.{fmt}"), fmt)
    summary = summarize(config, x, finals)
    if config.replicates > 1:
        summary["replicates"] = _replicate_block(config)
    write_json(summary, os.path.join(out_dir, config.summary_name))
    return summary


def oracle_report(config):
    """Oracle values for replicate 0 of ``config``."""
    x, _ = simulate(config)
    if config.kind == "known-pair":
        return {"n": config.n, "oracle": _beta_oracle(config, x), "predictions": _beta_predictions(config)}
    if config.kind == "mean-mixture":
        report = {"n": config.n, "fisher_information": oracle.fisher_information_mu(config.model, config.truth),
                  "complete_information": oracle.complete_information_mu(config.model)}
        if config.n <= int(config.oracle.get("max_grid_n", 5000)):
            report["grid"] = oracle.grid_mu_posterior(config.model, config.prior, x).as_dict()
        return report
    raise DomainError("no oracle is available for known-set models")


def default_lemma_pairs():
    return [
        KnownDensityPair(density_from_dict(a), density_from_dict(b))
        for a, b in (
            ({"kind": "gaussian", "mean": 0, "sd": 1}, {"kind": "gaussian", "mean": 1, "sd": 1}),
            ({"kind": "gaussian", "mean": 0, "sd": 1}, {"kind": "gaussian", "mean": 3, "sd": 2}),
            ({"kind": "gaussian", "mean": -1, "sd": 0.5}, {"kind": "gaussian", "mean": 0.5, "sd": 1.5}),
        )
    ]


def check_lemma(pairs=None, betas=None, quad=None):
    """Evaluate both sides of the PE/ML information identity over a sweep.

    Returns a report with one record per ``(pair, beta)`` and the largest
    relative violation.  Cases where both sides vanish are flagged
    ``exact_zero`` and count as zero violation.
    """
    pairs = default_lemma_pairs() if pairs is None else pairs
    betas = [round(0.1 * k, 10) for k in range(1, 10)] if betas is None else betas
    records, worst = [], 0.0
    for p_idx, pair in enumerate(pairs):
        for beta in betas:
            lhs, rhs = oracle.lemma_sides(pair, beta, quad)
            scale = max(abs(lhs), abs(rhs))
            zero = scale <= 1e-12
            rel = 0.0 if zero else abs(lhs - rhs) / scale
            worst = max(worst, rel)
            records.append({"pair": p_idx, "densities": pair.to_dict()["densities"], "beta": beta,
                            "pe_side": lhs, "ml_side": rhs, "relative_violation": rel,
                            "exact_zero": zero})
    return {"cases": records, "max_relative_violation": worst}


def lemma_pairs_from_config(raw):
    pairs = [KnownDensityPair(*(density_from_dict(d) for d in p)) for p in raw.get("pairs", [])]
    return pairs or None, raw.get("betas")


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
