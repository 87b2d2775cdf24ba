"""Seeded desk-scale experiments and their CSV/JSON reports.

Every experiment is a pure function of its :class:`ExperimentSpec`. Random
numbers come from Philox streams keyed by ``(seed, purpose, grid index,
trial)``, so reports are bit-reproducible and independent of how trials are
scheduled across threads.
"""
import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from ._rng import make_rng
from ._validation import check_alpha
from .errors import DivergenceError, HopgagError, InvalidInputError
from .fixed_point import (
    GuidanceParams,
    Operator,
    SyntheticWeakContraction,
    affine_operator,
    anderson_iterate,
    gag_iterate,
    hopfield_operator,
    km_iterate,
    picard_iterate,
)
from .hopfield import HopfieldConfig, PatternMatrix, retrieve

KINDS = ("noise_robustness", "convergence_bench", "guidance_sweep")
PATTERN_MODES = ("gaussian", "unit_sphere")

# stream purposes for make_rng
_PATTERNS, _NOISE, _TESTBED = 1, 2, 3

COLUMNS = {
    "noise_robustness": ["alpha", "sigma", "trial", "pattern", "error"],
    "convergence_bench": ["testbed", "method", "trial", "iterations", "converged", "final_residual"],
    "guidance_sweep": [
        "testbed", "lam", "zeta", "trial", "iterations", "converged",
        "final_error", "u_monotone", "max_guidance_norm", "guidance_ceiling",
    ],
}

_DEFAULTS = {
    "noise_robustness": {"alphas": [1.0, 1.5, 2.0], "sigmas": [0.0, 0.1, 0.2, 0.5, 1.0, 2.0],
                         "trials": 50, "tol": 1e-8, "max_iter": 1},
    "convergence_bench": {"alphas": [2.0], "trials": 3, "tol": 1e-8, "max_iter": 3000},
    "guidance_sweep": {"alphas": [1.5], "lambdas": [0.0, 1.0, 5.0, 10.0], "trials": 3,
                       "tol": 1e-10, "max_iter": 400},
}

LINEAR_RADIUS = 0.95
KM_RELAX = 0.5
AA_FIXED_OMEGA = 1.0
AA_MEMORY = 5
HOPFIELD_START_NOISE = 0.5


@dataclass
class ExperimentSpec:
    kind: str
    seed: int = 0
    dims: tuple = (32, 8)
    pattern_mode: str = "gaussian"
    beta: float | None = None
    alphas: list | None = None
    sigmas: list | None = None
    lambdas: list | None = None
    trials: int | None = None
    tol: float | None = None
    max_iter: int | None = None
    guidance: GuidanceParams = field(default_factory=GuidanceParams)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"kind must be one of {KINDS}, got {self.kind!r}")
        for key, value in _DEFAULTS[self.kind].items():
            if getattr(self, key) is None:
                setattr(self, key, list(value) if isinstance(value, list) else value)
        if self.sigmas is None:
            self.sigmas = []
        if self.lambdas is None:
            self.lambdas = []
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        if len(self.dims) != 2 or any(not isinstance(n, int) or n < 1 for n in self.dims):
            raise InvalidInputError("dims must be a pair of positive integers (d, M)")
        self.dims = tuple(self.dims)
        if self.pattern_mode not in PATTERN_MODES:
            raise InvalidInputError(f"pattern_mode must be one of {PATTERN_MODES}")
        if self.beta is not None and not self.beta > 0:
            raise InvalidInputError("beta must be positive")
        if not self.alphas:
            raise InvalidInputError("alphas must be non-empty")
        self.alphas = [check_alpha(a) for a in self.alphas]
        if self.kind == "noise_robustness" and not self.sigmas:
            raise InvalidInputError("noise_robustness needs a non-empty sigmas grid")
        if any(s < 0 for s in self.sigmas):
            raise InvalidInputError("sigmas must be nonnegative")
        if self.kind == "guidance_sweep" and not self.lambdas:
            raise InvalidInputError("guidance_sweep needs a non-empty lambdas grid")
        if any(not (lam >= 0 and math.isfinite(lam)) for lam in self.lambdas):
            raise InvalidInputError("lambdas must be finite and nonnegative")
        if not (isinstance(self.trials, int) and self.trials >= 1):
            raise InvalidInputError("trials must be an integer >= 1")
        if not self.tol > 0:
            raise InvalidInputError("tol must be positive")
        if not (isinstance(self.max_iter, int) and self.max_iter >= 1):
            raise InvalidInputError("max_iter must be an integer >= 1")
        if isinstance(self.guidance, dict):
            self.guidance = GuidanceParams(**_guidance_kwargs(self.guidance))

    @property
    def d(self):
        return self.dims[0]

    @property
    def n_patterns(self):
        return self.dims[1]

    @property
    def effective_beta(self):
        return 1.0 / math.sqrt(self.d) if self.beta is None else float(self.beta)

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise InvalidInputError("experiment spec must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidInputError(f"unknown experiment spec keys: {sorted(unknown)}")
        if "kind" not in obj:
            raise InvalidInputError("experiment spec needs a 'kind'")
        kwargs = dict(obj)
        if "dims" in kwargs:
            kwargs["dims"] = tuple(kwargs["dims"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InvalidInputError(f"malformed experiment spec: {exc}") from exc

    def to_dict(self):
        out = asdict(self)
        out["dims"] = list(self.dims)
        out["guidance"] = {"lam": self.guidance.lam, "zeta": self.guidance.zeta,
                           "eta": self.guidance.eta, "alpha": self.guidance.alpha}
        return out


def _guidance_kwargs(obj):
    allowed = {"lam", "zeta", "eta", "alpha"}
    unknown = set(obj) - allowed
    if unknown:
        raise InvalidInputError(f"unknown guidance keys: {sorted(unknown)}")
    out = dict(obj)
    if out.get("eta") is None and "eta" in out:
        out["eta"] = math.inf
    return out


@dataclass
class Report:
    metadata: dict
    rows: list
    summary: dict = field(default_factory=dict)

    @property
    def columns(self):
        return COLUMNS[self.metadata["spec"]["kind"]]


def gen_patterns(d, M, mode="gaussian", seed=0):
    """``d x M`` pattern matrix of i.i.d. standard normals, columns normalised in unit_sphere mode."""
    if d < 1 or M < 1:
        raise InvalidInputError("d and M must be >= 1")
    if mode not in PATTERN_MODES:
        raise InvalidInputError(f"mode must be one of {PATTERN_MODES}")
    xi = make_rng(seed, _PATTERNS).standard_normal((d, M))
    if mode == "unit_sphere":
        xi /= np.linalg.norm(xi, axis=0, keepdims=True)
    return PatternMatrix(xi)


def thread_count():
    """Worker cap from ``HOPGAG_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get("HOPGAG_THREADS", "").strip()
    try:
        n = int(raw) if raw else 0
    except ValueError:
        raise InvalidInputError(f"HOPGAG_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InvalidInputError("HOPGAG_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _map_trials(fn, n):
    workers = min(thread_count(), n)
    if workers <= 1:
        return [fn(t) for t in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def _metadata(spec):
    return {"spec": spec.to_dict(), "seed": spec.seed, "version": __version__}


def _trial_patterns(spec, trial):
    return gen_patterns(spec.d, spec.n_patterns, spec.pattern_mode, seed=_trial_seed(spec, trial))


def _trial_seed(spec, trial):
    # fold the trial index into the seed; the pattern stream is then keyed by (seed, trial)
    return (spec.seed * 1_000_003 + trial) % 2**64


def _r_squared(x, y):
    if x.shape[0] < 3 or np.ptp(x) == 0:
        return None
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    if total == 0:
        return None
    return float(1.0 - np.sum(resid**2) / total)


def run_noise_robustness(spec):
    """Retrieval error under Gaussian query noise for each (alpha, sigma, trial).

    Noise draws are shared across the alpha grid so that the comparison
    between retrieval maps is paired.
    """
    if spec.kind != "noise_robustness":
        raise InvalidInputError("spec.kind must be noise_robustness")
    beta = spec.effective_beta

    def trial_rows(trial):
        xi = _trial_patterns(spec, trial)
        mu = trial % xi.n_patterns
        target = xi.column(mu)
        out = []
        for si, sigma in enumerate(spec.sigmas):
            noise = make_rng(spec.seed, _NOISE, si, trial).standard_normal(spec.d)
            x = target + sigma * noise
            for ai, alpha in enumerate(spec.alphas):
                err = float(np.linalg.norm(retrieve(x, xi, HopfieldConfig(alpha, beta)) - target))
                out.append(((ai, si, trial), {"alpha": alpha, "sigma": float(sigma), "trial": trial,
                                              "pattern": mu, "error": err}))
        return out

    keyed = [item for chunk in _map_trials(trial_rows, spec.trials) for item in chunk]
    keyed.sort(key=lambda kv: kv[0])
    rows = [r for _, r in keyed]

    grid = []
    for alpha in spec.alphas:
        for sigma in spec.sigmas:
            errs = np.array([r["error"] for r in rows if r["alpha"] == alpha and r["sigma"] == sigma])
            grid.append({"alpha": alpha, "sigma": float(sigma),
                         "mean_error": float(errs.mean()), "max_error": float(errs.max())})
    growth = []
    for alpha in spec.alphas:
        pts = [(g["sigma"], g["mean_error"]) for g in grid
               if g["alpha"] == alpha and g["sigma"] > 0 and g["mean_error"] > 0]
        s = np.array([p[0] for p in pts])
        logerr = np.log(np.array([p[1] for p in pts])) if pts else np.array([])
        growth.append({"alpha": alpha,
                       "r2_exponential": _r_squared(s, logerr) if pts else None,
                       "r2_polynomial": _r_squared(np.log(s), logerr) if pts else None})
    return Report(_metadata(spec), rows, {"grid": grid, "growth": growth})


def linear_contraction(d, seed, radius=LINEAR_RADIUS):
    """Symmetric affine contraction on R^d with eigenvalues evenly spread on [0, radius]."""
    rng = make_rng(seed, _TESTBED)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    A = q @ np.diag(np.linspace(0.0, radius, d)) @ q.T
    b = rng.standard_normal(d)
    x_star = np.linalg.solve(np.eye(d) - A, b)
    return A, b, x_star


def _bench_testbeds(spec, trial):
    seed = _trial_seed(spec, trial)
    A, b, x_star = linear_contraction(spec.d, seed)
    T_lin = affine_operator(A, b)
    # slower companion with the same fixed point, used as the "dense" side of guidance
    B = 0.5 * (A + np.eye(spec.d))
    T_lin_slow = Operator(lambda x: x_star + B @ (x - x_star), spec.d, "affine-relaxed")
    yield "linear", T_lin, T_lin_slow, np.zeros(spec.d)

    xi = _trial_patterns(spec, trial)
    mu = trial % xi.n_patterns
    noise = make_rng(spec.seed, _NOISE, 0, trial).standard_normal(spec.d)
    x0 = xi.column(mu) + HOPFIELD_START_NOISE * noise
    for alpha in spec.alphas:
        T_a = hopfield_operator(xi, alpha, spec.effective_beta)
        T_1 = hopfield_operator(xi, 1.0, spec.effective_beta)
        yield f"hopfield(alpha={alpha:g})", T_a, T_1, x0


def _bench_methods(spec):
    tol, it = spec.tol, spec.max_iter
    return [
        ("picard", lambda F, D, x0: picard_iterate(F, x0, tol, it)),
        ("km", lambda F, D, x0: km_iterate(F, x0, KM_RELAX, tol, it)),
        ("aa1_fixed", lambda F, D, x0: anderson_iterate(F, x0, 1, AA_FIXED_OMEGA, tol, it)),
        ("aa1_ls", lambda F, D, x0: anderson_iterate(F, x0, 1, None, tol, it)),
        (f"aa{AA_MEMORY}_ls", lambda F, D, x0: anderson_iterate(F, x0, AA_MEMORY, None, tol, it)),
        ("gag", lambda F, D, x0: gag_iterate(F, D, x0, spec.guidance, None, tol, it)),
    ]


def run_convergence_bench(spec):
    """Iterations-to-tolerance of every driver on linear and Hopfield testbeds."""
    if spec.kind != "convergence_bench":
        raise InvalidInputError("spec.kind must be convergence_bench")
    methods = _bench_methods(spec)

    def trial_rows(trial):
        out = []
        for bi, (name, F, D, x0) in enumerate(_bench_testbeds(spec, trial)):
            for mi, (method, run) in enumerate(methods):
                try:
                    tr = run(F, D, x0)
                    row = {"iterations": tr.iterations_used, "converged": tr.converged,
                           "final_residual": tr.residual_norms[-1]}
                except DivergenceError as exc:
                    n = len(exc.trace.states) if exc.trace is not None else 0
                    row = {"iterations": n, "converged": False, "final_residual": math.inf}
                out.append(((trial, bi, mi), {"testbed": name, "method": method, "trial": trial, **row}))
        return out

    keyed = [item for chunk in _map_trials(trial_rows, spec.trials) for item in chunk]
    keyed.sort(key=lambda kv: kv[0])
    rows = [r for _, r in keyed]
    summary = {}
    for r in rows:
        key = f"{r['testbed']}/{r['method']}"
        summary.setdefault(key, []).append(r["iterations"])
    summary = {k: {"mean_iterations": float(np.mean(v)), "max_iterations": int(np.max(v))}
               for k, v in summary.items()}
    return Report(_metadata(spec), rows, summary)


def _sweep_testbeds(spec, trial):
    seed = _trial_seed(spec, trial)
    tb = SyntheticWeakContraction.build(spec.d, seed=seed)
    Ts, Td = tb.operators()
    yield "synthetic", Ts, Td, tb.start(seed=seed), tb.fixed_point

    xi = _trial_patterns(spec, trial)
    mu = trial % xi.n_patterns
    noise = make_rng(spec.seed, _NOISE, 0, trial).standard_normal(spec.d)
    x0 = xi.column(mu) + HOPFIELD_START_NOISE * noise
    T_a = hopfield_operator(xi, spec.guidance.alpha, spec.effective_beta)
    T_1 = hopfield_operator(xi, 1.0, spec.effective_beta)
    # the stored pattern is only a reference point here, not a common fixed point
    yield "hopfield", T_a, T_1, x0, xi.column(mu).copy()


def run_guidance_sweep(spec):
    """Guided iteration for each lambda in the grid and zeta in {0, 1}."""
    if spec.kind != "guidance_sweep":
        raise InvalidInputError("spec.kind must be guidance_sweep")
    g = spec.guidance

    def trial_rows(trial):
        out = []
        for bi, (name, Ts, Td, x0, ref) in enumerate(_sweep_testbeds(spec, trial)):
            for li, lam in enumerate(spec.lambdas):
                for zi, zeta in enumerate((0.0, 1.0)):
                    params = GuidanceParams(lam=lam, zeta=zeta, eta=g.eta, alpha=g.alpha)
                    tr = gag_iterate(Ts, Td, x0, params, ref, spec.tol, spec.max_iter)
                    u = np.asarray(tr.ortho_errors)
                    out.append(((trial, bi, li, zi), {
                        "testbed": name, "lam": float(lam), "zeta": zeta, "trial": trial,
                        "iterations": tr.iterations_used, "converged": tr.converged,
                        "final_error": float(np.linalg.norm(tr.final_state - ref)),
                        "u_monotone": bool(np.all(np.diff(u) <= 0)),
                        "max_guidance_norm": float(max(tr.guidance_norms)),
                        "guidance_ceiling": float(lam * g.eta) if lam > 0 else 0.0,
                    }))
        return out

    keyed = [item for chunk in _map_trials(trial_rows, spec.trials) for item in chunk]
    keyed.sort(key=lambda kv: kv[0])
    rows = [r for _, r in keyed]
    summary = {}
    for r in rows:
        key = f"{r['testbed']}/lam={r['lam']:g}/zeta={r['zeta']:g}"
        s = summary.setdefault(key, {"mean_final_error": 0.0, "all_u_monotone": True})
        s["mean_final_error"] += r["final_error"] / spec.trials
        s["all_u_monotone"] = s["all_u_monotone"] and r["u_monotone"]
    return Report(_metadata(spec), rows, summary)


RUNNERS = {
    "noise_robustness": run_noise_robustness,
    "convergence_bench": run_convergence_bench,
    "guidance_sweep": run_guidance_sweep,
}


def run_experiment(spec):
    return RUNNERS[spec.kind](spec)


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _parse(text):
    if text == "true":
        return True
    if text == "false":
        return False
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _restore(value):
    if value == "inf":
        return math.inf
    if value == "-inf":
        return -math.inf
    return value


def write_report(report, path, fmt="csv"):
    """Write ``report`` as CSV (header + one line per row) or JSON."""
    try:
        if fmt == "csv":
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\r\n")
                writer.writerow(report.columns)
                for row in report.rows:
                    writer.writerow([_fmt(row[c]) for c in report.columns])
        elif fmt == "json":
            payload = {"metadata": report.metadata, "rows": report.rows, "summary": report.summary}
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(_json_safe(payload), fh, indent=1, allow_nan=False)
                fh.write("\n")
        else:
            raise InvalidInputError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise HopgagError(f"cannot write report to {path}: {exc.strerror}") from exc


def read_report(path, fmt="csv", metadata=None):
    """Inverse of :func:`write_report`; CSV files carry no metadata of their own."""
    if fmt == "csv":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [dict(zip(header, map(_parse, line))) for line in reader]
        return Report(metadata or {}, rows, {})
    if fmt == "json":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        rows = [{k: _restore(v) for k, v in r.items()} for r in payload["rows"]]
        return Report(payload["metadata"], rows, payload["summary"])
    raise InvalidInputError(f"unknown report format {fmt!r}")
