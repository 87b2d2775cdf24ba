"""Fixed-point drivers (Picard, Krasnosel'skii-Mann, Anderson) and geometry-aware guidance.

All drivers share one convention: ``residual_norms[k] = ||F(x_k) - x_k||``
for each recorded state ``x_k``; a run converges at the first ``k`` whose
residual is at most ``tol`` and ``iterations_used`` is then ``k``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng
from ._validation import check_alpha, check_vector
from .errors import DivergenceError, InvalidInputError

DAMPING = 1e-10
DEGENERATE_DIRECTION = 1e-12


class Operator:
    """A deterministic self-map of R^d with a label for reports."""

    def __init__(self, fn, dim, label=""):
        self.fn = fn
        self.dim = int(dim)
        self.label = label

    def __call__(self, x):
        return np.asarray(self.fn(x), dtype=np.float64)

    def __repr__(self):
        return f"Operator({self.label or self.fn.__name__!s}, dim={self.dim})"


def as_operator(F, dim=None):
    if isinstance(F, Operator):
        return F
    if not callable(F):
        raise InvalidInputError("operator must be callable")
    return Operator(F, dim if dim is not None else -1, getattr(F, "__name__", ""))


def _check_state(F, x0):
    x0 = check_vector(x0, "x0")
    if F.dim >= 0 and F.dim != x0.shape[0]:
        raise InvalidInputError(f"operator {F.label!r} acts on R^{F.dim}, x0 has length {x0.shape[0]}")
    return x0


def _check_budget(tol, max_iter):
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    if int(max_iter) < 1:
        raise InvalidInputError("max_iter must be >= 1")


@dataclass
class GuidanceParams:
    """Guidance scale ``lam``, orthogonal suppression ``zeta``, norm ceiling ``eta``."""

    lam: float = 10.0
    zeta: float = 0.0
    eta: float = 15.0
    alpha: float = 1.5

    def __post_init__(self):
        self.lam = float(self.lam)
        self.zeta = float(self.zeta)
        self.eta = float(self.eta)
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise InvalidInputError(f"lambda must be a finite nonnegative number, got {self.lam}")
        if not 0.0 <= self.zeta <= 1.0:
            raise InvalidInputError(f"zeta must lie in [0, 1], got {self.zeta}")
        if not self.eta > 0:
            raise InvalidInputError(f"eta must be positive, got {self.eta}")
        self.alpha = check_alpha(self.alpha)


@dataclass
class IterationTrace:
    states: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    energies: list | None = None
    ortho_errors: list | None = None
    guidance_norms: list | None = None
    aa_weights: list | None = None
    fallback_steps: list = field(default_factory=list)
    converged: bool = False
    iterations_used: int = 0

    @property
    def final_state(self):
        return self.states[-1]

    def to_rows(self):
        """One flat record per recorded state, for CSV emission."""
        rows = []
        for k, res in enumerate(self.residual_norms):
            row = {"k": k, "residual": res}
            if self.energies is not None:
                row["energy"] = self.energies[k]
            if self.ortho_errors is not None:
                row["u"] = self.ortho_errors[k]
            if self.guidance_norms is not None:
                row["guidance_norm"] = self.guidance_norms[k] if k < len(self.guidance_norms) else ""
            rows.append(row)
        return rows


class _Recorder:
    def __init__(self, trace, energy_fn):
        self.trace = trace
        self.energy_fn = energy_fn
        if energy_fn is not None:
            trace.energies = []

    def record(self, x, fx):
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(fx))):
            raise DivergenceError(
                f"non-finite state after {len(self.trace.states)} iterations", trace=self.trace
            )
        res = float(np.linalg.norm(fx - x))
        self.trace.states.append(x)
        self.trace.residual_norms.append(res)
        if self.energy_fn is not None:
            self.trace.energies.append(float(self.energy_fn(x)))
        return res


def _run(step, F, x0, tol, max_iter, energy_fn, trace=None):
    """Shared loop; ``step(k, x, fx)`` returns the next state."""
    trace = trace if trace is not None else IterationTrace()
    rec = _Recorder(trace, energy_fn)
    x = x0
    for k in range(int(max_iter) + 1):
        fx = F(x)
        if rec.record(x, fx) <= tol:
            trace.converged = True
            trace.iterations_used = k
            return trace
        if k == int(max_iter):
            break
        x = step(k, x, fx)
    trace.iterations_used = int(max_iter)
    return trace


def picard_iterate(F, x0, tol=1e-8, max_iter=1000, energy_fn=None):
    """Iterate ``x_{k+1} = F(x_k)``."""
    F = as_operator(F)
    x0 = _check_state(F, x0)
    _check_budget(tol, max_iter)
    return _run(lambda k, x, fx: fx, F, x0, tol, max_iter, energy_fn)


def km_iterate(F, x0, relax=0.5, tol=1e-8, max_iter=1000, energy_fn=None):
    """Krasnosel'skii-Mann iteration ``x_{k+1} = (1 - relax) x_k + relax F(x_k)``."""
    F = as_operator(F)
    x0 = _check_state(F, x0)
    _check_budget(tol, max_iter)
    if not 0.0 < relax <= 1.0:
        raise InvalidInputError(f"relax must lie in (0, 1], got {relax}")
    if relax == 1.0:
        return _run(lambda k, x, fx: fx, F, x0, tol, max_iter, energy_fn)
    return _run(lambda k, x, fx: (1.0 - relax) * x + relax * fx, F, x0, tol, max_iter, energy_fn)


def anderson_weights(residuals):
    """Affine weights minimising ``||sum_i w_i g_i||`` subject to ``sum_i w_i = 1``.

    ``residuals`` has one residual ``g_i`` per column. Solves the damped normal
    equations ``(G + delta I) y = 1`` with ``G = R^T R`` and normalises ``y``.
    Returns ``None`` when the system is singular.
    """
    R = np.asarray(residuals, dtype=np.float64)
    gram = R.T @ R
    scale = np.trace(gram) / gram.shape[0]
    if not (scale > 0 and math.isfinite(scale)):
        return None
    gram = gram + DAMPING * scale * np.eye(gram.shape[0])
    try:
        y = np.linalg.solve(gram, np.ones(gram.shape[0]))
    except np.linalg.LinAlgError:
        return None
    total = y.sum()
    if not (np.all(np.isfinite(y)) and abs(total) > 1e-300):
        return None
    return y / total


def anderson_iterate(F, x0, memory=1, fixed_omega=None, tol=1e-8, max_iter=1000, energy_fn=None):
    """Anderson acceleration of the fixed-point map ``F``.

    The first ``memory`` steps are plain Picard steps that fill the history.
    Afterwards the next iterate is the affine combination of the last
    ``memory + 1`` function values whose weights minimise the combined
    residual. With ``memory == 1`` and ``fixed_omega`` given, the two-point
    extrapolation ``F(x_k) + omega (F(x_k) - F(x_{k-1}))`` is used instead.
    Steps whose least-squares system is singular fall back to Picard and are
    listed in ``trace.fallback_steps``.
    """
    F = as_operator(F)
    x0 = _check_state(F, x0)
    _check_budget(tol, max_iter)
    memory = int(memory)
    if memory < 1:
        raise InvalidInputError("memory must be >= 1")
    if fixed_omega is not None and memory != 1:
        raise InvalidInputError("fixed_omega is only defined for memory == 1")

    trace = IterationTrace(aa_weights=[])
    xs, fxs = [], []

    def step(k, x, fx):
        xs.append(x)
        fxs.append(fx)
        del xs[: -(memory + 1)], fxs[: -(memory + 1)]
        if k < memory:
            return fx
        if fixed_omega is not None:
            w = np.array([-fixed_omega, 1.0 + fixed_omega])
        else:
            R = np.stack([f - s for s, f in zip(xs, fxs)], axis=1)
            w = anderson_weights(R)
            if w is None:
                trace.fallback_steps.append(k)
                return fx
        trace.aa_weights.append(w)
        return np.stack(fxs, axis=1) @ w

    return _run(step, F, x0, tol, max_iter, energy_fn, trace)


def decompose_residual(r, direction):
    """Split ``r`` into components parallel and orthogonal to ``direction``.

    A direction with norm below 1e-12 has no parallel part: ``(0, r)``.
    """
    r = check_vector(r, "r")
    direction = check_vector(direction, "direction")
    if r.shape != direction.shape:
        raise InvalidInputError("r and direction must have the same length")
    nrm2 = direction @ direction
    if math.sqrt(nrm2) < DEGENERATE_DIRECTION:
        return np.zeros_like(r), r.copy()
    r_par = (r @ direction / nrm2) * direction
    return r_par, r - r_par


def orthogonal_error(x, x_star, direction):
    """Norm of the part of ``x - x_star`` orthogonal to ``direction``."""
    x = check_vector(x, "x")
    x_star = check_vector(x_star, "x_star")
    if x.shape != x_star.shape:
        raise InvalidInputError("x and x_star must have the same length")
    _, perp = decompose_residual(x - x_star, direction)
    return float(np.linalg.norm(perp))


def guidance_term(sparse_out, dense_out, params):
    """Rescaled geometry-aware term ``min(1, eta/||r~||) r~`` (before the ``lam`` factor)."""
    r = sparse_out - dense_out
    if params.zeta == 1.0:
        filtered = r
    else:
        r_par, r_perp = decompose_residual(r, sparse_out)
        filtered = r_par + params.zeta * r_perp
    nrm = float(np.linalg.norm(filtered))
    factor = 1.0 if nrm == 0.0 else min(1.0, params.eta / nrm)
    return factor * filtered


def gag_update(sparse_out, dense_out, params):
    """Combine precomputed sparse/dense outputs into the guided state."""
    return sparse_out + params.lam * guidance_term(sparse_out, dense_out, params)


def _gag_eval(T_sparse, T_dense, x, params):
    ts = T_sparse(x)
    td = T_dense(x)
    if ts.shape != x.shape or td.shape != x.shape:
        raise InvalidInputError("sparse and dense operators must map R^d to R^d")
    term = params.lam * guidance_term(ts, td, params)
    return ts, ts + term, float(np.linalg.norm(term))


def gag_step(T_sparse, T_dense, x, params=None):
    """One geometry-aware guidance step.

    ``T_sparse(x) + lam * min(1, eta / ||r~||) * r~`` where ``r~`` keeps the
    part of ``T_sparse(x) - T_dense(x)`` parallel to ``T_sparse(x)`` and
    ``zeta`` times its orthogonal part.
    """
    params = params if params is not None else GuidanceParams()
    T_sparse, T_dense = as_operator(T_sparse), as_operator(T_dense)
    if T_sparse.dim >= 0 and T_dense.dim >= 0 and T_sparse.dim != T_dense.dim:
        raise InvalidInputError("sparse and dense operators have different dimensions")
    x = _check_state(T_sparse, x)
    return _gag_eval(T_sparse, T_dense, x, params)[1]


def gag_iterate(T_sparse, T_dense, x0, params=None, x_star=None, tol=1e-8, max_iter=1000,
                energy_fn=None):
    """Iterate the guided map ``x_{t+1} = T_lam(x_t)``.

    The residual tracked for convergence is ``||T_lam(x_t) - x_t||``. When
    ``x_star`` is given, ``trace.ortho_errors[t]`` holds the orthogonal error
    of ``x_t`` measured against the direction ``T_sparse(x_t)``.
    """
    params = params if params is not None else GuidanceParams()
    T_sparse, T_dense = as_operator(T_sparse), as_operator(T_dense)
    x0 = _check_state(T_sparse, x0)
    _check_budget(tol, max_iter)
    if x_star is not None:
        x_star = check_vector(x_star, "x_star")

    trace = IterationTrace(guidance_norms=[])
    if x_star is not None:
        trace.ortho_errors = []
    cache = {}

    def guided(x):
        ts, out, gnorm = _gag_eval(T_sparse, T_dense, x, params)
        trace.guidance_norms.append(gnorm)
        if x_star is not None:
            trace.ortho_errors.append(orthogonal_error(x, x_star, ts))
        cache["out"] = out
        return out

    return _run(lambda k, x, fx: cache["out"], guided, x0, tol, max_iter, energy_fn, trace)


@dataclass
class SyntheticWeakContraction:
    """Operator pair built to satisfy the orthogonal weak-contraction inequality.

    With ``e = x - fixed_point`` split along ``guidance_direction`` (``g``):

    * sparse map: ``x* + e_par + (c - phi_slope) e_perp``
    * dense map:  ``x* + e_par + dense_gain e_perp + kick ||e|| w``

    where ``w`` is a fixed unit vector orthogonal to ``g``. Both maps fix
    ``x*``; the dense one contracts the orthogonal error more slowly and the
    optional ``kick`` injects orthogonal displacement proportional to the
    distance from ``x*``. The forcing function is ``phi(u) = phi_slope * u``.
    """

    c: float
    phi_slope: float
    fixed_point: np.ndarray
    guidance_direction: np.ndarray
    kick_direction: np.ndarray
    dense_gain: float | None = None
    kick: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.c < 1.0:
            raise InvalidInputError("c must lie in [0, 1)")
        if not (self.phi_slope > 0 and self.c + self.phi_slope < 1.0):
            raise InvalidInputError("need phi_slope > 0 and c + phi_slope < 1")
        g = check_vector(self.guidance_direction, "guidance_direction")
        self.guidance_direction = g / np.linalg.norm(g)
        w = check_vector(self.kick_direction, "kick_direction")
        w = w - (w @ self.guidance_direction) * self.guidance_direction
        self.kick_direction = w / np.linalg.norm(w)
        self.fixed_point = check_vector(self.fixed_point, "fixed_point")
        if self.dense_gain is None:
            self.dense_gain = self.c

    @classmethod
    def build(cls, d, c=0.9, phi_slope=0.05, radius=2.0, seed=0, **kwargs):
        """Random instance in R^d with ``x* = radius * g``."""
        if d < 2:
            raise InvalidInputError("the testbed needs d >= 2")
        rng = make_rng(seed, 0)
        g = rng.standard_normal(d)
        g /= np.linalg.norm(g)
        w = rng.standard_normal(d)
        return cls(c=c, phi_slope=phi_slope, fixed_point=radius * g, guidance_direction=g,
                   kick_direction=w, **kwargs)

    @property
    def dim(self):
        return self.fixed_point.shape[0]

    @property
    def orthogonal_gain(self):
        return self.c - self.phi_slope

    def phi(self, u):
        return self.phi_slope * u

    def _split(self, x):
        e = np.asarray(x, dtype=np.float64) - self.fixed_point
        g = self.guidance_direction
        e_par = (e @ g) * g
        return e, e_par, e - e_par

    def sparse(self, x):
        _, e_par, e_perp = self._split(x)
        return self.fixed_point + e_par + self.orthogonal_gain * e_perp

    def dense(self, x):
        e, e_par, e_perp = self._split(x)
        out = self.fixed_point + e_par + self.dense_gain * e_perp
        if self.kick:
            out = out + self.kick * np.linalg.norm(e) * self.kick_direction
        return out

    def operators(self):
        return (Operator(self.sparse, self.dim, "synthetic-sparse"),
                Operator(self.dense, self.dim, "synthetic-dense"))

    def contraction_sides(self, x, params):
        """Both sides of the weak-contraction inequality at ``x``.

        Returns ``(lhs, rhs)`` with ``lhs = ||P(x)(T_lam(x) - x*)||`` and
        ``rhs = c u - phi(u)``, ``u = ||P(x)(x - x*)||``, where ``P(x)`` projects
        away from ``sparse(x)``. ``params.zeta`` should be 0.

        With ``x* = R g`` and ``e = p g + e_perp`` the two sides reduce to
        ``lhs = k R t`` and ``rhs = k (R + p (1 - k)) t`` for a common factor
        ``t >= 0`` and ``k = c - phi_slope``, so the inequality holds exactly on
        the half-space ``p >= 0`` (states no closer to the origin along ``g``).
        """
        Ts, Td = self.operators()
        direction = Ts(x)
        lhs = orthogonal_error(gag_step(Ts, Td, x, params), self.fixed_point, direction)
        u = orthogonal_error(x, self.fixed_point, direction)
        return lhs, self.c * u - self.phi(u)

    def start(self, parallel_offset=0.5, orthogonal_offset=0.5, seed=1):
        """Initial state with the given parallel and orthogonal distances from x*."""
        rng = make_rng(seed, 1)
        v = rng.standard_normal(self.dim)
        g = self.guidance_direction
        v -= (v @ g) * g
        v /= np.linalg.norm(v)
        return self.fixed_point + parallel_offset * g + orthogonal_offset * v


def hopfield_operator(xi, alpha=1.0, beta=None):
    """Retrieval map ``x -> Xi alpha_entmax(beta Xi^T x)`` as an :class:`Operator`."""
    from .hopfield import HopfieldConfig, as_patterns, retrieve

    xi = as_patterns(xi)
    cfg = HopfieldConfig(alpha=alpha, beta=beta)
    return Operator(lambda x: retrieve(x, xi, cfg), xi.d, f"hopfield(alpha={alpha})")


def affine_operator(A, b=None):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError("affine operator needs a square matrix")
    b = np.zeros(A.shape[0]) if b is None else check_vector(b, "b")
    return Operator(lambda x: A @ x + b, A.shape[0], "affine")
