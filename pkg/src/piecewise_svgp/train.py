"""Flat parameter vectors, gradients, Adam and the full-batch fit loop."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import TASK_LINK, ExperimentConfig
from .elbo import Regularizer, objective_terms, predictive_mixture
from .errors import DimensionError, NotPositiveDefiniteError, NumericalError
from .piecewise import PiecewiseLink, discretize_link, sigmoid_link, uniform_partition
from .svgp import checkpoint_dict, init_model, model_from_dict, prior_at_inducing

logger = logging.getLogger(__name__)

MODEL_PREFIXES = ("gp", "gp_var")


class ParamLayout:
    """Named blocks of a flat parameter vector, in a fixed order."""

    def __init__(self, blocks):
        self.blocks = [(name, tuple(shape)) for name, shape in blocks]
        self.sizes = [int(np.prod(s)) for _, s in self.blocks]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)

    @property
    def size(self):
        return int(self.offsets[-1])

    @property
    def names(self):
        return [n for n, _ in self.blocks]

    def split(self, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.size,):
            raise DimensionError(f"expected a vector of length {self.size}, got {vec.shape}")
        out = {}
        for (name, shape), lo, hi in zip(self.blocks, self.offsets[:-1], self.offsets[1:]):
            out[name] = vec[lo:hi].reshape(shape).copy()
        return out

    def join(self, parts):
        return np.concatenate(
            [np.asarray(parts[name], dtype=np.float64).reshape(-1) for name, _ in self.blocks]
        ) if self.blocks else np.zeros(0)

    def block_of(self, index):
        i = int(np.searchsorted(self.offsets, index, side="right")) - 1
        return self.blocks[i][0]


class Problem:
    """An objective bound to data, with its parameters exposed as a flat vector.

    Parameters
    ----------
    variant : str
        One of the objective variants in :mod:`piecewise_svgp.elbo`.
    models : list of SVGPModel
        One model, or ``[mean_model, var_model]`` for ``hetero_gauss``.
    link : PiecewiseLink or None
    train_inducing : bool
        Whether inducing locations are free parameters.
    """

    def __init__(self, variant, models, link, X, y, regularizer=None, train_inducing=True):
        self.variant = variant
        self.models = [m.copy() for m in models]
        self.link = None if link is None else link.replace()
        self.X = X
        self.y = y
        self.regularizer = regularizer or Regularizer()
        self.train_inducing = train_inducing
        self.layout = self._build_layout()

    def _build_layout(self):
        blocks = []
        for prefix, m in zip(MODEL_PREFIXES, self.models):
            M = m.M
            blocks += [(f"{prefix}.log_v", ()), (f"{prefix}.log_s", ())]
            if self.train_inducing:
                blocks.append((f"{prefix}.Z", m.Z.shape))
            blocks += [(f"{prefix}.a", (M,)), (f"{prefix}.L_raw", (M * (M + 1) // 2,))]
            if m.log_noise is not None:
                blocks.append((f"{prefix}.log_noise", ()))
        if self.link is not None and self.link.trainable:
            blocks.append(("link.raw", (self.link.K,)))
            if self.link.mode == "trainable-gaussian":
                blocks.append(("link.log_var", (self.link.K,)))
        return ParamLayout(blocks)

    def pack(self):
        parts = {}
        for prefix, m in zip(MODEL_PREFIXES, self.models):
            parts[f"{prefix}.log_v"] = m.kernel.log_v
            parts[f"{prefix}.log_s"] = m.kernel.log_s
            parts[f"{prefix}.Z"] = m.Z
            parts[f"{prefix}.a"] = m.vdist.a
            parts[f"{prefix}.L_raw"] = m.vdist.L_raw[np.tril_indices(m.M)]
            parts[f"{prefix}.log_noise"] = m.log_noise
        if self.link is not None:
            parts["link.raw"] = self.link.raw
            parts["link.log_var"] = self.link.raw_log_var
        return self.layout.join(parts)

    def unpack(self, theta):
        """Models and link carrying the parameters in ``theta`` (copies)."""
        parts = self.layout.split(theta)
        models = []
        for prefix, m in zip(MODEL_PREFIXES, self.models):
            m = m.copy()
            m.kernel.log_v = float(parts[f"{prefix}.log_v"])
            m.kernel.log_s = float(parts[f"{prefix}.log_s"])
            if self.train_inducing:
                m.Z = parts[f"{prefix}.Z"]
            m.vdist.a = parts[f"{prefix}.a"]
            L_raw = np.zeros((m.M, m.M))
            L_raw[np.tril_indices(m.M)] = parts[f"{prefix}.L_raw"]
            m.vdist.L_raw = L_raw
            if m.log_noise is not None:
                m.log_noise = float(parts[f"{prefix}.log_noise"])
            models.append(m)
        link = self.link
        if link is not None and link.trainable:
            link = link.replace(raw=parts["link.raw"])
            if link.mode == "trainable-gaussian":
                link.raw_log_var = parts["link.log_var"]
        return models, link

    def set(self, theta):
        self.models, self.link = self.unpack(theta)

    def terms(self, theta=None, grad=False, **kw):
        models, link = (self.models, self.link) if theta is None else self.unpack(theta)
        return objective_terms(self.variant, models, link, self.X, self.y, self.regularizer,
                               grad=grad, **kw)

    def value(self, theta):
        try:
            return float(self.terms(theta).value)
        except NotPositiveDefiniteError as exc:
            raise NumericalError(str(exc), block="gp.kernel") from exc

    def value_and_grad(self, theta):
        try:
            t = self.terms(theta, grad=True)
        except NotPositiveDefiniteError as exc:
            raise NumericalError(str(exc), block="gp.kernel") from exc
        parts = {}
        for name, _ in self.layout.blocks:
            if name.endswith(".L_raw"):
                prefix = name.split(".")[0]
                m = self.models[MODEL_PREFIXES.index(prefix)]
                parts[name] = t.grads[name][np.tril_indices(m.M)]
            else:
                parts[name] = t.grads[name]
        g = self.layout.join(parts)
        if not np.isfinite(t.value) or not np.all(np.isfinite(g)):
            bad = np.flatnonzero(~np.isfinite(g))
            block = self.layout.block_of(bad[0]) if bad.size else None
            raise NumericalError("non-finite objective or gradient", block=block)
        return float(t.value), g

    def predict(self, Xstar):
        return predictive_mixture(self.models, self.link, Xstar, self.variant)


def value_and_grad(problem, params):
    return problem.value_and_grad(params)


def finite_diff_grad(f, params, h=1e-5):
    """Central differences with step ``h * max(1, |theta_i|)`` per coordinate."""
    params = np.asarray(params, dtype=np.float64)
    g = np.empty_like(params)
    for i in range(params.size):
        step = h * max(1.0, abs(params[i]))
        up = params.copy()
        dn = params.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (f(up) - f(dn)) / (2.0 * step)
    return g


def gradient_check(problem, params=None, h=1e-5, rtol=1e-4, atol=1e-6):
    """Compare analytic and central-difference gradients block by block.

    Returns a dict ``block -> max error ratio``; a ratio at most 1 passes,
    where the ratio is ``|analytic - fd| / max(rtol * max(|analytic|, |fd|), atol)``.
    """
    params = problem.pack() if params is None else params
    _, g = problem.value_and_grad(params)
    fd = finite_diff_grad(problem.value, params, h)
    tol = np.maximum(rtol * np.maximum(np.abs(g), np.abs(fd)), atol)
    ratio = np.abs(g - fd) / tol
    out = {}
    for name, lo, hi in zip(problem.layout.names, problem.layout.offsets[:-1], problem.layout.offsets[1:]):
        out[name] = float(ratio[lo:hi].max()) if hi > lo else 0.0
    return out


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    alpha: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n, **hyper):
        return cls(np.zeros(n), np.zeros(n), **hyper)


def adam_step(state, params, grad):
    """One bias-corrected Adam ascent step; returns ``(new_state, new_params)``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.m.shape or np.shape(params) != state.m.shape:
        raise DimensionError("parameter, gradient and moment shapes differ")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params + state.alpha * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(m, v, t, state.alpha, state.beta1, state.beta2, state.eps), new


def build_link(config):
    link_name = TASK_LINK[config.task]
    if link_name is None:
        return None
    p = uniform_partition(config.K, config.lo, config.hi)
    mode = config.link_mode
    if config.task == "classify":
        return sigmoid_link(p, trainable=mode != "fixed")
    if mode == "trainable-gaussian":
        return discretize_link(link_name, p, mode=mode, level_var=config.level_var_init)
    return discretize_link(link_name, p, mode=mode)


def build_regularizer(config):
    return Regularizer(config.regularizer, lam=config.lam, c=config.c,
                       reference=config.reference, prior_var=config.prior_var)


def build_problem(config, X, y, rng=None):
    """Initial models, link and objective for ``config`` on training data."""
    rng = np.random.default_rng(config.seed if rng is None else rng)
    with_noise = config.task in ("regress-learnable", "regress-gauss")
    model = init_model(X, config.M, rng, with_noise=with_noise, log_noise=config.log_noise_init)
    model.base_jitter = config.base_jitter
    models = [model]
    if config.task == "regress-hetero":
        var_model = init_model(X, config.M, rng)
        var_model.base_jitter = config.base_jitter
        models.append(var_model)
    return Problem(config.variant, models, build_link(config), X, y,
                   build_regularizer(config), train_inducing=config.train_inducing)


@dataclass
class FitResult:
    problem: Problem
    trace: list = field(default_factory=list)
    params: np.ndarray = None
    jitter_used: float = None

    @property
    def models(self):
        return self.problem.models

    @property
    def link(self):
        return self.problem.link

    @property
    def elbo_trace(self):
        return np.array([row[1] for row in self.trace])

    def predict(self, Xstar):
        return self.problem.predict(Xstar)


def fit(config, data, rng=None, problem=None, callback=None):
    """Maximize the objective with full-batch Adam.

    ``data`` is an ``(X, y)`` pair or any object with ``X`` and ``y``
    attributes. Runs ``config.iters`` steps, stopping early once the
    objective changes by less than ``config.tol`` for ``config.patience``
    consecutive steps. The trace holds ``(step, elbo, grad_norm)`` rows; the
    last row is the objective at the returned parameters.
    """
    X, y = (data.X, data.y) if hasattr(data, "X") else data
    if problem is None:
        problem = build_problem(config, X, y, rng)
    theta = problem.pack()
    state = AdamState.zeros(theta.size, alpha=config.alpha, beta1=config.beta1,
                            beta2=config.beta2, eps=config.adam_eps)
    trace = []
    quiet = 0
    prev = None
    for step in range(config.iters):
        try:
            val, g = problem.value_and_grad(theta)
        except NumericalError as exc:
            raise NumericalError(f"fit aborted: {exc.reason}", block=exc.block, step=step) from exc
        trace.append((step, val, float(np.linalg.norm(g))))
        if callback is not None:
            callback(step, val, theta)
        if prev is not None and abs(val - prev) < config.tol:
            quiet += 1
            if quiet >= config.patience:
                logger.info("converged after %d steps", step)
                break
        else:
            quiet = 0
        prev = val
        state, theta = adam_step(state, theta, g)
    try:
        val, g = problem.value_and_grad(theta)
    except NumericalError as exc:
        raise NumericalError(f"fit aborted: {exc.reason}", block=exc.block, step=len(trace)) from exc
    trace.append((len(trace), val, float(np.linalg.norm(g))))
    problem.set(theta)
    jitter = prior_at_inducing(problem.models[0])[2]
    return FitResult(problem, trace, theta, jitter)


def result_checkpoint(result, config, meta=None, extra=None):
    """Checkpoint document for a finished fit, including its config."""
    models = result.models
    meta = dict(meta or {})
    meta.setdefault("seed", config.seed)
    meta.setdefault("jitter_used", result.jitter_used)
    meta.setdefault("final_elbo", float(result.elbo_trace[-1]))
    extra = dict(extra or {})
    extra["config"] = config.to_dict()
    return checkpoint_dict(models[0], result.link, models[1] if len(models) > 1 else None,
                           task=config.task, meta=meta, extra=extra)


def restore_checkpoint(doc):
    """``(config, models, link)`` from a checkpoint document."""
    config = ExperimentConfig.from_dict(doc["config"])
    models = [model_from_dict(doc)]
    if doc.get("variance_model") is not None:
        models.append(model_from_dict(doc["variance_model"]))
    link = None if doc.get("link") is None else PiecewiseLink.from_dict(doc["link"])
    return config, models, link
