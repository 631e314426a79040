"""Gaussian-process surrogate: Matérn 5/2 ARD kernel, exact posterior,
marginal-likelihood fitting, and acquisition-driven batch recommendation.

Per-point weights soften pseudo evidence by inflating its noise:
noise_i = noise_variance / weight_i, so weight 1 is a real observation and
smaller weights mean larger effective noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, special

SQRT5 = math.sqrt(5.0)
LOG2PI = math.log(2.0 * math.pi)
JITTER_LADDER = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class GPError(RuntimeError):
    """Degenerate fit input or factorization failure past the jitter ladder."""


@dataclass(frozen=True)
class Hyperparams:
    lengthscales: np.ndarray  # one per input dimension (ARD)
    signal_variance: float
    noise_variance: float
    constant_mean: float

    def to_dict(self) -> dict:
        return {
            "lengthscales": [float(x) for x in self.lengthscales],
            "signal_variance": float(self.signal_variance),
            "noise_variance": float(self.noise_variance),
            "constant_mean": float(self.constant_mean),
        }


def matern52(x: np.ndarray, x2: np.ndarray, lengthscales: np.ndarray, signal_variance: float) -> float:
    """Matérn nu=5/2 kernel: sigma^2 (1 + sqrt5 r + 5 r^2/3) exp(-sqrt5 r)."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    ls = np.asarray(lengthscales, dtype=float)
    if x.shape != x2.shape or x.shape != ls.shape:
        raise GPError("matern52: dimension mismatch")
    if np.any(ls <= 0) or signal_variance <= 0:
        raise GPError("matern52: hyperparameters must be positive")
    r = math.sqrt(float(np.sum(((x - x2) / ls) ** 2)))
    return signal_variance * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * math.exp(-SQRT5 * r)


def _kernel(X1: np.ndarray, X2: np.ndarray, ls: np.ndarray, sf2: float) -> np.ndarray:
    A = X1 / ls
    B = X2 / ls
    d2 = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    r = np.sqrt(np.maximum(d2, 0.0))
    return sf2 * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * np.exp(-SQRT5 * r)


def _chol_with_jitter(A: np.ndarray) -> tuple[np.ndarray, float]:
    for j in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(A + j * np.eye(len(A)))
            return L, j
        except np.linalg.LinAlgError:
            continue
    raise GPError("kernel matrix not positive definite after max jitter 1e-4")


@dataclass
class GPModel:
    """Fitted GP with a cached Cholesky factorization of K + D."""

    train_x: np.ndarray  # (n, d)
    train_y: np.ndarray  # (n,)
    weights: np.ndarray  # (n,) in (0, 1]
    hyperparams: Hyperparams
    chol: np.ndarray = field(repr=False, default=None)
    alpha: np.ndarray = field(repr=False, default=None)
    jitter: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.chol is None:
            self._refactor()

    def _refactor(self) -> None:
        hp = self.hyperparams
        K = _kernel(self.train_x, self.train_x, hp.lengthscales, hp.signal_variance)
        A = K + np.diag(hp.noise_variance / self.weights)
        self.chol, self.jitter = _chol_with_jitter(A)
        resid = self.train_y - hp.constant_mean
        self.alpha = linalg.cho_solve((self.chol, True), resid, check_finite=False)

    def log_marginal_likelihood(self) -> float:
        resid = self.train_y - self.hyperparams.constant_mean
        return float(
            -0.5 * resid @ self.alpha
            - np.sum(np.log(np.diag(self.chol)))
            - 0.5 * len(resid) * LOG2PI
        )

    def condition_on(self, x: np.ndarray, y: float, weight: float = 1.0) -> "GPModel":
        """New model with one extra (fantasy) point; hyperparameters unchanged."""
        return GPModel(
            train_x=np.vstack([self.train_x, np.asarray(x, dtype=float)[None, :]]),
            train_y=np.append(self.train_y, float(y)),
            weights=np.append(self.weights, float(weight)),
            hyperparams=self.hyperparams,
        )


def predict(gp: GPModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and observation variance at X (rows); variance clamped >= 0."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    hp = gp.hyperparams
    Ks = _kernel(X, gp.train_x, hp.lengthscales, hp.signal_variance)
    mean = hp.constant_mean + Ks @ gp.alpha
    v = linalg.solve_triangular(gp.chol, Ks.T, lower=True, check_finite=False)
    var = hp.signal_variance + hp.noise_variance - np.sum(v * v, axis=0)
    var = np.where(var > -1e-12, np.maximum(var, 0.0), var)
    if np.any(var < 0):
        raise GPError(f"negative predictive variance beyond tolerance: {var.min()}")
    return mean, var


def _pack(hp: Hyperparams) -> np.ndarray:
    return np.concatenate(
        [np.log(hp.lengthscales), [math.log(hp.signal_variance), math.log(hp.noise_variance), hp.constant_mean]]
    )


def _unpack(p: np.ndarray, d: int) -> Hyperparams:
    return Hyperparams(
        lengthscales=np.exp(p[:d]),
        signal_variance=math.exp(p[d]),
        noise_variance=math.exp(p[d + 1]),
        constant_mean=float(p[d + 2]),
    )


def _make_objective(X: np.ndarray, y: np.ndarray, weights: np.ndarray):
    """Closure computing (lml, grad) with the pairwise difference tensor hoisted.

    The tensor sqdiff[j] = (x_i,j - x_k,j)^2 never changes across optimizer
    iterations, and the per-dimension gradient reduces to one einsum over it.
    """
    n, d = X.shape
    sqdiff = np.ascontiguousarray((X[:, None, :] - X[None, :, :]).transpose(2, 0, 1) ** 2)
    sqdiff_flat = sqdiff.reshape(d, n * n)  # GEMV-shaped view for the reductions below
    # Large problems stream this 8*d*n^2-byte tensor twice per iteration; a
    # float32 copy halves that traffic at ~1e-7 relative error, far below the
    # optimizer's tolerance. Small problems keep exact float64 throughout.
    fast = n >= 256
    sqdiff32 = sqdiff_flat.astype(np.float32) if fast else None
    inv_w = 1.0 / weights
    eye = np.eye(n)

    def _evaluate(p: np.ndarray, use_fast: bool) -> tuple[float, np.ndarray]:
        hp = _unpack(p, d)
        inv_ls2 = 1.0 / hp.lengthscales**2
        if use_fast:
            r = (inv_ls2.astype(np.float32) @ sqdiff32).astype(np.float64)
        else:
            r = inv_ls2 @ sqdiff_flat
        np.sqrt(r, out=r)
        r = r.reshape(n, n)
        r *= SQRT5  # r now holds sqrt(5) * scaled distance
        decay = np.exp(-r)
        poly = 1.0 + r + r * r / 3.0  # (1 + sqrt5 r + 5 r^2 / 3) in the scaled variable
        K = hp.signal_variance * poly * decay
        D = hp.noise_variance * inv_w
        A = K + np.diag(D)
        L, _ = _chol_with_jitter(A)
        resid = y - hp.constant_mean
        alpha = linalg.cho_solve((L, True), resid, check_finite=False)
        lml = -0.5 * resid @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG2PI

        Ainv = _invert_from_cholesky(L, eye)
        W = np.outer(alpha, alpha)
        W -= Ainv

        grad = np.empty(d + 3)
        # d/d log(lengthscale_j): the 1/r singularity cancels against dr/dl exactly
        M = W * decay
        M *= hp.signal_variance * (5.0 / 3.0) * (1.0 + r)
        mflat = M.ravel()
        if use_fast and float(np.max(np.abs(mflat))) < 1e18:
            grad[:d] = 0.5 * (sqdiff32 @ mflat.astype(np.float32)).astype(np.float64) * inv_ls2
        else:
            grad[:d] = 0.5 * (sqdiff_flat @ mflat) * inv_ls2
        grad[d] = 0.5 * float(np.einsum("ij,ij->", W, K))  # d/d log(signal_variance)
        grad[d + 1] = 0.5 * float(np.diag(W) @ D)  # d/d log(noise_variance)
        grad[d + 2] = float(np.sum(alpha))  # d/d mean
        return float(lml), grad

    def objective(p: np.ndarray) -> tuple[float, np.ndarray]:
        try:
            return _evaluate(p, fast)
        except GPError:
            if fast:
                try:
                    return _evaluate(p, False)
                except GPError:
                    pass
            # near-singular line-search probe: finite barrier keeps L-BFGS alive
            return -1e20, np.zeros(d + 3)

    return objective


def _invert_from_cholesky(L: np.ndarray, eye: np.ndarray) -> np.ndarray:
    """A^-1 from its lower Cholesky factor via LAPACK dpotri (cho_solve fallback)."""
    inv, info = linalg.lapack.dpotri(L, lower=1)
    if info != 0:
        return linalg.cho_solve((L, True), eye, check_finite=False)
    inv = np.ascontiguousarray(inv)  # dpotri hands back Fortran order
    inv = inv + inv.T
    np.fill_diagonal(inv, np.diag(inv) / 2.0)
    return inv


def lml_and_grad(
    p: np.ndarray, X: np.ndarray, y: np.ndarray, weights: np.ndarray
) -> tuple[float, np.ndarray]:
    """Weighted log marginal likelihood and its gradient in the packed parameterization.

    Parameters are [log lengthscales (d), log signal_var, log noise_var, mean].
    """
    return _make_objective(np.atleast_2d(X), np.asarray(y, float), np.asarray(weights, float))(p)


@dataclass(frozen=True)
class FitConfig:
    seed: int = 0
    restarts: int = 2
    max_iter: int = 100
    lengthscale_bounds: tuple[float, float] = (5e-2, 1e2)
    signal_bounds: tuple[float, float] = (1e-6, 1e7)
    noise_bounds: tuple[float, float] = (1e-8, 1e6)


def _initial_hyperparams(X: np.ndarray, y: np.ndarray, cfg: FitConfig) -> Hyperparams:
    n, d = X.shape
    if n > 1:
        diff = X[:, None, :] - X[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        nz = dist[dist > 0]
        ls0 = float(np.median(nz)) if nz.size else 1.0
    else:
        ls0 = 1.0
    ls0 = min(max(ls0, cfg.lengthscale_bounds[0] * 2), cfg.lengthscale_bounds[1] / 2)
    var_y = float(np.var(y))
    sf2 = min(max(var_y, 1e-4), cfg.signal_bounds[1] / 10)
    sn2 = min(max(0.05 * var_y, 1e-6), cfg.noise_bounds[1] / 10)
    return Hyperparams(
        lengthscales=np.full(d, ls0),
        signal_variance=sf2,
        noise_variance=sn2,
        constant_mean=float(np.mean(y)),
    )


def fit(
    xs: Sequence[np.ndarray] | np.ndarray,
    ys: Sequence[float] | np.ndarray,
    weights: Sequence[float] | np.ndarray | None = None,
    config: FitConfig = FitConfig(),
    warm_start: Hyperparams | None = None,
) -> GPModel:
    """Maximize the weighted log marginal likelihood by multi-start L-BFGS.

    Deterministic for a fixed config.seed; raises GPError on fewer than two
    points or non-finite targets. A warm start (e.g. the previous round's
    optimum) joins the start list ahead of the data-driven heuristic.
    """
    X = np.atleast_2d(np.asarray(xs, dtype=float))
    y = np.asarray(ys, dtype=float)
    if len(X) < 2:
        raise GPError("fit requires at least 2 points")
    if not np.all(np.isfinite(y)):
        raise GPError("targets must be finite")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0) or np.any(w > 1):
        raise GPError("weights must lie in (0, 1]")

    n, d = X.shape
    lo = np.concatenate(
        [np.full(d, math.log(config.lengthscale_bounds[0])),
         [math.log(config.signal_bounds[0]), math.log(config.noise_bounds[0]), -1e6]]
    )
    hi = np.concatenate(
        [np.full(d, math.log(config.lengthscale_bounds[1])),
         [math.log(config.signal_bounds[1]), math.log(config.noise_bounds[1]), 1e6]]
    )
    bounds = list(zip(lo, hi))
    lml_fn = _make_objective(X, y, w)

    def objective(p: np.ndarray) -> tuple[float, np.ndarray]:
        val, grad = lml_fn(p)
        return -val, -grad

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, n, d])))
    p0 = np.clip(_pack(_initial_hyperparams(X, y, config)), lo, hi)
    starts = [p0]
    if warm_start is not None and len(warm_start.lengthscales) == d:
        starts.insert(0, np.clip(_pack(warm_start), lo, hi))
    while len(starts) < config.restarts:
        jittered = p0.copy()
        jittered[: d + 2] += rng.normal(0.0, 0.7, size=d + 2)
        starts.append(np.clip(jittered, lo, hi))

    best_p, best_val, best_nit = None, math.inf, 0
    for s in starts[: config.restarts]:
        res = optimize.minimize(
            objective, s, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": config.max_iter, "ftol": 1e-6, "gtol": 1e-3},
        )
        if res.fun < best_val:
            best_p, best_val, best_nit = res.x, float(res.fun), int(res.nit)
    hp = _unpack(best_p, d)
    model = GPModel(train_x=X, train_y=y, weights=w, hyperparams=hp)
    model.diagnostics = {"log_marginal_likelihood": -best_val, "iterations": best_nit}
    return model


def default_model(
    xs: np.ndarray, ys: Sequence[float], weights: Sequence[float] | None = None
) -> GPModel:
    """Heuristic-hyperparameter model for degenerate sizes where fit() cannot run."""
    X = np.atleast_2d(np.asarray(xs, dtype=float))
    y = np.asarray(ys, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    hp = _initial_hyperparams(X, y, FitConfig())
    return GPModel(train_x=X, train_y=y, weights=w, hyperparams=hp)


# --- acquisition functions -------------------------------------------------

@dataclass(frozen=True)
class AcquisitionKind:
    """One of 'ei', 'ucb' (with beta), or 'logei' (with smoothing eta)."""

    name: str
    beta: float = 2.0
    eta: float = 1e-3

    def __post_init__(self):
        if self.name not in ("ei", "ucb", "logei"):
            raise ValueError(f"unknown acquisition {self.name!r}")
        if self.beta <= 0 or self.eta <= 0:
            raise ValueError("acquisition parameters must be positive")

    @classmethod
    def parse(cls, spec: str | dict) -> "AcquisitionKind":
        if isinstance(spec, str):
            return cls(name=spec)
        return cls(name=spec["name"], beta=spec.get("beta", 2.0), eta=spec.get("eta", 1e-3))


def _log_h(z: np.ndarray) -> np.ndarray:
    """log(z * Phi(z) + phi(z)), stable for very negative z via the Mills ratio."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    easy = z > -1.0
    if np.any(easy):
        ze = z[easy]
        h = ze * special.ndtr(ze) + np.exp(-0.5 * ze * ze) / math.sqrt(2 * math.pi)
        out[easy] = np.log(h)
    if np.any(~easy):
        t = -z[~easy]
        log_phi = -0.5 * t * t - 0.5 * math.log(2 * math.pi)
        mills = t * math.sqrt(math.pi / 2.0) * special.erfcx(t / math.sqrt(2.0))
        out[~easy] = log_phi + np.log1p(-mills)
    return out


def expected_improvement(mu: np.ndarray, sigma: np.ndarray, best_f: float) -> np.ndarray:
    """(mu - f*) Phi(z) + sigma phi(z); at sigma = 0 the positive-part improvement."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    ei = np.maximum(mu - best_f, 0.0)
    pos = sigma > 0
    if np.any(pos):
        z = (mu[pos] - best_f) / sigma[pos]
        ei = ei.copy()
        ei[pos] = sigma[pos] * np.exp(_log_h(z))
    return ei


def acquire(
    gp: GPModel, candidates: np.ndarray, kind: AcquisitionKind, best_f: float
) -> np.ndarray:
    """Score candidate rows under the given acquisition; all scores finite."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if len(candidates) == 0:
        raise GPError("empty candidate set")
    mu, var = predict(gp, candidates)
    sigma = np.sqrt(np.maximum(var, 0.0))
    if kind.name == "ucb":
        return mu + kind.beta * sigma
    if kind.name == "ei":
        return expected_improvement(mu, sigma, best_f)
    # logei: log(EI + eta * sigma-floor guard), in log domain throughout
    guard = np.log(kind.eta * np.maximum(sigma, 1e-12))
    log_ei = np.full_like(mu, -np.inf)
    pos = sigma > 0
    if np.any(pos):
        z = (mu[pos] - best_f) / sigma[pos]
        log_ei[pos] = np.log(sigma[pos]) + _log_h(z)
    flat = (~pos) & (mu > best_f)
    if np.any(flat):
        log_ei[flat] = np.log(mu[flat] - best_f)
    return np.logaddexp(log_ei, guard)


def _argmax_ties(scores: np.ndarray, rng: np.random.Generator) -> int:
    best = float(np.max(scores))
    tol = 1e-12 * max(1.0, abs(best))
    ties = np.flatnonzero(scores >= best - tol)
    if len(ties) == 1:
        return int(ties[0])
    return int(ties[rng.integers(len(ties))])


def select_batch(
    gp: GPModel,
    pool: np.ndarray,
    q: int,
    kinds: Sequence[AcquisitionKind],
    rng: np.random.Generator,
    best_f: float,
    kind_offset: int = 0,
) -> list[int]:
    """Greedy fantasized batch: argmax-acquire, then condition on the posterior mean.

    Acquisition kinds rotate round-robin by global pick index (kind_offset + i).
    Returns q distinct pool indices.
    """
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    if len(pool) < q:
        raise GPError(f"pool of {len(pool)} cannot supply a batch of {q}")
    work = gp
    remaining = list(range(len(pool)))
    picks: list[int] = []
    for i in range(q):
        kind = kinds[(kind_offset + i) % len(kinds)]
        scores = acquire(work, pool[remaining], kind, best_f)
        j = _argmax_ties(scores, rng)
        pick = remaining.pop(j)
        picks.append(pick)
        mu, _ = predict(work, pool[pick])
        work = work.condition_on(pool[pick], float(mu[0]))
    return picks
