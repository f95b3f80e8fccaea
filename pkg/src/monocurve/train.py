"""Constrained monotone-curve training loop.

Per iteration, on the full training batch with rows y = U x and index
s = sum_j y_j:

    hinge_pos  = mean max(gap, 0)          gap = sum_i f_i(y_i) - sum_{i<j} y_i y_j
    hinge_neg  = mean max(-gap, 0)
    recon      = mean || y - G(s) ||^2
    inv_pen    = mean sum_i |f_i'(G_i(s)) + G_i(s) - s|^2
    ortho_pen  = sum (U^T U - I)^2 + (U U^T - I)^2

The f-nets descend hinge_pos + tau*inv_pen + mult_neg*hinge_neg, the inverse
nets descend lam*recon + tau*inv_pen, the rotation descends
hinge_pos + lam*recon + tau*inv_pen + mult_ortho*ortho_pen, and the two
multipliers ascend by rate*hinge_neg and rate*ortho_pen. Early stopping
watches the validation metric hinge_pos + lam*recon (the inverse penalty is
excluded) and the best-validation snapshot is returned.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .errors import DegenerateColumn, DimensionMismatch, NoConvergence, NonFinite

__all__ = [
    "TrainConfig",
    "CurveModel",
    "FitReport",
    "LossTerms",
    "standardize",
    "destandardize",
    "pca_first_component",
    "init_rotation",
    "loss_terms",
    "fit",
    "evaluate_curve",
    "curve_monotonicity_violation",
    "grid_search",
    "model_to_record",
    "model_from_record",
]


@dataclass
class TrainConfig:
    lam: float = 1.0                # reconstruction weight
    tau: float = 1.0                # inverse-penalty weight
    learning_rate: float = 0.01
    max_iters: int = 1500
    patience: int = 1               # consecutive validation increases before stopping
    min_iters: int = 0              # no stopping (and no snapshots) before this
    optimizer: str = "adam"         # "adam" | "sgd" (plain gradient steps)
    use_rotation: bool = True
    val_fraction: float = 0.1
    seed: int = 0
    rotation_eps: float = 1e-3      # clamp for near-zero loadings in the init
    lr_decay_to: float = 1.0        # cosine-anneal the rate to this fraction
    mult_init: float = 0.0          # starting negative-hinge multiplier; the
                                    # ascent still runs on top (a large
                                    # constant is the sanctioned alternative)
    depth: int = nets.DEFAULT_DEPTH
    width: int = nets.DEFAULT_WIDTH

    def validate(self):
        if not (self.lam >= 0 and self.tau >= 0):
            raise ValueError("lam and tau must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0 < self.lr_decay_to <= 1:
            raise ValueError("lr_decay_to must lie in (0, 1]")
        if self.mult_init < 0:
            raise ValueError("mult_init must be nonnegative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def rate_at(self, it):
        """Cosine anneal from learning_rate to learning_rate*lr_decay_to."""
        if self.lr_decay_to >= 1.0 or self.max_iters <= 1:
            return self.learning_rate
        frac = it / (self.max_iters - 1)
        floor = self.learning_rate * self.lr_decay_to
        return floor + 0.5 * (self.learning_rate - floor) * (1 + np.cos(np.pi * frac))


@dataclass
class CurveModel:
    """Trained artifact: rotation, convex-potential nets, inverse nets,
    final multipliers and the standardization stats of the training data."""

    U: np.ndarray
    f_nets: list
    ginv_nets: list
    mult_neg: float = 0.0
    mult_ortho: float = 0.0
    mean: np.ndarray = None
    std: np.ndarray = None
    use_rotation: bool = True

    @property
    def k(self):
        return self.U.shape[0]

    def copy(self):
        return CurveModel(self.U.copy(), [n.copy() for n in self.f_nets],
                          [n.copy() for n in self.ginv_nets],
                          float(self.mult_neg), float(self.mult_ortho),
                          None if self.mean is None else self.mean.copy(),
                          None if self.std is None else self.std.copy(),
                          self.use_rotation)

    def all_finite(self):
        return (np.all(np.isfinite(self.U))
                and all(n.all_finite() for n in self.f_nets)
                and all(n.all_finite() for n in self.ginv_nets))


@dataclass
class FitReport:
    hinge_pos: list = field(default_factory=list)
    hinge_neg: list = field(default_factory=list)
    recon: list = field(default_factory=list)
    inv_pen: list = field(default_factory=list)
    ortho_pen: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    mult_neg: list = field(default_factory=list)
    mult_ortho: list = field(default_factory=list)
    stop_iteration: int = 0
    best_iteration: int = -1
    best_val: float = np.inf
    val_hinge_pos: float = np.nan   # validation pieces of the returned model
    val_recon: float = np.nan
    val_hinge_neg: float = np.nan
    wall_time: float = 0.0

    def to_record(self):
        return {
            "hinge_pos": self.hinge_pos, "hinge_neg": self.hinge_neg,
            "recon": self.recon, "inv_pen": self.inv_pen,
            "ortho_pen": self.ortho_pen, "val_loss": self.val_loss,
            "mult_neg": self.mult_neg, "mult_ortho": self.mult_ortho,
            "stop_iteration": self.stop_iteration,
            "best_iteration": self.best_iteration,
            "best_val": self.best_val,
            "val_hinge_pos": self.val_hinge_pos,
            "val_recon": self.val_recon,
            "val_hinge_neg": self.val_hinge_neg,
            "wall_time": self.wall_time,
        }


@dataclass
class LossTerms:
    hinge_pos: float
    hinge_neg: float
    recon: float
    inv_pen: float
    ortho_pen: float

    def as_tuple(self):
        return (self.hinge_pos, self.hinge_neg, self.recon, self.inv_pen, self.ortho_pen)


# ---------------------------------------------------------------------------
# data plumbing
# ---------------------------------------------------------------------------

def standardize(data):
    """Zero mean, unit standard deviation per column (population convention).

    Returns (standardized, mean, std); raises DegenerateColumn on a constant
    column.
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DimensionMismatch("need an n x k matrix with n >= 2")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    bad = np.where(std <= 0)[0]
    if bad.size:
        raise DegenerateColumn(f"column {bad[0]} has zero standard deviation")
    return (X - mean) / std, mean, std


def destandardize(X, mean, std):
    return np.asarray(X) * std + mean


def pca_first_component(data, tol=1e-10, max_iter=10000):
    """Top eigenvector of the sample covariance by power iteration, sign
    fixed so the loadings sum positive."""
    X = np.asarray(data, dtype=np.float64)
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / X.shape[0]
    if not np.any(C):
        raise NoConvergence("zero covariance matrix")
    k = C.shape[0]
    v = np.random.default_rng(0xC0FFEE).standard_normal(k)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = C @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            raise NoConvergence("power iteration hit the null space")
        w /= nw
        lam = w @ C @ w
        if np.linalg.norm(C @ w - lam * w) <= tol * max(1.0, abs(lam)):
            v = w
            break
        v = w
    else:
        raise NoConvergence(f"power iteration did not reach residual {tol}")
    s = v.sum()
    if s < 0 or (s == 0 and v[np.argmax(v != 0)] < 0):
        v = -v
    return v


def init_rotation(p, eps=1e-3, use_rotation=True):
    """diag(1 / p_i) with near-zero loadings clamped at eps in magnitude;
    identity when the rotation is disabled."""
    p = np.asarray(p, dtype=np.float64)
    if not use_rotation:
        return np.eye(p.shape[0])
    if eps <= 0:
        raise ValueError("eps must be positive")
    signs = np.where(p < 0, -1.0, 1.0)
    return np.diag(1.0 / (signs * np.maximum(np.abs(p), eps)))


# ---------------------------------------------------------------------------
# loss evaluation
# ---------------------------------------------------------------------------

def _pairwise_cost(Y):
    s = Y.sum(axis=1)
    return s, 0.5 * (s * s - (Y * Y).sum(axis=1))


def _ortho_penalty(U):
    k = U.shape[0]
    eye = np.eye(k)
    a = U.T @ U - eye
    b = U @ U.T - eye
    return float(np.sum(a * a) + np.sum(b * b)), 4.0 * (U @ a + b @ U)


def loss_terms(batch, model):
    """Forward-only evaluation of the five loss terms on a batch."""
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.k:
        raise DimensionMismatch(f"batch must be n x {model.k}")
    n = X.shape[0]
    Y = X @ model.U.T
    s, cost = _pairwise_cost(Y)
    gap = -cost
    for i, f in enumerate(model.f_nets):
        fy, _, _, _ = nets.forward_batch(f, Y[:, i])
        gap = gap + fy
    hinge_pos = float(np.maximum(gap, 0.0).mean())
    hinge_neg = float(np.maximum(-gap, 0.0).mean())
    recon = 0.0
    inv_pen = 0.0
    for i, (f, g) in enumerate(zip(model.f_nets, model.ginv_nets)):
        u, _, _, _ = nets.forward_batch(g, s)
        _, fpu, _, _ = nets.forward_batch(f, u, order=1)
        recon += float(((Y[:, i] - u) ** 2).mean())
        inv_pen += float(((fpu + u - s) ** 2).mean())
    ortho_pen, _ = _ortho_penalty(model.U)
    terms = LossTerms(hinge_pos, hinge_neg, recon, inv_pen, ortho_pen)
    if not np.all(np.isfinite(terms.as_tuple())):
        raise NonFinite("non-finite loss terms")
    return terms


def _validation_metric(X, model, lam):
    """Early-stopping metric: hinge_pos + lam * recon (no inverse penalty)."""
    Y = X @ model.U.T
    s, cost = _pairwise_cost(Y)
    gap = -cost
    recon = 0.0
    for i, (f, g) in enumerate(zip(model.f_nets, model.ginv_nets)):
        fy, _, _, _ = nets.forward_batch(f, Y[:, i])
        gap = gap + fy
        u, _, _, _ = nets.forward_batch(g, s)
        recon += float(((Y[:, i] - u) ** 2).mean())
    hinge_pos = float(np.maximum(gap, 0.0).mean())
    return hinge_pos + lam * recon, hinge_pos, recon


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.state = {}

    def begin_step(self):
        self.t += 1

    def update(self, key, param, grad):
        m, v = self.state.get(key, (np.zeros_like(param), np.zeros_like(param)))
        m = self.b1 * m + (1 - self.b1) * grad
        v = self.b2 * v + (1 - self.b2) * grad * grad
        self.state[key] = (m, v)
        mhat = m / (1 - self.b1 ** self.t)
        vhat = v / (1 - self.b2 ** self.t)
        param -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def begin_step(self):
        pass

    def update(self, key, param, grad):
        param -= self.lr * grad


# ---------------------------------------------------------------------------
# the fitting loop
# ---------------------------------------------------------------------------

def _train_step_grads(X, model, lam, tau, mult_neg, mult_ortho, use_rotation):
    """One full-batch evaluation: loss terms plus gradients for every f-net,
    every inverse net, and the rotation."""
    n, k = X.shape
    Y = X @ model.U.T
    s, cost = _pairwise_cost(Y)

    f_caches, fy, fdy = [], [], []
    order = 1 if use_rotation else 0
    for i, f in enumerate(model.f_nets):
        yv, dyv, _, tape = nets.forward_batch(f, Y[:, i], order=order, want_cache=True)
        f_caches.append(tape)
        fy.append(yv)
        fdy.append(dyv)
    gap = np.sum(fy, axis=0) - cost

    g_caches, u, udot = [], [], []
    for g in model.ginv_nets:
        uv, udv, _, tape = nets.forward_batch(g, s, order=1, want_cache=True)
        g_caches.append(tape)
        u.append(uv)
        udot.append(udv)

    fu_caches, fpu, fppu = [], [], []
    for i, f in enumerate(model.f_nets):
        _, dv, d2v, tape = nets.forward_batch(f, u[i], order=2, want_cache=True)
        fu_caches.append(tape)
        fpu.append(dv)
        fppu.append(d2v)

    pos_mask = gap > 0
    neg_mask = gap < 0
    hinge_pos = float(np.where(pos_mask, gap, 0.0).mean())
    hinge_neg = float(np.where(neg_mask, -gap, 0.0).mean())

    recon = 0.0
    inv_pen = 0.0
    miss = []
    for i in range(k):
        resid = Y[:, i] - u[i]
        recon += float((resid * resid).mean())
        mi = fpu[i] + u[i] - s
        miss.append(mi)
        inv_pen += float((mi * mi).mean())
    ortho_pen, ortho_grad = _ortho_penalty(model.U)

    terms = LossTerms(hinge_pos, hinge_neg, recon, inv_pen, ortho_pen)

    # f-nets: hinge_pos + tau*inv_pen + mult_neg*hinge_neg
    gy_gap = (pos_mask.astype(np.float64) - mult_neg * neg_mask) / n
    f_grads = []
    for i, f in enumerate(model.f_nets):
        grads, _ = nets.net_param_grads(f, f_caches[i], gy_gap)
        gdy_m = (2.0 * tau / n) * miss[i]
        grads_m, _ = nets.net_param_grads(f, fu_caches[i], np.zeros(n), gdy_m)
        for name in grads:
            grads[name] = grads[name] + grads_m[name]
        f_grads.append(grads)

    # inverse nets: lam*recon + tau*inv_pen
    g_grads = []
    for i, g in enumerate(model.ginv_nets):
        gy_g = (2.0 * lam / n) * (u[i] - Y[:, i]) + (2.0 * tau / n) * miss[i] * (fppu[i] + 1.0)
        grads, _ = nets.net_param_grads(g, g_caches[i], gy_g)
        g_grads.append(grads)

    # rotation: hinge_pos + lam*recon + tau*inv_pen + mult_ortho*ortho_pen
    U_grad = None
    if use_rotation:
        gY = np.empty_like(Y)
        resid_dot = np.zeros(n)   # d(recon)/ds contribution shared by all columns
        miss_dot = np.zeros(n)    # d(inv_pen)/ds contribution
        for j in range(k):
            resid_dot += (Y[:, j] - u[j]) * udot[j]
            miss_dot += miss[j] * ((fppu[j] + 1.0) * udot[j] - 1.0)
        for i in range(k):
            gY[:, i] = (pos_mask * (fdy[i] - (s - Y[:, i]))) / n
            gY[:, i] += (2.0 * lam / n) * ((Y[:, i] - u[i]) - resid_dot)
            gY[:, i] += (2.0 * tau / n) * miss_dot
        U_grad = gY.T @ X + mult_ortho * ortho_grad

    return terms, f_grads, g_grads, U_grad


def fit(data, config):
    """Run the constrained training loop; returns (CurveModel, FitReport).

    The model snapshot with the best validation metric is returned; training
    stops after `patience` consecutive validation increases (first increase
    under the default patience of 1), at max_iters, or never starts when
    max_iters is 0.
    """
    config.validate()
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 2:
        raise DimensionMismatch("data must be n x k with k >= 2")
    if X.shape[0] < 20:
        raise DimensionMismatch("need at least 20 rows")
    k = X.shape[1]
    t_start = time.perf_counter()

    Xs, mean, std = standardize(X)
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(X.shape[0])
    n_val = max(1, int(round(config.val_fraction * X.shape[0])))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    X_train, X_val = Xs[train_idx], Xs[val_idx]

    if config.use_rotation:
        p = pca_first_component(Xs)
        U = init_rotation(p, config.rotation_eps)
    else:
        U = np.eye(k)
    f_nets = [nets.init_icnn(rng, config.depth, config.width) for _ in range(k)]
    g_nets = [nets.init_plain(rng, config.depth, config.width) for _ in range(k)]
    model = CurveModel(U, f_nets, g_nets, float(config.mult_init), 0.0,
                       mean, std, config.use_rotation)

    report = FitReport()
    best = model.copy()
    opt = _Adam(config.learning_rate) if config.optimizer == "adam" else _Sgd(config.learning_rate)
    bad_streak = 0
    val_prev = np.inf

    for it in range(config.max_iters):
        terms, f_grads, g_grads, U_grad = _train_step_grads(
            X_train, model, config.lam, config.tau,
            model.mult_neg, model.mult_ortho, config.use_rotation)
        if not np.all(np.isfinite(terms.as_tuple())):
            raise NonFinite(f"non-finite loss at iteration {it}", iteration=it)

        rate = config.rate_at(it)
        opt.lr = rate
        opt.begin_step()
        for i, grads in enumerate(f_grads):
            for name, arr in model.f_nets[i].param_arrays():
                opt.update(("f", i, name), arr, grads[name])
        for i, grads in enumerate(g_grads):
            for name, arr in model.ginv_nets[i].param_arrays():
                opt.update(("g", i, name), arr, grads[name])
        if config.use_rotation:
            opt.update(("U",), model.U, U_grad)
        for f in model.f_nets:
            nets.project_nonneg(f)
        if not model.all_finite():
            raise NonFinite(f"non-finite parameters at iteration {it}", iteration=it)

        # multiplier ascent as plain steps at the constant base rate (the
        # algorithm's r is a constant; only the parameter steps anneal)
        model.mult_neg += config.learning_rate * terms.hinge_neg
        if config.use_rotation:
            model.mult_ortho += config.learning_rate * terms.ortho_pen

        val, _, _ = _validation_metric(X_val, model, config.lam)
        if not np.isfinite(val):
            raise NonFinite(f"non-finite validation loss at iteration {it}", iteration=it)

        report.hinge_pos.append(terms.hinge_pos)
        report.hinge_neg.append(terms.hinge_neg)
        report.recon.append(terms.recon)
        report.inv_pen.append(terms.inv_pen)
        report.ortho_pen.append(terms.ortho_pen)
        report.mult_neg.append(model.mult_neg)
        report.mult_ortho.append(model.mult_ortho)
        report.val_loss.append(val)

        # snapshots become eligible once the warmup has passed, so the
        # returned model reflects the matured constraint handling
        if it >= config.min_iters and val < report.best_val:
            report.best_val = val
            report.best_iteration = it
            best = model.copy()

        if val > val_prev:
            bad_streak += 1
        else:
            bad_streak = 0
        val_prev = val
        if it + 1 > config.min_iters and bad_streak >= config.patience:
            break

    report.stop_iteration = len(report.val_loss)
    if report.best_iteration < 0:
        best = model.copy()   # no eligible snapshot (max_iters 0 or all warmup)
    if report.stop_iteration > 0:
        _, report.val_hinge_pos, report.val_recon = _validation_metric(X_val, best, config.lam)
        report.val_hinge_neg = float(loss_terms(X_val, best).hinge_neg)
    report.wall_time = time.perf_counter() - t_start
    return best, report


def evaluate_curve(model, data):
    """Fitted curve at each data row: rotate, index by the coordinate sum,
    evaluate the inverse nets, rotate back. Expects standardized input."""
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.k:
        raise DimensionMismatch(f"data must be n x {model.k}")
    Y = X @ model.U.T
    s = Y.sum(axis=1)
    G = np.empty_like(Y)
    for i, g in enumerate(model.ginv_nets):
        G[:, i] = nets.forward_batch(g, s)[0]
    return G @ model.U


def curve_monotonicity_violation(model, s_lo, s_hi, grid=512, drop_tol=1e-3):
    """Worst per-component fraction of strictly decreasing steps (drops larger
    than drop_tol) of the fitted inverse maps over an index grid."""
    s = np.linspace(s_lo, s_hi, grid)
    worst = 0.0
    for g in model.ginv_nets:
        u, _, _, _ = nets.forward_batch(g, s)
        drops = np.diff(u) < -drop_tol
        worst = max(worst, float(drops.mean()))
    return worst


def _grid_cell(payload):
    data, cfg_dict = payload
    cfg = TrainConfig(**cfg_dict)
    row = {"lam": cfg.lam, "tau": cfg.tau, "seed": cfg.seed, "ok": True,
           "loss_h": np.nan, "loss_r": np.nan, "score": np.nan}
    try:
        _, report = fit(data, cfg)
        row["loss_h"], row["loss_r"] = report.val_hinge_pos, report.val_recon
        row["score"] = row["loss_h"] + row["loss_r"]
    except (NonFinite, NoConvergence) as exc:
        row["ok"] = False
        row["error"] = str(exc)
    return row


def grid_search(data, lambdas, taus, config, workers=1):
    """Fit every (lam, tau) cell with a derived seed; returns the argmin cell
    of validation hinge_pos + recon and the full table. Cells are independent
    and may run in a worker pool; results do not depend on the worker count.
    """
    if not len(lambdas) or not len(taus):
        raise ValueError("lambda and tau grids must be nonempty")
    data = np.asarray(data, dtype=np.float64)
    jobs = []
    for idx, (lam, tau) in enumerate((l, t) for l in lambdas for t in taus):
        cfg = {**config.__dict__, "lam": float(lam), "tau": float(tau),
               "seed": config.seed + 1000 * idx}
        jobs.append((data, cfg))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_grid_cell, jobs))
    else:
        rows = [_grid_cell(j) for j in jobs]
    ok_rows = [r for r in rows if r["ok"]]
    if not ok_rows:
        raise NonFinite("every grid cell failed")
    best = min(ok_rows, key=lambda r: r["score"])
    return (best["lam"], best["tau"]), rows


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

MODEL_VERSION = 1


def model_to_record(model):
    return {
        "format_version": MODEL_VERSION,
        "k": int(model.k),
        "use_rotation": bool(model.use_rotation),
        "U": model.U.ravel().tolist(),
        "mean": None if model.mean is None else model.mean.tolist(),
        "std": None if model.std is None else model.std.tolist(),
        "mult_neg": float(model.mult_neg),
        "mult_ortho": float(model.mult_ortho),
        "f_nets": [nets.net_to_record(f) for f in model.f_nets],
        "ginv_nets": [nets.net_to_record(g) for g in model.ginv_nets],
    }


def model_from_record(rec):
    if rec.get("format_version") != MODEL_VERSION:
        raise ValueError(f"unsupported model record version {rec.get('format_version')!r}")
    k = int(rec["k"])
    U = np.asarray(rec["U"], dtype=np.float64).reshape(k, k)
    mean = None if rec["mean"] is None else np.asarray(rec["mean"], dtype=np.float64)
    std = None if rec["std"] is None else np.asarray(rec["std"], dtype=np.float64)
    return CurveModel(U, [nets.net_from_record(r) for r in rec["f_nets"]],
                      [nets.net_from_record(r) for r in rec["ginv_nets"]],
                      float(rec["mult_neg"]), float(rec["mult_ortho"]),
                      mean, std, bool(rec["use_rotation"]))
