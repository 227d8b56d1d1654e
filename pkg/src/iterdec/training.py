"""Learning the decoder parameters.

The episode loss is a convex mix of per-episode absolute and squared
error; note the asymmetric normalization, implemented as printed: the
absolute term divides by 2K only, the squared term by 2BK.  Gradients are
hand-derived backpropagation through time over the K unrolled steps, with
the carried-in state treated as a constant, and are verifiable against
the central-difference oracle in ``numerics``.  Updates are RMSprop after
global-norm clipping.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import codec, estimator
from .errors import NumericError, ParameterError, StateError
from .estimator import EpisodeTrace, EstimatorParams, batch_contexts, run_episode, zero_state
from .numerics import SeededRng, finite_diff_grad
from .patching import CORNERS, block_symbols, decompose, get_neighbors, scan_path

DEFAULT_LAMBDA = 0.235
DEFAULT_CLIP_NORM = 7.0
DEFAULT_DECAY = 0.9
DEFAULT_EPSILON = 1e-8
DEFAULT_ETA0 = 0.002
DEFAULT_GAMMA = 0.000001025
ETA_FLOOR = 1e-9

_CLIP_SLACK = 1e-12  # treat norms this close to the limit as already clipped


@dataclass
class LossConfig:
    """lam trades absolute error (lam=0) against squared error (lam=1)."""

    lam: float = DEFAULT_LAMBDA
    normalize_mae_by_batch: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"loss mix must lie in [0, 1], got {self.lam}")


def episode_loss(targets: np.ndarray, trace: EpisodeTrace, cfg: LossConfig) -> float:
    """Distortion of one episode, summed over steps, lanes, and pixels."""
    k = trace.k
    b = trace.lanes
    mae = 0.0
    sqe = 0.0
    for recon in trace.recons:
        resid = recon - targets
        mae += np.abs(resid).sum()
        sqe += (resid**2).sum()
    mae /= 2.0 * k
    if cfg.normalize_mae_by_batch:
        mae /= b
    sqe /= 2.0 * b * k
    return float((1.0 - cfg.lam) * mae + cfg.lam * sqe)


def _recon_grads(targets: np.ndarray, trace: EpisodeTrace, cfg: LossConfig) -> list[np.ndarray]:
    """d(loss)/d(recon_k) for every step."""
    k = trace.k
    b = trace.lanes
    mae_scale = (1.0 - cfg.lam) / (2.0 * k)
    if cfg.normalize_mae_by_batch:
        mae_scale /= b
    mse_scale = cfg.lam / (b * k)
    grads = []
    for recon in trace.recons:
        resid = recon - targets
        grads.append(mae_scale * np.sign(resid) + mse_scale * resid)
    return grads


def _rowsum(x: np.ndarray) -> np.ndarray:
    return x.sum(axis=1, keepdims=True)


def _backward_mlp(step, params, gs, t):
    ga = gs * (1.0 - step["s"] ** 2)
    t["b"] += _rowsum(ga)
    return np.zeros_like(gs), ga


def _backward_delta_rnn(step, params, gs, t):
    p = params.tensors
    s_prev, v, s_tilde, r, s = step["s_prev"], step["v"], step["s_tilde"], step["r"], step["s"]
    gm = gs * (1.0 - s**2)
    gr = gm * (s_prev - s_tilde)
    gst = gm * (1.0 - r)
    gprev = gm * r
    ga = gst * (1.0 - s_tilde**2)
    t["b"] += _rowsum(ga)
    t["alpha"] += _rowsum(ga * v * step["e"])
    t["beta1"] += _rowsum(ga * v)
    t["beta2"] += _rowsum(ga * step["e"])
    gv = ga * (p["alpha"] * step["e"] + p["beta1"])
    ge = ga * (p["alpha"] * v + p["beta2"])
    t["V"] += gv @ s_prev.T
    gprev = gprev + p["V"].T @ gv
    gpre_r = gr * r * (1.0 - r)
    t["br"] += _rowsum(gpre_r)
    ge = ge + gpre_r
    return gprev, ge


def _backward_gru(step, params, gs, t):
    p = params.tensors
    s_prev, z, r, rs, h_tilde = step["s_prev"], step["z"], step["r"], step["rs"], step["h_tilde"]
    e = step["e"]
    gz = gs * (h_tilde - s_prev)
    ght = gs * z
    gprev = gs * (1.0 - z)
    ga_h = ght * (1.0 - h_tilde**2)
    t["Wh"] += ga_h @ e.T
    t["Uh"] += ga_h @ rs.T
    t["bh"] += _rowsum(ga_h)
    grs = p["Uh"].T @ ga_h
    gr = grs * s_prev
    gprev = gprev + grs * r
    ge = p["Wh"].T @ ga_h
    ga_z = gz * z * (1.0 - z)
    t["Wz"] += ga_z @ e.T
    t["Uz"] += ga_z @ s_prev.T
    t["bz"] += _rowsum(ga_z)
    ge = ge + p["Wz"].T @ ga_z
    gprev = gprev + p["Uz"].T @ ga_z
    ga_r = gr * r * (1.0 - r)
    t["Wr"] += ga_r @ e.T
    t["Ur"] += ga_r @ s_prev.T
    t["br"] += _rowsum(ga_r)
    ge = ge + p["Wr"].T @ ga_r
    gprev = gprev + p["Ur"].T @ ga_r
    return gprev, ge


def _backward_lstm(step, params, gs_pair, t):
    p = params.tensors
    gh, gc_in = gs_pair
    e = step["e"]
    h_prev, c_prev = step["h_prev"], step["c_prev"]
    i, f, o, g, c, tc = step["i"], step["f"], step["o"], step["g"], step["c"], step["tc"]
    go = gh * tc
    gc = gc_in + gh * o * (1.0 - tc**2)
    gi = gc * g
    gf = gc * c_prev
    gg = gc * i
    gc_prev = gc * f
    ga_i = gi * i * (1.0 - i)
    ga_f = gf * f * (1.0 - f)
    ga_o = go * o * (1.0 - o)
    ga_g = gg * (1.0 - g**2)
    ge = np.zeros_like(gh)
    gh_prev = np.zeros_like(gh)
    for gate, ga in (("i", ga_i), ("f", ga_f), ("o", ga_o), ("g", ga_g)):
        t[f"W{gate}"] += ga @ e.T
        t[f"U{gate}"] += ga @ h_prev.T
        t[f"b{gate}"] += _rowsum(ga)
        ge += p[f"W{gate}"].T @ ga
        gh_prev += p[f"U{gate}"].T @ ga
    return (gh_prev, gc_prev), ge


_BACKWARD = {
    "mlp": (_backward_mlp, ("s",)),
    "delta-rnn": (_backward_delta_rnn, ("s_prev", "v", "s_tilde", "r", "s")),
    "gru": (_backward_gru, ("s_prev", "z", "r", "rs", "h_tilde")),
    "lstm": (_backward_lstm, ("h_prev", "c_prev", "i", "f", "o", "g", "c", "tc")),
}


def bptt_gradients(
    targets: np.ndarray,
    trace: EpisodeTrace,
    params: EstimatorParams,
    cfg: LossConfig,
) -> dict[str, np.ndarray]:
    """Exact gradients of the episode loss for every parameter tensor.

    The state carried in from the previous episode is a constant: the
    unrolled graph stops at this episode's first step.
    """
    backward, needed = _BACKWARD[params.kind]
    estimator.require_intermediates(trace, needed)
    if trace.k == 0:
        raise StateError("trace has no steps")

    grads = {name: np.zeros_like(params.tensors[name]) for name in params.tensor_names()}
    d_recons = _recon_grads(targets, trace, cfg)
    u = params.tensors["U"]

    lanes = trace.lanes
    if params.kind == "lstm":
        gstate = (np.zeros((params.hidden, lanes)), np.zeros((params.hidden, lanes)))
    else:
        gstate = np.zeros((params.hidden, lanes))
    ge_total = np.zeros((params.hidden, lanes))

    for k in reversed(range(trace.k)):
        step = dict(trace.steps[k])
        step["e"] = trace.e
        d_rec = d_recons[k]
        hidden = step["h"] if params.kind == "lstm" else step["s"]
        grads["U"] += d_rec @ hidden.T
        grads["c"] += _rowsum(d_rec)
        from_recon = u.T @ d_rec
        if params.kind == "lstm":
            gs_in = (gstate[0] + from_recon, gstate[1])
        else:
            gs_in = gstate + from_recon
        gstate, ge = backward(step, params, gs_in, grads)
        ge_total += ge

    norm_slots = trace.context.slots
    if params.tied:
        for n in range(params.slots):
            grads["W"] += ge_total @ norm_slots[n].T
    else:
        for n in range(params.slots):
            grads[f"W{n}"] += ge_total @ norm_slots[n].T
    grads["Wflag"] += ge_total @ trace.context.flags.T
    return grads


def global_grad_norm(grads: dict[str, np.ndarray], order: list[str]) -> float:
    return float(np.sqrt(sum(float((grads[name] ** 2).sum()) for name in order)))


def clip_gradients(grads: dict[str, np.ndarray], order: list[str], clip_norm: float) -> float:
    """Scale all gradients so their joint norm is at most clip_norm.

    Returns the pre-clip norm.  Re-clipping an already-clipped set is a
    no-op (a tiny relative slack absorbs the rescaling roundoff).
    """
    norm = global_grad_norm(grads, order)
    if norm > clip_norm * (1.0 + _CLIP_SLACK):
        scale = clip_norm / norm
        for name in order:
            grads[name] *= scale
    return norm


@dataclass
class OptimizerState:
    """RMSprop accumulators plus the clipping threshold."""

    decay: float = DEFAULT_DECAY
    epsilon: float = DEFAULT_EPSILON
    clip_norm: float = DEFAULT_CLIP_NORM
    accum: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")


def rmsprop_update(
    params: EstimatorParams,
    grads: dict[str, np.ndarray],
    opt: OptimizerState,
    eta: float,
) -> float:
    """Clip globally, update accumulators, take the scaled step in place.

    Returns the pre-clip gradient norm.  Non-finite gradients reject the
    whole update before any state is touched.
    """
    order = params.tensor_names()
    for name in order:
        if not np.isfinite(grads[name]).all():
            raise NumericError(f"non-finite gradient for tensor {name!r}; update rejected")
    pre_norm = clip_gradients(grads, order, opt.clip_norm)
    for name in order:
        g = grads[name]
        if name not in opt.accum:
            opt.accum[name] = np.zeros_like(g)
        v = opt.accum[name]
        v *= opt.decay
        v += (1.0 - opt.decay) * g * g
        params.tensors[name] -= eta * g / np.sqrt(v + opt.epsilon)
    return pre_norm


@dataclass
class LrSchedule:
    """Step decay or the annealed stochastic rate.

    Step: eta drops by three orders of magnitude every 50 epochs.
    Stochastic: each epoch adds a zero-mean Gaussian of variance gamma^t
    (optionally read as a standard deviation), with an extra x0.01 at
    every 50-epoch boundary.  Both are floored so the rate stays positive.
    """

    kind: str = "step"
    eta0: float = DEFAULT_ETA0
    gamma: float = DEFAULT_GAMMA
    drop_period: int = 50
    noise_is_std: bool = False
    floor: float = ETA_FLOOR
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("step", "annealed-stochastic"):
            raise ParameterError(f"unknown schedule kind {self.kind!r}")
        self._eta = self.eta0


def next_lr(schedule: LrSchedule, epoch: int, rng: SeededRng | None = None) -> float:
    """Learning rate for the given (1-based) epoch."""
    if epoch < 1:
        raise ParameterError(f"epoch must be >= 1, got {epoch}")
    if schedule.kind == "step":
        eta = schedule.eta0 * (0.001 ** (epoch // schedule.drop_period))
    else:
        if rng is None:
            raise ParameterError("the stochastic schedule needs an rng stream")
        variance = schedule.gamma**epoch
        std = variance if schedule.noise_is_std else np.sqrt(variance)
        eta = schedule._eta + float(rng.normal(0.0, std))
        if epoch % schedule.drop_period == 0:
            eta *= 0.01
    eta = max(eta, schedule.floor)
    schedule._eta = eta
    schedule.history.append(eta)
    return eta


@dataclass
class TrainConfig:
    kind: str = "delta-rnn"
    hidden: int = 64
    k: int = 3
    batch: int = 4
    epochs: int = 30
    d: int = 8
    tied: bool = False
    divisor: float = estimator.DEFAULT_DIVISOR
    quality_lo: int = 30
    quality_hi: int = 30
    seed: int = 1234
    lam: float = DEFAULT_LAMBDA
    normalize_mae_by_batch: bool = False
    schedule: str = "step"
    eta0: float = DEFAULT_ETA0
    gamma: float = DEFAULT_GAMMA
    noise_is_std: bool = False
    clip_norm: float = DEFAULT_CLIP_NORM
    rms_decay: float = DEFAULT_DECAY
    rms_epsilon: float = DEFAULT_EPSILON
    val_fraction: float = 0.1

    def loss_config(self) -> LossConfig:
        return LossConfig(lam=self.lam, normalize_mae_by_batch=self.normalize_mae_by_batch)


@dataclass
class EpochLog:
    epoch: int
    eta: float
    train_loss: float
    val_loss: float
    grad_norm_pre_clip: float
    wall_time_s: float


LOG_COLUMNS = ("epoch", "eta", "train_loss", "val_loss", "grad_norm_pre_clip", "wall_time_s")


@dataclass
class TrainResult:
    params: EstimatorParams
    log: list[EpochLog]
    train_indices: list[int]
    val_indices: list[int]


class _EncodedImage:
    """One training image: targets plus cached encodings per quality."""

    def __init__(self, raster: np.ndarray, d: int):
        self.raster = np.asarray(raster, dtype=np.float64)
        self.grid = decompose(self.raster, d)
        self._symbols: dict[int, np.ndarray] = {}

    def symbols(self, quality: int) -> np.ndarray:
        if quality not in self._symbols:
            coded = codec.encode_image(self.raster, quality)
            self._symbols[quality] = block_symbols(coded)
        return self._symbols[quality]


def _epoch_pass(
    images: list[_EncodedImage],
    qualities: list[int],
    corners: list[str],
    params: EstimatorParams,
    loss_cfg: LossConfig,
    cfg: TrainConfig,
    opt: OptimizerState | None,
    eta: float,
) -> tuple[float, float]:
    """One pass over the images; updates parameters when ``opt`` is given.

    Returns (mean episode loss, mean pre-clip gradient norm).
    """
    losses = []
    norms = []
    for start in range(0, len(images), cfg.batch):
        group = images[start:start + cfg.batch]
        group_q = qualities[start:start + cfg.batch]
        group_c = corners[start:start + cfg.batch]
        rows, cols = group[0].grid.rows, group[0].grid.cols
        symbol_sets = [img.symbols(q) for img, q in zip(group, group_q)]
        paths = [scan_path(c, rows, cols).indices for c in group_c]
        state = zero_state(params.kind, params.hidden, len(group))
        for pos in range(rows * cols):
            targets_idx = [int(paths[b][pos]) for b in range(len(group))]
            ctx = batch_contexts(
                [get_neighbors(targets_idx[b], rows, cols, symbol_sets[b]) for b in range(len(group))],
                params.divisor,
            )
            targets = np.stack(
                [group[b].grid.patches[targets_idx[b]] for b in range(len(group))], axis=1
            )
            trace = run_episode(ctx, state, cfg.k, params)
            losses.append(episode_loss(targets, trace, loss_cfg))
            if opt is not None:
                grads = bptt_gradients(targets, trace, params, loss_cfg)
                norms.append(rmsprop_update(params, grads, opt, eta))
            state = trace.final_state
    mean_norm = float(np.mean(norms)) if norms else 0.0
    return float(np.mean(losses)), mean_norm


def train(rasters: list[np.ndarray], cfg: TrainConfig) -> TrainResult:
    """Full training run over a set of equally-sized grayscale rasters.

    Each epoch reshuffles the image order and draws a fresh scan corner
    (and quality, when a range is configured) per image; every scan
    position triggers one episode, one BPTT pass, and one clipped RMSprop
    update.  Decoder state carries across episodes within an image and
    resets between images.  A seeded holdout split tracks validation loss.
    """
    if not rasters:
        raise ParameterError("empty training set")
    shapes = {np.asarray(r).shape for r in rasters}
    if len(shapes) != 1:
        raise ParameterError(f"training rasters must share dimensions, got {sorted(shapes)}")
    if cfg.quality_lo > cfg.quality_hi:
        raise ParameterError("quality range is inverted")

    master = SeededRng(cfg.seed)
    init_rng = master.substream("init")
    shuffle_rng = master.substream("shuffle")
    corner_rng = master.substream("corners")
    quality_rng = master.substream("quality")
    lr_rng = master.substream("lr-noise")
    split_rng = master.substream("split")

    images = [_EncodedImage(r, cfg.d) for r in rasters]
    order = split_rng.shuffled(list(range(len(images))))
    n_val = max(1, round(cfg.val_fraction * len(images))) if len(images) > 1 else 0
    val_idx = sorted(order[:n_val])
    train_idx = sorted(order[n_val:])
    val_quality = (cfg.quality_lo + cfg.quality_hi) // 2
    val_images = [images[i] for i in val_idx]

    params = estimator.init_params(
        cfg.kind, cfg.hidden, cfg.d, init_rng, tied=cfg.tied, divisor=cfg.divisor
    )
    opt = OptimizerState(decay=cfg.rms_decay, epsilon=cfg.rms_epsilon, clip_norm=cfg.clip_norm)
    schedule = LrSchedule(
        kind=cfg.schedule, eta0=cfg.eta0, gamma=cfg.gamma, noise_is_std=cfg.noise_is_std
    )
    loss_cfg = cfg.loss_config()

    log: list[EpochLog] = []
    for epoch in range(1, cfg.epochs + 1):
        start_time = time.perf_counter()
        eta = next_lr(schedule, epoch, lr_rng)
        epoch_images = [images[i] for i in shuffle_rng.shuffled(train_idx)]
        corners = [CORNERS[int(corner_rng.integers(0, len(CORNERS)))] for _ in epoch_images]
        if cfg.quality_lo == cfg.quality_hi:
            qualities = [cfg.quality_lo] * len(epoch_images)
        else:
            qualities = [
                int(quality_rng.integers(cfg.quality_lo, cfg.quality_hi + 1)) for _ in epoch_images
            ]
        train_loss, grad_norm = _epoch_pass(
            epoch_images, qualities, corners, params, loss_cfg, cfg, opt, eta
        )
        if val_images:
            val_loss, _ = _epoch_pass(
                val_images,
                [val_quality] * len(val_images),
                ["top-left"] * len(val_images),
                params,
                loss_cfg,
                cfg,
                None,
                eta,
            )
        else:
            val_loss = train_loss
        log.append(
            EpochLog(
                epoch=epoch,
                eta=eta,
                train_loss=train_loss,
                val_loss=val_loss,
                grad_norm_pre_clip=grad_norm,
                wall_time_s=time.perf_counter() - start_time,
            )
        )
    return TrainResult(params=params, log=log, train_indices=train_idx, val_indices=val_idx)


def write_training_log(log: list[EpochLog], path, header_comment: str = "") -> None:
    """CSV log; one row per epoch with the documented column set."""
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append(",".join(LOG_COLUMNS))
    for row in log:
        lines.append(
            f"{row.epoch},{row.eta:.12g},{row.train_loss:.12g},{row.val_loss:.12g},"
            f"{row.grad_norm_pre_clip:.12g},{row.wall_time_s:.3f}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def gradient_check(
    kind: str,
    hidden: int = 4,
    d: int = 4,
    k: int = 3,
    lanes: int = 2,
    seed: int = 2024,
    h: float = 1e-5,
    lam: float = DEFAULT_LAMBDA,
) -> float:
    """Max relative error of BPTT gradients vs central finite differences.

    Random contexts, targets, and a random carried-in state exercise every
    parameter tensor; relative error uses a small absolute floor so
    near-zero entries are compared at finite-difference accuracy.
    """
    rng = SeededRng(seed)
    params = estimator.init_params(kind, hidden, d, rng.substream("init"))
    # spread the weights wider than train-time init so every path is active
    data = rng.substream("data")
    for name in params.tensor_names():
        shape = params.tensors[name].shape
        params.tensors[name] = data.uniform(-0.6, 0.6, shape)

    p = d * d
    slots = data.uniform(-1.0, 1.0, (params.slots, p, lanes))
    flags = (data.uniform(0.0, 1.0, (params.slots, lanes)) > 0.3).astype(np.float64)
    flags[-1, :] = 1.0
    ctx = estimator.ContextBatch(slots=slots, flags=flags)
    targets = data.uniform(0.0, 1.0, (p, lanes))
    if kind == "lstm":
        s_init = (data.uniform(-0.5, 0.5, (hidden, lanes)), data.uniform(-0.5, 0.5, (hidden, lanes)))
    else:
        s_init = data.uniform(-0.5, 0.5, (hidden, lanes))

    loss_cfg = LossConfig(lam=lam)
    trace = run_episode(ctx, s_init, k, params)
    analytic = bptt_gradients(targets, trace, params, loss_cfg)

    worst = 0.0
    for name in params.tensor_names():
        tensor = params.tensors[name]

        def loss_at(x, _name=name, _orig=tensor):
            params.tensors[_name] = x
            value = episode_loss(targets, run_episode(ctx, s_init, k, params), loss_cfg)
            params.tensors[_name] = _orig
            return value

        numeric = finite_diff_grad(loss_at, tensor.copy(), h)
        denom = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(numeric)), 1e-3)
        worst = max(worst, float((np.abs(analytic[name] - numeric) / denom).max()))
    return worst
