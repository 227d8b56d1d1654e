"""The learned nonlinear decoder.

One reconstruction episode refines the estimate of a single target patch
over K steps: a linear transform collapses the neighborhood's quantized
blocks into a context vector e, a recurrent state function folds e into a
running state s_k, and an affine readout maps s_k back to pixel space.
Four state functions are provided: a gated delta-style recurrent cell,
GRU, LSTM, and a stateless single-hidden-layer MLP baseline.

All step intermediates are kept on the episode trace so the training
module can run backpropagation through time without recomputation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ShapeError, StateError
from .numerics import SeededRng, lane_matmul, sigmoid_map, tanh_map, uniform_init
from .patching import NUM_SLOTS, NeighborContext

KINDS = ("mlp", "delta-rnn", "gru", "lstm")
KIND_CODES = {"mlp": 0, "delta-rnn": 1, "gru": 2, "lstm": 3}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

INIT_LO = -0.054
INIT_HI = 0.054

DEFAULT_DIVISOR = 64.0

# State is an (H, B) hidden matrix; the LSTM carries (hidden, cell).
State = "np.ndarray | tuple[np.ndarray, np.ndarray]"


@dataclass
class EstimatorParams:
    """All decoder parameters as named float64 tensors.

    Transform: per-slot projections W0..W{slots-1} (H x d^2), or a single
    shared W when tied, plus Wflag (H x slots) for the presence flags.
    Readout: U (d^2 x H) and bias c (d^2 x 1).  State-function tensors
    depend on ``kind``.  Vectors are stored as single-column matrices.
    """

    kind: str
    hidden: int
    d: int
    slots: int = NUM_SLOTS
    tied: bool = False
    divisor: float = DEFAULT_DIVISOR
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def patch_dim(self) -> int:
        return self.d * self.d

    def slot_weight(self, n: int) -> np.ndarray:
        return self.tensors["W"] if self.tied else self.tensors[f"W{n}"]

    def tensor_names(self) -> list[str]:
        """Fixed serialization / reduction order."""
        names = ["W"] if self.tied else [f"W{n}" for n in range(self.slots)]
        names.append("Wflag")
        names.extend(_STATE_TENSORS[self.kind])
        names.extend(["U", "c"])
        return names


_STATE_TENSORS = {
    "mlp": ["b"],
    "delta-rnn": ["V", "b", "br", "alpha", "beta1", "beta2"],
    "gru": ["Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh"],
    "lstm": ["Wi", "Ui", "bi", "Wf", "Uf", "bf", "Wo", "Uo", "bo", "Wg", "Ug", "bg"],
}


def init_params(
    kind: str,
    hidden: int,
    d: int,
    rng: SeededRng,
    slots: int = NUM_SLOTS,
    tied: bool = False,
    divisor: float = DEFAULT_DIVISOR,
) -> EstimatorParams:
    """Uniform(-0.054, 0.054) weights, zero biases (LSTM forget bias 1)."""
    if kind not in KINDS:
        raise ParameterError(f"unknown estimator kind {kind!r}, expected one of {KINDS}")
    h, p = hidden, d * d
    t: dict[str, np.ndarray] = {}

    def w(rows, cols):
        return uniform_init(rows, cols, INIT_LO, INIT_HI, rng)

    if tied:
        t["W"] = w(h, p)
    else:
        for n in range(slots):
            t[f"W{n}"] = w(h, p)
    t["Wflag"] = w(h, slots)
    if kind == "mlp":
        t["b"] = np.zeros((h, 1))
    elif kind == "delta-rnn":
        t["V"] = w(h, h)
        t["b"] = np.zeros((h, 1))
        t["br"] = np.zeros((h, 1))
        t["alpha"] = w(h, 1)
        t["beta1"] = w(h, 1)
        t["beta2"] = w(h, 1)
    elif kind == "gru":
        for gate in ("z", "r", "h"):
            t[f"W{gate}"] = w(h, h)
            t[f"U{gate}"] = w(h, h)
            t[f"b{gate}"] = np.zeros((h, 1))
    else:  # lstm
        for gate in ("i", "f", "o", "g"):
            t[f"W{gate}"] = w(h, h)
            t[f"U{gate}"] = w(h, h)
            t[f"b{gate}"] = np.zeros((h, 1))
        t["bf"] = np.ones((h, 1))
    t["U"] = w(p, h)
    t["c"] = np.zeros((p, 1))
    return EstimatorParams(kind=kind, hidden=hidden, d=d, slots=slots, tied=tied, divisor=divisor, tensors=t)


@dataclass
class ContextBatch:
    """Neighborhoods of B parallel decode targets, ready for the transform.

    slots: (NUM_SLOTS, d^2, B) symbol columns already divided by the
    normalization constant; flags: (NUM_SLOTS, B) presence indicators.
    """

    slots: np.ndarray
    flags: np.ndarray

    @property
    def lanes(self) -> int:
        return self.slots.shape[2]


def batch_contexts(contexts: list[NeighborContext], divisor: float) -> ContextBatch:
    """Stack per-target contexts into batch lanes."""
    slots = np.stack([c.slots.astype(np.float64) for c in contexts], axis=2) / divisor
    flags = np.stack([c.flags.astype(np.float64) for c in contexts], axis=1)
    return ContextBatch(slots=slots, flags=flags)


def transform(ctx: ContextBatch, params: EstimatorParams) -> np.ndarray:
    """Context vector e: the sum of per-slot projections plus the flag
    projection.  Purely linear; absent slots contribute zero."""
    if ctx.slots.shape[0] != params.slots or ctx.slots.shape[1] != params.patch_dim:
        raise ShapeError(
            f"context {ctx.slots.shape[:2]} does not match "
            f"({params.slots}, {params.patch_dim}) parameters"
        )
    e = np.zeros((params.hidden, ctx.lanes))
    for n in range(params.slots):
        e += lane_matmul(params.slot_weight(n), ctx.slots[n])
    e += lane_matmul(params.tensors["Wflag"], ctx.flags)
    return e


def reconstruct_patch(s: np.ndarray, params: EstimatorParams) -> np.ndarray:
    """Affine readout to pixel space; raw values, no clamping."""
    if s.shape[0] != params.hidden:
        raise ShapeError(f"state has {s.shape[0]} rows, expected {params.hidden}")
    return lane_matmul(params.tensors["U"], s) + params.tensors["c"]


def zero_state(kind: str, hidden: int, lanes: int):
    if kind == "lstm":
        return np.zeros((hidden, lanes)), np.zeros((hidden, lanes))
    return np.zeros((hidden, lanes))


def state_hidden(state) -> np.ndarray:
    """The part of the state the readout sees."""
    return state[0] if isinstance(state, tuple) else state


def mlp_step(e: np.ndarray, s_prev: np.ndarray, params: EstimatorParams):
    s = tanh_map(e + params.tensors["b"])
    return s, {"s": s}


def delta_rnn_step(e: np.ndarray, s_prev: np.ndarray, params: EstimatorParams):
    """Gated delta cell: an inner tanh proposal mixed with the previous
    state by a data-driven gate, under an outer tanh."""
    t = params.tensors
    v = lane_matmul(t["V"], s_prev)
    d1 = t["alpha"] * v * e
    d2 = t["beta1"] * v + t["beta2"] * e
    s_tilde = tanh_map(d1 + d2 + t["b"])
    r = sigmoid_map(e + t["br"])
    s = tanh_map((1.0 - r) * s_tilde + r * s_prev)
    return s, {"s_prev": s_prev, "v": v, "s_tilde": s_tilde, "r": r, "s": s}


def gru_step(e: np.ndarray, s_prev: np.ndarray, params: EstimatorParams):
    """Update/reset-gate recurrence, reset applied to the recurrent term;
    the new state blends the proposal in by the update gate."""
    t = params.tensors
    z = sigmoid_map(lane_matmul(t["Wz"], e) + lane_matmul(t["Uz"], s_prev) + t["bz"])
    r = sigmoid_map(lane_matmul(t["Wr"], e) + lane_matmul(t["Ur"], s_prev) + t["br"])
    rs = r * s_prev
    h_tilde = tanh_map(lane_matmul(t["Wh"], e) + lane_matmul(t["Uh"], rs) + t["bh"])
    s = (1.0 - z) * s_prev + z * h_tilde
    return s, {"s_prev": s_prev, "z": z, "r": r, "rs": rs, "h_tilde": h_tilde, "s": s}


def lstm_step(e: np.ndarray, state: tuple, params: EstimatorParams):
    t = params.tensors
    h_prev, c_prev = state
    i = sigmoid_map(lane_matmul(t["Wi"], e) + lane_matmul(t["Ui"], h_prev) + t["bi"])
    f = sigmoid_map(lane_matmul(t["Wf"], e) + lane_matmul(t["Uf"], h_prev) + t["bf"])
    o = sigmoid_map(lane_matmul(t["Wo"], e) + lane_matmul(t["Uo"], h_prev) + t["bo"])
    g = tanh_map(lane_matmul(t["Wg"], e) + lane_matmul(t["Ug"], h_prev) + t["bg"])
    c = f * c_prev + i * g
    tc = tanh_map(c)
    h = o * tc
    rec = {"h_prev": h_prev, "c_prev": c_prev, "i": i, "f": f, "o": o, "g": g, "c": c, "tc": tc, "h": h}
    return (h, c), rec


_STEP_FNS = {"mlp": mlp_step, "delta-rnn": delta_rnn_step, "gru": gru_step, "lstm": lstm_step}


def step_fn(kind: str):
    try:
        return _STEP_FNS[kind]
    except KeyError:
        raise ParameterError(f"unknown estimator kind {kind!r}") from None


@dataclass
class EpisodeTrace:
    """Everything computed during one K-step episode, kept for BPTT."""

    kind: str
    context: ContextBatch
    e: np.ndarray
    s_init: object
    steps: list[dict]
    recons: list[np.ndarray]
    final_state: object

    @property
    def k(self) -> int:
        return len(self.recons)

    @property
    def lanes(self) -> int:
        return self.e.shape[1]


def run_episode(
    ctx: ContextBatch,
    s_init,
    k: int,
    params: EstimatorParams,
    recompute_context: bool = False,
) -> EpisodeTrace:
    """Refine one target for K steps from the carried-in state.

    The context vector is computed once and reused each step unless
    ``recompute_context`` asks for the (equivalent) recompute-per-step
    path.  The final state is what the caller carries into the next
    episode.
    """
    if k < 1:
        raise ParameterError(f"episode length must be >= 1, got {k}")
    fn = step_fn(params.kind)
    e = transform(ctx, params)
    state = s_init
    steps = []
    recons = []
    for _ in range(k):
        e_k = transform(ctx, params) if recompute_context else e
        state, rec = fn(e_k, state, params)
        steps.append(rec)
        recons.append(reconstruct_patch(state_hidden(state), params))
    return EpisodeTrace(
        kind=params.kind,
        context=ctx,
        e=e,
        s_init=s_init,
        steps=steps,
        recons=recons,
        final_state=state,
    )


def require_intermediates(trace: EpisodeTrace, keys: tuple[str, ...]) -> None:
    for step in trace.steps:
        missing = [key for key in keys if key not in step]
        if missing:
            raise StateError(f"trace step lacks intermediates {missing} needed for BPTT")
