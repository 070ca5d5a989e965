"""Trainable pulse programs: forward pass, gradients, optimizer, training loop.

The trainable vector holds 6*M + n_atoms/2 values: per channel and interval a
(scale, offset) pair realizing hold = scale * omega + offset, plus one raw
coupling weight per odd atom (clamped to [0, 1] when realized; even atoms
carry the sample's coupling inputs). All parameters start at 1.0.

Two independent gradient routes are provided. `grad_fd` takes central finite
differences of the batch loss. `grad_stochastic` is an unbiased Monte-Carlo
estimator: it draws evolution times uniformly, splits the evolution there,
inserts per-atom generator rotations exp(-/+ i pi/4 P) (P = X_i for the drive,
P = Z_i for detuning-type terms), and weights the outcome differences by the
schedule's parameter sensitivity at the drawn time: omega for scale entries, 1
for offsets, and the local-detuning envelope for coupling weights, each scaled
by the interpolation weight inside ramps and transitions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import EncodedDataset
from .engine import BatchEngine, EvolutionConfig, PropagatorCache
from .grid import AtomGrid
from .hamiltonian import HamiltonianSpec, assemble
from .pulse import ChannelLimits, PulseTiming, breakpoints_for_holds, build_schedule
from .simulator import evolve, hard_label, predict

CHANNEL_ORDER = ("rabi", "detuning", "local_detuning")
BCE_EPS = 1e-7
GRADIENT_MODES = ("finite_difference", "stochastic")


# -- parameters ----------------------------------------------------------------

@dataclass(frozen=True)
class ModelParameters:
    """Trainable values plus the fixed hardware context they act on."""

    grid: AtomGrid
    timing: PulseTiming
    limits: ChannelLimits
    pulse_thetas: np.ndarray = field(repr=False)   # (3, M, 2)
    coupling_params: np.ndarray = field(repr=False)  # (n_atoms / 2,)

    def __post_init__(self):
        m = self.timing.n_intervals
        n = self.grid.n_atoms
        if n < 2 or n % 2:
            raise ValueError("the model needs an even atom count >= 2")
        th = np.asarray(self.pulse_thetas, dtype=float)
        cp = np.asarray(self.coupling_params, dtype=float)
        if th.shape != (3, m, 2):
            raise ValueError(f"pulse_thetas must be (3, {m}, 2), got {th.shape}")
        if cp.shape != (n // 2,):
            raise ValueError(f"coupling_params must be ({n // 2},), got {cp.shape}")
        object.__setattr__(self, "pulse_thetas", th)
        object.__setattr__(self, "coupling_params", cp)

    @property
    def n_atoms(self) -> int:
        return self.grid.n_atoms

    @property
    def trainable_count(self) -> int:
        return 6 * self.timing.n_intervals + self.n_atoms // 2

    @property
    def input_count(self) -> int:
        return 3 + self.n_atoms // 2

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.pulse_thetas.ravel(), self.coupling_params])

    def with_flat(self, vec: np.ndarray) -> "ModelParameters":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.trainable_count,):
            raise ValueError(f"expected {self.trainable_count} values, got {vec.shape}")
        split = self.pulse_thetas.size
        return replace(self, pulse_thetas=vec[:split].reshape(self.pulse_thetas.shape),
                       coupling_params=vec[split:].copy())


def init_params(grid: AtomGrid, timing: PulseTiming,
                limits: ChannelLimits | None = None) -> ModelParameters:
    """Every trainable value starts at 1.0."""
    return ModelParameters(
        grid=grid, timing=timing, limits=limits or ChannelLimits(),
        pulse_thetas=np.ones((3, timing.n_intervals, 2)),
        coupling_params=np.ones(grid.n_atoms // 2),
    )


def local_weights(params: ModelParameters, coupling_inputs: np.ndarray) -> np.ndarray:
    """Per-atom h: even atoms carry the inputs, odd atoms the clamped parameters."""
    n = params.n_atoms
    ci = np.asarray(coupling_inputs, dtype=float)
    if ci.shape != (n // 2,):
        raise ValueError(f"expected {n // 2} coupling inputs, got {ci.shape}")
    h = np.empty(n)
    h[0::2] = ci
    h[1::2] = np.clip(params.coupling_params, 0.0, 1.0)
    return h


def realize(params: ModelParameters, pulse_inputs, coupling_inputs) -> HamiltonianSpec:
    """Hamiltonian for one sample: schedules from thetas, h from couplings."""
    pi_ = np.asarray(pulse_inputs, dtype=float)
    if pi_.shape != (3,):
        raise ValueError(f"expected 3 pulse inputs, got shape {pi_.shape}")
    schedules = [
        build_schedule(ch, params.pulse_thetas[c], pi_[c], params.timing, params.limits)
        for c, ch in enumerate(CHANNEL_ORDER)
    ]
    return assemble(params.grid, schedules[0], schedules[1], schedules[2],
                    local_weights(params, coupling_inputs))


def forward(params: ModelParameters, pulse_inputs, coupling_inputs,
            config: EvolutionConfig | None = None) -> float:
    """Soft label for one sample."""
    return predict(evolve(realize(params, pulse_inputs, coupling_inputs), config))


# -- loss and metrics ------------------------------------------------------------

def bce_loss(soft: float, label: int, eps: float = BCE_EPS) -> float:
    """Binary cross-entropy with the prediction clamped to [eps, 1 - eps]."""
    p = min(max(float(soft), eps), 1.0 - eps)
    y = float(label)
    return -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))


def _bce_vec(soft: np.ndarray, labels: np.ndarray, eps: float = BCE_EPS) -> np.ndarray:
    p = np.clip(soft, eps, 1.0 - eps)
    y = labels.astype(float)
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


def _bce_grad(soft: np.ndarray, labels: np.ndarray, eps: float = BCE_EPS) -> np.ndarray:
    """d(loss)/d(soft); zero where the clamp is active (the loss is flat there)."""
    p = np.clip(soft, eps, 1.0 - eps)
    g = (p - labels.astype(float)) / (p * (1.0 - p))
    return np.where((soft > eps) & (soft < 1.0 - eps), g, 0.0)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    n_samples: int


def evaluate_metrics(labels: np.ndarray, soft_labels: np.ndarray) -> Metrics:
    """Accuracy and class-1 F1 from soft labels (threshold 0.5, ties to 1)."""
    labels = np.asarray(labels).astype(int)
    hard = np.asarray([hard_label(s) for s in np.asarray(soft_labels, float)])
    if labels.shape != hard.shape or labels.ndim != 1 or labels.size == 0:
        raise ValueError("labels and soft_labels must be matching non-empty 1-d arrays")
    tp = int(np.sum((hard == 1) & (labels == 1)))
    fp = int(np.sum((hard == 1) & (labels == 0)))
    fn = int(np.sum((hard == 0) & (labels == 1)))
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return Metrics(accuracy=float(np.mean(hard == labels)), f1=f1, n_samples=labels.size)


# -- batched forward ----------------------------------------------------------------

class _BatchContext:
    """Vectorized realization of one parameter set over a whole dataset.

    Channel breakpoint values are linear in the (clamped) hold values, so each
    channel keeps a (n_breakpoints, M) structure matrix W with bp = W @ holds;
    W doubles as the sensitivity map used by both gradient routes.
    """

    def __init__(self, params: ModelParameters, dataset: EncodedDataset,
                 config: EvolutionConfig | None = None):
        if dataset.couplings.shape[1] != params.n_atoms // 2:
            raise ValueError(
                f"dataset has {dataset.couplings.shape[1]} coupling inputs, "
                f"the model expects {params.n_atoms // 2}"
            )
        self.params = params
        self.dataset = dataset
        self.config = config or EvolutionConfig()
        timing = params.timing
        m = timing.n_intervals

        template = realize(params, dataset.pulse[0], dataset.couplings[0])
        self._bits = template._bits
        self._pop = template._popcount
        self._xtot = template._xtotal
        self._vdiag = template._vdiag

        self.times = breakpoints_for_holds("rabi", timing, np.zeros(m))[0]
        self.W = {}
        for ch in CHANNEL_ORDER:
            cols = [breakpoints_for_holds(ch, timing, np.eye(m)[k])[1] for k in range(m)]
            self.W[ch] = np.stack(cols, axis=1)  # (n_bp, M)

        b = len(dataset)
        self.bp = {}
        self.hold_clamped = {}
        for c, ch in enumerate(CHANNEL_ORDER):
            bp, clamped = self._channel_bp(ch, params.pulse_thetas[c])
            self.bp[ch] = bp
            self.hold_clamped[ch] = clamped

        hvec = np.empty((b, params.n_atoms))
        hvec[:, 0::2] = dataset.couplings
        hvec[:, 1::2] = np.clip(params.coupling_params, 0.0, 1.0)
        self.hvec = hvec
        self.engine = BatchEngine(
            xtotal=self._xtot, popcount=self._pop,
            vdiag=np.broadcast_to(self._vdiag, (b, self._vdiag.size)),
            hdiag=hvec @ self._bits,
            times=self.times,
            omega=self.bp["rabi"], delta=self.bp["detuning"],
            local=self.bp["local_detuning"], config=self.config,
        )
        self._base_props: dict[int, np.ndarray] | None = None

    def _channel_bp(self, channel: str, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Breakpoint values (B, n_bp) and per-hold clamp mask (B, M)."""
        c = CHANNEL_ORDER.index(channel)
        om = self.dataset.pulse[:, c]
        raw = np.outer(om, thetas[:, 0]) + thetas[None, :, 1]
        lo, hi = self.params.limits.bounds(channel)
        holds = np.clip(raw, lo, hi)
        return holds @ self.W[channel].T, holds != raw

    def base_props(self) -> dict[int, np.ndarray]:
        if self._base_props is None:
            self._base_props = self.engine.segment_propagators()
        return self._base_props

    def preds_from_states(self, states: np.ndarray) -> np.ndarray:
        w = np.abs(states) ** 2
        return (w @ self._pop) / self.params.n_atoms

    def predictions(self) -> np.ndarray:
        return self.preds_from_states(self.engine.final_states(self.base_props()))

    # -- finite differences ------------------------------------------------------

    def _affected_segments(self, channel: str, interval: int) -> list[int]:
        _, vals = breakpoints_for_holds(channel, self.params.timing,
                                        np.eye(self.params.timing.n_intervals)[interval])
        nz = vals != 0
        return [s for s in range(len(self.times) - 1) if nz[s] or nz[s + 1]]

    def shifted_predictions(self, flat_index: int, delta: float) -> np.ndarray:
        """Predictions with one trainable entry shifted by delta."""
        p = self.params
        n_pulse = p.pulse_thetas.size
        if flat_index < n_pulse:
            c, k, _ = np.unravel_index(flat_index, p.pulse_thetas.shape)
            ch = CHANNEL_ORDER[c]
            th = p.pulse_thetas[c].copy()
            th.flat[flat_index - c * th.size] += delta
            bp, _ = self._channel_bp(ch, th)
            eng = self.engine.replace_channels(**{_ENGINE_KEY[ch]: bp})
            segs = self._affected_segments(ch, int(k))
        else:
            j = flat_index - n_pulse
            cp = p.coupling_params.copy()
            cp[j] += delta
            hvec = self.hvec.copy()
            hvec[:, 1 + 2 * j] = np.clip(cp[j], 0.0, 1.0)
            eng = self.engine.replace_channels(hdiag=hvec @ self._bits)
            segs = list(range(eng.n_segments))
        overrides = eng.segment_propagators(segs)
        return self.preds_from_states(
            eng.final_states(props=self.base_props(), overrides=overrides))


_ENGINE_KEY = {"rabi": "omega", "detuning": "delta", "local_detuning": "local"}


def predict_batch(params: ModelParameters, dataset: EncodedDataset,
                  config: EvolutionConfig | None = None) -> np.ndarray:
    """Soft labels for every sample, evaluated on a shared integration grid."""
    return _BatchContext(params, dataset, config).predictions()


def states_batch(params: ModelParameters, dataset: EncodedDataset,
                 config: EvolutionConfig | None = None) -> np.ndarray:
    """Final states for every sample, (n, 2**n_atoms)."""
    ctx = _BatchContext(params, dataset, config)
    return ctx.engine.final_states(ctx.base_props())


def batch_loss(params: ModelParameters, dataset: EncodedDataset,
               config: EvolutionConfig | None = None) -> float:
    preds = predict_batch(params, dataset, config)
    return float(_bce_vec(preds, dataset.labels).mean())


def grad_fd(params: ModelParameters, dataset: EncodedDataset,
            fd_step: float = 1e-3,
            config: EvolutionConfig | None = None) -> np.ndarray:
    """Central finite differences of the mean batch loss."""
    return _grad_fd_full(params, dataset, fd_step, config)[2]


def _grad_fd_full(params: ModelParameters, dataset: EncodedDataset,
                  fd_step: float = 1e-3, config: EvolutionConfig | None = None
                  ) -> tuple[float, np.ndarray, np.ndarray]:
    if fd_step <= 0:
        raise ValueError("fd_step must be positive")
    ctx = _BatchContext(params, dataset, config)
    preds = ctx.predictions()
    labels = dataset.labels
    loss = float(_bce_vec(preds, labels).mean())
    grad = np.empty(params.trainable_count)
    for p in range(params.trainable_count):
        lp = float(_bce_vec(ctx.shifted_predictions(p, +fd_step), labels).mean())
        lm = float(_bce_vec(ctx.shifted_predictions(p, -fd_step), labels).mean())
        grad[p] = (lp - lm) / (2.0 * fd_step)
    return loss, preds, grad


# -- stochastic pulse gradient -----------------------------------------------------

def grad_stochastic(params: ModelParameters, dataset: EncodedDataset,
                    n_time_samples: int = 20,
                    seed: int | tuple[int, ...] = 0,
                    config: EvolutionConfig | None = None) -> np.ndarray:
    """Monte-Carlo gradient of the mean batch loss (see module docstring).

    The same n_time_samples drawn times are shared by every parameter; each
    sample gets its own draws from a generator split on (seed, sample index),
    so results do not depend on evaluation order.
    """
    if n_time_samples < 1:
        raise ValueError("n_time_samples must be >= 1")
    base = (seed,) if isinstance(seed, int) else tuple(seed)
    ctx = _BatchContext(params, dataset, config)
    total = np.zeros(params.trainable_count)
    for b in range(len(dataset)):
        total += _sample_stochastic_grad(ctx, b, n_time_samples,
                                         np.random.default_rng((*base, b)))
    return total / len(dataset)


def _sample_stochastic_grad(ctx: _BatchContext, b: int, n_draws: int,
                            rng: np.random.Generator) -> np.ndarray:
    params = ctx.params
    n = params.n_atoms
    m = params.timing.n_intervals
    spec = realize(params, ctx.dataset.pulse[b], ctx.dataset.couplings[b])
    cache = PropagatorCache(spec, ctx.config)
    duration = cache.duration

    psi_end = cache.final_state()
    pred = float((np.abs(psi_end) ** 2 @ ctx._pop) / n)
    dl_dpred = float(_bce_grad(np.array([pred]), ctx.dataset.labels[b:b + 1])[0])

    # Sensitivity of each channel's breakpoint values to each (interval, kind):
    # rows ordered like pulse_thetas.ravel() within the channel.
    sens = {}
    for c, ch in enumerate(CHANNEL_ORDER):
        w = ctx.W[ch]                      # (n_bp, M)
        open_mask = ~ctx.hold_clamped[ch][b]
        omega = ctx.dataset.pulse[b, c]
        rows = np.empty((2 * m, w.shape[0]))
        rows[0::2] = (w * (open_mask * omega)).T   # scale entries
        rows[1::2] = (w * open_mask).T             # offset entries
        sens[ch] = rows

    h = ctx.hvec[b]
    coupling_open = (params.coupling_params > 0.0) & (params.coupling_params < 1.0)
    times = ctx.times
    bits = ctx._bits
    signs = 1.0 - 2.0 * bits                      # (n_atoms, dim), +1 ground / -1 rydberg
    flip = np.arange(bits.shape[1])[None, :] ^ (1 << np.arange(n))[:, None]
    inv_sqrt2 = 1.0 / math.sqrt(2.0)

    grad = np.zeros(params.trainable_count)
    taus = rng.uniform(0.0, duration, n_draws)
    for tau in taus:
        psi = cache.state_at(tau)
        xpsi = psi[flip]                          # (n_atoms, dim) of X_i |psi>
        zpsi = signs * psi[None, :]
        cols = np.concatenate([
            (psi[None, :] - 1j * xpsi) * inv_sqrt2,
            (psi[None, :] + 1j * xpsi) * inv_sqrt2,
            (psi[None, :] - 1j * zpsi) * inv_sqrt2,
            (psi[None, :] + 1j * zpsi) * inv_sqrt2,
        ], axis=0).T                               # (dim, 4 n_atoms)
        phi = cache.propagate_to_end(tau, cols)
        e = (np.abs(phi) ** 2).T @ ctx._pop / n    # (4 n_atoms,)
        d_x = e[0:n] - e[n:2 * n]
        d_z = e[2 * n:3 * n] - e[3 * n:4 * n]

        # interpolation weights at tau over the shared breakpoints
        j = min(np.searchsorted(times, tau, side="right") - 1, len(times) - 2)
        wfrac = (tau - times[j]) / (times[j + 1] - times[j])

        def at_tau(rows):
            return rows[:, j] * (1.0 - wfrac) + rows[:, j + 1] * wfrac

        contrib = np.concatenate([
            at_tau(sens["rabi"]) * (0.5 * d_x.sum()),
            at_tau(sens["detuning"]) * (0.5 * d_z.sum()),
            at_tau(sens["local_detuning"]) * (0.5 * float(h @ d_z)),
            coupling_open * (0.5 * _local_at(ctx, b, j, wfrac)) * d_z[1::2],
        ])
        grad += contrib
    return dl_dpred * (duration / n_draws) * grad


def _local_at(ctx: _BatchContext, b: int, j: int, wfrac: float) -> float:
    bp = ctx.bp["local_detuning"][b]
    return float(bp[j] * (1.0 - wfrac) + bp[j + 1] * wfrac)


# -- optimizer ---------------------------------------------------------------------

@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n), t=0)


def adam_step(vec: np.ndarray, grad: np.ndarray, state: AdamState,
              learning_rate: float = 0.01, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> tuple[np.ndarray, AdamState]:
    """One Adam update; pure function of (vec, grad, state)."""
    vec = np.asarray(vec, float)
    grad = np.asarray(grad, float)
    if vec.shape != grad.shape or vec.ndim != 1:
        raise ValueError("vec and grad must be matching 1-d arrays")
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad ** 2
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new = vec - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m=m, v=v, t=t)


# -- training loop -------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 75
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    gradient_mode: str = "finite_difference"
    fd_step: float = 1e-3
    n_time_samples: int = 20
    seed: int | tuple[int, ...] = 0
    evolution: EvolutionConfig = EvolutionConfig()

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(
                f"gradient_mode must be one of {GRADIENT_MODES}, got {self.gradient_mode!r}"
            )


@dataclass(frozen=True)
class TrainHistory:
    losses: tuple[float, ...]
    accuracies: tuple[float, ...]
    final_loss: float
    final_accuracy: float
    final_f1: float
    wall_time_s: float


def train(params: ModelParameters, dataset: EncodedDataset,
          config: TrainConfig | None = None) -> tuple[ModelParameters, TrainHistory]:
    """Full-batch Adam for config.iterations steps.

    History rows log the loss/accuracy of the forward pass each gradient was
    taken at (pre-update); the final metrics are evaluated at the returned
    parameters.
    """
    config = config or TrainConfig()
    labels = dataset.labels
    if len(np.unique(labels)) < 2:
        raise ValueError("training set must contain both classes")
    start = time.perf_counter()
    vec = params.flatten()
    state = AdamState.zeros(vec.size)
    losses, accs = [], []
    current = params
    for it in range(config.iterations):
        if config.gradient_mode == "finite_difference":
            loss, preds, grad = _grad_fd_full(current, dataset, config.fd_step,
                                              config.evolution)
        else:
            preds = predict_batch(current, dataset, config.evolution)
            loss = float(_bce_vec(preds, labels).mean())
            base = (config.seed,) if isinstance(config.seed, int) else tuple(config.seed)
            grad = grad_stochastic(current, dataset, config.n_time_samples,
                                   seed=(*base, it), config=config.evolution)
        losses.append(loss)
        accs.append(evaluate_metrics(labels, preds).accuracy)
        vec, state = adam_step(vec, grad, state, config.learning_rate,
                               config.beta1, config.beta2, config.adam_eps)
        current = current.with_flat(vec)
    final_preds = predict_batch(current, dataset, config.evolution)
    final = evaluate_metrics(labels, final_preds)
    history = TrainHistory(
        losses=tuple(losses), accuracies=tuple(accs),
        final_loss=float(_bce_vec(final_preds, labels).mean()),
        final_accuracy=final.accuracy, final_f1=final.f1,
        wall_time_s=time.perf_counter() - start,
    )
    return current, history
