"""Discrete denoising diffusion over codec token sequences.

Corruption follows per-step K x K transition matrices; a transformer
predicts the clean tokens from any noisy state, and the reverse chain
mixes the exact one-step posterior over that prediction.  Schedules are
kept in closed form (the uniform and absorbing kernels are both of the
shape a*I + (1-a)*P for an idempotent P), so dense matrices are built
on demand instead of caching T of them at K = 512.

All schedule math runs in float64; the denoiser trains in float32.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass

import numpy as np

from .nn.layers import (
    Params,
    block_forward,
    block_init,
    embedding_init,
    layer_norm,
    layer_norm_init,
    linear,
    linear_init,
    mlp_forward,
    mlp_init,
    timestep_features,
)
from .nn.optim import AdamState, adam_step
from .nn.tensor import Tensor, as_tensor, concat, cross_entropy_rows, embedding_lookup
from .pharm import ConditionSet, assemble_conditions, condition_params_init

KERNELS = ("uniform", "absorbing")


class ScheduleError(ValueError):
    """Invalid schedule shape, size or beta values."""


class ScheduleWarning(UserWarning):
    """The schedule is too short to reach its stationary distribution."""


class DegeneratePosteriorError(ValueError):
    """The (z_t, z0) pair has zero probability under the schedule."""


# -- schedules ---------------------------------------------------------


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward-corruption schedule with closed-form cumulative products.

    ``k`` counts every state (the mask state included for the absorbing
    kernel); ``alpha_bar[t]`` is the product of (1 - beta) up to step t,
    with ``alpha_bar[0] = 1`` so Q-bar at t=0 is the identity.
    """

    kernel: str
    k: int
    betas: np.ndarray       # (T,)
    alpha_bar: np.ndarray   # (T + 1,)

    @property
    def t_max(self) -> int:
        return len(self.betas)

    @property
    def n_clean(self) -> int:
        """States a clean sequence may use (mask excluded)."""
        return self.k - 1 if self.kernel == "absorbing" else self.k

    def _mix(self, keep: float) -> np.ndarray:
        """keep * I + (1 - keep) * P for the kernel's idempotent target."""
        q = keep * np.eye(self.k)
        if self.kernel == "uniform":
            q += (1.0 - keep) / self.k
        else:
            q[:, self.k - 1] += 1.0 - keep
        return q

    def Q(self, t: int) -> np.ndarray:
        """Single-step transition matrix, rows = source state."""
        self._check_t(t, low=1)
        return self._mix(1.0 - float(self.betas[t - 1]))

    def Q_bar(self, t: int) -> np.ndarray:
        """Cumulative transition matrix from clean state to step t."""
        self._check_t(t, low=0)
        return self._mix(float(self.alpha_bar[t]))

    def stationary(self) -> np.ndarray:
        if self.kernel == "uniform":
            return np.full(self.k, 1.0 / self.k)
        out = np.zeros(self.k)
        out[self.k - 1] = 1.0
        return out

    def stationary_tv(self) -> float:
        """Worst row-wise total variation between Q-bar(T) and the
        stationary distribution; small means the chain fully mixes."""
        gap = np.abs(self.Q_bar(self.t_max) - self.stationary())
        return float(0.5 * gap.sum(axis=1).max())

    def _check_t(self, t, low):
        if not low <= t <= self.t_max:
            raise ScheduleError(f"timestep {t} outside [{low}, {self.t_max}]")


def build_schedule(k: int, t: int, kernel: str = "uniform",
                   shape: str = "linear", beta_min: float = 1e-3,
                   beta_max: float = 0.15, betas=None) -> NoiseSchedule:
    """Construct a schedule of ``t`` steps over ``k`` clean states.

    ``betas`` overrides the named shape.  Betas must lie in [0, 1]; a
    schedule whose final cumulative matrix is still far from stationary
    (total variation above 1e-3) draws a ScheduleWarning, since
    sampling starts from the stationary distribution.
    """
    if k < 2:
        raise ScheduleError(f"need at least 2 states, got {k}")
    if t < 1:
        raise ScheduleError(f"need at least 1 step, got {t}")
    if kernel not in KERNELS:
        raise ScheduleError(f"unknown kernel {kernel!r}")
    if betas is None:
        if shape == "linear":
            betas = np.linspace(beta_min, beta_max, t)
        elif shape == "constant":
            betas = np.full(t, beta_max)
        else:
            raise ScheduleError(f"unknown schedule shape {shape!r}")
    betas = np.asarray(betas, dtype=np.float64)
    if betas.shape != (t,):
        raise ScheduleError(f"expected {t} betas, got shape {betas.shape}")
    if betas.min() < 0.0 or betas.max() > 1.0:
        raise ScheduleError("betas must lie in [0, 1]")
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    states = k + 1 if kernel == "absorbing" else k
    sched = NoiseSchedule(kernel, states, betas, alpha_bar)
    tv = sched.stationary_tv()
    if tv > 1e-3:
        warnings.warn(f"schedule mixes to total variation {tv:.2e} > 1e-3; "
                      "consider more steps or larger betas", ScheduleWarning)
    return sched


# -- forward / posterior / reverse -------------------------------------


def _sample_rows(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF categorical draw per row; u has shape (rows, 1)."""
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = np.maximum(cdf[:, -1], 1.0)
    return np.argmax(u <= cdf, axis=1)


def forward_sample(z0, t: int, schedule: NoiseSchedule, seed) -> np.ndarray:
    """Corrupt clean tokens to step ``t`` in one shot via Q-bar rows."""
    schedule._check_t(t, low=1)
    z0 = np.asarray(z0, dtype=np.int64)
    rows = schedule.Q_bar(t)[z0]
    rng = np.random.default_rng(seed)
    return _sample_rows(rows, rng.random((len(z0), 1)))


def posterior(z_t: int, z0: int, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Exact one-step denoising distribution q(z_{t-1} | z_t, z0).

    Bayes over the forward chain: proportional to the z_t column of Q_t
    times the z0 row of Q-bar(t-1), normalized by Q-bar(t)[z0, z_t].
    """
    schedule._check_t(t, low=1)
    w = schedule.Q(t)[:, z_t] * schedule.Q_bar(t - 1)[z0]
    norm = w.sum()
    if norm <= 0.0:
        raise DegeneratePosteriorError(
            f"impossible pair: z_t={z_t} unreachable from z0={z0} at t={t}")
    return w / norm


def reverse_distribution(z_t, t: int, logits, schedule: NoiseSchedule,
                         renormalize: bool = True) -> np.ndarray:
    """Reverse-chain mixture Sum_z0 q(z_{t-1}|z_t, z0) * softmax(logits)[z0].

    ``logits`` has one row per position over the clean states.  Clean
    states the schedule makes unreachable from a position's z_t are
    dropped from the mixture (their posterior is undefined) and the
    remainder renormalized; with ``renormalize=False`` the raw mixture
    is returned, whose rows sum to 1 up to float error whenever every
    clean state is reachable.
    """
    schedule._check_t(t, low=1)
    z_t = np.asarray(z_t, dtype=np.int64)
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (len(z_t), schedule.n_clean):
        raise ValueError(f"logits shape {logits.shape}, expected "
                         f"({len(z_t)}, {schedule.n_clean})")
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits in reverse_distribution")
    shifted = logits - logits.max(axis=1, keepdims=True)
    p0 = np.exp(shifted)
    p0 /= p0.sum(axis=1, keepdims=True)
    nc = schedule.n_clean
    qbar_t = schedule.Q_bar(t)[:nc, :]          # (nc, K)
    qbar_prev = schedule.Q_bar(t - 1)[:nc, :]   # (nc, K)
    col = qbar_t[:, z_t].T                      # (L, nc): Q-bar_t[k, z_t]
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(col > 0.0, p0 / col, 0.0)
    mix = schedule.Q(t)[:, z_t].T * (w @ qbar_prev)
    if not renormalize:
        return mix
    totals = mix.sum(axis=1, keepdims=True)
    if np.any(totals <= 0.0):
        raise DegeneratePosteriorError(
            "every predicted clean state is unreachable for some position")
    return mix / totals


def reverse_step(z_t, t: int, logits, schedule: NoiseSchedule, seed) -> np.ndarray:
    """Draw z_{t-1} from the reverse mixture."""
    dist = reverse_distribution(z_t, t, logits, schedule)
    rng = np.random.default_rng(seed)
    return _sample_rows(dist, rng.random((len(dist), 1)))


# -- denoiser ----------------------------------------------------------


@dataclass(frozen=True)
class DiffusionConfig:
    """Schedule plus transformer hyperparameters and training knobs."""

    vocab: int = 512             # clean-token alphabet = codec codebook size
    t_steps: int = 100
    kernel: str = "uniform"
    shape: str = "linear"
    beta_min: float = 1e-3
    beta_max: float = 0.15
    dim: int = 128
    heads: int = 4
    layers: int = 4
    ff: int = 256
    max_atoms: int = 50
    cond_dropout: float = 0.1
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 40
    seed: int = 0
    snapshot_interval: int = 50

    def __post_init__(self):
        if self.vocab < 2:
            raise ValueError("vocab must be at least 2")
        if self.t_steps < 1:
            raise ValueError("t_steps must be positive")
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.dim % self.heads != 0:
            raise ValueError("dim must divide evenly into heads")
        if not 0.0 <= self.cond_dropout <= 1.0:
            raise ValueError("cond_dropout must lie in [0, 1]")
        for field in ("layers", "ff", "max_atoms", "batch_size", "epochs",
                      "snapshot_interval"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")


def schedule_from_config(config: DiffusionConfig) -> NoiseSchedule:
    return build_schedule(config.vocab, config.t_steps, config.kernel,
                          config.shape, config.beta_min, config.beta_max)


def diffusion_config(params: Params) -> DiffusionConfig:
    return DiffusionConfig(**params.meta["diffusion"])


def init_denoiser(config: DiffusionConfig, dtype=np.float32) -> Params:
    rng = np.random.default_rng(config.seed)
    params = Params({"diffusion": dataclasses.asdict(config)})
    tokens = config.vocab + (1 if config.kernel == "absorbing" else 0)
    embedding_init(params, "dn.tok", tokens, config.dim, rng, dtype)
    embedding_init(params, "dn.pos", config.max_atoms, config.dim, rng, dtype)
    embedding_init(params, "dn.seg", 2, config.dim, rng, dtype)
    mlp_init(params, "dn.time", [config.dim, config.dim, config.dim], rng, dtype)
    for i in range(config.layers):
        block_init(params, f"dn.b{i}", config.dim, config.heads, config.ff, rng, dtype)
    layer_norm_init(params, "dn.out_ln", config.dim, dtype)
    linear_init(params, "dn.head", config.dim, config.vocab, rng, dtype)
    condition_params_init(params, config.dim, rng, dtype)
    return params


@dataclass
class DenoiserInput:
    """One (possibly batched) denoising query.

    ``tokens`` (L,) or (B, L) noisy token ids; ``t`` the timestep (int,
    or one per batch row); ``cond`` an optional condition-row Tensor of
    shape (C, dim) or (B, C, dim); masks hold 1.0 for valid positions.
    """

    tokens: np.ndarray
    t: object
    cond: Tensor | None = None
    token_mask: np.ndarray | None = None
    cond_mask: np.ndarray | None = None

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if np.min(self.t) < 1:
            raise ValueError("timestep must be at least 1")
        if self.tokens.size and self.tokens.min() < 0:
            raise ValueError("negative token id")


def denoise_logits(params: Params, inp: DenoiserInput) -> Tensor:
    """Per-position clean-token logits.

    Condition rows (if any) are prepended to the embedded token
    sequence and attended jointly; logits are emitted for the token
    positions only.  Unbatched input yields (L, vocab), batched input
    (B, L, vocab).
    """
    cfg = diffusion_config(params)
    tokens = inp.tokens
    single = tokens.ndim == 1
    if single:
        tokens = tokens[None, :]
    b, length = tokens.shape
    if length > cfg.max_atoms:
        raise ValueError(f"{length} tokens exceeds the position table ({cfg.max_atoms})")
    limit = params["dn.tok"].shape[0]
    if tokens.max(initial=0) >= limit:
        raise ValueError(f"token id outside the {limit}-entry vocabulary")
    t = np.broadcast_to(np.asarray(inp.t, dtype=np.int64), (b,))
    if t.max() > cfg.t_steps:
        raise ValueError(f"timestep beyond schedule length {cfg.t_steps}")
    dtype = params["dn.tok"].data.dtype

    x = embedding_lookup(params["dn.tok"], tokens)
    x = x + embedding_lookup(params["dn.pos"], np.arange(length))
    x = x + params["dn.seg"][1]
    tvec = mlp_forward(params, "dn.time",
                       as_tensor(timestep_features(t, cfg.dim).astype(dtype)))
    x = x + tvec.expand_dims(1)

    token_mask = inp.token_mask
    if token_mask is None:
        token_mask = np.ones((b, length), dtype=dtype)
    else:
        token_mask = np.broadcast_to(np.asarray(token_mask, dtype=dtype), (b, length))
    cond = inp.cond
    n_cond = 0
    mask = token_mask
    if cond is not None and cond.shape[-2] > 0:
        if cond.ndim == 2:
            cond = cond.expand_dims(0)
        n_cond = cond.shape[1]
        cond = cond + params["dn.seg"][0]
        if cond.shape[0] == 1 and b > 1:
            cond = concat([cond] * b, axis=0)
        x = concat([cond, x], axis=1)
        cond_mask = inp.cond_mask
        if cond_mask is None:
            cond_mask = np.ones((b, n_cond), dtype=dtype)
        else:
            cond_mask = np.broadcast_to(np.asarray(cond_mask, dtype=dtype), (b, n_cond))
        mask = np.concatenate([cond_mask, token_mask], axis=1)

    for i in range(cfg.layers):
        x = block_forward(params, f"dn.b{i}", x, mask)
    x = layer_norm(params, "dn.out_ln", x)
    logits = linear(params, "dn.head", x)
    if n_cond:
        logits = logits[:, n_cond:, :]
    return logits[0] if single else logits


# -- training ----------------------------------------------------------


@dataclass
class DiffusionExample:
    """One training row: clean tokens plus its conditioning context."""

    tokens: np.ndarray
    conditions: ConditionSet = ConditionSet()
    origin: np.ndarray = None

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if self.origin is None:
            self.origin = np.zeros(3)


def make_examples(mols, codec_params) -> list:
    """Tokenize molecules and pair each with its own pharmacophores.

    The condition origin is the molecule's coordinate centroid so that
    condition geometry lives in the same centered frame the encoder
    uses; at generation time the pocket centroid plays this role.
    """
    from .codec import encode
    from .pharm import extract_pharmacophores

    out = []
    for mol in mols:
        seq = encode(mol, codec_params)
        feats = tuple(extract_pharmacophores(mol))
        out.append(DiffusionExample(seq.tokens, ConditionSet(pharmacophores=feats),
                                    mol.coords.mean(axis=0)))
    return out


def _pad_conditions(params: Params, conditions, origins, keep, dim, dtype):
    """Assemble per-row condition Tensors and zero-pad to equal length."""
    rows = []
    for cs, origin, k in zip(conditions, origins, keep):
        if not k or len(cs) == 0:
            rows.append(None)
        else:
            rows.append(assemble_conditions(params, cs, origin=origin))
    width = max((r.shape[0] for r in rows if r is not None), default=0)
    if width == 0:
        return None, None
    padded = []
    mask = np.zeros((len(rows), width), dtype=dtype)
    for i, r in enumerate(rows):
        if r is None:
            padded.append(as_tensor(np.zeros((1, width, dim), dtype=dtype)))
            continue
        mask[i, :r.shape[0]] = 1.0
        gap = width - r.shape[0]
        if gap:
            r = concat([r, as_tensor(np.zeros((gap, dim), dtype=dtype))], axis=0)
        padded.append(r.expand_dims(0))
    cond = concat(padded, axis=0) if len(padded) > 1 else padded[0]
    return cond, mask


def _make_batch(examples, schedule: NoiseSchedule, config: DiffusionConfig, rng):
    """Draw timesteps, corrupt tokens and fix condition-dropout choices.

    All randomness happens here so the loss itself is a deterministic
    function of (params, batch) -- which is what a finite-difference
    gradient check needs.
    """
    b = len(examples)
    length = max(len(ex.tokens) for ex in examples)
    tokens = np.zeros((b, length), dtype=np.int64)
    token_mask = np.zeros((b, length), dtype=np.float32)
    t = rng.integers(1, schedule.t_max + 1, size=b)
    z_t = np.zeros((b, length), dtype=np.int64)
    for i, ex in enumerate(examples):
        n = len(ex.tokens)
        tokens[i, :n] = ex.tokens
        token_mask[i, :n] = 1.0
        rows = schedule.Q_bar(int(t[i]))[ex.tokens]
        z_t[i, :n] = _sample_rows(rows, rng.random((n, 1)))
    keep = rng.random(b) >= config.cond_dropout
    return {
        "tokens": tokens, "token_mask": token_mask, "t": t, "z_t": z_t,
        "conditions": [ex.conditions for ex in examples],
        "origins": [ex.origin for ex in examples],
        "keep": keep,
    }


def diffusion_loss(params: Params, batch: dict, config: DiffusionConfig) -> Tensor:
    """Cross-entropy of the clean-token prediction from noisy input."""
    dtype = params["dn.tok"].data.dtype
    cond, cond_mask = _pad_conditions(params, batch["conditions"],
                                      batch["origins"], batch["keep"],
                                      config.dim, dtype)
    logits = denoise_logits(params, DenoiserInput(
        batch["z_t"], batch["t"], cond=cond,
        token_mask=batch["token_mask"], cond_mask=cond_mask))
    return cross_entropy_rows(logits, batch["tokens"], batch["token_mask"])


def train_diffusion(examples, config: DiffusionConfig):
    """Fit the denoiser; deterministic for a fixed config.

    Returns ``(params, report)``.  Aborts to the last healthy snapshot
    on a non-finite loss or gradient, mirroring the codec trainer.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("no training examples")
    for ex in examples:
        if len(ex.tokens) == 0:
            raise ValueError("empty token sequence")
        if len(ex.tokens) > config.max_atoms:
            raise ValueError(f"sequence of {len(ex.tokens)} exceeds max_atoms")
        if ex.tokens.max() >= config.vocab:
            raise ValueError("token id outside the configured vocabulary")
    schedule = schedule_from_config(config)
    rng = np.random.default_rng(config.seed)
    params = init_denoiser(config)
    state = AdamState()
    snapshot = {name: t.data.copy() for name, t in params.tensors.items()}
    curve = []
    aborted = False
    step = 0
    n = len(examples)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, config.batch_size):
            chunk = [examples[i] for i in order[lo:lo + config.batch_size]]
            batch = _make_batch(chunk, schedule, config, rng)
            params.zero_grad()
            try:
                loss = diffusion_loss(params, batch, config)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise FloatingPointError("non-finite loss")
                loss.backward()
                adam_step(params, state, config.lr)
            except FloatingPointError:
                for name, arr in snapshot.items():
                    params.tensors[name].data[...] = arr
                aborted = True
                break
            step += 1
            curve.append(value)
            if step % config.snapshot_interval == 0:
                snapshot = {name: t.data.copy() for name, t in params.tensors.items()}
        if aborted:
            break
    head = curve[:max(1, len(curve) // 10)]
    tail = curve[-max(1, len(curve) // 10):]
    report = {
        "steps": step,
        "aborted": aborted,
        "final_loss": curve[-1] if curve else None,
        "loss_curve": curve,
        "loss_drop": 1.0 - float(np.mean(tail)) / float(np.mean(head)) if curve else 0.0,
        "denoise_accuracy": _denoise_accuracy(params, examples, schedule, config),
    }
    return params, report


def _denoise_accuracy(params, examples, schedule, config, limit=64) -> dict:
    """Fraction of clean tokens recovered by argmax at the easiest and
    hardest timesteps; a quick health indicator, not a likelihood."""
    out = {}
    for t in (1, schedule.t_max):
        hits = total = 0
        for i, ex in enumerate(examples[:limit]):
            z_t = forward_sample(ex.tokens, t, schedule, seed=(config.seed, t, i))
            cond = None
            if len(ex.conditions):
                cond = assemble_conditions(params, ex.conditions, origin=ex.origin)
            logits = denoise_logits(params, DenoiserInput(z_t, t, cond=cond))
            hits += int((logits.data.argmax(axis=1) == ex.tokens).sum())
            total += len(ex.tokens)
        out[f"t={t}"] = hits / total if total else 0.0
    return out


# -- sampling ----------------------------------------------------------


def sample(n_tokens: int, conditions, params: Params,
           schedule: NoiseSchedule, seed, origin=None) -> np.ndarray:
    """Generate one clean token sequence of the requested length.

    Starts from the schedule's stationary distribution and walks the
    reverse chain, one denoiser call per step.  Deterministic for a
    fixed seed.  ``conditions`` is a ConditionSet (or None); ``origin``
    overrides the conditioning frame origin.
    """
    cfg = diffusion_config(params)
    if not 1 <= n_tokens <= cfg.max_atoms:
        raise ValueError(f"token count {n_tokens} outside [1, {cfg.max_atoms}]")
    if schedule.n_clean != cfg.vocab:
        raise ValueError(f"schedule over {schedule.n_clean} clean states, "
                         f"denoiser over {cfg.vocab}")
    rng = np.random.default_rng(seed)
    cond = None
    if conditions is not None and len(conditions):
        cond = assemble_conditions(params, conditions, origin=origin)
    if schedule.kernel == "absorbing":
        z = np.full(n_tokens, schedule.k - 1, dtype=np.int64)
    else:
        z = rng.integers(0, schedule.k, size=n_tokens)
    for t in range(schedule.t_max, 0, -1):
        logits = denoise_logits(params, DenoiserInput(z, t, cond=cond)).data
        z = reverse_step(z, t, logits, schedule, seed=rng.integers(2 ** 63))
    return z
