"""Variational DAG model with encoder and decoder coupled through ``I - A^T``.

Every variable is a node carrying a scalar observation.  Per sample the
encoder maps node features through a shared MLP and mixes nodes with
``I - A^T``; the decoder inverts that mixing before its own MLP::

    [M_Z | log S_Z] = (I - A^T) MLP_enc(X)
    [M_X | log S_X] = MLP_dec((I - A^T)^{-1} Z),   Z = M_Z + S_Z * eps

with ``MLP(x) = ReLU(x W1^T + b1) W2^T + b2``.  Gradients of the evidence
lower bound are computed by hand (reverse mode), including the adjoint of the
linear solve.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace

import numpy as np

from .acyclicity import h_poly, grad_h_poly
from .graph import check_weight_matrix
from .linear import TrainConfig, TrainResult, TrainingDivergedError, check_dataset, epoch_batches, init_weights, update_multipliers

__all__ = [
    "MlpParams",
    "GnnModel",
    "GnnArch",
    "SingularMixingError",
    "mlp_forward",
    "init_model",
    "encode",
    "decode",
    "elbo_loss",
    "elbo_and_grad",
    "reconstruction_loss",
    "train_daggnn",
    "model_to_dict",
    "model_from_dict",
]

log = logging.getLogger(__name__)

SCALE_FLOOR = 1e-6
SINGULAR_TOL = 1e-8


class SingularMixingError(np.linalg.LinAlgError):
    def __init__(self, sigma_min):
        self.sigma_min = float(sigma_min)
        super().__init__(f"I - A^T is near singular (smallest singular value {sigma_min:.3g})")


@dataclass
class MlpParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        h, _ = np.shape(self.w1)
        out, h2 = np.shape(self.w2)
        if h != h2 or np.shape(self.b1) != (h,) or np.shape(self.b2) != (out,):
            raise ValueError("inconsistent MLP parameter shapes")

    @property
    def in_dim(self):
        return self.w1.shape[1]

    @property
    def out_dim(self):
        return self.w2.shape[0]


@dataclass
class GnnArch:
    latent_dim: int = 1
    hidden: int = 16
    samples: int = 1


@dataclass
class GnnModel:
    a: np.ndarray
    encoder: MlpParams
    decoder: MlpParams
    latent_dim: int
    sample_count: int = 1

    @property
    def d(self):
        return self.a.shape[0]


def _mlp(p, X):
    pre = X @ p.w1.T + p.b1
    act = np.maximum(pre, 0.0)
    return act @ p.w2.T + p.b2, pre, act


def _mlp_backward(p, X, pre, act, dout):
    """Parameter gradients and input gradient of :func:`_mlp` (ReLU'(0) = 0)."""
    flat = dout.reshape(-1, dout.shape[-1])
    act_f = act.reshape(-1, act.shape[-1])
    g_w2 = flat.T @ act_f
    g_b2 = flat.sum(axis=0)
    dpre = (dout @ p.w2) * (pre > 0)
    dpre_f = dpre.reshape(-1, dpre.shape[-1])
    g_w1 = dpre_f.T @ X.reshape(-1, X.shape[-1])
    g_b1 = dpre_f.sum(axis=0)
    return MlpParams(g_w1, g_b1, g_w2, g_b2), dpre @ p.w1


def mlp_forward(p, X):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != p.in_dim:
        raise ValueError(f"input width {X.shape[-1]} does not match MLP input {p.in_dim}")
    return _mlp(p, X)[0]


def _init_mlp(rng, n_in, n_hidden, n_out):
    b_in = 1.0 / np.sqrt(n_in)
    b_hid = 1.0 / np.sqrt(n_hidden)
    return MlpParams(
        rng.uniform(-b_in, b_in, (n_hidden, n_in)),
        rng.uniform(-b_in, b_in, n_hidden),
        rng.uniform(-b_hid, b_hid, (n_out, n_hidden)),
        rng.uniform(-b_hid, b_hid, n_out),
    )


def init_model(d, arch=None, rng=None):
    arch = arch or GnnArch()
    rng = rng if rng is not None else np.random.default_rng(0)
    a = init_weights(d, rng)
    enc = _init_mlp(rng, 1, arch.hidden, 2 * arch.latent_dim)
    dec = _init_mlp(rng, arch.latent_dim, arch.hidden, 2)
    return GnnModel(a, enc, dec, arch.latent_dim, arch.samples)


def _mixing(model):
    a = check_weight_matrix(model.a)
    return np.eye(a.shape[0]) - a.T


def _check_invertible(B):
    sigma_min = np.linalg.svd(B, compute_uv=False)[-1]
    if sigma_min <= SINGULAR_TOL:
        raise SingularMixingError(sigma_min)


def _solve_nodes(B, Z):
    """Solve ``B V_s = Z_s`` for every sample ``s``; ``Z`` has shape (n, d, k)."""
    n, d, k = Z.shape
    rhs = Z.transpose(1, 0, 2).reshape(d, n * k)
    return np.linalg.solve(B, rhs).reshape(d, n, k).transpose(1, 0, 2)


def encode(model, X):
    """Posterior mean and log-scale of the latent node states, each shaped (n, d, m)."""
    X = check_dataset(X, model.d)
    H = mlp_forward(model.encoder, X[..., None])
    E = np.einsum("ij,sjk->sik", _mixing(model), H)
    m = model.latent_dim
    return E[..., :m], E[..., m:]


def decode(model, Z):
    """Reconstruction mean and log-scale, each shaped (n, d)."""
    Z = np.asarray(Z, dtype=float)
    B = _mixing(model)
    _check_invertible(B)
    G = mlp_forward(model.decoder, _solve_nodes(B, Z))
    return G[..., 0], G[..., 1]


def _draw_noise(model, X, noise):
    shape = (model.sample_count, X.shape[0], model.d, model.latent_dim)
    if isinstance(noise, np.random.Generator):
        return noise.standard_normal(shape)
    if noise is None or isinstance(noise, (int, np.integer)):
        return np.random.default_rng(noise).standard_normal(shape)
    eps = np.asarray(noise, dtype=float)
    if eps.shape != shape:
        raise ValueError(f"noise must have shape {shape}, got {eps.shape}")
    return eps


def elbo_and_grad(model, X, noise=None, need_grad=True):
    """Negative ELBO, its KL / reconstruction parts and gradients for every parameter.

    ``KL = 1/2 sum(S_Z^2 + M_Z^2 - 2 log S_Z - 1)`` and the reconstruction
    term averages ``sum((X - M_X)^2 / (2 S_X^2) + log S_X)`` over the Monte
    Carlo draws.  Scales are floored at ``SCALE_FLOOR``.
    """
    X = check_dataset(X, model.d)
    eps = _draw_noise(model, X, noise)
    L = eps.shape[0]
    m = model.latent_dim
    B = _mixing(model)
    _check_invertible(B)

    X3 = X[..., None]
    H, pre_e, act_e = _mlp(model.encoder, X3)
    E = np.einsum("ij,sjk->sik", B, H)
    Mz, lSz = E[..., :m], E[..., m:]
    Sz_raw = np.exp(lSz)
    Sz = np.maximum(Sz_raw, SCALE_FLOOR)
    kl = 0.5 * float(np.sum(Sz * Sz + Mz * Mz - 2.0 * np.log(Sz) - 1.0))

    recon = 0.0
    caches = []
    for l in range(L):
        Z = Mz + Sz * eps[l]
        V = _solve_nodes(B, Z)
        G, pre_d, act_d = _mlp(model.decoder, V)
        Mx, lSx = G[..., 0], G[..., 1]
        Sx_raw = np.exp(lSx)
        Sx = np.maximum(Sx_raw, SCALE_FLOOR)
        resid = X - Mx
        recon += float(np.sum(resid * resid / (2.0 * Sx * Sx) + np.log(Sx))) / L
        caches.append((V, pre_d, act_d, resid, Sx, Sx_raw))

    loss = kl + recon
    parts = {"kl": kl, "recon": recon}
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite ELBO: kl={kl!r}, recon={recon!r}")
    if not need_grad:
        return loss, parts, None

    g_dec = None
    dB = np.zeros_like(B)
    dMz = Mz.copy()
    dSz = Sz - 1.0 / Sz
    for l, (V, pre_d, act_d, resid, Sx, Sx_raw) in enumerate(caches):
        dMx = -resid / (Sx * Sx) / L
        dSx = (-(resid * resid) / Sx**3 + 1.0 / Sx) / L
        dlSx = dSx * Sx_raw * (Sx_raw > SCALE_FLOOR)
        dG = np.stack([dMx, dlSx], axis=-1)
        g, dV = _mlp_backward(model.decoder, V, pre_d, act_d, dG)
        g_dec = g if g_dec is None else _combine(g_dec, g, 1.0)
        # V = B^{-1} Z  =>  dZ = B^{-T} dV,  dB = -dZ V^T
        dZ = _solve_nodes(B.T, dV)
        dB -= np.einsum("sik,sjk->ij", dZ, V)
        dMz += dZ
        dSz += dZ * eps[l]
    dlSz = dSz * Sz_raw * (Sz_raw > SCALE_FLOOR)
    dE = np.concatenate([dMz, dlSz], axis=-1)
    dB += np.einsum("sik,sjk->ij", dE, H)
    dH = np.einsum("ji,sjk->sik", B, dE)
    g_enc, _ = _mlp_backward(model.encoder, X3, pre_e, act_e, dH)
    dA = -dB.T
    # diagonal of A is pinned to zero, not a free parameter
    np.fill_diagonal(dA, 0.0)
    grads = GnnModel(dA, g_enc, g_dec, model.latent_dim, model.sample_count)
    return loss, parts, grads


def elbo_loss(model, X, noise=None):
    return elbo_and_grad(model, X, noise, need_grad=False)[0]


def reconstruction_loss(model, X, noise=None):
    """Squared reconstruction error ``(1/2n) ||X - M_X||_F^2``.

    ``Z = M_Z + S_Z * eps`` with ``eps = noise[0]`` when noise is given (shape
    (n, d, m) or (L, n, d, m)); without noise the posterior mean ``Z = M_Z`` is
    decoded, in which case ``A`` cancels out.
    """
    X = check_dataset(X, model.d)
    Mz, lSz = encode(model, X)
    Z = Mz
    if noise is not None:
        eps = np.asarray(noise, dtype=float)
        if eps.ndim == 4:
            eps = eps[0]
        Z = Mz + np.maximum(np.exp(lSz), SCALE_FLOOR) * eps
    Mx, _ = decode(model, Z)
    R = X - Mx
    return float(0.5 / X.shape[0] * np.sum(R * R))


def _combine(p, g, step):
    """``p + step * g`` field by field (MLP parameters only)."""
    return MlpParams(*(getattr(p, f.name) + step * getattr(g, f.name) for f in fields(MlpParams)))


def _scale(p, c):
    return MlpParams(*(c * getattr(p, f.name) for f in fields(MlpParams)))


def _apply_step(model, grads, lr):
    a = model.a - lr * grads.a
    np.fill_diagonal(a, 0.0)
    return replace(
        model,
        a=a,
        encoder=_combine(model.encoder, grads.encoder, -lr),
        decoder=_combine(model.decoder, grads.decoder, -lr),
    )


def _copy_model(model):
    return replace(
        model,
        a=model.a.copy(),
        encoder=_scale(model.encoder, 1.0),
        decoder=_scale(model.decoder, 1.0),
    )


def _inner_step(model, Xb, rng, cfg, alpha, beta, gamma, traj):
    nb, d = Xb.shape
    eps = rng.standard_normal((model.sample_count, nb, d, model.latent_dim))
    try:
        _, _, grads = elbo_and_grad(model, Xb, eps)
        h = h_poly(model.a, gamma)
        g_h = grad_h_poly(model.a, gamma)
    except (FloatingPointError, OverflowError) as exc:
        raise TrainingDivergedError(f"training diverged: {exc}", traj) from exc
    grads.a = grads.a / nb + cfg.lam * np.sign(model.a) + (alpha + beta * h) * g_h
    grads.encoder = _scale(grads.encoder, 1.0 / nb)
    grads.decoder = _scale(grads.decoder, 1.0 / nb)
    if cfg.grad_clip is not None:
        c = cfg.grad_clip
        grads.a = np.clip(grads.a, -c, c)
        grads.encoder = MlpParams(*(np.clip(getattr(grads.encoder, f.name), -c, c) for f in fields(MlpParams)))
        grads.decoder = MlpParams(*(np.clip(getattr(grads.decoder, f.name), -c, c) for f in fields(MlpParams)))
    lr = cfg.learning_rate
    for _ in range(30):
        candidate = _apply_step(model, grads, lr)
        try:
            _check_invertible(np.eye(d) - candidate.a.T)
            break
        except SingularMixingError:
            log.warning("singular mixing matrix; halving step to %.3g", lr / 2)
            lr /= 2
    else:
        raise TrainingDivergedError("could not find a step keeping I - A^T invertible", traj)
    if not np.all(np.isfinite(candidate.a)):
        raise TrainingDivergedError("weights became non-finite", traj)
    return candidate


def train_daggnn(X, cfg=None, arch=None):
    """Augmented-Lagrangian training of the variational model.

    Each inner step descends ``ELBO / n + lam ||A||_1 + alpha h + beta/2 h^2``
    with the polynomial acyclicity measure (``gamma`` from ``cfg.h_mode``;
    unset means ``1/d``).  A step that makes ``I - A^T`` singular is retried
    with half the learning rate.  The model with the lowest reconstruction
    loss, evaluated after every epoch under one fixed noise draw
    (``TrainResult.eval_noise``), is kept as the best one.
    """
    cfg = cfg or TrainConfig()
    arch = arch or GnnArch()
    X = check_dataset(X)
    n, d = X.shape
    rng = np.random.default_rng(cfg.seed)
    model = init_model(d, arch, rng)
    gamma = cfg.h_mode.gamma
    alpha, beta = float(cfg.alpha0), float(cfg.beta0)
    best, loss_best = _copy_model(model), float("inf")
    h_prev = h_poly(model.a, gamma)
    traj, alphas, betas, l1s = [], [], [], []
    eval_noise = rng.standard_normal((n, d, model.latent_dim))

    outer = 0
    while beta <= cfg.beta_max and outer < cfg.max_outer:
        for _ in range(cfg.epochs):
            for idx in epoch_batches(n, cfg.batch_size, rng):
                model = _inner_step(model, X[idx], rng, cfg, alpha, beta, gamma, traj)
            loss = reconstruction_loss(model, X, eval_noise)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"reconstruction loss became non-finite at outer step {outer}", traj)
            if loss < loss_best:
                loss_best, best = loss, _copy_model(model)
        h = h_poly(model.a, gamma)
        traj.append((outer, h))
        alphas.append(alpha)
        betas.append(beta)
        l1s.append(float(np.abs(model.a).sum()))
        log.debug("outer %d: h=%.3e alpha=%.3g beta=%.3g", outer, h, alpha, beta)
        alpha, beta = update_multipliers(alpha, beta, h, h_prev)
        h_prev = h
        outer += 1
        if h <= cfg.h_tolerance:
            break

    if not traj:
        traj.append((0, h_poly(model.a, gamma)))
        loss_best = reconstruction_loss(best, X, eval_noise)
    final_h = traj[-1][1]
    return TrainResult(
        a_best=best.a.copy(),
        loss_best=loss_best,
        h_trajectory=traj,
        final_h=final_h,
        converged=final_h <= cfg.h_tolerance,
        best_h=h_poly(best.a, gamma),
        a_final=model.a,
        alpha_trajectory=alphas,
        beta_trajectory=betas,
        l1_trajectory=l1s,
        model=best,
        eval_noise=eval_noise,
    )


def _mlp_to_dict(p):
    return {f.name: np.asarray(getattr(p, f.name)).tolist() for f in fields(MlpParams)}


def _mlp_from_dict(obj):
    return MlpParams(*(np.asarray(obj[f.name], dtype=float) for f in fields(MlpParams)))


def model_to_dict(model, seed=None):
    """Checkpoint with keys ``format, d, latent_dim, sample_count, hidden, seed, a, encoder, decoder``."""
    return {
        "format": "tearlearn.daggnn_checkpoint",
        "version": 1,
        "d": model.d,
        "latent_dim": model.latent_dim,
        "sample_count": model.sample_count,
        "hidden": int(model.encoder.w1.shape[0]),
        "seed": seed,
        "a": model.a.tolist(),
        "encoder": _mlp_to_dict(model.encoder),
        "decoder": _mlp_to_dict(model.decoder),
    }


def model_from_dict(obj):
    if obj.get("format") != "tearlearn.daggnn_checkpoint":
        raise ValueError("not a DAG-GNN checkpoint")
    model = GnnModel(
        np.asarray(obj["a"], dtype=float),
        _mlp_from_dict(obj["encoder"]),
        _mlp_from_dict(obj["decoder"]),
        int(obj["latent_dim"]),
        int(obj["sample_count"]),
    )
    check_weight_matrix(model.a)
    return model
