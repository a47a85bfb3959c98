"""Trainable dual encoder with symmetric contrastive loss.

Image branch: linear map over feature vectors. Text branch: mean of token
embeddings followed by a linear map. Both outputs are L2-normalized; the
loss is the symmetric InfoNCE cross-entropy over the cosine similarity
matrix divided by a learnable temperature. Gradients are analytic and all
math is double precision.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BadTauError, ConfigError, DimMismatchError, EmptyTokensError, ZeroNormError
from .seeding import hash64

_NORM_FLOOR = 1e-30


@dataclass
class EncoderParams:
    w_img: np.ndarray  # embed_dim x feature_dim
    e_tok: np.ndarray  # vocab_size x embed_dim
    w_txt: np.ndarray  # embed_dim x embed_dim
    log_tau: float

    @property
    def tau(self):
        return float(np.exp(self.log_tau))

    @property
    def embed_dim(self):
        return self.w_img.shape[0]

    @property
    def feature_dim(self):
        return self.w_img.shape[1]

    @property
    def vocab_size(self):
        return self.e_tok.shape[0]

    def copy(self):
        return EncoderParams(
            self.w_img.copy(), self.e_tok.copy(), self.w_txt.copy(), float(self.log_tau)
        )


@dataclass
class Batch:
    images: np.ndarray  # N x feature_dim
    texts: list  # N token-id lists

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 2 or len(self.texts) != self.images.shape[0]:
            raise DimMismatchError("images and texts must have matching counts")
        if self.images.shape[0] < 1:
            raise DimMismatchError("batch must contain at least one pair")

    @property
    def n(self):
        return self.images.shape[0]


@dataclass
class TrainConfig:
    embed_dim: int = 48
    learning_rate: float = 0.02
    epochs: int = 80
    batch_size: int = 64
    seed: int = 0
    tau_init: float = 0.07
    tau_learnable: bool = True
    # decoupled (AdamW-style) decay; shrinks tokens whose net gradient is
    # ~zero (pure glue) toward the origin so they stop biasing prompts
    weight_decay: float = 0.05

    def __post_init__(self):
        if self.embed_dim <= 0 or self.learning_rate <= 0 or self.batch_size <= 0:
            raise ConfigError("embed_dim, learning_rate, batch_size must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.tau_init <= 0:
            raise ConfigError("tau_init must be positive")


def _uniform_fan(rng, shape, fan_in, fan_out):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def init_params(cfg: TrainConfig, vocab_size, feature_dim):
    """Seeded uniform fan-in/fan-out initialization; log_tau = ln(tau_init)."""
    if vocab_size <= 0 or feature_dim <= 0:
        raise ConfigError("vocab_size and feature_dim must be positive")
    rng = np.random.default_rng(cfg.seed)
    e = cfg.embed_dim
    w_img = _uniform_fan(rng, (e, feature_dim), feature_dim, e)
    e_tok = _uniform_fan(rng, (vocab_size, e), vocab_size, e)
    w_txt = _uniform_fan(rng, (e, e), e, e)
    return EncoderParams(w_img=w_img, e_tok=e_tok, w_txt=w_txt, log_tau=float(np.log(cfg.tau_init)))


def _normalize_rows(m):
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms < _NORM_FLOOR):
        raise ZeroNormError("embedding collapsed to the zero vector")
    return m / norms[:, None], norms


def encode_image(params, x):
    """Unit-norm image embedding: normalize(W_img x)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.feature_dim,):
        raise DimMismatchError(f"expected feature vector of length {params.feature_dim}")
    u = params.w_img @ x
    n = np.linalg.norm(u)
    if n < _NORM_FLOOR:
        raise ZeroNormError("image embedding has zero norm")
    return u / n


def token_matrix(texts, vocab_size):
    """N x vocab matrix C with C[i, t] = count(t in text i) / len(text i),
    so C @ E_tok is the per-text mean embedding."""
    c = np.zeros((len(texts), vocab_size))
    for i, ids in enumerate(texts):
        if not len(ids):
            raise EmptyTokensError("token sequence must be nonempty")
        for tid in ids:
            if not 0 <= tid < vocab_size:
                raise DimMismatchError(f"token id {tid} out of range")
            c[i, tid] += 1.0
        c[i] /= len(ids)
    return c


def encode_text(params, token_ids):
    """Unit-norm text embedding: normalize(W_txt mean(E_tok[ids]))."""
    if not len(token_ids):
        raise EmptyTokensError("token sequence must be nonempty")
    c = token_matrix([token_ids], params.vocab_size)
    v = (c @ params.e_tok) @ params.w_txt.T
    n = np.linalg.norm(v)
    if n < _NORM_FLOOR:
        raise ZeroNormError("text embedding has zero norm")
    return v[0] / n


def _log_softmax_diag(z):
    # -log softmax(z)_ii per row, via log-sum-exp
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    return lse - np.diag(z)


def clip_loss(i_set, t_set, tau):
    """Symmetric contrastive loss over cosine similarities divided by tau."""
    if tau <= 0:
        raise BadTauError("temperature must be positive")
    i_set = np.asarray(i_set, dtype=np.float64)
    t_set = np.asarray(t_set, dtype=np.float64)
    if i_set.shape != t_set.shape or i_set.ndim != 2:
        raise DimMismatchError("image and text embedding sets must share an N x d shape")
    z = (i_set @ t_set.T) / tau
    row_terms = _log_softmax_diag(z)
    col_terms = _log_softmax_diag(z.T)
    return float(np.mean(row_terms + col_terms))


def _softmax(z, axis):
    zmax = z.max(axis=axis, keepdims=True)
    e = np.exp(z - zmax)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class EncoderGrads:
    w_img: np.ndarray
    e_tok: np.ndarray
    w_txt: np.ndarray
    log_tau: float


def clip_loss_grad(params, batch, tau_learnable=True):
    """Loss value plus analytic gradients for every parameter tensor."""
    n = batch.n
    x = batch.images
    if x.shape[1] != params.feature_dim:
        raise DimMismatchError("batch feature dim does not match params")
    tau = params.tau

    u = x @ params.w_img.T
    i_emb, nu = _normalize_rows(u)
    c = token_matrix(batch.texts, params.vocab_size)
    m = c @ params.e_tok
    v = m @ params.w_txt.T
    t_emb, nv = _normalize_rows(v)

    s = i_emb @ t_emb.T
    z = s / tau
    loss = float(np.mean(_log_softmax_diag(z) + _log_softmax_diag(z.T)))

    p = _softmax(z, axis=1)
    q = _softmax(z, axis=0)
    g = (p + q - 2.0 * np.eye(n)) / (n * tau)  # dL/dS

    d_i = g @ t_emb
    d_t = g.T @ i_emb
    d_u = (d_i - (d_i * i_emb).sum(axis=1, keepdims=True) * i_emb) / nu[:, None]
    d_v = (d_t - (d_t * t_emb).sum(axis=1, keepdims=True) * t_emb) / nv[:, None]

    grads = EncoderGrads(
        w_img=d_u.T @ x,
        e_tok=c.T @ (d_v @ params.w_txt),
        w_txt=d_v.T @ m,
        log_tau=float(-(g * s).sum()) if tau_learnable else 0.0,
    )
    return loss, grads


class _Adam:
    def __init__(self, shapes, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}

    def step(self, values, grads, decay_keys=()):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = {}
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * np.square(g)
            mhat = self.m[k] / (1 - b1**self.t)
            vhat = self.v[k] / (1 - b2**self.t)
            out[k] = values[k] - self.lr * mhat / (np.sqrt(vhat) + self.eps)
            if k in decay_keys and self.weight_decay:
                out[k] = out[k] - self.lr * self.weight_decay * values[k]
        return out


def train(params, dataset, cfg: TrainConfig):
    """Mini-batch Adam over seeded shuffles; returns (trained params, loss trace).

    The final incomplete batch of each epoch is dropped. Fully deterministic
    given cfg.seed.
    """
    if cfg.epochs > 0 and len(dataset) < cfg.batch_size:
        raise ConfigError("dataset smaller than batch_size")
    if cfg.epochs > 0 and cfg.batch_size < 2:
        raise ConfigError("training requires batch_size >= 2")
    params = params.copy()
    features = np.asarray([f for f, _ in dataset], dtype=np.float64)
    texts = [t for _, t in dataset]

    shapes = {"w_img": params.w_img.shape, "e_tok": params.e_tok.shape, "w_txt": params.w_txt.shape}
    if cfg.tau_learnable:
        shapes["log_tau"] = ()
    adam = _Adam(shapes, cfg.learning_rate, cfg.weight_decay)

    trace = []
    n_batches = len(dataset) // cfg.batch_size
    for epoch in range(cfg.epochs):
        perm = np.random.default_rng(hash64(cfg.seed, "shuffle", epoch)).permutation(len(dataset))
        losses = []
        for b in range(n_batches):
            idx = perm[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            batch = Batch(images=features[idx], texts=[texts[i] for i in idx])
            loss, grads = clip_loss_grad(params, batch, cfg.tau_learnable)
            losses.append(loss)
            values = {"w_img": params.w_img, "e_tok": params.e_tok, "w_txt": params.w_txt}
            gvals = {"w_img": grads.w_img, "e_tok": grads.e_tok, "w_txt": grads.w_txt}
            if cfg.tau_learnable:
                values["log_tau"] = np.float64(params.log_tau)
                gvals["log_tau"] = np.float64(grads.log_tau)
            updated = adam.step(values, gvals, decay_keys=("w_img", "e_tok", "w_txt"))
            params.w_img = updated["w_img"]
            params.e_tok = updated["e_tok"]
            params.w_txt = updated["w_txt"]
            if cfg.tau_learnable:
                params.log_tau = float(updated["log_tau"])
        trace.append(float(np.mean(losses)) if losses else float("nan"))
    return params, trace


def save_params(path, params):
    doc = {
        "embed_dim": params.embed_dim,
        "feature_dim": params.feature_dim,
        "vocab_size": params.vocab_size,
        "w_img": params.w_img.ravel().tolist(),
        "e_tok": params.e_tok.ravel().tolist(),
        "w_txt": params.w_txt.ravel().tolist(),
        "log_tau": params.log_tau,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_params(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    e, f, v = doc["embed_dim"], doc["feature_dim"], doc["vocab_size"]
    return EncoderParams(
        w_img=np.array(doc["w_img"]).reshape(e, f),
        e_tok=np.array(doc["e_tok"]).reshape(v, e),
        w_txt=np.array(doc["w_txt"]).reshape(e, e),
        log_tau=float(doc["log_tau"]),
    )


def write_loss_trace(path, trace):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,mean_loss\n")
        for i, loss in enumerate(trace):
            fh.write(f"{i},{loss!r}\n")
