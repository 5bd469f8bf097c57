"""Policy network: unified embedding, mixed-bias encoder, hypernetwork decoder."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

N_SLOTS = 13
BRANCHES = ("out", "in", "rel")
DECODER_SITES = ("decoder_glimpse", "decoder_compat")
HYPER_ROWS = ("W_first", "W_last", "W_C", "W_K", "W_V")


@dataclass
class PolicyConfig:
    d: int = 128
    L: int = 12
    ff: int = 512
    d_h: int = 256
    zeta: float = 50.0
    use_xi: bool = True
    use_context: bool = True
    priors: tuple = ("out", "in", "rel")

    def __post_init__(self):
        self.priors = tuple(self.priors)
        bad = set(self.priors) - set(BRANCHES)
        if bad or "out" not in self.priors:
            raise ValueError(f"priors must contain 'out' and be drawn from {BRANCHES}, got {self.priors}")

    def to_dict(self):
        d = asdict(self)
        d["priors"] = list(self.priors)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: (tuple(v) if k == "priors" else v) for k, v in d.items()})


def bias_sites(L: int) -> list:
    sites = [(l, b) for l in range(1, L + 1) for b in BRANCHES]
    return sites + list(DECODER_SITES)


def adaptation_bias(alpha, n_nodes, value, scale_free=False):
    """-alpha * log2(N) * value, or -alpha * value for scale-free relations."""
    if scale_free:
        return -alpha * value
    if n_nodes < 2:
        raise ValueError("adaptation bias needs at least two nodes")
    return -alpha * math.log2(n_nodes) * value


def aafm(q, k, v, A, exclude=None):
    """Attention-free mixing with a pairwise bias.

    ``q`` is (..., m, d), ``k`` and ``v`` are (..., n, d) and ``A`` is
    (..., m, n).  Computes sigmoid(q) * sum_j w_ijc v_jc with weights
    proportional to exp(A_ij + k_jc), normalised per row and per component;
    the softmax subtracts the per-row, per-component maximum so nothing
    overflows.  ``exclude`` (..., m, n) gives a column zero weight.
    """
    if exclude is not None:
        if bool(exclude.all(-1).any()):
            raise ValueError("a query row has every key excluded")
        A = A.masked_fill(exclude, float("-inf"))
    logits = A.unsqueeze(-1) + k.unsqueeze(-3)           # (..., m, n, d)
    w = torch.softmax(logits, dim=-2)
    mixed = (w * v.unsqueeze(-3)).sum(-2)
    return torch.sigmoid(q) * mixed


def aafm_naive(q, k, v, A):
    """Literal ratio form; overflows for large inputs, used as a test oracle."""
    eA = torch.exp(A)
    ek = torch.exp(k)
    return torch.sigmoid(q) * (eA @ (ek * v)) / (eA @ ek)


def instance_norm(x, gamma, beta, eps=1e-5):
    """Normalise each feature over the node axis of each instance."""
    mean = x.mean(-2, keepdim=True)
    var = x.var(-2, unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps) * gamma + beta


def _uniform(gen, shape, bound, dtype):
    return (torch.rand(shape, generator=gen, dtype=torch.float64) * 2 - 1).mul_(bound).to(dtype)


class UnifiedPolicy(nn.Module):
    def __init__(self, config: PolicyConfig, seed: int = 0, dtype=torch.float32):
        super().__init__()
        self.config = c = config
        gen = torch.Generator().manual_seed(int(seed) & (2 ** 63 - 1))
        d, L, S = c.d, c.L, 3 * c.L + 2

        def P(shape, fan_in):
            return nn.Parameter(_uniform(gen, shape, 1.0 / math.sqrt(fan_in), dtype))

        def const(shape, value):
            return nn.Parameter(torch.full(shape, float(value), dtype=dtype))

        self.W_rho = P((3, d), 3)
        self.W_omega = P((6, d), 6)
        self.W_xi = P((5, d), 5)
        # encoder: per layer, per branch private projections
        self.enc_Wq = P((L, 3, d, d), d)
        self.enc_Wk = P((L, 3, d, d), d)
        self.enc_Wv = P((L, 3, d, d), d)
        self.enc_Wo = P((L, 3 * d, d), 3 * d)
        self.enc_norm1_g = const((L, d), 1.0)
        self.enc_norm1_b = const((L, d), 0.0)
        self.enc_ff_W1 = P((L, d, c.ff), d)
        self.enc_ff_b1 = P((L, c.ff), d)
        self.enc_ff_W2 = P((L, c.ff, d), c.ff)
        self.enc_ff_b2 = P((L, d), c.ff)
        self.enc_norm2_g = const((L, d), 1.0)
        self.enc_norm2_b = const((L, d), 0.0)
        # one bias MLP per site; b2 starts above the floor so alpha is trainable from step 1
        self.bias_W1 = P((S, N_SLOTS, d), N_SLOTS)
        self.bias_b1 = P((S, d), N_SLOTS)
        self.bias_W2 = P((S, d, 1), d)
        self.bias_b2 = nn.Parameter(_uniform(gen, (S, 1), 0.1, dtype) + 1.5)
        # hypernetwork
        self.hyper_W1 = P((N_SLOTS, c.d_h), N_SLOTS)
        self.hyper_b1 = P((c.d_h,), N_SLOTS)
        self.hyper_W2 = P((c.d_h, c.d_h), c.d_h)
        self.hyper_b2 = P((c.d_h,), c.d_h)
        self.hyper_W3 = P((c.d_h, 5 * N_SLOTS), c.d_h)
        self.hyper_b3 = P((5 * N_SLOTS,), c.d_h)
        # generated matrices should start near a standard d-fan-in init
        scale = N_SLOTS * d
        self.hyper_first = P((N_SLOTS, d * d), scale)
        self.hyper_last = P((N_SLOTS, d * d), scale)
        self.hyper_C = P((N_SLOTS, d), scale)
        self.hyper_K = P((N_SLOTS, d * d), scale)
        self.hyper_V = P((N_SLOTS, d * d), scale)
        self.sites = bias_sites(L)

    # ------------------------------------------------------------ pieces

    @property
    def dtype(self):
        return self.W_rho.dtype

    def site_index(self, site) -> int:
        try:
            return self.sites.index(site)
        except ValueError:
            raise KeyError(f"unknown bias site {site!r}") from None

    def bias_raw(self, lam):
        """Pre-clamp bias MLP output for every site: (..., S)."""
        h = torch.einsum("...k,skd->...sd", lam, self.bias_W1) + self.bias_b1
        return torch.einsum("...sd,sdo->...so", h, self.bias_W2).squeeze(-1) + self.bias_b2.squeeze(-1)

    def bias_alphas(self, lam):
        return torch.clamp(self.bias_raw(lam), min=1.0)

    def bias_alpha(self, lam, site):
        return self.bias_alphas(lam)[..., self.site_index(site)]

    def hyper_embedding(self, lam):
        h = (lam @ self.hyper_W1 + self.hyper_b1) @ self.hyper_W2 + self.hyper_b2
        h = h @ self.hyper_W3 + self.hyper_b3
        return h.reshape(*lam.shape[:-1], 5, N_SLOTS)

    def hyper_decoder_params(self, lam) -> dict:
        """Decoder matrices and alphas generated from ``lam`` (..., 13)."""
        d = self.config.d
        H = self.hyper_embedding(lam)
        lead = lam.shape[:-1]
        out = {
            "W_first": (H[..., 0, :] @ self.hyper_first).reshape(*lead, d, d),
            "W_last": (H[..., 1, :] @ self.hyper_last).reshape(*lead, d, d),
            "W_C": (H[..., 2, :] @ self.hyper_C).reshape(*lead, 1, d),
            "W_K": (H[..., 3, :] @ self.hyper_K).reshape(*lead, d, d),
            "W_V": (H[..., 4, :] @ self.hyper_V).reshape(*lead, d, d),
        }
        alphas = self.bias_alphas(lam)
        out["alphas"] = {s: alphas[..., self.site_index(s)] for s in DECODER_SITES}
        return out

    def embed_nodes(self, rho, omega, xi):
        if not self.config.use_xi:
            xi = torch.zeros_like(xi)
        return rho @ self.W_rho + omega @ self.W_omega + xi @ self.W_xi

    def encode(self, H, D, R, lam, check=True):
        """L mixed-bias layers.  ``D`` must be max-normalised; ``R`` may be None."""
        if check:
            top = D.flatten(-2).max(-1).values
            if not torch.allclose(top, torch.ones_like(top), atol=1e-6):
                raise ValueError("distance matrix must be normalised by its maximum entry")
        c = self.config
        n = H.shape[-2]
        logn = math.log2(n)
        alphas = self.bias_alphas(lam)  # (..., S)
        for l in range(c.L):
            outs = []
            for b, branch in enumerate(BRANCHES):
                if branch not in c.priors or (branch == "rel" and R is None):
                    outs.append(torch.zeros_like(H))
                    continue
                a = alphas[..., 3 * l + b, None, None]
                if branch == "out":
                    A = -a * logn * D
                elif branch == "in":
                    A = -a * logn * D.transpose(-1, -2)
                else:
                    A = -a * R
                outs.append(aafm(H @ self.enc_Wq[l, b], H @ self.enc_Wk[l, b], H @ self.enc_Wv[l, b], A))
            mixed = torch.cat(outs, -1) @ self.enc_Wo[l]
            H = instance_norm(H + mixed, self.enc_norm1_g[l], self.enc_norm1_b[l])
            ff = torch.relu(H @ self.enc_ff_W1[l] + self.enc_ff_b1[l]) @ self.enc_ff_W2[l] + self.enc_ff_b2[l]
            H = instance_norm(H + ff, self.enc_norm2_g[l], self.enc_norm2_b[l])
        return H

    def decode_logits(self, H, K, V, dec, h_first, h_last, ctx, d_row, mask, n_nodes):
        """Clipped pre-mask logits and masked log-probabilities for a batch of rows.

        ``H``, ``K``, ``V`` are (R, N, d) row views of the instance tensors;
        ``dec`` holds per-row generated matrices; ``d_row`` is (R, N).
        """
        c = self.config
        if not c.use_context:
            ctx = torch.zeros_like(ctx)
        hC = (h_first.unsqueeze(-2) @ dec["W_first"] + h_last.unsqueeze(-2) @ dec["W_last"]
              + ctx[:, None, None] * dec["W_C"])                     # (R, 1, d)
        a_g = dec["alphas"]["decoder_glimpse"][:, None, None]
        A = -a_g * math.log2(n_nodes) * d_row.unsqueeze(-2)           # (R, 1, N)
        glimpse = aafm(hC, K, V, A, exclude=~mask.unsqueeze(-2))      # (R, 1, d)
        a_c = dec["alphas"]["decoder_compat"][:, None]
        u = (glimpse @ H.transpose(-1, -2)).squeeze(-2) / math.sqrt(c.d)
        u = u - a_c * math.log2(n_nodes) * d_row
        logits = c.zeta * torch.tanh(u)
        masked = logits.masked_fill(~mask, float("-inf"))
        return logits, torch.log_softmax(masked, -1)

    def shape_manifest(self) -> list:
        return [(name, tuple(p.shape)) for name, p in self.named_parameters()]


def node_features(instances, dtype=torch.float32):
    """(rho, omega, xi) tensors; time attributes scaled by the depot end time."""
    rho = np.stack([i.rho for i in instances])
    omega = np.stack([i.omega for i in instances]).copy()
    for b, inst in enumerate(instances):
        if "TW" in inst.spec.families:
            omega[b, :, 3:6] /= inst.spec.params["depot_end_time"]
    xi = np.stack([i.xi for i in instances]).astype(np.float64)
    t = lambda a: torch.as_tensor(a, dtype=dtype)
    return t(rho), t(omega), t(xi)


def normalised_dist(instances, dtype=torch.float32):
    D = np.stack([i.dist for i in instances])
    top = D.reshape(len(instances), -1).max(1)
    top = np.where(top > 0, top, 1.0)
    return torch.as_tensor(D / top[:, None, None], dtype=dtype)


def relation_tensor(instances, dtype=torch.float32):
    if instances[0].relation is None:
        return None
    return torch.as_tensor(np.stack([i.relation for i in instances]).astype(np.float64), dtype=dtype)


def signature_tensor(instances, dtype=torch.float32):
    from ..instance import derive_signature
    return torch.as_tensor(np.stack([derive_signature(i).array for i in instances]), dtype=dtype)
