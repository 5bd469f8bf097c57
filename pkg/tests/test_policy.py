import math

import numpy as np
import pytest
import torch

from unirouting.feasibility import check_solution
from unirouting.instance import generate_instance
from unirouting.policy import (
    CheckpointError,
    PolicyConfig,
    UnifiedPolicy,
    aafm,
    aafm_naive,
    adaptation_bias,
    bias_sites,
    rollout,
)
from unirouting.policy import checkpoint
from unirouting.policy.model import normalised_dist, signature_tensor
from unirouting.variants import SEEN_VARIANTS, make_spec

D64 = torch.float64


def small(d=8, L=1, seed=0, dtype=D64, **kw):
    return UnifiedPolicy(PolicyConfig(d=d, L=L, ff=16, d_h=16, **kw), seed=seed, dtype=dtype)


def test_adaptation_bias():
    assert adaptation_bias(1, 100, 0.5) == pytest.approx(-3.3219280948873626, abs=1e-12)
    assert adaptation_bias(3.0, 50, 0.0) == 0
    assert adaptation_bias(2, 7, 1, scale_free=True) == -2
    assert adaptation_bias(2, 7, 0, scale_free=True) == 0


def test_bias_sites():
    s = bias_sites(2)
    assert len(s) == 8 and s[:3] == [(1, "out"), (1, "in"), (1, "rel")] and s[-1] == "decoder_compat"


def test_aafm_cases():
    g = torch.Generator().manual_seed(0)
    q, k, v = (torch.randn(1, 4, generator=g, dtype=D64) for _ in range(3))
    A = torch.randn(1, 1, generator=g, dtype=D64)
    assert torch.equal(aafm(q, k, v, A), torch.sigmoid(q) * v)
    q, v = torch.randn(5, 4, dtype=D64), torch.randn(5, 4, dtype=D64)
    out = aafm(q, torch.zeros(5, 4, dtype=D64), v, torch.zeros(5, 5, dtype=D64))
    assert torch.allclose(out, torch.sigmoid(q) * v.mean(0), atol=1e-15)
    q, k, v = (torch.randn(3, 8, generator=g, dtype=D64) for _ in range(3))
    A = torch.randn(3, 3, generator=g, dtype=D64)
    assert torch.allclose(aafm(q, k, v, A), aafm_naive(q, k, v, A), rtol=1e-12, atol=0)


def test_aafm_large_inputs_stay_finite():
    q = torch.full((2, 3), 1.0, dtype=torch.float32)
    k = torch.full((4, 3), 200.0)
    v = torch.ones(4, 3)
    A = torch.full((2, 4), 200.0)
    assert torch.isfinite(aafm(q, k, v, A)).all()
    assert not torch.isfinite(aafm_naive(q, k, v, A)).all()


def test_aafm_exclusion():
    q, k, v = torch.zeros(1, 2, dtype=D64), torch.zeros(3, 2, dtype=D64), torch.arange(6.0, dtype=D64).reshape(3, 2)
    ex = torch.tensor([[True, False, True]])
    out = aafm(q, k, v, torch.zeros(1, 3, dtype=D64), ex)
    assert torch.allclose(out, 0.5 * v[1])
    with pytest.raises(ValueError):
        aafm(q, k, v, torch.zeros(1, 3, dtype=D64), torch.ones(1, 3, dtype=torch.bool))


def test_embedding_linearity():
    m = small()
    z = torch.zeros(1, 2, 3, dtype=D64)
    om = torch.zeros(1, 2, 6, dtype=D64)
    xi = torch.zeros(1, 2, 5, dtype=D64)
    assert torch.equal(m.embed_nodes(z, om, xi), torch.zeros(1, 2, 8, dtype=D64))
    om[..., 0] = 0.3
    h1 = m.embed_nodes(z, om, xi)
    assert torch.equal(h1[0, 0], h1[0, 1])
    assert torch.allclose(m.embed_nodes(z, 2 * om, xi), 2 * h1)


def test_bias_alpha_clamp():
    m = small()
    with torch.no_grad():
        m.bias_b2.zero_()
        m.bias_W2.zero_()
        m.bias_b2[0] = 0.3
        m.bias_b2[1] = 2.5
    lam = torch.zeros(13, dtype=D64)
    assert m.bias_alpha(lam, (1, "out")).item() == 1.0
    assert m.bias_alpha(lam, (1, "in")).item() == 2.5
    m2 = small(seed=3)
    raw = torch.einsum("sd,sdo->so", m2.bias_b1, m2.bias_W2).squeeze(-1) + m2.bias_b2.squeeze(-1)
    assert torch.allclose(m2.bias_alphas(lam), torch.clamp(raw, min=1.0))


def test_hyper_shapes_and_zero_path():
    for d in (8, 128):
        m = UnifiedPolicy(PolicyConfig(d=d, L=1), seed=0)
        p = m.hyper_decoder_params(torch.rand(13))
        assert [tuple(p[k].shape) for k in ("W_first", "W_last", "W_C", "W_K", "W_V")] == [
            (d, d), (d, d), (1, d), (d, d), (d, d)]
    m = small()
    with torch.no_grad():
        m.hyper_W1.zero_()
        m.hyper_W2.zero_()
        m.hyper_W3.zero_()
    lam = torch.rand(13, dtype=D64)
    p = m.hyper_decoder_params(lam)
    b3 = m.hyper_b3.reshape(5, 13)
    assert torch.allclose(p["W_K"], (b3[3] @ m.hyper_K).reshape(8, 8))
    p2 = m.hyper_decoder_params(lam)
    assert all(torch.equal(p[k], p2[k]) for k in ("W_first", "W_K", "W_V"))


def _encode_inputs(inst, dtype=D64):
    from unirouting.policy.model import node_features, relation_tensor
    rho, om, xi = node_features([inst], dtype)
    return rho, om, xi, normalised_dist([inst], dtype), relation_tensor([inst], dtype), signature_tensor([inst], dtype)


def test_encoder_permutation_equivariance():
    inst = generate_instance(make_spec("TSP", 7), 1)
    m = small(d=16, L=2, dtype=torch.float32)
    rho, om, xi, D, R, lam = _encode_inputs(inst, torch.float32)
    H = m.encode(m.embed_nodes(rho, om, xi), D, R, lam)
    perm = torch.tensor([3, 0, 6, 1, 5, 2, 4])
    Hp = m.encode(m.embed_nodes(rho[:, perm], om[:, perm], xi[:, perm]), D[:, perm][:, :, perm], R, lam)
    assert (Hp - H[:, perm]).abs().max() <= 1e-5


def test_relation_absent_vs_ones():
    inst = generate_instance(make_spec("TSP", 5), 0)
    m = small()
    rho, om, xi, D, _, lam = _encode_inputs(inst)
    H0 = m.embed_nodes(rho, om, xi)
    a = m.encode(H0, D, None, lam)
    b = m.encode(H0, D, torch.ones_like(D), lam)
    assert not torch.allclose(a, b)


def test_encoder_reference_d8_L1():
    """Scalar-loop reimplementation of one encoder layer on a 3-node instance."""
    inst = generate_instance(make_spec("TSP", 3), 2)
    m = small(d=8, L=1, seed=5)
    rho, om, xi, D, R, lam = _encode_inputs(inst)
    H0 = m.embed_nodes(rho, om, xi)
    got = m.encode(H0, D, None, lam)[0]
    h = H0[0].detach().numpy()
    Dn = D[0].numpy()
    n, d = 3, 8
    alpha = m.bias_alphas(lam)[0].detach().numpy()
    P = {k: getattr(m, k).detach().numpy() for k in ("enc_Wq", "enc_Wk", "enc_Wv", "enc_Wo", "enc_ff_W1",
                                                        "enc_ff_b1", "enc_ff_W2", "enc_ff_b2", "enc_norm1_g",
                                                        "enc_norm1_b", "enc_norm2_g", "enc_norm2_b")}
    outs = []
    for b in range(3):
        if b == 2:
            outs.append(np.zeros((n, d)))
            continue
        q, k, v = h @ P["enc_Wq"][0, b], h @ P["enc_Wk"][0, b], h @ P["enc_Wv"][0, b]
        o = np.zeros((n, d))
        for i in range(n):
            for c in range(d):
                num = den = 0.0
                for j in range(n):
                    dij = Dn[i, j] if b == 0 else Dn[j, i]
                    w = math.exp(-alpha[b] * math.log2(n) * dij + k[j, c])
                    num += w * v[j, c]
                    den += w
                o[i, c] = num / den / (1 + math.exp(-q[i, c]))
        outs.append(o)
    mixed = np.concatenate(outs, 1) @ P["enc_Wo"][0]

    def inorm(x, g, bta):
        mu = x.mean(0)
        var = ((x - mu) ** 2).mean(0)
        return (x - mu) / np.sqrt(var + 1e-5) * g + bta

    x = inorm(h + mixed, P["enc_norm1_g"][0], P["enc_norm1_b"][0])
    ff = np.maximum(x @ P["enc_ff_W1"][0] + P["enc_ff_b1"][0], 0) @ P["enc_ff_W2"][0] + P["enc_ff_b2"][0]
    ref = inorm(x + ff, P["enc_norm2_g"][0], P["enc_norm2_b"][0])
    assert np.abs(got.detach().numpy() - ref).max() <= 1e-12


def test_encode_rejects_unnormalised():
    inst = generate_instance(make_spec("TSP", 5), 0)
    m = small()
    rho, om, xi, D, R, lam = _encode_inputs(inst)
    with pytest.raises(ValueError):
        m.encode(m.embed_nodes(rho, om, xi), D * 3, R, lam)


def test_rollout_basics():
    m = UnifiedPolicy(PolicyConfig(d=16, L=1, ff=32, d_h=16), seed=0)
    inst = generate_instance(make_spec("TSP", 5), 0)
    trajs = rollout(m, inst)
    assert len(trajs) == 5
    for t in trajs:
        assert sorted(t.sequence) == [0, 1, 2, 3, 4]
    again = rollout(m, inst)
    assert [t.sequence for t in trajs] == [t.sequence for t in again]
    md = generate_instance(make_spec("MDCVRP", 7), 0)
    assert len(rollout(m, md)) == 21


@pytest.mark.parametrize("name", SEEN_VARIANTS + ("OCVRPBPLTW", "MDOCVRPB", "PDCVRP", "ACVRPLTW"))
def test_policy_rollouts_feasible(name):
    m = UnifiedPolicy(PolicyConfig(d=16, L=1, ff=32, d_h=16), seed=1)
    inst = generate_instance(make_spec(name, 8), 3)
    for mode in ("greedy", "sample"):
        for t in rollout(m, inst, mode, generator=torch.Generator().manual_seed(0)):
            assert t.feasible and check_solution(inst, t.sequence).feasible


def test_decoder_probabilities():
    m = small(d=8, L=1)
    inst = generate_instance(make_spec("TSP", 6), 0)
    from unirouting.policy.rollout import encode_instances
    enc = encode_instances(m, [inst])
    mask = torch.tensor([[True, False, True, False, False, True]])
    with torch.no_grad():
        m.hyper_first.mul_(1e3)  # push logits into the clipping range
    enc = encode_instances(m, [inst])
    logits, lp = m.decode_logits(enc["H"], enc["K"], enc["V"], enc["dec"], enc["H"][:, 0], enc["H"][:, 1],
                                 torch.zeros(1, dtype=D64), enc["D"][:, 1], mask, 6)
    assert logits.abs().max() <= 50
    p = lp.exp()
    assert (p[~mask] == 0).all() and abs(p.sum().item() - 1) <= 1e-6
    one = torch.tensor([[False, False, False, True, False, False]])
    _, lp1 = m.decode_logits(enc["H"], enc["K"], enc["V"], enc["dec"], enc["H"][:, 0], enc["H"][:, 1],
                             torch.zeros(1, dtype=D64), enc["D"][:, 1], one, 6)
    assert lp1.exp()[0, 3].item() == 1.0


def test_checkpoint_round_trip(tmp_path):
    m = UnifiedPolicy(PolicyConfig(d=16, L=2, ff=32, d_h=16), seed=4)
    path = tmp_path / "m.ckpt"
    checkpoint.save(m, path, extra={"epoch": 1})
    back, header = checkpoint.load(path)
    assert header["extra"] == {"epoch": 1} and header["lambda_dim"] == 13
    for (n1, p1), (n2, p2) in zip(m.named_parameters(), back.named_parameters()):
        assert n1 == n2 and torch.equal(p1, p2)
    assert checkpoint.to_bytes(m) == checkpoint.to_bytes(back)
    with pytest.raises(CheckpointError):
        checkpoint.from_bytes(b"NOTACKPT" + path.read_bytes()[8:])
