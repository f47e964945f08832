"""Gate network behavior, the complexity objective, and soft-path gradients."""

import numpy as np
import pytest

from ecotrain import model as M
from ecotrain import slu
from ecotrain.energy import EnergyLedger
from ecotrain.errors import ConfigError


def make_gate(channels=4, seed=0):
    return slu.GateNetwork(channels, rng=np.random.default_rng(seed))


def test_zero_head_gives_half_prob_and_keeps(rng):
    gate = make_gate()
    gate.head_b.data[:] = 0.0  # zero the whole output head
    x = rng.normal(size=(2, 4, 5, 5))
    decision, state, _ = slu.gate_forward(x, gate, gate.init_state(), block_index=0)
    assert decision.prob == 0.5
    assert decision.keep  # tie at 0.5 keeps the block


def test_deterministic_threshold():
    gate = make_gate()
    gate.head_b.data[0] = np.log(0.7 / 0.3)  # overwrite the open-init bias  # sigmoid -> 0.7
    x = np.zeros((1, 4, 3, 3))
    decision, _, _ = slu.gate_forward(x, gate, gate.init_state(), mode="deterministic")
    assert np.isclose(decision.prob, 0.7)
    assert decision.keep


def test_sampling_frequency_matches_prob(rng):
    gate = make_gate()
    gate.head_b.data[0] = np.log(0.7 / 0.3)
    x = np.zeros((1, 4, 3, 3))
    keeps = 0
    n = 10_000
    for _ in range(n):
        d, _, _ = slu.gate_forward(x, gate, gate.init_state(), mode="sample", rng=rng)
        keeps += d.keep
    assert abs(keeps / n - 0.7) < 0.02


def test_sampling_requires_rng():
    gate = make_gate()
    with pytest.raises(ConfigError):
        slu.gate_forward(np.zeros((1, 4, 3, 3)), gate, gate.init_state(), mode="sample")


def test_select_layers():
    ds = [slu.GateDecision(0.9, True, 0), slu.GateDecision(0.2, False, 1)]
    assert slu.select_layers(ds) == [True, False]
    with pytest.raises(ConfigError):
        slu.select_layers(ds, num_blocks=3)


def test_total_loss_examples():
    flops = [10.0, 10.0, 10.0, 10.0]
    assert slu.slu_total_loss(2.0, [True] * 4, flops, 0.0).total == 2.0
    parts = slu.slu_total_loss(1.0, [True] * 4, flops, 0.5)
    assert parts.complexity_cost == 1.0 and parts.total == 1.5
    assert slu.slu_total_loss(0.0, [True, False, True, False], flops, 1.0).complexity_cost == 0.5
    soft = slu.slu_total_loss(0.0, [0.25, 0.75], [5.0, 5.0], 1.0)
    assert soft.complexity_cost == 0.5
    assert slu.slu_total_loss(0.0, [False, False], [5.0, 5.0], 1.0).complexity_cost == 0.0


def test_total_loss_validation():
    with pytest.raises(ConfigError):
        slu.slu_total_loss(1.0, [True], [1.0], -0.1)
    with pytest.raises(ConfigError):
        slu.slu_total_loss(1.0, [True], [1.0, 2.0], 0.1)


def test_complexity_grad():
    g = slu.complexity_grad_wrt_probs([1.0, 3.0], alpha=2.0)
    assert np.allclose(g, [0.5, 1.5])


def test_weight_sharing_one_parameter_set(rng):
    gate = make_gate()
    x1 = rng.normal(size=(2, 4, 5, 5))
    x2 = rng.normal(size=(2, 4, 5, 5))
    state = gate.init_state()
    d1, state, _ = slu.gate_forward(x1, gate, state, block_index=0)
    d2, state, _ = slu.gate_forward(x2, gate, state, block_index=1)
    gate.head_b.data[0] += 3.0  # one mutation moves every block's gate
    state = gate.init_state()
    d1b, state, _ = slu.gate_forward(x1, gate, state, block_index=0)
    d2b, state, _ = slu.gate_forward(x2, gate, state, block_index=1)
    assert d1b.prob > d1.prob and d2b.prob > d2.prob


def test_gate_determinism_same_seed(rng):
    gate = make_gate()
    x = rng.normal(size=(2, 4, 5, 5))

    def draw(seed):
        r = np.random.default_rng(seed)
        state = gate.init_state()
        out = []
        for i in range(6):
            d, state, _ = slu.gate_forward(x + i, gate, state, mode="sample", rng=r)
            out.append(d.keep)
        return out

    assert draw(123) == draw(123)


def test_gate_overhead_below_a_tenth_percent(rng):
    net = M.GatedConvNet(in_shape=(3, 16, 16), num_blocks=4, width=8,
                         num_classes=10, stem_stride=2, rng=rng)
    gate = make_gate(channels=8)
    x = rng.normal(size=(16, 3, 16, 16))
    model_ledger = EnergyLedger()
    net.forward(x, ledger=model_ledger)
    gate_ledger = EnergyLedger()
    state = gate.init_state()
    for i in range(4):
        _, state, _ = slu.gate_forward(np.zeros((16, 8, 8, 8)), gate, state,
                                       block_index=i, ledger=gate_ledger)
    assert gate_ledger.flops() / model_ledger.flops() < 0.001


def _soft_total(net, gate, x, labels, alpha):
    """Forward with soft gives and the regularized objective."""
    state = {"s": gate.init_state()}
    probs, caches = [], []

    def gate_fn(i, h):
        prob, state["s"], cache = gate.forward(h.mean(axis=(0, 2, 3)), state["s"])
        probs.append(prob)
        caches.append(cache)
        return prob

    logits = net.forward(x, gates=gate_fn, train=True)
    loss, g_logits = M.softmax_cross_entropy(logits, labels)
    flops = net.per_block_flops(x.shape[0])
    parts = slu.slu_total_loss(loss, probs, flops, alpha)
    return parts, g_logits, probs, caches, flops


@pytest.mark.parametrize("alpha", [0.0, 0.37])
def test_gate_gradients_match_finite_differences(alpha):
    rng = np.random.default_rng(3)
    net = M.GatedConvNet(in_shape=(3, 8, 8), num_blocks=2, width=4,
                         num_classes=3, stem_stride=1, rng=rng)
    gate = make_gate(channels=4, seed=5)
    gate.head_w.data[:] = rng.normal(0, 0.3, 10)  # move off the zero init
    x = rng.normal(size=(3, 3, 8, 8))
    labels = rng.integers(0, 3, 3)

    parts, g_logits, probs, caches, flops = _soft_total(net, gate, x, labels, alpha)
    cgrad = slu.complexity_grad_wrt_probs(flops, alpha)
    gate.zero_grads()
    slu.joint_backward(net, gate, g_logits, caches, cgrad)

    base_masks = [r._mask.copy() for r in net.relu_layers()]

    def stable(masks):
        return all(np.array_equal(a, b) for a, b in zip(masks, base_masks))

    eps = 1e-4  # larger eps keeps roundoff noise below truncation error
    worst = 0.0
    for p in gate.params():
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        idx = rng.choice(flat.size, min(4, flat.size), replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + eps
            up = _soft_total(net, gate, x, labels, alpha)[0].total
            up_masks = [r._mask for r in net.relu_layers()]
            flat[i] = keep - eps
            down = _soft_total(net, gate, x, labels, alpha)[0].total
            down_masks = [r._mask for r in net.relu_layers()]
            flat[i] = keep
            if not (stable(up_masks) and stable(down_masks)):
                continue  # perturbation left the active linear region
            cd = (up - down) / (2 * eps)
            err = abs(gflat[i] - cd) / max(abs(gflat[i]), abs(cd), 1e-8)
            worst = max(worst, err)
    assert worst <= 1e-3


def test_complexity_only_gradient_pushes_toward_skip():
    # task loss blind to the blocks: only the alpha*C term drives the gate,
    # so d(total)/d(prob) is positive (descent lowers the keep probability)
    rng = np.random.default_rng(1)
    net = M.GatedConvNet(in_shape=(3, 8, 8), num_blocks=2, width=4,
                         num_classes=3, stem_stride=1, rng=rng)
    for block in net.blocks:  # zero branches: outputs never affect the loss
        block.conv2.w.data[:] = 0.0
    gate = make_gate(channels=4)
    x = rng.normal(size=(2, 3, 8, 8))
    labels = rng.integers(0, 3, 2)
    parts, g_logits, probs, caches, flops = _soft_total(net, gate, x, labels, 0.5)
    dgains = net.backward(g_logits)
    assert all(abs(d) < 1e-12 for d in dgains)
    dprobs = [d + c for d, c in zip(dgains, slu.complexity_grad_wrt_probs(flops, 0.5))]
    assert all(d > 0 for d in dprobs)
    # and with alpha = 0 the gate gradient vanishes entirely
    dprobs0 = [d + c for d, c in zip(dgains, slu.complexity_grad_wrt_probs(flops, 0.0))]
    assert all(abs(d) < 1e-12 for d in dprobs0)
