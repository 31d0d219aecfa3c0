import numpy as np
import pytest
import torch

from changeflow.config import FlowConfig
from changeflow.errors import InvalidArgumentError, ShapeError
from changeflow.flow_core import rf_loss
from changeflow.velocity import (
    VelocityModel,
    build_velocity_model,
    predict_velocity,
    sinusoidal_time_embedding,
)


def _tiny_model(seed=0, **overrides):
    kwargs = dict(latent_channels=2, cond_channels=3, grid_size=4, dim=8, layers=1, heads=2,
                  time_freq_dim=8)
    kwargs.update(overrides)
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return VelocityModel(**kwargs)


def test_shape_contract_desk_config():
    model = build_velocity_model(FlowConfig(), seed=0)
    x = torch.randn(1, 4, 16, 16)
    cond = torch.randn(1, 32, 16, 16)
    assert predict_velocity(model, x, cond, 0.5).shape == (1, 4, 16, 16)


def test_unbatched_inputs_supported():
    model = _tiny_model()
    out = predict_velocity(model, torch.randn(2, 4, 4), torch.randn(3, 4, 4), 0.25)
    assert out.shape == (2, 4, 4)


def test_paper_scale_config_constructible():
    cfg = FlowConfig(model_dim=256, model_layers=10, model_heads=8)
    model = build_velocity_model(cfg, seed=0)
    assert model.parameter_count > 10_000_000


def test_head_count_must_divide_width():
    with pytest.raises(InvalidArgumentError):
        _tiny_model(dim=10, heads=4)


def test_build_reports_parameter_count_and_is_seed_deterministic():
    a = build_velocity_model(FlowConfig(), seed=3)
    b = build_velocity_model(FlowConfig(), seed=3)
    c = build_velocity_model(FlowConfig(), seed=4)
    assert a.parameter_count == b.parameter_count > 0
    assert all(torch.equal(p, q) for p, q in zip(a.parameters(), b.parameters()))
    assert any(not torch.equal(p, q) for p, q in zip(a.parameters(), c.parameters()))


def test_eval_mode_forward_is_bit_identical():
    model = _tiny_model().eval()
    x = torch.randn(2, 2, 4, 4)
    cond = torch.randn(2, 3, 4, 4)
    with torch.no_grad():
        a = predict_velocity(model, x, cond, 0.7)
        b = predict_velocity(model, x, cond, 0.7)
    assert torch.equal(a, b)


def test_spatial_mismatch_rejected():
    model = _tiny_model()
    with pytest.raises(ShapeError):
        predict_velocity(model, torch.randn(1, 2, 4, 4), torch.randn(1, 3, 8, 8), 0.5)


def test_wrong_channel_count_rejected():
    model = _tiny_model()
    with pytest.raises(ShapeError):
        predict_velocity(model, torch.randn(1, 2, 4, 4), torch.randn(1, 9, 4, 4), 0.5)


def test_time_embedding_at_zero_alternates_zero_one():
    emb = sinusoidal_time_embedding(torch.tensor([0.0]), 12)[0]
    assert torch.equal(emb[0::2], torch.zeros(6))
    assert torch.equal(emb[1::2], torch.ones(6))


def test_time_embedding_endpoints_differ_after_projection():
    model = _tiny_model()
    e0 = model.time_embedder(torch.tensor([0.0]))
    e1 = model.time_embedder(torch.tensor([1.0]))
    assert float((e0 - e1).norm()) > 0.0


def test_time_embedding_is_lipschitz_continuous():
    # max frequency 10 over 128 components bounds |emb(t+h) - emb(t)| well below 1e-4 for h = 1e-6
    t = torch.tensor([0.3137], dtype=torch.float64)
    a = sinusoidal_time_embedding(t, 128)
    b = sinusoidal_time_embedding(t + 1e-6, 128)
    assert float((a - b).norm()) < 1e-4


def test_time_embedding_rejects_odd_dim():
    with pytest.raises(InvalidArgumentError):
        sinusoidal_time_embedding(torch.tensor([0.5]), 7)


def test_every_parameter_gets_gradient_at_init():
    model = build_velocity_model(FlowConfig(model_dim=64, model_layers=2, model_heads=2), seed=5)
    g = torch.Generator().manual_seed(0)
    x0 = torch.randn(4, 4, 16, 16, generator=g)
    x1 = torch.randn(4, 4, 16, 16, generator=g)
    cond = torch.randn(4, 32, 16, 16, generator=g)
    t = torch.rand(4, generator=g)
    v = predict_velocity(model, (1 - t.view(-1, 1, 1, 1)) * x0 + t.view(-1, 1, 1, 1) * x1, cond, t)
    rf_loss(v, x0, x1).backward()
    for name, p in model.named_parameters():
        assert p.grad is not None, name
        assert float(p.grad.abs().max()) > 0.0, f"dead parameter {name}"


def test_parameter_gradients_match_finite_differences():
    """Autograd vs central differences on a random parameter subset of a tiny model."""
    model = _tiny_model().double()
    g = torch.Generator().manual_seed(1)
    x0 = torch.randn(2, 2, 4, 4, generator=g, dtype=torch.float64)
    x1 = torch.randn(2, 2, 4, 4, generator=g, dtype=torch.float64)
    cond = torch.randn(2, 3, 4, 4, generator=g, dtype=torch.float64)
    t = torch.tensor([0.3, 0.8], dtype=torch.float64)
    x_t = (1 - t.view(-1, 1, 1, 1)) * x0 + t.view(-1, 1, 1, 1) * x1

    def loss_value():
        return rf_loss(predict_velocity(model, x_t, cond, t), x0, x1)

    loss = loss_value()
    loss.backward()

    rng = np.random.default_rng(0)
    eps = 1e-5
    checked = 0
    for name, param in model.named_parameters():
        flat = param.data.view(-1)
        grad = param.grad.view(-1)
        for idx in rng.choice(flat.numel(), size=min(3, flat.numel()), replace=False):
            orig = flat[idx].item()
            flat[idx] = orig + eps
            hi = loss_value().item()
            flat[idx] = orig - eps
            lo = loss_value().item()
            flat[idx] = orig
            fd = (hi - lo) / (2 * eps)
            analytic = grad[idx].item()
            denom = max(abs(fd), abs(analytic), 1e-8)
            assert abs(fd - analytic) / denom < 1e-3, f"{name}[{idx}]: fd={fd} autograd={analytic}"
            checked += 1
    assert checked >= 30


def test_overfit_tiny_batch_halves_loss():
    model = _tiny_model(dim=32, layers=2, heads=2, time_freq_dim=16)
    g = torch.Generator().manual_seed(2)
    x0 = torch.randn(4, 2, 4, 4, generator=g)
    x1 = torch.randn(4, 2, 4, 4, generator=g)
    cond = torch.randn(4, 3, 4, 4, generator=g)
    t = torch.rand(4, generator=g)
    x_t = (1 - t.view(-1, 1, 1, 1)) * x0 + t.view(-1, 1, 1, 1) * x1
    opt = torch.optim.AdamW(model.parameters(), lr=1e-3)
    initial = None
    for _ in range(200):
        loss = rf_loss(predict_velocity(model, x_t, cond, t), x0, x1)
        if initial is None:
            initial = loss.item()
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert loss.item() <= 0.5 * initial
