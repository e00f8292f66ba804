"""Tests for the BNNeck classifiers and the projector/predictor pair."""

import pytest
import torch
from torch import nn

from occluded_reid import ClassifierHead, ContrastiveHead, ShapeError
from occluded_reid.config import HeadConfig
from occluded_reid.heads import SupervisedHeads, classify, project_and_predict


def _batch_norm(x, norm):
    mean = x.mean(0)
    var = ((x - mean) ** 2).mean(0)
    return (x - mean) / torch.sqrt(var + norm.eps) * norm.weight + norm.bias


def _randomize(module: nn.Module) -> None:
    with torch.no_grad():
        for param in module.parameters():
            param.normal_()


class TestContrastiveHead:
    """Projector then predictor."""

    def test_identity_layers_pass_features_through(self):
        cfg = HeadConfig(projector_hidden=8, projector_out=8, predictor_hidden=8, batchnorm=False)
        head = ContrastiveHead(8, cfg)
        with torch.no_grad():
            for layer in head.modules():
                if isinstance(layer, nn.Linear):
                    layer.weight.copy_(torch.eye(8))
                    layer.bias.zero_()
        f = torch.rand(3, 8)
        z, p = project_and_predict(f, head)
        assert torch.allclose(z, f)
        assert torch.allclose(p, z)

    def test_zero_input_zero_bias(self):
        cfg = HeadConfig(projector_hidden=16, projector_out=4, predictor_hidden=8, batchnorm=False)
        head = ContrastiveHead(8, cfg)
        with torch.no_grad():
            for layer in head.modules():
                if isinstance(layer, nn.Linear):
                    layer.bias.zero_()
        z, _ = head(torch.zeros(2, 8))
        assert not z.any()

    def test_matches_reference_mlp(self):
        cfg = HeadConfig(projector_hidden=16, projector_out=4, predictor_hidden=16)
        head = ContrastiveHead(8, cfg).double()
        _randomize(head)
        f = torch.randn(5, 8, dtype=torch.float64)

        z, p = head(f)

        proj = head.projector.layers
        h = torch.relu(_batch_norm(f @ proj[0].weight.T + proj[0].bias, proj[1]))
        h = torch.relu(_batch_norm(h @ proj[3].weight.T + proj[3].bias, proj[4]))
        z_ref = _batch_norm(h @ proj[6].weight.T + proj[6].bias, proj[7])
        pred = head.predictor.layers
        h = torch.relu(_batch_norm(z_ref @ pred[0].weight.T + pred[0].bias, pred[1]))
        p_ref = h @ pred[3].weight.T + pred[3].bias

        assert torch.allclose(z, z_ref, atol=1e-6)
        assert torch.allclose(p, p_ref, atol=1e-6)

    def test_output_widths_agree(self):
        cfg = HeadConfig(projector_hidden=24, projector_out=12, predictor_hidden=6)
        head = ContrastiveHead(32, cfg)
        z, p = head(torch.randn(4, 32))
        assert z.shape == p.shape == (4, 12)

    def test_width_mismatch(self):
        head = ContrastiveHead(8, HeadConfig(projector_hidden=16, projector_out=4))
        with pytest.raises(ShapeError):
            head(torch.randn(2, 9))


class TestClassifierHead:
    """BNNeck plus linear classifier."""

    def test_identity_classifier_returns_feature(self):
        head = ClassifierHead(4, 4, HeadConfig(batchnorm=False))
        with torch.no_grad():
            head.classifier.weight.copy_(torch.eye(4))
        f = torch.randn(3, 4)
        assert torch.allclose(classify(f, head), f)

    def test_zero_feature_gives_uniform_logits(self):
        head = ClassifierHead(4, 3, HeadConfig(batchnorm=False))
        logits = head(torch.zeros(2, 4))
        assert torch.equal(logits, torch.zeros(2, 3))

    def test_hand_set_weights(self):
        head = ClassifierHead(2, 3, HeadConfig(batchnorm=False))
        with torch.no_grad():
            head.classifier.weight.copy_(torch.tensor([[1.0, 0.0], [0.0, 2.0], [1.0, -1.0]]))
        logits = head(torch.tensor([[3.0, 4.0]]))
        assert logits.tolist() == [[3.0, 8.0, -1.0]]

    def test_eval_mode_is_pure(self):
        head = ClassifierHead(4, 3, HeadConfig())
        head.train()
        head(torch.randn(8, 4))
        head.eval()
        stats = head.bnneck.running_mean.clone()
        f = torch.randn(2, 4)
        first = head(f)
        second = head(f)
        assert torch.equal(first, second)
        assert torch.equal(head.bnneck.running_mean, stats)

    def test_running_stats_follow_momentum(self):
        head = ClassifierHead(4, 3, HeadConfig(bn_momentum=0.25))
        head.train()
        f = torch.randn(8, 4)
        head(f)
        assert torch.allclose(head.bnneck.running_mean, 0.25 * f.mean(0), atol=1e-6)

    def test_width_mismatch(self):
        head = ClassifierHead(4, 3, HeadConfig())
        with pytest.raises(ShapeError):
            head(torch.randn(2, 5))


class TestSupervisedHeads:
    def test_independent_heads(self):
        heads = SupervisedHeads(8, 5, 3, HeadConfig())
        logits_global, logits_local = heads(torch.randn(4, 8), torch.randn(4, 3, 8))
        assert logits_global.shape == (4, 5)
        assert [logits.shape for logits in logits_local] == [(4, 5)] * 3
        weights = [heads.global_head.classifier.weight]
        weights += [head.classifier.weight for head in heads.local_heads]
        assert len({w.data_ptr() for w in weights}) == 4

    def test_group_count_mismatch(self):
        heads = SupervisedHeads(8, 5, 3, HeadConfig())
        with pytest.raises(ShapeError):
            heads(torch.randn(4, 8), torch.randn(4, 2, 8))
