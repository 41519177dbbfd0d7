import inspect
from pathlib import Path

import pytest

from epidiv import HEATMAP_SIZE
from epidiv.cli import RunConfig, build_parser
from epidiv.divergence import DivergenceConfig
from epidiv.geometry import DEFAULT_DEGENERACY_DEG
from epidiv.heatmap import CropTransform, gaussian_label
from epidiv.metrics import pck_curve
from epidiv.supervision import LossWeights, build_pairs
from epidiv.synth import make_scene


def test_loss_weight_defaults():
    assert LossWeights() == LossWeights(lambda_e=5.0, lambda_p=1.0)


def test_heatmap_size_default():
    assert HEATMAP_SIZE == 46
    assert gaussian_label([(1.0, 1.0)]).shape == (1, 46, 46)
    assert CropTransform(u_x=0.0, u_y=0.0, h_b=1.0).h_h == 46.0
    assert inspect.signature(make_scene).parameters["heatmap_size"].default == 46
    assert inspect.signature(pck_curve).parameters["window_w"].default == 46


def test_divergence_defaults():
    cfg = DivergenceConfig()
    assert cfg.epsilon == 1e-6 and cfg.normalize is False


def test_degeneracy_default():
    assert DEFAULT_DEGENERACY_DEG == 2.0
    assert inspect.signature(build_pairs).parameters["degeneracy_deg"].default == 2.0


@pytest.mark.parametrize("command", ["synth", "loss", "optimize", "eval"])
def test_cli_defaults_reach_run_config(command):
    args = build_parser().parse_args([command, "--scene", "s"])
    cfg = RunConfig.from_args(args)
    assert cfg.weights == LossWeights(5.0, 1.0)
    assert cfg.divergence == DivergenceConfig(epsilon=1e-6, normalize=False)
    assert cfg.degeneracy_deg == 2.0
    assert cfg.out == Path("out") and cfg.seed == 0


def test_cli_flags_override():
    argv = ["loss", "--scene", "s", "--lambda-e", "2", "--lambda-p", "0.5", "--eps", "1e-3", "--normalize-flats", "--degeneracy-deg", "5"]
    cfg = RunConfig.from_args(build_parser().parse_args(argv))
    assert cfg.weights == LossWeights(2.0, 0.5)
    assert cfg.divergence == DivergenceConfig(epsilon=1e-3, normalize=True)
    assert cfg.degeneracy_deg == 5.0
