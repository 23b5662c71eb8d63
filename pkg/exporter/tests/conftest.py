import numpy as np
import pytest
import torch
from PIL import Image

from dafm_exporter import load_model, parse_merge_table


class TinySegmenter(torch.nn.Module):
    """Six-class toy net with a stride so outputs need upsampling."""

    def __init__(self):
        super().__init__()
        self.conv1 = torch.nn.Conv2d(3, 8, 3, stride=2, padding=1)
        self.conv2 = torch.nn.Conv2d(8, 6, 3, padding=1)

    def forward(self, x):
        return self.conv2(torch.relu(self.conv1(x)))


@pytest.fixture(scope="session")
def scripted_model_path(tmp_path_factory):
    torch.manual_seed(7)
    module = TinySegmenter().eval()
    path = tmp_path_factory.mktemp("model") / "tiny.pt"
    torch.jit.script(module).save(str(path))
    return path


@pytest.fixture(scope="session")
def model(scripted_model_path):
    return load_model(f"torchscript:{scripted_model_path}")


@pytest.fixture(scope="session")
def fixture_image(tmp_path_factory):
    """Deterministic 48x64 RGB test card (gradients plus a bright square)."""
    h, w = 48, 64
    yy, xx = np.mgrid[0:h, 0:w]
    rgb = np.stack(
        [
            (255 * xx / (w - 1)),
            (255 * yy / (h - 1)),
            (255 * ((xx // 8 + yy // 8) % 2)),
        ],
        axis=2,
    ).astype(np.uint8)
    rgb[10:20, 40:56] = (250, 30, 30)
    path = tmp_path_factory.mktemp("images") / "card.png"
    Image.fromarray(rgb).save(path)
    return path


@pytest.fixture(scope="session")
def merge_table():
    # collapse the six toy classes onto four channels, dropping class 5
    return parse_merge_table("0 -> 0\n1 -> 1\n2 -> 2\n3 -> 3\n4 -> 3\n")
