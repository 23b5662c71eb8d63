"""Segmentation model loading.

Two identifier families:

    torchvision:<name>[?weights=none]   e.g. torchvision:fcn_resnet50
    torchscript:<path>                  any scripted module

Torchvision names load their published pretrained weights by default
(requires the weight files to be available); `?weights=none` instantiates
the architecture with seeded random weights, which keeps the export
contract testable offline. TorchScript files are used as-is.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from .errors import InferenceFailure, ModelLoadFailure

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class LoadedModel:
    """A segmentation network plus the metadata the exporter needs."""

    module: torch.nn.Module
    identifier: str
    class_names: tuple[str, ...] | None
    normalize: bool

    def logits(self, batch: torch.Tensor) -> torch.Tensor:
        """Forward pass returning (1, classes, h, w) raw scores."""
        try:
            with torch.inference_mode():
                out = self.module(batch)
        except Exception as exc:
            raise InferenceFailure(f"{self.identifier}: forward pass failed: {exc}") from exc
        if isinstance(out, dict):
            if "out" not in out:
                raise InferenceFailure(f"{self.identifier}: output dict lacks an 'out' entry")
            out = out["out"]
        if not torch.is_tensor(out) or out.dim() != 4:
            raise InferenceFailure(
                f"{self.identifier}: expected a (1, C, h, w) tensor, got {type(out).__name__}"
            )
        return out


def _load_torchvision(name: str, pretrained: bool) -> LoadedModel:
    from torchvision.models import segmentation as seg

    factory = getattr(seg, name, None)
    if factory is None:
        raise ModelLoadFailure(f"torchvision has no segmentation model named {name!r}")
    class_names: tuple[str, ...] | None = None
    try:
        if pretrained:
            weights_enum = seg.get_model_weights(name).DEFAULT
            class_names = tuple(weights_enum.meta["categories"])
            module = factory(weights=weights_enum)
        else:
            # seeded random weights keep exports reproducible without downloads
            torch.manual_seed(0)
            module = factory(weights=None, weights_backbone=None)
    except ModelLoadFailure:
        raise
    except Exception as exc:
        raise ModelLoadFailure(f"cannot build torchvision model {name!r}: {exc}") from exc
    module.eval()
    return LoadedModel(
        module=module,
        identifier=f"torchvision:{name}",
        class_names=class_names,
        normalize=True,
    )


def _load_torchscript(path: str) -> LoadedModel:
    if not Path(path).is_file():
        raise ModelLoadFailure(f"torchscript file {path} does not exist")
    try:
        module = torch.jit.load(path, map_location="cpu")
    except Exception as exc:
        raise ModelLoadFailure(f"cannot load torchscript module {path}: {exc}") from exc
    module.eval()
    return LoadedModel(
        module=module,
        identifier=f"torchscript:{path}",
        class_names=None,
        normalize=False,
    )


def load_model(identifier: str) -> LoadedModel:
    """Resolve a model identifier to a ready-to-run network."""
    scheme, _, rest = identifier.partition(":")
    if not rest:
        raise ModelLoadFailure(
            f"model identifier {identifier!r} needs a scheme, e.g. torchvision:fcn_resnet50"
        )
    if scheme == "torchvision":
        name, _, query = rest.partition("?")
        pretrained = query != "weights=none"
        if query not in ("", "weights=none"):
            raise ModelLoadFailure(f"unsupported model option {query!r}")
        return _load_torchvision(name, pretrained)
    if scheme == "torchscript":
        return _load_torchscript(rest)
    raise ModelLoadFailure(f"unknown model scheme {scheme!r}")
