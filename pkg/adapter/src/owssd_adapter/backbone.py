"""Frozen CNN trunk and box pooling for feature extraction.

One backbone is offered: a resnet18 cut after layer3 (stride 16,
256 channels), pooled per box with 2x2 roi_align, giving 1024-dim
vectors. The tap and pooling are recorded in the emitted file's
metadata so consumers can tell feature spaces apart.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn
import torchvision
from PIL import Image
from torchvision.ops import roi_align

from .errors import InputError

BACKBONES = ("resnet18-layer3",)
FEATURE_DIM = 1024
_STRIDE = 16
_POOL = 2

# imagenet statistics, the convention the pretrained weights expect
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def load_backbone(
    name: str = "resnet18-layer3",
    weights: str = "auto",
    seed: int = 0,
    device: str = "cpu",
) -> tuple[nn.Module, dict]:
    """Build the frozen trunk; returns (module, metadata).

    weights: "imagenet" insists on pretrained weights, "random" uses a
    seeded random init, "auto" tries pretrained and falls back to the
    seeded init when the weight files are unreachable (offline hosts).
    """
    if name not in BACKBONES:
        raise InputError(f"unknown backbone {name!r}, available: {BACKBONES}")
    if weights not in ("auto", "imagenet", "random"):
        raise InputError(f"weights must be auto, imagenet or random, got {weights!r}")

    tag = weights
    net = None
    if weights in ("auto", "imagenet"):
        try:
            net = torchvision.models.resnet18(
                weights=torchvision.models.ResNet18_Weights.IMAGENET1K_V1
            )
            tag = "imagenet"
        except Exception:
            if weights == "imagenet":
                raise InputError(
                    "pretrained weights requested but not available; "
                    "use weights='random' on offline hosts"
                )
            net = None
    if net is None:
        torch.manual_seed(seed)
        net = torchvision.models.resnet18(weights=None)
        tag = f"random(seed={seed})"

    trunk = nn.Sequential(
        net.conv1, net.bn1, net.relu, net.maxpool,
        net.layer1, net.layer2, net.layer3,
    )
    trunk.eval()
    for p in trunk.parameters():
        p.requires_grad_(False)
    trunk.to(device)
    meta = {
        "backbone": name,
        "tap": "layer3",
        "stride": _STRIDE,
        "pool": f"roi_align {_POOL}x{_POOL} aligned",
        "weights": tag,
        "dim": FEATURE_DIM,
        "preprocess": "rgb/255 imagenet-normalized",
    }
    return trunk, meta


def load_image_tensor(path: str, device: str = "cpu") -> tuple[torch.Tensor, int, int]:
    """Read an image file into a normalized 1xCxHxW tensor."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        width, height = rgb.size
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = (arr - _MEAN) / _STD
    tensor = torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0).to(device)
    return tensor, width, height


def pool_boxes(trunk: nn.Module, image: torch.Tensor, corners: np.ndarray) -> np.ndarray:
    """Pool one image's feature map over n boxes; returns (n, 1024) float64."""
    if corners.size == 0:
        return np.zeros((0, FEATURE_DIM), dtype=np.float64)
    with torch.no_grad():
        fmap = trunk(image)
        rois = torch.as_tensor(corners, dtype=fmap.dtype, device=fmap.device)
        pooled = roi_align(
            fmap, [rois], output_size=(_POOL, _POOL),
            spatial_scale=1.0 / _STRIDE, aligned=True,
        )
    flat = pooled.reshape(pooled.shape[0], -1).cpu().numpy().astype(np.float64)
    if flat.shape[1] != FEATURE_DIM:
        raise InputError(
            f"backbone produced {flat.shape[1]}-dim vectors, expected {FEATURE_DIM}"
        )
    return flat
