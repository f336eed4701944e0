#!/usr/bin/env python3
"""Export torchvision ImageNet weights for the full-size backbones.

Writes <arch>.safetensors files (float32, feature-extractor tensors only:
no classifier, no auxiliary head, no num_batches_tracked counters) that
`tss train --weights-init imagenet_pretrained --weights-dir <dir>` loads.

Requires network access to download the torchvision weights on first use.
"""

import argparse
from pathlib import Path

import torch
from safetensors.torch import save_file
from torchvision import models

ARCHS = ("densenet169", "inceptionv3")
EXPECTED_TENSORS = {"densenet169": 824, "inceptionv3": 470}


def pretrained(arch: str) -> torch.nn.Module:
    if arch == "densenet169":
        return models.densenet169(weights=models.DenseNet169_Weights.IMAGENET1K_V1)
    return models.inception_v3(weights=models.Inception_V3_Weights.IMAGENET1K_V1)


def exported_state(model: torch.nn.Module) -> dict[str, torch.Tensor]:
    drop_prefixes = ("classifier", "fc.", "AuxLogits")
    state = {}
    for name, tensor in model.state_dict().items():
        if name.endswith("num_batches_tracked"):
            continue
        if name.startswith(drop_prefixes):
            continue
        state[name] = tensor.to(torch.float32).contiguous()
    return state


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path("weights"))
    parser.add_argument("--arch", choices=(*ARCHS, "all"), default="all")
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    archs = ARCHS if args.arch == "all" else (args.arch,)
    for arch in archs:
        model = pretrained(arch)
        model.eval()
        state = exported_state(model)
        assert len(state) == EXPECTED_TENSORS[arch], (arch, len(state))
        path = args.out_dir / f"{arch}.safetensors"
        save_file(state, path)
        print(f"{arch}: {len(state)} tensors -> {path}")


if __name__ == "__main__":
    main()
