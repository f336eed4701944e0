#!/usr/bin/env python3
"""Export reference forward passes for the backbone parity test.

For each architecture this writes two safetensors files under --out-dir:

  <arch>.safetensors      seeded random weights in the exported-weights layout
  <arch>_io.safetensors   a fixed input batch and the feature vectors the
                          torchvision forward pass produces for it

The Rust test crates/core/tests/backbone_parity.rs loads the weights file
like any exported backbone, runs the same input, and compares features.
Weights are randomized beyond the module defaults (batch-norm scale, shift,
and running statistics) so the inference-mode normalization path is actually
exercised; default running stats are the identity.
"""

import argparse
from pathlib import Path

import torch
from safetensors.torch import save_file
from torchvision import models

ARCHS = ("densenet169", "inceptionv3")
INPUT_RESOLUTION = {"densenet169": 224, "inceptionv3": 299}
FEATURE_DIM = {"densenet169": 1664, "inceptionv3": 2048}
BATCH = 2
SEED = 20260814


def build(arch: str) -> torch.nn.Module:
    if arch == "densenet169":
        model = models.densenet169(weights=None)
        model.classifier = torch.nn.Identity()
    else:
        # transform_input must stay off: inputs are already on the [-1, 1]
        # scale this architecture was designed for.
        model = models.inception_v3(
            weights=None, aux_logits=False, transform_input=False, init_weights=True
        )
        model.fc = torch.nn.Identity()
    return model


def randomize_batchnorm(model: torch.nn.Module, gen: torch.Generator) -> None:
    for module in model.modules():
        if isinstance(module, torch.nn.BatchNorm2d):
            with torch.no_grad():
                module.weight.copy_(
                    torch.empty_like(module.weight).uniform_(0.5, 1.5, generator=gen)
                )
                module.bias.copy_(
                    torch.empty_like(module.bias).normal_(0.0, 0.1, generator=gen)
                )


def calibrate_running_stats(
    model: torch.nn.Module, gen: torch.Generator, res: int
) -> None:
    """One train-mode pass with cumulative averaging sets every running
    mean/var to the actual activation statistics of a random batch. Keeps
    eval-mode activations on a sane scale through arbitrarily deep stacks
    while making the normalization path nontrivial."""
    for module in model.modules():
        if isinstance(module, torch.nn.BatchNorm2d):
            module.momentum = None
            module.reset_running_stats()
    model.train()
    with torch.no_grad():
        model(torch.empty(8, 3, res, res).uniform_(-1.0, 1.0, generator=gen))
    model.eval()


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
    parser.add_argument("--out-dir", type=Path, default=Path("weights/reference"))
    parser.add_argument("--arch", choices=(*ARCHS, "all"), default="all")
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)

    archs = ARCHS if args.arch == "all" else (args.arch,)
    for arch in archs:
        torch.manual_seed(SEED)
        gen = torch.Generator().manual_seed(SEED + 1)

        model = build(arch)
        randomize_batchnorm(model, gen)
        res = INPUT_RESOLUTION[arch]
        calibrate_running_stats(model, gen, res)

        x = torch.empty(BATCH, 3, res, res).uniform_(-1.0, 1.0, generator=gen)
        with torch.no_grad():
            features = model(x)
        assert features.shape == (BATCH, FEATURE_DIM[arch]), features.shape

        weights_path = args.out_dir / f"{arch}.safetensors"
        io_path = args.out_dir / f"{arch}_io.safetensors"
        save_file(exported_state(model), weights_path)
        save_file(
            {"input": x.contiguous(), "features": features.contiguous()}, io_path
        )
        scale = features.abs().mean().item()
        print(f"{arch}: {weights_path} and {io_path} (feature scale {scale:.4f})")


if __name__ == "__main__":
    main()
