"""
Seeding and device selection shared by every training stage
"""
import random

import numpy as np
import torch

from core.environment.config import Settings


def seed_everything(seed: int, deterministic: bool = True) -> None:
    """Seed python, numpy and torch RNGs"""
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    if torch.cuda.is_available():
        torch.cuda.manual_seed_all(seed)
    if deterministic:
        torch.backends.cudnn.deterministic = True
        torch.backends.cudnn.benchmark = False
        torch.use_deterministic_algorithms(True, warn_only=True)


def resolve_device(settings: Settings) -> torch.device:
    """Map the `device` setting to a torch device"""
    if settings.device == "cpu":
        return torch.device("cpu")
    if settings.device == "cuda" or torch.cuda.is_available():
        return torch.device("cuda")
    return torch.device("cpu")


def torch_generator(*seed_parts: int) -> torch.Generator:
    """CPU generator whose state depends only on the given integers"""
    seed = int(np.random.SeedSequence(list(seed_parts)).generate_state(1, dtype=np.uint64)[0] % 2**63)
    return torch.Generator().manual_seed(seed)


def amsgrad(parameters, lr: float, betas: tuple[float, float]) -> torch.optim.Optimizer:
    """Adam with the max-of-second-moment correction"""
    return torch.optim.Adam(parameters, lr=lr, betas=betas, amsgrad=True)


def set_requires_grad(modules, flag: bool) -> None:
    for module in modules:
        for p in module.parameters():
            p.requires_grad_(flag)
