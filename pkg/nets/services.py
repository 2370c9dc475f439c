"""
Model inspection: attention capture, head confidence, parameter sharing
"""
import torch
import torch.nn as nn
from pydantic import BaseModel

from core.exceptions import ModelConfigError
from nets.blocks import attention_modules
from nets.entities import AttentionRecord, DecoderMode, HeadConfidence
from nets.segmentation import SegmentationModel


def capture_attention(model: nn.Module, x: torch.Tensor, forward=None) -> AttentionRecord:
    """
    Run one evaluation-mode forward pass and collect every attention map

    Args:
        model: any module containing attention layers
        x: network input
        forward: callable used instead of `model(x)`, e.g. to reach a
            specific decoder

    Raises:
        ModelConfigError: the model has no attention layers
    """
    modules = attention_modules(model)
    if not modules:
        raise ModelConfigError(f"{type(model).__name__} contains no attention blocks")

    was_training = model.training
    model.eval()
    try:
        for module in modules.values():
            module.capture, module.last_attention = True, None
        with torch.no_grad():
            (forward or model)(x)
    finally:
        for module in modules.values():
            module.capture = False
        model.train(was_training)

    return AttentionRecord(layers={
        name: module.last_attention for name, module in modules.items()
        if module.last_attention is not None
    })


def head_confidence(rec: AttentionRecord) -> list[HeadConfidence]:
    """Mean over queries (and batch) of each head's maximal attention weight"""
    confidences = []
    for name, weights in rec.layers.items():
        per_head = weights.max(dim=-1).values.mean(dim=(0, 2))
        confidences += [
            HeadConfidence(layer=name, head=head, confidence=float(value))
            for head, value in enumerate(per_head)
        ]
    return confidences


def most_confident_heads(rec: AttentionRecord, top: int = 5) -> list[HeadConfidence]:
    return sorted(head_confidence(rec), key=lambda h: h.confidence, reverse=True)[:top]


class SharingAudit(BaseModel):
    """Parameter overlap between the residual and segmentation decoders"""
    shared: int
    body: int
    residual_only: list[str]
    segmentation_only: list[str]

    @property
    def passed(self) -> bool:
        mode_specific = self.residual_only + self.segmentation_only
        return self.shared == self.body > 0 and all(
            name.startswith("heads.") or ".norms." in name for name in mode_specific
        )


def _mode_parameters(decoder: nn.Module, mode: DecoderMode) -> dict[str, nn.Parameter]:
    other = next(m for m in DecoderMode if m != mode).value
    return {
        name: p for name, p in decoder.named_parameters()
        if not name.startswith(f"heads.{other}") and f".norms.{other}." not in name
    }


def audit_parameter_sharing(model: SegmentationModel) -> SharingAudit:
    """
    Compare the parameter objects G_res and G_seg actually use

    The audit passes when the intersection is exactly the segmentation
    decoder body and the remainder is normalization sets and output heads.
    """
    if not model.is_semi:
        raise ModelConfigError("only the semi-supervised model has a residual decoder")
    residual = _mode_parameters(model.res_decoder, DecoderMode.RESIDUAL)
    segmentation = _mode_parameters(model.seg_decoder, DecoderMode.SEGMENTATION)
    residual_ids = {id(p) for p in residual.values()}
    segmentation_ids = {id(p) for p in segmentation.values()}
    return SharingAudit(
        shared=len(residual_ids & segmentation_ids),
        body=sum(1 for _ in model.seg_decoder.body_parameters()),
        residual_only=sorted(n for n, p in residual.items() if id(p) not in segmentation_ids),
        segmentation_only=sorted(n for n, p in segmentation.items() if id(p) not in residual_ids),
    )


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
