"""Analytic parameter and FLOP accounting for the locator.

Counts are closed-form functions of the architecture config, not
measurements. The FLOP convention: a conv or linear layer costs
2 * multiply-accumulates (multiply and add counted separately) plus
one add per bias application plus one operation per activation
evaluation. Division-free; the sigmoid mask head is excluded, as is
the frozen text embedder (a pretrained stand-in whose published size
is not part of the trainable budget).
"""
from __future__ import annotations

from typing import Dict, List

from .model import PaslConfig, PaslModel


def _conv_rows(cfg: PaslConfig) -> List[Dict]:
    rows = []
    size = cfg.image_size
    c_in = 3
    for i, (c_out, stride) in enumerate(zip(cfg.channels, cfg.strides)):
        size //= stride
        macs = c_out * c_in * 9 * size * size
        acts = c_out * size * size
        rows.append({
            "layer": f"conv{i}",
            "out_shape": (c_out, size, size),
            "params": (c_in * 9 + 1) * c_out,
            "flops": 2 * macs + 2 * acts,  # bias adds + leaky-rectifier evals
        })
        c_in = c_out
    return rows


def _projector_rows(cfg: PaslConfig) -> List[Dict]:
    t_in, t_hid, t_out = cfg.text_dims
    return [
        {"layer": "proj.linear1", "out_shape": (t_hid,),
         "params": (t_in + 1) * t_hid, "flops": 2 * t_in * t_hid + 2 * t_hid},
        {"layer": "proj.linear2", "out_shape": (t_out,),
         "params": (t_hid + 1) * t_out, "flops": 2 * t_hid * t_out + t_out},
    ]


def complexity_report(mode: str = "paper") -> Dict:
    """Per-component params and FLOPs, matching the published table rows."""
    cfg = PaslConfig(mode=mode)
    conv_rows = _conv_rows(cfg)
    proj_rows = _projector_rows(cfg)
    enc_params = sum(r["params"] for r in conv_rows)
    enc_flops = sum(r["flops"] for r in conv_rows)
    proj_params = sum(r["params"] for r in proj_rows)
    proj_flops = sum(r["flops"] for r in proj_rows)
    return {
        "mode": mode,
        "components": [
            {"name": "Image Encoder", "params": enc_params, "flops": enc_flops, "layers": conv_rows},
            {"name": "Multi-Modal Projector", "params": proj_params, "flops": proj_flops, "layers": proj_rows},
        ],
        "trainable_params": enc_params + proj_params,
        "trainable_flops": enc_flops + proj_flops,
        "note": "frozen text embedder excluded; FLOPs = 2*MACs + bias + activation",
    }


def count_model_params(model: PaslModel) -> Dict[str, int]:
    """Element counts of an instantiated model, for cross-checking the
    analytic numbers against real weight arrays."""
    encoder = sum(t.data.size for name, t in model.params.items() if name.startswith("conv"))
    projector = sum(t.data.size for name, t in model.params.items() if name.startswith("proj"))
    return {"encoder": encoder, "projector": projector, "total": encoder + projector}


def format_report(report: Dict) -> str:
    lines = [f"mode: {report['mode']}"]
    lines.append(f"{'component':<24}{'params':>12}  {'params (M)':>10}  {'flops':>16}  {'flops (G)':>10}")
    for comp in report["components"]:
        lines.append(
            f"{comp['name']:<24}{comp['params']:>12,}  {comp['params'] / 1e6:>10.2f}  "
            f"{comp['flops']:>16,}  {comp['flops'] / 1e9:>10.3f}"
        )
    lines.append(
        f"{'trainable total':<24}{report['trainable_params']:>12,}  "
        f"{report['trainable_params'] / 1e6:>10.2f}  {report['trainable_flops']:>16,}  "
        f"{report['trainable_flops'] / 1e9:>10.3f}"
    )
    lines.append(report["note"])
    return "\n".join(lines)
