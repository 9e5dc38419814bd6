"""JSON (de)serialization of models, ViT parameters, traces and datasets.

Every array is stored in the repo tensor format
``{"shape": [...], "data": [row-major numbers]}``.  A model file looks like::

    {"mode": "vanilla", "n_x": 4, "n_y": 6, "J": 2, "skip_mode": "average",
     "blocks": [{"attn": {...}, "norm1": {...}, "norm2": {...},
                 "ffn": [{"w": T, "b": T}, ...], "conv_embed": null}]}

Single-head attention is ``{"w_q": T, "w_k": T, "w_v": T}``, multi-head is
``{"heads": [<single>, ...]}`` and convolutional attention adds
``"patch_shape": [ph, pw]``.
"""

from __future__ import annotations

import json
from pathlib import Path

from .adapters import ConvTokenEmbedParams, VitParams
from .attention import ConvHeadWeights, MultiHeadWeights, SingleHeadWeights
from .feedforward import FfnLayerParams
from .grid import tensor_from_dict as _t
from .grid import tensor_to_dict as _d
from .projection import NormTarget
from .splitting import BlockParams, ModelParams, SplitTrace

__all__ = [
    "model_to_dict",
    "model_from_dict",
    "vit_to_dict",
    "vit_from_dict",
    "trace_to_list",
    "dataset_to_list",
    "dataset_from_list",
    "load_json",
    "dump_json",
]


def _attn_to_dict(attn) -> dict:
    if isinstance(attn, MultiHeadWeights):
        return {"heads": [_attn_to_dict(h) for h in attn.heads]}
    out = {"w_q": _d(attn.w_q), "w_k": _d(attn.w_k), "w_v": _d(attn.w_v)}
    if isinstance(attn, ConvHeadWeights):
        out["patch_shape"] = list(attn.patch_shape)
    return out


def _attn_from_dict(obj: dict, mode: str):
    if mode == "multihead":
        return MultiHeadWeights([_attn_from_dict(h, "vanilla") for h in obj["heads"]])
    w = (_t(obj["w_q"]), _t(obj["w_k"]), _t(obj["w_v"]))
    if mode == "cvt":
        return ConvHeadWeights(*w, patch_shape=tuple(obj["patch_shape"]))
    return SingleHeadWeights(*w)


def _norm_to_dict(t: NormTarget) -> dict:
    return {"sigma1": t.sigma1, "sigma2": t.sigma2, "epsilon": t.epsilon}


def _norm_from_dict(obj: dict) -> NormTarget:
    return NormTarget(obj.get("sigma1", 0.0), obj.get("sigma2", 1.0), obj.get("epsilon", 1e-12))


def model_to_dict(m: ModelParams) -> dict:
    blocks = []
    for blk in m.blocks:
        ce = None
        if blk.conv_embed is not None:
            ce = {
                "kernel": _d(blk.conv_embed.kernel),
                "bias": _d(blk.conv_embed.bias),
                "patch_shape": list(blk.conv_embed.patch_shape),
            }
        blocks.append(
            {
                "attn": _attn_to_dict(blk.attn),
                "norm1": _norm_to_dict(blk.norm1),
                "norm2": _norm_to_dict(blk.norm2),
                "ffn": [{"w": _d(f.w), "b": _d(f.b)} for f in blk.ffn],
                "conv_embed": ce,
            }
        )
    return {"mode": m.mode, "n_x": m.n_x, "n_y": m.n_y, "J": m.J, "skip_mode": m.skip_mode, "blocks": blocks}


def model_from_dict(obj: dict) -> ModelParams:
    """Build a ``ModelParams`` from its JSON form, checking declared dims."""
    try:
        mode = obj.get("mode", "vanilla")
        blocks = []
        for b in obj["blocks"]:
            ce = b.get("conv_embed")
            if ce is not None:
                ce = ConvTokenEmbedParams(_t(ce["kernel"]), _t(ce["bias"]), tuple(ce["patch_shape"]))
            blocks.append(
                BlockParams(
                    attn=_attn_from_dict(b["attn"], mode),
                    norm1=_norm_from_dict(b.get("norm1", {})),
                    norm2=_norm_from_dict(b.get("norm2", {})),
                    ffn=[FfnLayerParams(_t(f["w"]), _t(f["b"])) for f in b["ffn"]],
                    conv_embed=ce,
                )
            )
    except KeyError as exc:
        raise ValueError(f"model file is missing field {exc}") from None
    m = ModelParams(blocks, mode=mode, skip_mode=obj.get("skip_mode", "average"))
    for key, actual in (("n_x", m.n_x), ("n_y", m.n_y), ("J", m.J)):
        if key in obj and int(obj[key]) != actual:
            raise ValueError(f"model declares {key}={obj[key]} but its blocks have {key}={actual}")
    return m


def vit_to_dict(p: VitParams) -> dict:
    return {"embed": _d(p.embed), "class_token": _d(p.class_token), "head": _d(p.head)}


def vit_from_dict(obj: dict) -> VitParams:
    return VitParams(_t(obj["embed"]), _t(obj["class_token"]), _t(obj["head"]))


def trace_to_list(trace: SplitTrace) -> list[dict]:
    """Trace as a JSON array.  ``block`` is 0 for the input state and the
    1-based time step that produced every other state."""
    out = []
    block = 0
    for label, state in trace:
        if label == "input":
            if out:
                raise ValueError("a combined trace has a single input state")
        elif block == 0 or out[-1]["label"] == "norm2":
            block += 1
        out.append({"index": len(out), "block": block, "label": label, "state": _d(state)})
    return out


def dataset_to_list(pairs) -> list[dict]:
    return [{"input": _d(x), "target": _d(y)} for x, y in pairs]


def dataset_from_list(obj) -> list[tuple]:
    if not isinstance(obj, list):
        raise ValueError("dataset file must hold a JSON list of {input, target} pairs")
    return [(_t(p["input"]), _t(p["target"])) for p in obj]


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def dump_json(obj, path=None) -> str:
    """Serialize deterministically; write to ``path`` when given."""
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
