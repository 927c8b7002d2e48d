"""Sequence classifiers (FFM / GRU / MLP) and their JSON checkpoint format.

Layout of a classifier: one-hot observation -> linear embed -> memory core ->
linear head -> logits.  The MLP has no separate embed/head; it maps
observations to logits directly.

Checkpoint document::

    {"format": "ffm-checkpoint", "version": 1, "kind": "ffm",
     "config": {...model config...}, "vocab": 4,
     "dims": {"d": 8, "m": 8, "c": 4}, "variant": {...}, "t_e": 1024, "beta": 0.01,
     "arrays": {"core.l1.W": {"shape": [8, 8], "data": "<base64 <f8, C order>"}, ...}}
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import baselines, cell
from . import numerics as nx
from .cell import Affine, ConfigError
from .config import ModelConfig
from .numerics import Tensor

FORMAT = "ffm-checkpoint"
VERSION = 1


@dataclass
class SequenceModel:
    kind: str
    config: ModelConfig
    vocab: int
    core: object
    embed: Affine | None = None
    head: Affine | None = None

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        if self.embed is not None:
            out["embed.W"], out["embed.b"] = self.embed.W, self.embed.b
        for k, v in self.core.named_parameters().items():
            out[f"core.{k}"] = v
        if self.head is not None:
            out["head.W"], out["head.b"] = self.head.W, self.head.b
        return out

    def parameters(self) -> list[Tensor]:
        return [p for p in self.named_parameters().values() if p.requires_grad]

    def logits(self, X, chunk: int | None = None) -> Tensor:
        """``X`` is time-major ``(T, B, vocab)``; returns ``(T, B, vocab)`` logits."""
        X = nx.as_tensor(X)
        if X.shape[-1] != self.vocab:
            raise nx.DimensionError(f"model expects {self.vocab} input features, got {X.shape[-1]}")
        if self.kind == "mlp":
            return baselines.mlp_forward(self.core, X)
        h = self.embed(X)
        if self.kind == "ffm":
            y, _ = cell.forward(self.core, h, chunk=chunk)
        else:
            y, _ = baselines.gru_forward(self.core, h)
        return self.head(y)

    def interpretability(self) -> dict | None:
        if self.kind != "ffm":
            return None
        return {
            "beta": self.core.beta,
            "t_alpha": cell.trace_durability(self.core)[:, 0].tolist(),
            "t_omega": cell.context_period(self.core)[0].tolist(),
        }


def build(cfg: ModelConfig, vocab: int, seed: int = 0) -> SequenceModel:
    rng = np.random.default_rng(seed + 7919)
    if cfg.kind == "mlp":
        core = baselines.mlp_init(vocab, cfg.hidden_size, vocab, seed)
        return SequenceModel("mlp", cfg, vocab, core)
    if cfg.kind == "gru":
        core = baselines.gru_init(cfg.d, cfg.hidden_size, seed)
        return SequenceModel("gru", cfg, vocab, core, Affine.uniform(vocab, cfg.d, rng), Affine.uniform(cfg.hidden_size, vocab, rng))
    variant = cell.VariantFlags.named(cfg.variant)
    if cfg.init == "informed":
        core = cell.informed_init(
            cfg.d, cfg.m, cfg.c, tuple(cfg.t_alpha_range), tuple(cfg.t_omega_range),
            seed=seed, beta=cfg.beta, variant=variant, max_chunk=cfg.max_chunk,
        )
    else:
        core = cell.init(cfg.d, cfg.m, cfg.c, cfg.t_e, cfg.beta, seed, variant, cfg.max_chunk)
    return SequenceModel("ffm", cfg, vocab, core, Affine.uniform(vocab, cfg.d, rng), Affine.uniform(cfg.d, vocab, rng))


# ---------------------------------------------------------------------------
# checkpoints


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(doc: dict) -> np.ndarray:
    raw = base64.b64decode(doc["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(doc["shape"]).astype(np.float64)


def to_document(model: SequenceModel) -> dict:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "kind": model.kind,
        "config": model.config.model_dump(mode="json"),
        "vocab": model.vocab,
        "arrays": {k: _encode(v.data) for k, v in model.named_parameters().items()},
    }
    if model.kind == "ffm":
        core = model.core
        doc["dims"] = {"d": core.d, "m": core.m, "c": core.c}
        doc["variant"] = core.variant.to_dict()
        doc["t_e"] = core.t_e
        doc["beta"] = core.beta
    else:
        doc["dims"] = {"d": model.config.d, "hidden": model.config.hidden_size}
    return doc


def from_document(doc: dict) -> SequenceModel:
    if doc.get("format") != FORMAT or doc.get("version") != VERSION:
        raise ConfigError(f"not a {FORMAT} v{VERSION} document")
    cfg = ModelConfig.model_validate(doc["config"])
    model = build(cfg, int(doc["vocab"]), seed=0)
    if model.kind == "ffm":
        model.core.t_e = int(doc["t_e"])
        model.core.beta = float(doc["beta"])
    params = model.named_parameters()
    arrays = doc["arrays"]
    if set(arrays) != set(params):
        raise ConfigError(f"checkpoint arrays {sorted(arrays)} do not match model {sorted(params)}")
    for name, p in params.items():
        a = _decode(arrays[name])
        if a.shape != p.shape:
            raise ConfigError(f"{name}: checkpoint shape {a.shape} != model shape {p.shape}")
        p.data = a.copy()
    return model


def save(model: SequenceModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_document(model), indent=1))


def load(path: str | Path) -> SequenceModel:
    return from_document(json.loads(Path(path).read_text()))
