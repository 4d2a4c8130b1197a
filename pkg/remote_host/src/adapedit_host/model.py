"""Real-model session: wraps a pretrained latent-diffusion pipeline.

The wire protocol's token axis is whitespace words.  The host folds the
model's sub-token attention columns into word columns before shipping
maps, and expands injected word columns back onto sub-tokens before
substituting them into the attention call.  Special and padding tokens
never cross the wire.

The heavy dependencies (torch, diffusers) import lazily; everything
shape- and index-related lives in plain numpy functions below so it is
testable without any weights.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

from .frames import ERR_UNKNOWN_LAYER, InitRequest, StepRequest
from .sessions import OrderedSession, SessionError

FEATURE_SIDE = 32  # layers closest to this resolution ship visual features


def word_token_spans(
    words: Sequence[str], counts: Sequence[int], offset: int = 1
) -> List[Tuple[int, int]]:
    """Half-open token span per word given per-word sub-token counts.

    ``offset`` skips the leading special token of the padded sequence.
    """
    spans = []
    pos = offset
    for count in counts:
        spans.append((pos, pos + count))
        pos += count
    return spans


def fold_token_maps(maps: np.ndarray, spans: Sequence[Tuple[int, int]]) -> np.ndarray:
    """(heads, pixels, tokens) -> (heads, pixels, words) by span sums."""
    cols = [maps[:, :, s:e].sum(axis=2) for s, e in spans]
    return np.stack(cols, axis=2).astype(np.float32)


def expand_word_maps(
    word_maps: np.ndarray,
    token_maps: np.ndarray,
    spans: Sequence[Tuple[int, int]],
) -> np.ndarray:
    """Substitute word columns into a token-axis map.

    Each sub-token column of a word takes the word's injected value
    scaled by the sub-token's share of the originally computed word
    total, so multi-token words keep their internal profile.  Special
    and padding columns stay untouched.
    """
    out = token_maps.astype(np.float32).copy()
    for w, (start, end) in enumerate(spans):
        block = token_maps[:, :, start:end].astype(np.float64)
        totals = block.sum(axis=2, keepdims=True)
        width = end - start
        share = np.divide(
            block, totals, out=np.full_like(block, 1.0 / width), where=totals > 0
        )
        out[:, :, start:end] = (
            share * word_maps[:, :, w : w + 1].astype(np.float64)
        ).astype(np.float32)
    return out


def nearest_feature_layers(
    catalog: Dict[int, Tuple[int, int, int]], side: int = FEATURE_SIDE
) -> List[int]:
    """Layer ids whose resolution is closest to ``side``."""
    if not catalog:
        return []
    best = min(abs(h - side) for h, _, _ in catalog.values())
    return sorted(
        lid for lid, (h, _, _) in catalog.items() if abs(h - side) == best
    )


class DiffusionSession(OrderedSession):
    """One dual-prompt sampling session on a diffusers pipeline.

    Requires the ``model`` extra (torch, diffusers, transformers) and a
    local model path or hub id with weights available.
    """

    def __init__(self, request: InitRequest, model_id: str) -> None:
        super().__init__(request)
        try:
            import torch
            from diffusers import DDIMScheduler, StableDiffusionPipeline
        except ImportError as exc:
            raise SessionError(
                ERR_UNKNOWN_LAYER,
                f"model mode needs torch+diffusers installed: {exc}",
            ) from None

        self._torch = torch
        pipe = StableDiffusionPipeline.from_pretrained(
            model_id, safety_checker=None, requires_safety_checker=False
        )
        pipe.scheduler = DDIMScheduler.from_config(pipe.scheduler.config)
        pipe.scheduler.set_timesteps(request.steps)
        self._pipe = pipe

        self._spans: Dict[int, List[Tuple[int, int]]] = {}
        self._embeddings: Dict[int, "torch.Tensor"] = {}
        for branch, text in ((0, request.prompt), (1, request.edit)):
            self._embeddings[branch], self._spans[branch] = self._encode(text)
        self._null_embedding, _ = self._encode(request.null_prompt or "")

        generator = torch.Generator().manual_seed(request.seed)
        unet = pipe.unet
        shape = (
            1,
            unet.config.in_channels,
            unet.config.sample_size,
            unet.config.sample_size,
        )
        init = torch.randn(shape, generator=generator)
        self._latents = {0: init.clone(), 1: init.clone()}

        self._hooks = self._install_hooks(unet)
        self._catalog = self._probe_catalog()

    # -- text ------------------------------------------------------------

    def _encode(self, text: str):
        torch = self._torch
        tokenizer = self._pipe.tokenizer
        encoder = self._pipe.text_encoder
        ids = tokenizer(
            text,
            padding="max_length",
            max_length=tokenizer.model_max_length,
            truncation=True,
            return_tensors="pt",
        ).input_ids
        with torch.no_grad():
            emb = encoder(ids)[0]
        words = text.split()
        counts = [
            len(tokenizer(w, add_special_tokens=False).input_ids) for w in words
        ]
        return emb, word_token_spans(words, counts)

    # -- attention hooks ---------------------------------------------------

    def _install_hooks(self, unet):
        session = self

        class CaptureProcessor:
            def __init__(self, layer_id: int) -> None:
                self.layer_id = layer_id

            def __call__(self, attn, hidden_states, encoder_hidden_states=None,
                         attention_mask=None, **kwargs):
                torch = session._torch
                residual = hidden_states
                is_cross = encoder_hidden_states is not None
                context = encoder_hidden_states if is_cross else hidden_states
                query = attn.head_to_batch_dim(attn.to_q(hidden_states))
                key = attn.head_to_batch_dim(attn.to_k(context))
                value = attn.head_to_batch_dim(attn.to_v(context))
                probs = attn.get_attention_scores(query, key, attention_mask)
                if is_cross and session._capture_branch is not None:
                    probs = session._on_cross_attention(
                        self.layer_id, query, probs
                    )
                out = torch.bmm(probs, value)
                out = attn.batch_to_head_dim(out)
                out = attn.to_out[0](out)
                out = attn.to_out[1](out)
                if attn.residual_connection:
                    out = out + residual
                return out

        processors = {}
        layer_id = 0
        for name in sorted(unet.attn_processors):
            if name.endswith("attn2.processor"):
                processors[name] = CaptureProcessor(layer_id)
                layer_id += 1
            else:
                processors[name] = unet.attn_processors[name]
        unet.set_attn_processor(processors)
        self._capture_branch = None
        self._step_maps: Dict[int, np.ndarray] = {}
        self._step_features: Dict[int, np.ndarray] = {}
        self._step_injected: Dict[int, np.ndarray] = {}
        return processors

    def _on_cross_attention(self, layer_id, query, probs):
        torch = self._torch
        heads = probs.shape[0]
        pixels = probs.shape[1]
        spans = self._spans[self._capture_branch]
        maps_np = probs.detach().cpu().numpy()
        if layer_id in self._step_injected:
            injected_tok = expand_word_maps(
                self._step_injected[layer_id], maps_np, spans
            )
            probs = torch.from_numpy(injected_tok).to(probs.dtype)
            maps_np = injected_tok
        self._step_maps[layer_id] = fold_token_maps(maps_np, spans)
        self._step_features[layer_id] = (
            query.detach().cpu().numpy().mean(axis=0).astype(np.float32)
        )
        return probs

    # -- sampling ----------------------------------------------------------

    def _probe_catalog(self) -> Dict[int, Tuple[int, int, int]]:
        torch = self._torch
        t = self._pipe.scheduler.timesteps[0]
        self._capture_branch = 0
        self._step_maps, self._step_features = {}, {}
        self._step_injected = {}
        with torch.no_grad():
            self._pipe.unet(self._latents[0], t, self._embeddings[0])
        catalog = {}
        for lid, m in self._step_maps.items():
            side = int(round(m.shape[1] ** 0.5))
            catalog[lid] = (side, side, int(m.shape[0]))
        self._capture_branch = None
        return catalog

    def catalog(self) -> Dict[int, Tuple[int, int, int]]:
        return dict(self._catalog)

    def step(self, req: StepRequest):
        self.check_step(req)
        unknown = set(req.injected) - set(self._catalog)
        if unknown:
            raise SessionError(
                ERR_UNKNOWN_LAYER, f"unknown layer ids {sorted(unknown)}"
            )
        torch = self._torch
        scheduler = self._pipe.scheduler
        timestep = scheduler.timesteps[self.request.steps - req.t]
        latent = self._latents[req.branch]

        with torch.no_grad():
            self._capture_branch = None
            eps_uncond = self._pipe.unet(
                latent, timestep, self._null_embedding
            ).sample
            self._capture_branch = req.branch
            self._step_maps, self._step_features = {}, {}
            self._step_injected = dict(req.injected)
            eps_cond = self._pipe.unet(
                latent, timestep, self._embeddings[req.branch]
            ).sample
            self._capture_branch = None

        w = self.request.guidance
        guided = w * eps_cond + (1.0 - w) * eps_uncond
        self._latents[req.branch] = scheduler.step(
            guided, timestep, latent
        ).prev_sample
        self.advance(req.branch)

        feature_layers = nearest_feature_layers(self._catalog)
        features = {
            lid: self._step_features[lid]
            for lid in feature_layers
            if lid in self._step_features
        }
        eps_c = eps_cond.cpu().numpy()[0].astype(np.float32)
        eps_u = eps_uncond.cpu().numpy()[0].astype(np.float32)
        return eps_c, eps_u, dict(self._step_maps), features

    def decode(self, branch: int) -> bytes:
        import io

        torch = self._torch
        if not self.finished(branch):
            raise SessionError(
                ERR_UNKNOWN_LAYER, f"branch {branch} has steps remaining"
            )
        with torch.no_grad():
            image = self._pipe.vae.decode(
                self._latents[branch] / self._pipe.vae.config.scaling_factor
            ).sample
        array = (
            ((image / 2 + 0.5).clamp(0, 1) * 255)
            .cpu()
            .permute(0, 2, 3, 1)
            .numpy()[0]
            .astype(np.uint8)
        )
        from PIL import Image

        buf = io.BytesIO()
        Image.fromarray(array).save(buf, format="PNG")
        return buf.getvalue()
