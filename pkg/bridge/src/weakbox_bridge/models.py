"""Compact ViT and vision-language models with inspectable attention.

These mirror the structure the exporter needs from full-scale checkpoints:
a ViT whose per-patch key projections can be read at a chosen self-attention
layer, and a VL model with a cross-modality encoder whose post-softmax
cross-attention can be read (and differentiated) at a chosen layer. Weights
are loaded from torch checkpoints; `create_toy_checkpoints` writes
random-initialized ones for smoke testing.
"""

import hashlib

import torch
import torch.nn as nn
import torch.nn.functional as F

VOCAB_SIZE = 8192


def word_to_vocab_id(word):
    """Stable (process-independent) hash of a word into the vocab."""
    digest = hashlib.sha1(word.lower().encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little") % VOCAB_SIZE


class SelfAttention(nn.Module):
    def __init__(self, dim, n_heads):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.proj = nn.Linear(dim, dim)
        self.last_keys = None  # set during forward; heads concatenated

    def forward(self, x):
        n, d = x.shape
        q = self.q(x)
        k = self.k(x)
        v = self.v(x)
        self.last_keys = k
        q = q.view(n, self.n_heads, self.head_dim).transpose(0, 1)
        k = k.view(n, self.n_heads, self.head_dim).transpose(0, 1)
        v = v.view(n, self.n_heads, self.head_dim).transpose(0, 1)
        att = torch.softmax(q @ k.transpose(1, 2) / self.head_dim ** 0.5, dim=-1)
        out = (att @ v).transpose(0, 1).reshape(n, d)
        return self.proj(out)


class CrossAttention(nn.Module):
    """Text queries attending over image tokens, attention kept inspectable."""

    def __init__(self, dim, n_heads):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.proj = nn.Linear(dim, dim)
        self.last_attention = None  # (heads, n_text, n_image), post-softmax

    def forward(self, text, image):
        nt, d = text.shape
        ni = image.shape[0]
        q = self.q(text).view(nt, self.n_heads, self.head_dim).transpose(0, 1)
        k = self.k(image).view(ni, self.n_heads, self.head_dim).transpose(0, 1)
        v = self.v(image).view(ni, self.n_heads, self.head_dim).transpose(0, 1)
        att = torch.softmax(q @ k.transpose(1, 2) / self.head_dim ** 0.5, dim=-1)
        att.retain_grad()
        self.last_attention = att
        out = (att @ v).transpose(0, 1).reshape(nt, d)
        return self.proj(out)


class Block(nn.Module):
    def __init__(self, dim, n_heads):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SelfAttention(dim, n_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim * 2), nn.GELU(),
                                 nn.Linear(dim * 2, dim))

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.mlp(self.norm2(x))


class CrossBlock(nn.Module):
    def __init__(self, dim, n_heads):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.self_attn = SelfAttention(dim, n_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.cross_attn = CrossAttention(dim, n_heads)
        self.norm3 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, dim * 2), nn.GELU(),
                                 nn.Linear(dim * 2, dim))

    def forward(self, text, image):
        text = text + self.self_attn(self.norm1(text))
        text = text + self.cross_attn(self.norm2(text), image)
        return text + self.mlp(self.norm3(text))


class MiniViT(nn.Module):
    """Patch-embedding transformer; token 0 is [CLS]."""

    def __init__(self, dim=64, n_heads=4, depth=12, patch_size=16, max_patches=1024):
        super().__init__()
        self.patch_size = patch_size
        self.dim = dim
        self.embed = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)
        self.cls = nn.Parameter(torch.zeros(1, dim))
        self.pos = nn.Parameter(torch.zeros(max_patches + 1, dim))
        self.blocks = nn.ModuleList(Block(dim, n_heads) for _ in range(depth))
        self.norm = nn.LayerNorm(dim)

    def forward(self, image):
        # image: (3, H, W), H and W multiples of patch_size
        patches = self.embed(image.unsqueeze(0))[0]          # (dim, gh, gw)
        tokens = patches.flatten(1).transpose(0, 1)          # (N_P, dim)
        x = torch.cat([self.cls, tokens], dim=0)
        x = x + self.pos[: x.shape[0]]
        for block in self.blocks:
            x = block(x)
        return self.norm(x)

    def patch_keys(self, layer):
        """Key projections of the patch tokens at a given layer (CLS dropped)."""
        keys = self.blocks[layer].attn.last_keys
        if keys is None:
            raise RuntimeError("run a forward pass first")
        return keys[1:]


class MiniVL(nn.Module):
    """Text encoder + cross-modality encoder + ITM head over a shared ViT."""

    def __init__(self, dim=64, n_heads=4, text_depth=4, cross_depth=12,
                 patch_size=16, max_tokens=128):
        super().__init__()
        self.image_encoder = MiniViT(dim=dim, n_heads=n_heads, depth=12,
                                     patch_size=patch_size)
        self.word_embed = nn.Embedding(VOCAB_SIZE, dim)
        self.text_pos = nn.Parameter(torch.zeros(max_tokens, dim))
        self.text_blocks = nn.ModuleList(Block(dim, n_heads)
                                         for _ in range(text_depth))
        self.cross_blocks = nn.ModuleList(CrossBlock(dim, n_heads)
                                          for _ in range(cross_depth))
        self.itm_head = nn.Linear(dim, 1)

    def forward(self, image, vocab_ids):
        image_tokens = self.image_encoder(image)             # (N_P+1, dim)
        text = self.word_embed(vocab_ids)
        text = text + self.text_pos[: text.shape[0]]
        for block in self.text_blocks:
            text = block(text)
        for block in self.cross_blocks:
            text = block(text, image_tokens)
        itm_logit = self.itm_head(text.mean(dim=0)).squeeze(-1)
        return itm_logit

    def itm_loss(self, itm_logit, match=True):
        target = torch.ones(()) if match else torch.zeros(())
        return F.binary_cross_entropy_with_logits(itm_logit, target)

    def cross_attention(self, layer):
        """Post-softmax attention (heads, N_T, N_P+1) at a cross layer."""
        att = self.cross_blocks[layer].cross_attn.last_attention
        if att is None:
            raise RuntimeError("run a forward pass first")
        return att


def create_toy_checkpoints(vl_path, vit_path, seed=0, dim=64, patch_size=16):
    """Write random-initialized checkpoints for smoke testing the exporter."""
    torch.manual_seed(seed)
    vl = MiniVL(dim=dim, patch_size=patch_size)
    for p in vl.parameters():
        if p.dim() >= 2:
            nn.init.normal_(p, std=0.2)
    torch.save(vl.state_dict(), vl_path)
    torch.manual_seed(seed + 1)
    vit = MiniViT(dim=dim, patch_size=patch_size)
    for p in vit.parameters():
        if p.dim() >= 2:
            nn.init.normal_(p, std=0.2)
    torch.save(vit.state_dict(), vit_path)


def load_models(vl_path, vit_path, dim=64, patch_size=16):
    vl = MiniVL(dim=dim, patch_size=patch_size)
    vl.load_state_dict(torch.load(vl_path, weights_only=True))
    vl.eval()
    vit = MiniViT(dim=dim, patch_size=patch_size)
    vit.load_state_dict(torch.load(vit_path, weights_only=True))
    vit.eval()
    return vl, vit
