"""End-to-end annotation: phrase grounding, caption-driven detection, NMS."""

import math
from dataclasses import dataclass

import numpy as np

from .core import Detection
from .expansion import Heatmap, build_object_set, object_heatmap
from .gradcam import (InitialSeed, compute_initial_seed, gradcam_scores,
                      select_potential_seeds)
from .metrics import iou
from .segment import compute_threshold, extract_box, threshold_heatmap

# Minimal function-word list for the optional (off by default) filter.
STOP_WORDS = frozenset(
    "a an the of in on at with and or to for from by is are was were".split()
)


@dataclass(frozen=True)
class PhraseQuery:
    token_indices: tuple
    phrase_text: str

    def __post_init__(self):
        idx = tuple(self.token_indices)
        object.__setattr__(self, "token_indices", idx)
        if not idx or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("token_indices must be non-empty and strictly increasing")


@dataclass(frozen=True)
class Lexicon:
    """category_id -> aliases; aliases are lowercase words or multi-word phrases."""

    categories: tuple  # of (category_id, canonical_name, aliases)

    def __post_init__(self):
        seen_ids = set()
        seen_aliases = {}
        for cid, _, aliases in self.categories:
            if cid in seen_ids:
                raise ValueError(f"duplicate category id {cid}")
            seen_ids.add(cid)
            for alias in aliases:
                if alias != alias.lower():
                    raise ValueError(f"alias {alias!r} is not lowercase")
                if seen_aliases.setdefault(alias, cid) != cid:
                    raise ValueError(f"alias {alias!r} maps to two categories")

    def alias_table(self):
        """Map word-tuple -> category_id, longest aliases first."""
        table = {}
        for cid, _, aliases in self.categories:
            for alias in aliases:
                table[tuple(alias.split())] = cid
        return table

    def names(self):
        return {cid: name for cid, name, _ in self.categories}


@dataclass(frozen=True)
class CategoryMatch:
    category_id: int
    token_indices: tuple
    matched_alias: str


def expand_token(bundle, token_index, cfg):
    """Run seed selection and expansion for one caption token."""
    g = bundle.geometry
    cam = gradcam_scores(bundle.tokens[token_index], token_index)
    m = min(cfg.M, g.n_patches)
    seeds = select_potential_seeds(cam, m)
    initial = compute_initial_seed(seeds, min(cfg.N, m), g)
    obj = build_object_set(initial, seeds, bundle.vit_keys)
    return object_heatmap(obj, bundle.vit_keys), initial, cam


def ground_phrase(bundle, query, cfg):
    """Ground a phrase to one pixel box by summing per-word expanded heatmaps."""
    n_tokens = len(bundle.tokens)
    if any(i >= n_tokens for i in query.token_indices):
        raise ValueError("phrase token index outside bundle")
    indices = list(query.token_indices)
    if cfg.stop_word_filter:
        kept = [i for i in indices
                if bundle.tokens[i].text.lower() not in STOP_WORDS]
        if kept:
            indices = kept
    total = np.zeros(bundle.geometry.n_patches)
    for i in indices:
        heat, _, _ = expand_token(bundle, i, cfg)
        total += heat.values
    phrase_heat = Heatmap(values=total, kind="phrase")
    peak = int(np.argmax(total))
    seed = InitialSeed(patch_index=peak, rc=divmod(peak, bundle.geometry.grid_w))
    result = compute_threshold(phrase_heat, cfg)
    mask = threshold_heatmap(phrase_heat, result.t)
    box = extract_box(mask, seed, bundle.geometry)
    return box, phrase_heat


def _normal_forms(word):
    """Lowercase plus plural-stripped variants of a caption word."""
    w = word.lower()
    forms = [w]
    if w.endswith("es"):
        forms.append(w[:-2])
    if w.endswith("s"):
        forms.append(w[:-1])
    return forms


def match_categories(caption, tokens, lexicon):
    """Find lexicon categories mentioned in the caption.

    Matching is word-boundary exact on lowercased token texts with trailing
    "s"/"es" stripped; multi-word aliases must match consecutive tokens.
    The first occurrence per category wins.
    """
    del caption  # tokens carry the matchable text
    table = lexicon.alias_table()
    max_len = max((len(k) for k in table), default=0)
    matches = []
    claimed = set()
    for start in range(len(tokens)):
        for length in range(min(max_len, len(tokens) - start), 0, -1):
            span = range(start, start + length)
            candidates = [_normal_forms(tokens[i].text) for i in span]
            hit = None
            for alias_words, cid in table.items():
                if len(alias_words) != length or cid in claimed:
                    continue
                if all(w in forms for w, forms in zip(alias_words, candidates)):
                    hit = (cid, " ".join(alias_words))
                    break
            if hit is not None:
                cid, alias = hit
                claimed.add(cid)
                matches.append(CategoryMatch(
                    category_id=cid, token_indices=tuple(span), matched_alias=alias))
                break
    return matches


def detect_categories(bundle, lexicon, cfg, image_id=""):
    """One detection per lexicon category mentioned in the bundle's caption.

    Confidence is the sigmoid of the span's peak importance score; the
    upstream pipeline has no native detector confidence.
    """
    detections = []
    for match in match_categories(bundle.caption, bundle.tokens, lexicon):
        query = PhraseQuery(token_indices=match.token_indices,
                            phrase_text=match.matched_alias)
        box, _ = ground_phrase(bundle, query, cfg)
        peak = max(
            float(np.max(gradcam_scores(bundle.tokens[i], i).scores))
            for i in match.token_indices
        )
        conf = 1.0 / (1.0 + math.exp(-peak))
        detections.append(Detection(box=box, category_id=match.category_id,
                                    confidence=conf, image_id=image_id))
    return detections


def nms_pseudo_labels(detections, conf_thresh, iou_thresh):
    """Confidence gate followed by per-(image, category) greedy NMS."""
    kept = []
    groups = {}
    for det in detections:
        if det.confidence < conf_thresh:
            continue
        groups.setdefault((det.image_id, det.category_id), []).append(det)
    for key in sorted(groups):
        group = sorted(groups[key], key=lambda d: (-d.confidence, d.box.x_min))
        survivors = []
        for det in group:
            if all(iou(det.box, s.box) <= iou_thresh for s in survivors):
                survivors.append(det)
        kept.extend(survivors)
    return kept
