"""Caption-driven weak bounding-box annotation engine."""

from .core import (BoxPx, Detection, EmConfig, FeatureBundle, GridGeometry,
                   PipelineConfig, Provenance, TokenRecord,
                   patch_index_to_rc, patch_to_pixel_box, rc_to_patch_index)
from .expansion import Heatmap, ObjectSet, build_object_set, object_heatmap, patch_heatmap
from .gradcam import (GradCamMap, InitialSeed, SeedSet, compute_attention_weights,
                      compute_initial_seed, gradcam_scores, select_potential_seeds)
from .metrics import (GroundTruthSet, PrCurve, average_precision, iou, map_range,
                      mean_ap, recall_at_1, union_box)
from .pipeline import (CategoryMatch, Lexicon, PhraseQuery, detect_categories,
                       expand_token, ground_phrase, match_categories,
                       nms_pseudo_labels)
from .segment import (GmmParams, Mask, ThresholdResult, compute_threshold,
                      extract_box, fallback_threshold, fit_gmm_1d,
                      separation_test, solve_crossover, threshold_heatmap)
from .synth import SynthSpec, generate_synthetic_bundle, random_spec
from .bundle_io import bundle_from_bytes, bundle_to_bytes, read_bundle, write_bundle

__version__ = "0.1.0"
