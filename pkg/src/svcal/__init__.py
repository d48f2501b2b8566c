"""Speaker-verification score backend.

Cosine trial scoring with consistency-factor (CMF) calibration, adaptive
score normalization, quality-measure logistic-regression calibration,
fusion and EER/minDCF evaluation, plus a synthetic corpus and toy embedder
for end-to-end runs.
"""

from .asnorm import Cohort, CohortStats, asnorm_score, asnorm_table, build_cohort, cohort_stats, compute_stats_map
from .embedding import Embedding, EmbeddingStore, cosine, l2_normalize, magnitude, mean_vector
from .errors import BackendError
from .metrics import DcfParams, FusionSpec, eer, error_rates, fuse, min_dcf
from .qmf import LrConfig, QmfModel, SamplerSpec, apply_qmf, build_features, sample_trials, train_lr
from .scoring import ScoreTable, Trial, cmf_calibrated_score, raw_score, score_trials
from .segmentation import SegmentSet, cmf, consistency_vector, plan_segments, segment_score

__version__ = "0.1.0"
