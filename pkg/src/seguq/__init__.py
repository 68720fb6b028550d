"""seguq: uncertainty maps, segmentation/UQ metrics and downstream scoring
for probabilistic segmentation models.

The package is a plain numpy/scipy library; see the demos/ directory of the
repository for narrative walkthroughs of each capability and ``seguq
--help`` for the command-line interface.
"""

from .errors import (
    ConfigError,
    DegenerateError,
    DegenerateLabelsError,
    DimensionMismatchError,
    DomainError,
    EmptyGroundTruthError,
    EmptyMaskError,
    EmptyVentriclesError,
    MissingFeatureError,
    RaggedSamplesError,
    SegUQError,
    SynthSpecError,
)
from .grid import (
    LN2,
    BinaryMask,
    ComponentLabeling,
    ProbMap,
    UncertaintyMap,
    VoxelGrid,
    binarize,
    connected_components,
    distance_field,
)
from .vgf import read_vgf, write_vgf
from .stochastic import (
    DirichletField,
    LogitModel,
    SampleSet,
    assemble_3d_samples,
    binary_entropy,
    dirichlet_probs,
    draw_logits,
    mean_probs,
    mix_ensemble,
    predictive_entropy,
    read_logit_model,
    sample_logits,
    write_logit_model,
)
from .losses import (
    LossValue,
    combo_loss,
    elbo,
    evid_kl,
    evid_sdice,
    evid_xent,
    gaussian_kl,
    hs_mc_loss,
)
from .seg_metrics import (
    AggregateStats,
    aggregate,
    avd_percent,
    component_f1,
    dice,
    ged,
    iou,
    precision_recall,
    top_scores,
)
from .uq_metrics import (
    LesionCoverage,
    PatchGridStats,
    error_map,
    lesion_coverage,
    patch_metrics,
    sueo,
    tau_sweep,
    ueo,
)
from .ring_features import (
    FeatureTable,
    FeatureVector,
    NormalizationParams,
    RingPartition,
    extract_features,
    normalize_table,
    read_feature_csv,
    ring_partition,
    threshold_map,
    write_feature_csv,
)
from .classify import (
    ClassifierModel,
    EvalSummary,
    bootstrap_eval,
    eval_metrics,
    fit,
    predict_proba,
    predict_proba_table,
    qc_labels,
    rfe,
    run_split,
)
from .synth import SynthSpec, SynthSubject, generate, generate_cohort
from .reports import dump_json, evaluate_subject, run_pipeline

__version__ = "0.1.0"
