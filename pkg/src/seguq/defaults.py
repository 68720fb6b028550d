"""Canonical default configuration.

Single source of truth for every default the toolkit exposes; the CLI and
pipeline echo these values into reports so a run can be reproduced
bit-exactly from its own output.
"""

# Number of stochastic inferences per subject for evaluation.
SAMPLES_PER_EVAL = 10

# Probability threshold turning a (mean) probability map into a segmentation.
BINARIZE_THRESHOLD = 0.5

# Patchwise uncertainty metrics: patch edge length and accuracy threshold.
PATCH_SIZE = 4
PATCH_ACC_THRESHOLD = 0.8

# Ventricle-distance ring edges in millimetres.
RING_EDGES_MM = (5.0, 10.0, 15.0)

# Feature filtering threshold and RFE feature counts.
FEATURE_THRESHOLD = 0.2
FAZEKAS_K = 18
QC_K = 9

# Sweep grids for the two classification tasks.
SWEEP_THRESHOLDS = (0.1, 0.2, 0.3)
FAZEKAS_K_RANGE = (10, 26)
QC_K_RANGE = (6, 12)

# Quality-control labelling: Dice at or below this is 'poor'.
QC_DICE_CUTOFF = 0.57

# Classifier regularisation strength and bootstrap protocol.
CLASSIFIER_REG = 10.0
BOOTSTRAP_SPLITS = 1000
TRAIN_FRACTION = 0.75

# Loss weightings.
EVID_KL_WEIGHT = 0.05
ELBO_BETA = 1.0
COMBO_WEIGHTS = (0.5, 0.5)

# Connected-component neighbourhood for 3D instances.
CONNECTIVITY = 26


def config_echo() -> dict:
    """All defaults as a flat dict, embedded verbatim in every report."""
    return {
        "samples_per_eval": SAMPLES_PER_EVAL,
        "binarize_threshold": BINARIZE_THRESHOLD,
        "patch_size": PATCH_SIZE,
        "patch_acc_threshold": PATCH_ACC_THRESHOLD,
        "ring_edges_mm": list(RING_EDGES_MM),
        "feature_threshold": FEATURE_THRESHOLD,
        "fazekas_k": FAZEKAS_K,
        "qc_k": QC_K,
        "sweep_thresholds": list(SWEEP_THRESHOLDS),
        "fazekas_k_range": list(FAZEKAS_K_RANGE),
        "qc_k_range": list(QC_K_RANGE),
        "qc_dice_cutoff": QC_DICE_CUTOFF,
        "classifier_reg": CLASSIFIER_REG,
        "bootstrap_splits": BOOTSTRAP_SPLITS,
        "train_fraction": TRAIN_FRACTION,
        "evid_kl_weight": EVID_KL_WEIGHT,
        "elbo_beta": ELBO_BETA,
        "combo_weights": list(COMBO_WEIGHTS),
        "connectivity": CONNECTIVITY,
    }
