"""Boundary noise for segmentation masks and signed-distance label correction.

The package simulates annotator-style boundary distortion of binary masks
(random expand/shrink walks plus sparse flips), quantifies the systematic
over/under-segmentation a model learns from such labels as a mean
signed-distance gap against a few clean validation images, and removes it,
either directly on a distance field or iteratively in logit space while
retraining. Empirical harnesses check the one-step most-likely-mask rule and
the validation-set size bound, and a small pipeline compares clean / noisy /
corrected training end to end.
"""

from .correct import (BiasEstimate, CorrectionParams, EmptyBandError,
                      IterationRecord, SpatialCorrectionResult,
                      ValidationBoundInputs, estimate_bias, lambda_bias,
                      logit_correct, naive_correct, required_validation_size,
                      spatial_correction, write_report)
from .formats import (FormatError, load_field, load_gtf, load_mask, load_pgm,
                      save_field, save_gtf, save_mask, save_pgm)
from .grid import (aggregate, as_field, as_mask, background_boundary, boundaries,
                   complement, dice, dice_per_class, dilate_one, erode_one,
                   foreground_boundary, neighborhood_structure, one_vs_rest,
                   threshold)
from .harness import (PipelineResult, SynthSpec, TrialReport, centered_disk,
                      interior_hole_flips, run_pipeline, sweep, synth_dataset,
                      synth_masks, verify_bayes_mask, verify_validation_bound,
                      write_trial_report)
from .model import (ExternalSegmenter, LogisticSegmenter, OracleErrorSpec,
                    PerturbedOracle, Segmenter, TrainConfig,
                    TrainingDivergedError, fit_logistic, loss_and_grad,
                    perturbed_oracle)
from .noise import (PRESETS, MarkovNoiseParams, NoisePreset,
                    bayes_mask_one_step, dilate_erode_noise, expected_label_mc,
                    generate, load_presets, markov_step, preset)
from .sdf import DegenerateMaskError, sdf_gap, signed_distance

__version__ = "0.1.0"
