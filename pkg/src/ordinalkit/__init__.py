"""Explicit ordinal classification losses, property checks and a desk-scale benchmark."""
from ._kernels import backend, set_backend
from .entailment import (AblationConfig, MatchScorer, VerbaliserSet, ablate_verbalisers, augment,
                         constrained_label_argmax, infer_entailment, run_entailment,
                         train_binary_scorer)
from .errors import (ConfigError, DegenerateBatchError, DegenerateTrainingError, DomainError,
                     IngestionError, InvalidInputError, InvalidLabelError, OrdinalError,
                     RunNotFoundError, TrainingDivergedError)
from .losses import (KINDS, BinomialHead, LossEval, LossSpec, binomial_pmf, ce, emd, evaluate,
                     grad_check, loss_value, mll, oll, soft_labels, soft_loss, wkl)
from .metrics import MetricReport, mae, mean_std_over_seeds, metric_report, mse, ob_k, weighted_f1
from .model import (BinomialModel, LinearSoftmaxModel, OrdinalDataset, TrainConfig, featurize_text,
                    generate_synthetic, predict, predict_proba, subsample, train)
from .properties import (is_unimodal, ordinality_profile, property_report, um_fraction, um_stats,
                         verify_convexity, verify_psr)
from .simplex import LabelSpace, argmax_label, cdf, one_hot, perturbed_one_hot, softmax

__version__ = "0.1.0"
