"""Compressive CSI feedback toolkit: spherical-normalized encoding with a
trainable measurement matrix, a deep-unfolded ISTA decoder, plug-in
CSI-to-CSI translation for new scenarios, and model-driven data
augmentation, runnable at desk scale on synthetic multipath channels."""

from .channel import (ArrayDims, ScenarioConfig, Dataset, DEFAULT_DIMS,
                      generate_channel, channel_from_paths, to_angular_delay,
                      from_angular_delay, generate_dataset, save_dataset,
                      load_dataset)
from .codec import (MeasurementMatrix, Codeword, spherical_split, spherical_merge,
                    vectorize, devectorize, encode, payload_length)
from .decoder import (UnfoldedDecoder, IterationBlock, TrainConfig, soft_threshold,
                      gradient_step, decode, loss_components, train_anchor,
                      save_checkpoint, load_checkpoint)
from .transnet import (ShiftSteps, circular_shift, search_shift_steps,
                       cross_correlation_shift, TranslationNet, RetranslationNet,
                       train_transnet, feedback_new_scenario,
                       evaluate_new_scenario, save_plugin, load_plugin)
from .augment import (AugmentConfig, split_mag_phase, magnitude_shift,
                      phase_randomize, augment_dataset)
from .metrics import nmse, nmse_db
from .experiment import ExperimentConfig, run_experiment, report

__version__ = "0.1.0"
