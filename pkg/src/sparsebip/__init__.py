"""Ensemble interaction primitives with sparsity-aware channel reduction.

Learn a latent model of multichannel human-robot interactions from a set of
demonstrations, then track a new interaction online with an ensemble filter
over ``[phase, phase velocity, basis weights]``.  Contact-force channels can be
reduced three ways: max-over-group aggregation, mutual-information input
selection and orthogonal-least-squares basis selection.
"""
from .basis import (DecompositionResult, FitError, OLSResult, basis_row, decode, decode_series,
                    fit, ols_select, uniform_basis)
from .dataset import DataError, Dataset, load_dataset, save_dataset
from .evaluation import (EvalReport, MWUResult, cross_validate, evaluate, mae,
                         mann_whitney_u)
from .filtering import (FilterError, InferenceOutput, ObservationFrame, ProcessNoise,
                        filter_steps, infer, init_ensemble, predict, run_session, update)
from .model import (BasisSpace, ChannelSpec, EnsembleState, Interaction, InvalidInteraction,
                    LatentModel, LayoutError, SensorLayout, phase_of, validate_interaction)
from .pipeline import (VARIANTS, ModelFormatError, PipelineConfig, TrainedModel, VariantConfig,
                       train)
from .sparsity import GroupMap, MutualInfo, SelectionReport, group_reduce, mi_binned, select_inputs
from .synth import (EDGE_CASES, ScenarioConfig, generate_dataset, generate_demo,
                    generate_edge_case)

__version__ = "0.1.0"

__all__ = [
    "BasisSpace", "ChannelSpec", "DataError", "Dataset", "DecompositionResult", "EDGE_CASES",
    "EnsembleState", "EvalReport", "FilterError", "FitError", "GroupMap", "InferenceOutput",
    "Interaction", "InvalidInteraction", "LatentModel", "LayoutError", "ModelFormatError",
    "MutualInfo", "MWUResult", "OLSResult", "ObservationFrame", "PipelineConfig", "ProcessNoise",
    "ScenarioConfig", "SelectionReport", "SensorLayout", "TrainedModel", "VARIANTS",
    "VariantConfig", "basis_row", "cross_validate", "decode", "decode_series", "evaluate",
    "filter_steps", "fit", "generate_dataset", "generate_demo", "generate_edge_case",
    "group_reduce", "infer", "init_ensemble", "load_dataset", "mae", "mann_whitney_u",
    "mi_binned", "ols_select", "phase_of", "predict", "run_session", "save_dataset",
    "select_inputs", "train", "uniform_basis", "update", "validate_interaction",
]
