"""Exact filtering for hidden Markov models with a dual death-process structure.

Supported signals: Cox-Ingersoll-Ross with Poisson counts, Ornstein-Uhlenbeck
with Gaussian noise and neutral K-type Wright-Fisher with multinomial samples.
"""
from .dual_death import DeathKernelSpec, TransitionTable, transition_prob, transition_table
from .errors import DegenerateRatesError, DualFilterError, InputError, NumericalError
from .filtering import FilterTrace, MixtureState, StepRecord, moments, predict, prune, run_filter, update
from .filtering import init as init_state
from .filtering import step as filter_step
from .models import CIRModel, Model, Observation, OUModel, WFModel, make_model
from .multiindex import IndexSet, lower_set, translate

__all__ = [
    "CIRModel", "DeathKernelSpec", "DegenerateRatesError", "DualFilterError", "FilterTrace",
    "IndexSet", "InputError", "MixtureState", "Model", "NumericalError", "OUModel", "Observation",
    "StepRecord", "TransitionTable", "WFModel", "filter_step", "init_state", "lower_set",
    "make_model", "moments", "predict", "prune", "run_filter", "transition_prob",
    "transition_table", "translate", "update",
]
