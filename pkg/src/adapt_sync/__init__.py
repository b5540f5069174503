"""Adaptive observer-based synchronization of regressor-form nonlinear systems.

Modules
-------
numerics      fixed-step RK4 integration and ``TimeSeries`` recording
plant         master systems, messages, the noisy channel, the Lorenz system
filters       realizations of ``H(p)``, ``W(p) = (p + lambda) H(p)`` and the ``Omega``/``eta`` filters
observers     augmented-error, high-order-tuner and state-dependent observers
analysis      excitation level, Hurwitz/minimum-phase checks, Lyapunov solve, bounds
simulation    joint master/observer ODE assembly
transmission  scenario harness and recovery metrics
config        scenario files and presets
cli           ``adapt-sync`` command line
"""
__version__ = "0.1.0"

from .analysis import (PeReport, ResidualBound, StabilityCertificate, hot_mu_bound, hurwitz_check,
                       lorenz_certificate, lyapunov_solve, min_phase_check, pe_metric, place_observer_gain,
                       residual_bound)
from .config import PRESETS, load_config, load_preset
from .filters import InverseW, LtiFilter, WDecomposition, make_lti_filter
from .numerics import IntegrationFault, OdeSystem, TimeSeries, rk4_step, simulate
from .observers import AeObserver, HotObserver, SdObserver, Tuner, adaptation_rhs, dead_zone_alpha
from .plant import (Channel, MessageParameter, PolyMap, RegressorPlant, Signal, StateDependentPlant,
                    lorenz_gain_and_G, lorenz_message_plant, lorenz_plant, oscillator_chain_plant)
from .transmission import (ConfigError, ObserverSpec, PlantSpec, RecoveryMetrics, ScenarioConfig,
                           ScenarioResult, recovery_metrics, run_scenario)

__all__ = [name for name in dir() if not name.startswith("_")]
