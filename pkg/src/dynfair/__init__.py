"""Exact simulation of dynamic fair-share allocators and the disruptions they cause."""

from .adversaries import (BatchAdversaryState, RandomPermutationSpec, batch_adversary_step,
                          geometric_instance, monotone_adversary_run, random_permutation_stream,
                          run_batch_game, run_monotone_game)
from .core import (AllocationSnapshot, Arrival, Departure, DisruptionLedger, InvalidEventStream,
                   Job, ScaledShares, as_frac, validate_event_stream)
from .policies import (CertificationFailure, CobbDouglasProfile, DrfProfile, MonotoneAdversaryState,
                       cobb_douglas_shares, drf_shares, make_policy, monotone_adversary_step,
                       weighted_shares)
from .simulator import (InvariantViolation, RunConfig, RunReport, UnsupportedCombination,
                        ledger_from_trace, log_star, run, simulate, sweep)

__version__ = "0.1.0"
