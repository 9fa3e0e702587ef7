"""Endogenous epistemic weighting for collective choice: scoring, weighting, aggregation and evaluation."""
from .analytics import (
    cjt_failure,
    cjt_success,
    escm_success,
    gain,
    signal_moments,
)
from .competence import (
    BetaSpec,
    MixtureSpec,
    PointMass,
    TruncatedNormalSpec,
    beta_from_mu_sigma,
    cmm3_wide,
    expect,
    moments,
    sample,
)
from .errors import DomainError, EscmError
from .mechanism import MechanismParams, WeightMapSpec, run_pipeline, weight_bounds
from .montecarlo import TrialConfig, simulate, validate_clt

__version__ = "0.1.0"
