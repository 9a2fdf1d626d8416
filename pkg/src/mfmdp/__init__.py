"""Finite-state mean-field MDP toolkit.

Modules:

* ``core``        - domain types and agent/measure lifting operations
* ``nagent``      - exact N-agent and empirical-measure solvers, agent simulation
* ``meanfield``   - limit flows, simplex-grid value iteration, average reward
* ``staticopt``   - optimization over the simplex (spread, market place, common noise)
* ``metropolis``  - detailed-balance kernels and their inversion to policies
* ``transport``   - Wasserstein distances and contraction diagnostics
* ``cli``         - ``mfmdp validate`` / ``mfmdp run``
"""

from .core import (
    AdmissibleActions,
    AgentConfiguration,
    AlphaIntentTransition,
    CommonNoise,
    ConditionalPolicy,
    DiscountSpec,
    EmpiricalMeasure,
    FiniteStateSpace,
    JointMeasure,
    SpreadReward,
    TabularReward,
    TabularTransition,
)
from .errors import (
    CapacityError,
    ConfigError,
    ConsistencyError,
    InfeasibleError,
    InputError,
    IterationLimitError,
    MFMDPError,
    ParameterError,
)

__version__ = "0.1.0"
