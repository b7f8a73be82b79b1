"""Hard finite-sum instances, an IFO testbed and lower-bound certificates."""

from hardsum.chainfun import (
    C_GAMMA,
    CarmonParams,
    ChainQuadParams,
    NesterovCParams,
    NesterovScParams,
    fc_eval,
    gamma_eval,
    nc_eval,
    nsc_eval,
    q_eval,
)
from hardsum.instance import (
    FiniteSumInstance,
    HypothesisError,
    ScaleParams,
    embed_sum,
    make_avg_nc_instance,
    make_block_family,
    make_cvx_instance,
    make_ind_nc_instance,
    make_omega_n_instance,
    make_sc_instance,
    rescale,
)
from hardsum.oracle import OracleSession, ZeroChainViolation, span_audit
from hardsum.solvers import SolverSpec, run, variance_check

__version__ = "0.1.0"
