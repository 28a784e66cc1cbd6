"""Independent checks: flow-network certificates, a fixed-eta solver and tiny-p enumeration."""

from .flow import (
    FlowNetwork,
    classo_flow_network,
    classo_nonzero_flow_holds,
    classo_zero_flow_holds,
    max_flow,
    oscar_flow_network,
    oscar_nonzero_flow_holds,
    oscar_zero_flow_holds,
)
from .kkt import Candidate, enumerate_kkt, flow_certify, structure_from_beta
from .prox import prox_solve
