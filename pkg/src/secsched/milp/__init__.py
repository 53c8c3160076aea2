"""Parameter-synthesis MILP: encoding, pruning, export and search backends."""

from .encoding import Encoder, LinExpr, encode_ecu, encode_network, \
    encode_system, prune
from .instance import (BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, ClampDef,
                       Constraint, IndicatorDef, MilpError, MilpInstance,
                       Variable, choose_big_m_epsilon, export_lp, parse_lp)
from .synthesis import (ECU_FIRST, FEASIBLE, INFEASIBLE, NETWORK_FIRST,
                        TIMEOUT, SearchLimits, SearchProblem, SearchVar,
                        SynthesisError, SynthesisResult, search_problem,
                        solve_feasibility, synthesize_decomposed)

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "INTEGER", "LE",
    "ClampDef", "Constraint", "Encoder", "IndicatorDef", "LinExpr",
    "MilpError", "MilpInstance", "Variable",
    "choose_big_m_epsilon", "encode_ecu", "encode_network", "encode_system",
    "export_lp", "parse_lp", "prune",
    "ECU_FIRST", "FEASIBLE", "INFEASIBLE", "NETWORK_FIRST", "TIMEOUT",
    "SearchLimits", "SearchProblem", "SearchVar", "SynthesisError",
    "SynthesisResult", "search_problem", "solve_feasibility",
    "synthesize_decomposed",
]
