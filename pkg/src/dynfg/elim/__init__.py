"""Variable orderings and block elimination."""
from . import kernels
from .eliminate import (PIVOT_TOL, DagFactor, DagNode, EliminationDag, EliminationPlan,
                        NumericallySingular, Solution, StructurallySingular, back_substitute, eliminate_factors,
                        elimination_structure, export_dag_dot, fill_count, solve, solve_nodes,
                        symbolic_eliminate)
from .ordering import (TAGS, Ordering, WrongProblemClass, canonical_tag, get_ordering,
                       order_aba, order_colamd_like, order_crba, order_custom, order_min_degree,
                       order_nested_dissection, order_reverse_index, order_rnea)

__all__ = [
    "kernels", "PIVOT_TOL", "DagNode", "EliminationDag", "EliminationPlan",
    "NumericallySingular", "Solution",
    "StructurallySingular", "back_substitute", "eliminate_factors", "elimination_structure",
    "export_dag_dot", "fill_count", "solve", "solve_nodes",
    "symbolic_eliminate", "DagFactor", "TAGS",
    "Ordering", "WrongProblemClass", "canonical_tag", "get_ordering", "order_aba",
    "order_colamd_like", "order_crba", "order_custom", "order_min_degree",
    "order_nested_dissection", "order_reverse_index", "order_rnea",
]
