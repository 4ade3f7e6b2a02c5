"""Pointwise numerics for premultisymplectic field theories.

Sparse exterior algebra, flat-map kernels, expanded solutions and their
kernel relation, sections, and quotients by the kernel distribution.
"""

from .exterior import (
    FiberedChart,
    FormField,
    FormValue,
    JetChartMeta,
    MultivectorValue,
    VectorField,
    contact_forms,
    contact_substitute,
    derivation_linear,
    directional_derivative_fd,
    exterior_derivative_fd,
    interior,
    interior_decomposable,
    lie_derivative_form_fd,
    one_form,
    pullback_linear,
    wedge,
    wedge_all,
)
from .kernels import (
    FlatMatrix,
    KernelReport,
    VariationalReport,
    expanded_extension_space,
    flat_matrix,
    is_1_nondegenerate,
    is_variational_point,
    ker1,
    kernel_distribution_point,
    kerm_contains,
)
from .reduction import (
    AdaptedCoordinates,
    QuotientChart,
    QuotientError,
    ReducedSystem,
    adapted_system,
    build_quotient,
    certify_recovered,
    check_reduced_multisymplectic,
    project_section,
    recover_section,
    weak_quotient,
)
from .sections import (
    Section,
    contact_pullback_residual,
    distribution_holonomy_residual,
    lagrangian_symmetry_check,
    prolong_holonomic,
    section_is_solution,
    sections_kernel_related,
    weak_kernel_test,
)
from .solutions import (
    DecompositionReport,
    Distribution,
    ExpandedReport,
    PremultisymplecticSystem,
    RelationGraph,
    decompose_transverse,
    equivalence_probe,
    is_expanded_solution_point,
    is_involutive_point,
    is_transverse_point,
    kernel_related,
    lie_bracket_fd,
    theorem_decomposition,
)

__version__ = "0.1.0"
