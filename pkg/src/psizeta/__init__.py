"""Complex powers, zeta functions and residues of elliptic symbols on flat tori."""

from ._validation import NotPositiveDefiniteError, PoleError, SpecError
from .cohomology import (
    CocycleError,
    ConjugationAction,
    OneCochain,
    SeriesCochain,
    TwoCochain,
    delta1,
    delta2,
    solve,
    verify_cocycle,
)
from .fiber import ContourSpec, PDMatrix, conjugate, contour_power, pd_power, t_operator, t_solve
from .powers import (
    ComplexPowers,
    DefectReport,
    HolomorphicSymbolFamily,
    build_family,
    defect,
    defect_report,
    initial_family,
    refine,
    symmetrize,
)
from .spec_io import OperatorSpec, RunConfig, load_spec, parse_spec
from .symbols import (
    ClassicalSymbol,
    CosphereGrid,
    CosphereMeasure,
    CosphereSection,
    HomogeneousTerm,
    adjoint,
    compose,
    evaluate,
    extend_homogeneous,
    parametrix,
    poisson_bracket,
    quantize,
    restrict_to_cosphere,
)
from .zeta import (
    LatticeSumConfig,
    MeromorphicData,
    ResidueValue,
    SpectralZeta,
    commutator_trace_check,
    galerkin_power,
    galerkin_zeta,
    gamma0,
    meromorphic_extend,
    nc_residue,
    residue_at_first_pole,
    trace_function,
)

__version__ = "0.1.0"
