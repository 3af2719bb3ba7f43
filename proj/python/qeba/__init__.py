"""Query-efficient decision-only blackbox attack toolkit.

The compiled extension carries the implementation; this package only
re-exports it.
"""

from ._qeba import (  # noqa: F401
    Basis,
    ConfigError,
    Oracle,
    QueryBudgetError,
    Victim,
    aligned_basis,
    binary_search_projection,
    build_gradient_store,
    c_coefficient,
    coordinate_density,
    dct_basis,
    discretize,
    estimate_gradient,
    expected_cosine,
    full_basis,
    l2,
    linear_boundary_point,
    linear_victim,
    load_basis,
    load_qimg,
    lower_bound_factor,
    measure_cosine,
    mlp_victim,
    mse,
    pca_basis,
    probe_delta,
    quadratic_victim,
    random_basis,
    rho,
    run_attack,
    sample_unit_directions,
    save_basis,
    save_qimg,
    smooth_image,
    spatial_basis,
    step_size,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
