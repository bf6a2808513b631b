"""flatcert: certified flatness improvement for desk-scale minimal graphs."""

from .ledger import (
    ConstantLedger,
    HarnackParams,
    check_threshold_chain,
    derive_ledger,
    ledger_to_json,
    max_harnack_depth,
)
from .grid import GridFunction, make_grid, read_gf1, write_gf1
from .mse import exact_solution, mse_residual, solve_mse
from .envelope import extract_multigraph, inf_convolve, verify_sandwich
from .harmonic import (
    build_barriers,
    harmonic_replacement,
    solve_poisson_ball,
    verify_harmonic_closeness,
)
from .pipeline import (
    FlatnessCertificate,
    harnack_decay_audit,
    improvement_step,
    iterate_flatness,
    samples_from_graph,
)

__version__ = "0.1.0"
