//! Householder QR factorization in two formulations: the classical transform
//! (explicit two-stage update) and the modified transform, which fuses the
//! reflector application into a single pass per column. Around them sit a
//! scalar operation-DAG analyzer for level-parallelism metrics and a
//! cycle-cost simulator of a DOT4-based processing element and tile array.

pub mod classic;
pub mod cli;
pub mod dag;
pub mod dense;
pub mod eig;
pub mod error;
pub mod modified;
pub mod rng;
pub mod routine;
pub mod sim;

pub use classic::{
    apply_reflector_classic, form_q, geqr2, geqrf, make_reflector, HouseholderReflector,
    QrFactorization,
};
pub use dense::{
    dot, gemm, gemv, nrm2, read_matrix_market, solve_upper_triangular, write_matrix_market,
    Matrix, VectorView,
};
pub use error::{Error, Result};
pub use modified::{
    fused_macro_op, fused_update, geqr2ht, geqrfht, literal_column_update, FusedUpdateScalars,
};
pub use dag::{theta, trace_dag, trace_report, OpDag, OpKind, ParallelismReport, Phase};
pub use eig::{qr_eigenvalues, EigenReport};
pub use rng::random_matrix;
pub use routine::{check_factorization, FactorizationCheck, Routine, DEFAULT_BLOCK_SIZE};
pub use sim::{simulate_pe, simulate_tile_array, CostConfig, CycleReport, ParallelReport};
