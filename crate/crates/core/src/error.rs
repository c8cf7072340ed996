use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geography `{0}` has no individual records")]
    EmptyGeography(String),

    #[error("record {row}: outcome is not a one-hot indicator")]
    NotOneHot { row: usize },

    #[error("record {row}: category index {index} out of range for K = {k}")]
    CategoryOutOfRange { row: usize, index: usize, k: usize },

    #[error("geography `{geo}`: {reason}")]
    InvalidGeography { geo: String, reason: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("unknown covariate `{0}`")]
    MissingCovariate(String),

    #[error("malformed basis specification `{spec}`: {reason}")]
    BasisSyntax { spec: String, reason: String },

    #[error("spline knot {knot} for `{covariate}` lies outside the data range [{lo}, {hi}]")]
    KnotOutOfRange { covariate: String, knot: f64, lo: f64, hi: f64 },

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("covariates are collinear with the category shares (columns: {}); remove a covariate", columns.join(", "))]
    CovariateCollinear { columns: Vec<String> },

    #[error("category {0} has zero total count in every geography")]
    EmptyCategory(usize),

    #[error("outcome category {0} has zero count in every geography")]
    EmptyOutcome(usize),

    #[error("singular Riesz Gram matrix; use a positive penalty")]
    SingularGram,

    #[error("quadratic program infeasible: {0}")]
    QpInfeasible(String),

    #[error("optimizer did not converge after {iterations} iterations (last objective {objective})")]
    NoConvergence { iterations: usize, objective: f64 },

    #[error("unsupported input: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
