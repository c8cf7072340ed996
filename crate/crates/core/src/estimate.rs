use nalgebra::DMatrix;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Posterior or sampling quantile of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellQuantile {
    pub prob: f64,
    pub values: DMatrix<f64>,
}

/// Global estimates `β̂` (`J × K`) with uncertainty and optional local estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSet {
    pub method: String,
    pub outcome_names: Vec<String>,
    pub category_names: Vec<String>,
    pub beta: DMatrix<f64>,
    /// Standard errors (or posterior standard deviations). `NaN` when unavailable.
    pub se: DMatrix<f64>,
    /// Explicit 95% intervals, when the method provides them.
    pub intervals: Option<(DMatrix<f64>, DMatrix<f64>)>,
    pub quantiles: Vec<CellQuantile>,
    /// Per-geography `J × K` local estimates.
    pub local: Option<Vec<DMatrix<f64>>>,
    pub warnings: Vec<String>,
}

impl EstimateSet {
    pub fn new(method: &str, outcome_names: Vec<String>, category_names: Vec<String>, beta: DMatrix<f64>, se: DMatrix<f64>) -> Self {
        Self {
            method: method.to_string(),
            outcome_names,
            category_names,
            beta,
            se,
            intervals: None,
            quantiles: Vec::new(),
            local: None,
            warnings: Vec::new(),
        }
    }

    pub fn n_outcomes(&self) -> usize {
        self.beta.nrows()
    }

    pub fn n_categories(&self) -> usize {
        self.beta.ncols()
    }

    /// Whether the point estimate lies in `[0, 1]`. Estimates are never clipped.
    pub fn feasible(&self, j: usize, k: usize) -> bool {
        (0.0..=1.0).contains(&self.beta[(j, k)])
    }

    /// The method's own 95% interval if it has one, else `β̂ ± 1.96·se`.
    pub fn interval(&self, j: usize, k: usize) -> Interval {
        match &self.intervals {
            Some((lo, hi)) => Interval::new(lo[(j, k)], hi[(j, k)]),
            None => {
                let half = 1.959_963_984_540_054 * self.se[(j, k)];
                Interval::new(self.beta[(j, k)] - half, self.beta[(j, k)] + half)
            }
        }
    }
}
