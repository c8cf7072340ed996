use crate::data::AggregateTable;
use crate::error::{Error, Result};

/// The set `{(b₁, b₂) ∈ [0,1]² : x·b₁ + (1 − x)·b₂ = y}` stored by its endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographyLine {
    pub start: [f64; 2],
    pub end: [f64; 2],
    /// Share of the first category.
    pub x: f64,
    pub y: f64,
    /// Set when one category is absent: that coordinate is unrestricted by the data.
    pub free_coordinate: Option<usize>,
}

impl TomographyLine {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&y) || !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidData(format!("tomography needs x and y in [0, 1], got x = {x}, y = {y}")));
        }
        if x >= 1.0 {
            return Ok(Self { start: [y, 0.0], end: [y, 1.0], x, y, free_coordinate: Some(1) });
        }
        if x <= 0.0 {
            return Ok(Self { start: [0.0, y], end: [1.0, y], x, y, free_coordinate: Some(0) });
        }
        let rest = 1.0 - x;
        let lo1 = ((y - rest) / x).max(0.0);
        let hi1 = (y / x).min(1.0);
        let b2 = |b1: f64| ((y - x * b1) / rest).clamp(0.0, 1.0);
        Ok(Self { start: [lo1, b2(lo1)], end: [hi1, b2(hi1)], x, y, free_coordinate: None })
    }

    pub fn from_table(table: &AggregateTable, g: usize, j: usize) -> Result<Self> {
        if table.n_categories() != 2 {
            return Err(Error::Unsupported(format!("tomography needs 2 categories, found {}", table.n_categories())));
        }
        let y = table.outcomes()[(g, j)];
        Self::new(table.shares()[(g, 0)], y).map_err(|_| Error::InvalidGeography {
            geo: table.geos()[g].clone(),
            reason: format!("outcome {y} outside [0, 1]"),
        })
    }

    pub fn length(&self) -> f64 {
        ((self.end[0] - self.start[0]).powi(2) + (self.end[1] - self.start[1]).powi(2)).sqrt()
    }

    pub fn is_point(&self) -> bool {
        self.length() <= 1e-14
    }

    /// Point at fraction `t ∈ [0, 1]` of the way from `start` to `end`.
    pub fn at(&self, t: f64) -> [f64; 2] {
        let p = |i: usize| (self.start[i] + t * (self.end[i] - self.start[i])).clamp(0.0, 1.0);
        [p(0), p(1)]
    }

    /// `|x·b₁ + (1 − x)·b₂ − y|`.
    pub fn identity_residual(&self, b: [f64; 2]) -> f64 {
        (self.x * b[0] + (1.0 - self.x) * b[1] - self.y).abs()
    }
}
