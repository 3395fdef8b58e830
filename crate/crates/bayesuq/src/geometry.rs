//! Semantic descriptions of parameter and data spaces.
//!
//! A [`Geometry`] says what a flat parameter vector represents — grid values
//! of a 1D signal, pixels of an image (column-stacked), labelled scalars —
//! which drives dimension checks and the coordinates attached to exported
//! statistics.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum Geometry {
    /// `n` samples of a signal on an interval (default `[0, 1]`).
    Continuous1D { n: usize, interval: (f64, f64) },
    /// Signal on an `nx x ny` rectangle.
    Continuous2D { nx: usize, ny: usize },
    /// Pixelated image; vectors are stored column-stacked.
    Image2D { rows: usize, cols: usize },
    /// Individually labelled scalar parameters.
    Discrete { labels: Vec<String> },
    /// A geometry seen through a named transformation of the parameters.
    Mapped { inner: Box<Geometry>, map: String },
}

/// Plot-ready coordinates for a geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum PlotCoordinates {
    Grid1D(Vec<f64>),
    Indices2D(Vec<(usize, usize)>),
    Labels(Vec<String>),
}

impl Geometry {
    pub fn continuous_1d(n: usize) -> Self {
        Geometry::Continuous1D {
            n,
            interval: (0.0, 1.0),
        }
    }

    pub fn continuous_1d_on(n: usize, interval: (f64, f64)) -> Self {
        Geometry::Continuous1D { n, interval }
    }

    pub fn image_2d(rows: usize, cols: usize) -> Self {
        Geometry::Image2D { rows, cols }
    }

    pub fn discrete<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(Error::invalid(format!("duplicate label '{l}'")));
            }
        }
        Ok(Geometry::Discrete { labels })
    }

    pub fn mapped(inner: Geometry, map: impl Into<String>) -> Self {
        Geometry::Mapped {
            inner: Box::new(inner),
            map: map.into(),
        }
    }

    /// Total number of scalar parameters.
    pub fn par_dim(&self) -> usize {
        match self {
            Geometry::Continuous1D { n, .. } => *n,
            Geometry::Continuous2D { nx, ny } => nx * ny,
            Geometry::Image2D { rows, cols } => rows * cols,
            Geometry::Discrete { labels } => labels.len(),
            Geometry::Mapped { inner, .. } => inner.par_dim(),
        }
    }

    pub fn plot_coordinates(&self) -> PlotCoordinates {
        match self {
            Geometry::Continuous1D { n, interval } => {
                PlotCoordinates::Grid1D(linspace(interval.0, interval.1, *n))
            }
            Geometry::Continuous2D { nx, ny } => PlotCoordinates::Indices2D(index_grid(*ny, *nx)),
            Geometry::Image2D { rows, cols } => PlotCoordinates::Indices2D(index_grid(*rows, *cols)),
            Geometry::Discrete { labels } => PlotCoordinates::Labels(labels.clone()),
            Geometry::Mapped { inner, .. } => inner.plot_coordinates(),
        }
    }

    /// Label of coordinate `i`, used in summary tables.
    pub fn coordinate_label(&self, i: usize) -> String {
        match self {
            Geometry::Discrete { labels } => labels.get(i).cloned().unwrap_or_else(|| i.to_string()),
            _ => i.to_string(),
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn index_grid(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut grid = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            grid.push((r, c));
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_dims() {
        assert_eq!(Geometry::continuous_1d(128).par_dim(), 128);
        assert_eq!(Geometry::image_2d(2, 2).par_dim(), 4);
        assert_eq!(
            Geometry::discrete(["z", "rho", "r"]).unwrap().par_dim(),
            3
        );
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(Geometry::discrete(["a", "a"]).is_err());
    }

    #[test]
    fn mapped_preserves_par_dim() {
        let g = Geometry::mapped(Geometry::continuous_1d(7), "exp");
        assert_eq!(g.par_dim(), 7);
    }

    #[test]
    fn plot_coordinates_shapes() {
        match Geometry::continuous_1d(3).plot_coordinates() {
            PlotCoordinates::Grid1D(g) => assert_eq!(g, vec![0.0, 0.5, 1.0]),
            _ => panic!("expected grid"),
        }
        match Geometry::discrete(["z", "rho", "r"]).unwrap().plot_coordinates() {
            PlotCoordinates::Labels(l) => assert_eq!(l, vec!["z", "rho", "r"]),
            _ => panic!("expected labels"),
        }
        match Geometry::image_2d(2, 3).plot_coordinates() {
            PlotCoordinates::Indices2D(g) => {
                assert_eq!(g.len(), 6);
                assert_eq!(g[0], (0, 0));
                assert_eq!(g[5], (1, 2));
            }
            _ => panic!("expected indices"),
        }
    }

    #[test]
    fn coordinate_count_matches_par_dim() {
        for g in [
            Geometry::continuous_1d(11),
            Geometry::image_2d(3, 4),
            Geometry::discrete(["a", "b"]).unwrap(),
        ] {
            let count = match g.plot_coordinates() {
                PlotCoordinates::Grid1D(v) => v.len(),
                PlotCoordinates::Indices2D(v) => v.len(),
                PlotCoordinates::Labels(v) => v.len(),
            };
            assert_eq!(count, g.par_dim());
        }
    }

    #[test]
    fn geometry_serializes_with_variant_tag() {
        let g = Geometry::continuous_1d(4);
        let json = serde_json::to_string(&g).unwrap();
        assert!(json.contains("\"variant\":\"Continuous1D\""));
        let back: Geometry = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }
}
