use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CompactSetSpec, LogPolarPoint};

/// Straight extent of the panel carrying a node: unit tangent and
/// `ln(length)`. Used for near-field corrections of potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelShape {
    pub tangent: (f64, f64),
    pub log_len: f64,
}

/// A nonnegative measure carried by finitely many nodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub nodes: Vec<LogPolarPoint>,
    pub masses: Vec<f64>,
    pub total: f64,
    /// Panel geometry per node when the mass is spread along a panel.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shapes: Vec<PanelShape>,
}

impl DiscreteMeasure {
    pub fn new(nodes: Vec<LogPolarPoint>, masses: Vec<f64>) -> Result<Self> {
        if nodes.len() != masses.len() {
            return Err(Error::Invalid(format!("{} nodes but {} masses", nodes.len(), masses.len())));
        }
        if let Some(m) = masses.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
            return Err(Error::Invalid(format!("negative or non-finite mass {m}")));
        }
        let total = masses.iter().sum();
        Ok(Self { nodes, masses, total, shapes: Vec::new() })
    }

    pub fn point_mass(node: LogPolarPoint, mass: f64) -> Result<Self> {
        Self::new(vec![node], vec![mass])
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_shapes(mut self, shapes: Vec<PanelShape>) -> Result<Self> {
        if shapes.len() != self.nodes.len() {
            return Err(Error::Invalid("one panel shape per node required".into()));
        }
        self.shapes = shapes;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let masses: Vec<f64> = self.masses.iter().map(|m| m * c).collect();
        Self { nodes: self.nodes.clone(), total: masses.iter().sum(), masses, shapes: self.shapes.clone() }
    }

    /// True when every node with positive mass lies on `set` (within `tol`).
    pub fn supported_on(&self, set: &CompactSetSpec, tol: f64) -> bool {
        self.nodes.iter().zip(&self.masses).all(|(p, &m)| m == 0.0 || set.contains(p, tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Primitive;

    #[test]
    fn invariants() {
        let p = LogPolarPoint::new(2.0, 0.0).unwrap();
        let m = DiscreteMeasure::new(vec![p, p], vec![0.25, 0.5]).unwrap();
        assert_eq!(m.total, 0.75);
        assert!(DiscreteMeasure::new(vec![p], vec![-1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![p], vec![]).is_err());
        let c = CompactSetSpec::new("c", vec![Primitive::circle(2.0)]);
        assert!(m.supported_on(&c, 1e-12));
        assert!((m.scaled(2.0).total - 1.5).abs() < 1e-15);
    }
}
