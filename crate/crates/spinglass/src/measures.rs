//! Building finitely supported measures from config blocks and JSON files.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use spinglass_core::functional::DiscreteMeasure;

use crate::config::MeasureConfig;
use crate::error::{config_err, io_err, Result};
use crate::seeds::SeedTree;

/// JSON measure on the hypercube. Labels are strings of `+`/`-` (or `1`/`0`), one character
/// per coordinate; atoms that are not listed get weight zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeMeasureFile {
    pub bits: usize,
    pub weights: BTreeMap<String, f64>,
}

impl CubeMeasureFile {
    pub fn to_measure(&self) -> Result<DiscreteMeasure> {
        if self.bits == 0 || self.bits > 20 {
            return Err(config_err(format!("field `bits` = {} must lie in 1..=20", self.bits)));
        }
        let mut w = vec![0.0; 1 << self.bits];
        for (label, weight) in &self.weights {
            w[label_index(label, self.bits)?] += weight;
        }
        Ok(DiscreteMeasure::cube(self.bits, w)?)
    }

    pub fn from_measure(mu: &DiscreteMeasure) -> Result<Self> {
        let bits = mu.cube_bits().ok_or_else(|| config_err("only hypercube measures have a JSON form"))?;
        let weights = mu
            .weights()
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, w)| ((0..bits).map(|i| if k >> i & 1 == 1 { '+' } else { '-' }).collect(), *w))
            .collect();
        Ok(Self { bits, weights })
    }
}

/// Atom index of a label; character `i` is coordinate `i`, stored in bit `i`.
pub fn label_index(label: &str, bits: usize) -> Result<usize> {
    if label.chars().count() != bits {
        return Err(config_err(format!("atom label `{label}` must have {bits} characters")));
    }
    let mut idx = 0;
    for (i, c) in label.chars().enumerate() {
        match c {
            '+' | '1' => idx |= 1 << i,
            '-' | '0' => {}
            _ => return Err(config_err(format!("atom label `{label}` may only contain + - 1 0"))),
        }
    }
    Ok(idx)
}

pub fn load_cube_measure(path: &Path) -> Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let file: CubeMeasureFile = serde_json::from_str(&text)?;
    file.to_measure()
}

pub fn build_measure(cfg: &MeasureConfig, seeds: &SeedTree) -> Result<DiscreteMeasure> {
    Ok(match cfg {
        MeasureConfig::Uniform { bits } => DiscreteMeasure::uniform_cube(*bits)?,
        MeasureConfig::Product { p_plus } => DiscreteMeasure::product_cube(p_plus)?,
        MeasureConfig::Gadget { bits } => DiscreteMeasure::two_ball_gadget(*bits)?,
        MeasureConfig::Points { atoms, weights } => DiscreteMeasure::points(atoms.clone(), weights.clone())?,
        MeasureConfig::RandomPoints { count, dim } => {
            if *count == 0 || *dim == 0 {
                return Err(config_err("random points need count >= 1 and dim >= 1"));
            }
            let mut rng = seeds.stream("measure", 0);
            let atoms = (0..*count).map(|_| (0..*dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let weights = (0..*count).map(|_| rng.random_range(0.1..1.0)).collect();
            DiscreteMeasure::points(atoms, weights)?
        }
        MeasureConfig::File { path } => load_cube_measure(path)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mu = DiscreteMeasure::product_cube(&[0.25, 0.5, 0.75]).unwrap();
        let file = CubeMeasureFile::from_measure(&mu).unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let back: CubeMeasureFile = serde_json::from_str(&text).unwrap();
        let nu = back.to_measure().unwrap();
        for (a, b) in mu.weights().iter().zip(nu.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(label_index("+-+", 3).unwrap(), 0b101);
        assert!(label_index("+x", 2).is_err());
    }
}
