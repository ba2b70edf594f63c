//! Weighted empirical measures on the sphere and their CSV / side-car output.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rand::Rng;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::moebius::SpherePoint;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Harmonic,
    PattersonSullivan,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Harmonic => "harmonic",
            Provenance::PattersonSullivan => "patterson-sullivan",
        }
    }
}

/// A probability measure given by weighted atoms on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySampleSet {
    pub points: Vec<SpherePoint>,
    pub weights: Vec<f64>,
    pub provenance: Provenance,
    /// 2 for samples of a group preserving the real circle.
    pub ambient_dim: u8,
    /// Free-form metadata, emitted verbatim in the side-car.
    pub meta: Map<String, Value>,
}

impl BoundarySampleSet {
    /// Builds a set, renormalizing the weights to total mass one.
    pub fn new(points: Vec<SpherePoint>, weights: Vec<f64>, provenance: Provenance, ambient_dim: u8) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Invalid(format!("{} points but {} weights", points.len(), weights.len())));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Invalid("sample weights must be positive and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = if points.is_empty() { weights } else { weights.iter().map(|w| w / total).collect() };
        Ok(BoundarySampleSet { points, weights, provenance, ambient_dim, meta: Map::new() })
    }

    /// Equal weights `1 / n`.
    pub fn uniform(points: Vec<SpherePoint>, provenance: Provenance, ambient_dim: u8) -> Self {
        let n = points.len();
        let weights = vec![1.0 / n.max(1) as f64; n];
        BoundarySampleSet { points, weights, provenance, ambient_dim, meta: Map::new() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    /// `n` equally weighted atoms drawn i.i.d. from this measure.
    pub fn resample(&self, n: usize, seed: u64) -> Result<Self> {
        if self.is_empty() {
            return Err(Error::Range("cannot resample an empty set".into()));
        }
        let mut cdf = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cdf.push(acc);
        }
        let mut rng = rng::stream(seed);
        let points = (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let i = cdf.partition_point(|&c| c <= u).min(self.len() - 1);
                self.points[i]
            })
            .collect();
        let mut out = BoundarySampleSet::uniform(points, self.provenance, self.ambient_dim);
        out.meta = self.meta.clone();
        out.meta.insert("resampled_from".into(), Value::from(self.len()));
        out.meta.insert("resample_seed".into(), Value::from(seed));
        Ok(out)
    }

    /// Largest distance of any point from the real circle `{x2 = 0}`.
    pub fn max_off_circle(&self) -> f64 {
        self.points.iter().map(|p| p.coords()[1].abs()).fold(0.0, f64::max)
    }

    /// CSV with columns `x,y,z,weight`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,weight\n");
        for (p, w) in self.points.iter().zip(&self.weights) {
            let [x, y, z] = p.coords();
            let _ = writeln!(out, "{x},{y},{z},{w}");
        }
        out
    }

    /// Side-car metadata as pretty JSON.
    pub fn meta_json(&self) -> String {
        let mut m = Map::new();
        m.insert("provenance".into(), Value::from(self.provenance.as_str()));
        m.insert("ambient_dim".into(), Value::from(self.ambient_dim));
        m.insert("size".into(), Value::from(self.len()));
        for (k, v) in &self.meta {
            m.insert(k.clone(), v.clone());
        }
        json_text(&Value::Object(m))
    }

    /// Writes `<stem>.csv` and `<stem>.meta.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> io::Result<()> {
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.meta.json")), self.meta_json())
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values always serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(n: usize) -> Vec<SpherePoint> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                SpherePoint::from_direction([t.cos(), 0.0, t.sin()]).unwrap()
            })
            .collect()
    }

    #[test]
    fn weights_are_renormalized() {
        let s = BoundarySampleSet::new(pts(3), vec![1.0, 2.0, 5.0], Provenance::PattersonSullivan, 2).unwrap();
        assert!((s.total_weight() - 1.0).abs() < 1e-12);
        assert!((s.weights[2] - 0.625).abs() < 1e-15);
        assert!(BoundarySampleSet::new(pts(2), vec![1.0, 0.0], Provenance::Harmonic, 2).is_err());
        assert!(BoundarySampleSet::new(pts(2), vec![1.0], Provenance::Harmonic, 2).is_err());
    }

    #[test]
    fn resample_is_deterministic_and_follows_weights() {
        let s = BoundarySampleSet::new(pts(2), vec![1.0, 3.0], Provenance::PattersonSullivan, 2).unwrap();
        let a = s.resample(20_000, 5).unwrap();
        assert_eq!(a, s.resample(20_000, 5).unwrap());
        let second = a.points.iter().filter(|p| **p == s.points[1]).count() as f64 / 20_000.0;
        // binomial sd is about 0.003
        assert!((second - 0.75).abs() < 0.015, "{second}");
    }

    #[test]
    fn csv_layout() {
        let s = BoundarySampleSet::uniform(vec![SpherePoint::NORTH], Provenance::Harmonic, 3).with_meta("seed", 9u64);
        assert_eq!(s.to_csv(), "x,y,z,weight\n0,0,1,1\n");
        let meta: Value = serde_json::from_str(&s.meta_json()).unwrap();
        assert_eq!(meta["provenance"], "harmonic");
        assert_eq!(meta["seed"], 9);
    }
}
