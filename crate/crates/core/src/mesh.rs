//! Time meshes: ordered points `t0 = τ_0 < … < τ_K = tf` and segments `T_k = (τ_{k-1}, τ_k)`.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Points closer than this are merged.
pub const POINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    points: Vec<f64>,
}

/// Resolution `h`, quasi-uniformity ratio `σ` and segment count `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshParameters {
    pub h: f64,
    pub sigma: f64,
    pub k: usize,
}

impl Mesh {
    /// Builds a mesh from sorted points, merging near-duplicates.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(invalid("mesh points must be finite"));
        }
        let mut out: Vec<f64> = Vec::with_capacity(points.len());
        for p in points {
            match out.last() {
                Some(&last) if p < last - POINT_TOL => {
                    return Err(invalid("mesh points must be increasing"));
                }
                Some(&last) if p <= last + POINT_TOL => {}
                _ => out.push(p),
            }
        }
        if out.len() < 2 {
            return Err(invalid("a mesh needs tf > t0"));
        }
        Ok(Self { points: out })
    }

    pub fn uniform(t0: f64, tf: f64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("segment count must be at least 1"));
        }
        if !(tf > t0) {
            return Err(invalid(format!("need tf > t0, got [{t0}, {tf}]")));
        }
        let h = (tf - t0) / k as f64;
        let mut pts: Vec<f64> = (0..k).map(|i| t0 + h * i as f64).collect();
        pts.push(tf);
        Ok(Self { points: pts })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn t0(&self) -> f64 {
        self.points[0]
    }

    pub fn tf(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn num_segments(&self) -> usize {
        self.points.len() - 1
    }

    /// Endpoints of segment `k` (0-based).
    pub fn segment(&self, k: usize) -> (f64, f64) {
        (self.points[k], self.points[k + 1])
    }

    pub fn segment_len(&self, k: usize) -> f64 {
        self.points[k + 1] - self.points[k]
    }

    pub fn parameters(&self) -> MeshParameters {
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for w in self.points.windows(2) {
            let l = w[1] - w[0];
            lo = lo.min(l);
            hi = hi.max(l);
        }
        MeshParameters { h: hi, sigma: lo / hi, k: self.num_segments() }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0() - POINT_TOL && t <= self.tf() + POINT_TOL
    }

    /// Segment holding `t`; interior mesh points belong to the right segment.
    pub fn locate(&self, t: f64) -> usize {
        let k = self.num_segments();
        // first point strictly greater than t
        let idx = self.points.partition_point(|&p| p <= t);
        idx.saturating_sub(1).min(k - 1)
    }

    /// Splits each listed segment into `count + 1` equal parts.
    pub fn subdivide(&self, plan: &BTreeMap<usize, usize>) -> Result<Self> {
        let k = self.num_segments();
        if let Some((&bad, _)) = plan.iter().find(|(&s, _)| s >= k) {
            return Err(invalid(format!("segment {bad} out of range (K = {k})")));
        }
        if plan.values().any(|&c| c == 0) {
            return Err(invalid("subdivision counts must be at least 1"));
        }
        let mut pts = Vec::with_capacity(self.points.len() + plan.values().sum::<usize>());
        for s in 0..k {
            let (a, b) = self.segment(s);
            pts.push(a);
            if let Some(&c) = plan.get(&s) {
                let step = (b - a) / (c + 1) as f64;
                pts.extend((1..=c).map(|j| a + step * j as f64));
            }
        }
        pts.push(self.tf());
        Self::new(pts)
    }

    /// Segments meeting `[t0, t]`, as a 0-based range `0..j`. At `t = t0` this is `0..1`.
    pub fn covering_prefix(&self, t: f64) -> Result<Range<usize>> {
        if !self.contains(t) {
            return Err(invalid(format!(
                "t = {t} outside mesh [{}, {}]",
                self.t0(),
                self.tf()
            )));
        }
        let k = self.num_segments();
        let j = self.points[..k].partition_point(|&p| p < t - POINT_TOL);
        Ok(0..j.max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_examples() {
        let m = Mesh::uniform(0.0, 6.0, 4).unwrap();
        assert_eq!(m.points(), &[0.0, 1.5, 3.0, 4.5, 6.0]);
        let p = m.parameters();
        assert_eq!((p.h, p.sigma, p.k), (1.5, 1.0, 4));
        assert_eq!(Mesh::uniform(0.0, 1.0, 1).unwrap().points(), &[0.0, 1.0]);
        let p = Mesh::uniform(0.0, 4.0, 8).unwrap().parameters();
        assert_eq!((p.h, p.sigma), (0.5, 1.0));
        assert!(Mesh::uniform(0.0, 1.0, 0).is_err());
        assert!(Mesh::uniform(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn parameters() {
        let p = Mesh::new(vec![0.0, 1.0, 3.0]).unwrap().parameters();
        assert_eq!((p.h, p.sigma, p.k), (2.0, 0.5, 2));
        let p = Mesh::new(vec![0.0, 0.5, 1.5, 2.0]).unwrap().parameters();
        assert_eq!((p.h, p.sigma, p.k), (1.0, 0.5, 3));
    }

    #[test]
    fn subdivide_examples() {
        let m = Mesh::new(vec![0.0, 1.0, 2.0]).unwrap();
        let s = m.subdivide(&BTreeMap::from([(0, 1)])).unwrap();
        assert_eq!(s.points(), &[0.0, 0.5, 1.0, 2.0]);
        let m = Mesh::new(vec![0.0, 1.5, 3.0]).unwrap();
        let s = m.subdivide(&BTreeMap::from([(1, 2)])).unwrap();
        assert_eq!(s.points(), &[0.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(m.subdivide(&BTreeMap::new()).unwrap(), m);
        assert!(m.subdivide(&BTreeMap::from([(2, 1)])).is_err());
    }

    #[test]
    fn covering_prefix_examples() {
        let m = Mesh::uniform(0.0, 6.0, 4).unwrap();
        assert_eq!(m.covering_prefix(1.6).unwrap(), 0..2);
        assert_eq!(m.covering_prefix(0.0).unwrap(), 0..1);
        assert_eq!(m.covering_prefix(6.0).unwrap(), 0..4);
        assert_eq!(m.covering_prefix(1.5).unwrap(), 0..1);
        assert!(m.covering_prefix(6.5).is_err());
    }

    #[test]
    fn locate_uses_right_segment() {
        let m = Mesh::uniform(0.0, 6.0, 4).unwrap();
        assert_eq!(m.locate(0.0), 0);
        assert_eq!(m.locate(1.5), 1);
        assert_eq!(m.locate(6.0), 3);
    }

    #[test]
    fn dedup() {
        let m = Mesh::new(vec![0.0, 1.0, 1.0 + 1e-14, 2.0]).unwrap();
        assert_eq!(m.num_segments(), 2);
        assert!(Mesh::new(vec![0.0, 2.0, 1.0]).is_err());
    }
}
