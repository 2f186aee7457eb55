//! Field sampling and shape classification of solution records: ranges,
//! sign structure, local maxima and spike widths. Used by the exports and
//! by qualitative checks of computed solutions.

use nalgebra::DMatrix;

use super::IoError;
use crate::aobd::SolutionRecord;
use crate::galerkin::DiscreteProblem;

/// A field evaluated on an `nr x ntheta` tensor grid over the reference
/// disk, `r` rows from 0 to 1 inclusive, `theta` columns equispaced.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub values: DMatrix<f64>,
    pub rs: Vec<f64>,
    pub thetas: Vec<f64>,
}

pub fn sample_field(
    dp: &DiscreteProblem,
    xi: &nalgebra::DVector<f64>,
    nr: usize,
    ntheta: usize,
) -> Result<FieldSample, IoError> {
    assert!(nr >= 2 && ntheta >= 4);
    let rs: Vec<f64> = (0..nr).map(|i| i as f64 / (nr - 1) as f64).collect();
    let thetas: Vec<f64> = (0..ntheta)
        .map(|s| 2.0 * std::f64::consts::PI * s as f64 / ntheta as f64)
        .collect();
    let mut grid = Vec::with_capacity(nr * ntheta);
    for &r in &rs {
        for &th in &thetas {
            grid.push((r, th));
        }
    }
    let vals = dp.evaluate_field(xi, &grid)?;
    let mut values = DMatrix::zeros(nr, ntheta);
    for (k, v) in vals.into_iter().enumerate() {
        values[(k / ntheta, k % ntheta)] = v;
    }
    Ok(FieldSample { values, rs, thetas })
}

impl FieldSample {
    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_constant(&self, tol: f64) -> bool {
        let lo = self.min();
        let hi = self.max();
        hi - lo <= tol * hi.abs().max(lo.abs()).max(1.0)
    }

    /// No sign change beyond `tol` anywhere on the grid.
    pub fn single_signed(&self, tol: f64) -> bool {
        self.min() >= -tol || self.max() <= tol
    }

    /// Strict local extrema of the field over the interior grid (both
    /// maxima of `u` and of `-u`), with the periodic theta topology and the
    /// center treated as a single point.
    pub fn peaks(&self) -> Vec<Peak> {
        let nr = self.rs.len();
        let nth = self.thetas.len();
        let mut out = Vec::new();

        // center: all nodes of row 0 carry the same value
        let c = self.values[(0, 0)];
        let ring: Vec<f64> = (0..nth).map(|s| self.values[(1, s)]).collect();
        if ring.iter().all(|&v| c > v) {
            out.push(Peak { r: 0.0, theta: 0.0, value: c, sign: 1.0 });
        }
        if ring.iter().all(|&v| c < v) {
            out.push(Peak { r: 0.0, theta: 0.0, value: c, sign: -1.0 });
        }

        for i in 1..nr - 1 {
            for s in 0..nth {
                let v = self.values[(i, s)];
                let mut is_max = true;
                let mut is_min = true;
                for di in -1i64..=1 {
                    for ds in -1i64..=1 {
                        if di == 0 && ds == 0 {
                            continue;
                        }
                        let ri = (i as i64 + di) as usize;
                        let si = (s as i64 + ds).rem_euclid(nth as i64) as usize;
                        let w = self.values[(ri, si)];
                        if w >= v {
                            is_max = false;
                        }
                        if w <= v {
                            is_min = false;
                        }
                    }
                }
                if is_max {
                    out.push(Peak {
                        r: self.rs[i],
                        theta: self.thetas[s],
                        value: v,
                        sign: 1.0,
                    });
                }
                if is_min {
                    out.push(Peak {
                        r: self.rs[i],
                        theta: self.thetas[s],
                        value: v,
                        sign: -1.0,
                    });
                }
            }
        }
        out
    }

    /// Extrema that matter for spike analysis: magnitude at least
    /// `frac` times the global magnitude.
    pub fn significant_peaks(&self, frac: f64) -> Vec<Peak> {
        let scale = self.max().abs().max(self.min().abs());
        self.peaks()
            .into_iter()
            .filter(|p| p.value.abs() >= frac * scale)
            .collect()
    }

    /// Largest radius where the axisymmetric profile along `theta = 0`
    /// still exceeds half the center value; the spike half-width of a
    /// center-peaked field.
    pub fn half_height_radius(&self) -> Option<f64> {
        let c = self.values[(0, 0)];
        if c.abs() < 1e-12 {
            return None;
        }
        let half = 0.5 * c;
        let nr = self.rs.len();
        for i in 1..nr {
            let v = self.values[(i, 0)];
            let crossed = if c > 0.0 { v <= half } else { v >= half };
            if crossed {
                let v0 = self.values[(i - 1, 0)];
                let t = (half - v0) / (v - v0);
                return Some(self.rs[i - 1] + t * (self.rs[i] - self.rs[i - 1]));
            }
        }
        None
    }
}

/// A strict local extremum of the sampled field.
#[derive(Debug, Clone, Copy)]
pub struct Peak {
    pub r: f64,
    pub theta: f64,
    pub value: f64,
    /// `+1` for a maximum of `u`, `-1` for a minimum.
    pub sign: f64,
}

impl Peak {
    /// Peaks sitting in the outer half of the radius are treated as
    /// boundary peaks for spike-location analysis.
    pub fn is_boundary(&self) -> bool {
        self.r >= 0.5
    }
}

/// Reference record for relative-energy exports: the lowest-|J| record
/// whose field does not change sign (the usual type-I ground state).
pub fn pick_reference_record(
    dp: &DiscreteProblem,
    records: &[SolutionRecord],
) -> Result<Option<usize>, IoError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, rec) in records.iter().enumerate() {
        let sample = sample_field(dp, rec.xi.as_vector(), 33, 64)?;
        let scale = sample.max().abs().max(sample.min().abs());
        if !sample.single_signed(1e-6 * scale.max(1.0)) {
            continue;
        }
        if sample.is_constant(1e-6) {
            continue;
        }
        match best {
            Some((_, j)) if rec.j_value.abs() >= j => {}
            _ => best = Some((i, rec.j_value.abs())),
        }
    }
    Ok(best.map(|(i, _)| i))
}

/// Group records into shape classes that are blind to sign flips and
/// rotations: the key is `(|J|, ||u||_inf, ||xi||_2)` within relative
/// tolerance. Returns one representative index per class.
pub fn shape_classes(
    dp: &DiscreteProblem,
    records: &[SolutionRecord],
    rel_tol: f64,
) -> Result<Vec<Vec<usize>>, IoError> {
    let mut keys: Vec<(f64, f64, f64)> = Vec::new();
    for rec in records {
        let sample = sample_field(dp, rec.xi.as_vector(), 33, 64)?;
        let sup = sample.max().abs().max(sample.min().abs());
        keys.push((rec.j_value.abs(), sup, rec.xi.as_vector().norm()));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(1e-12);
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (i, key) in keys.iter().enumerate() {
        let mut placed = false;
        for class in classes.iter_mut() {
            let k = &keys[class[0]];
            if close(key.0, k.0) && close(key.1, k.1) && close(key.2, k.2) {
                class.push(i);
                placed = true;
                break;
            }
        }
        if !placed {
            classes.push(vec![i]);
        }
    }
    Ok(classes)
}
