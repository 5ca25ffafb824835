//! Contaminated point clouds and the two-dimensional toy generators.
//!
//! A [`Sample`] is a set of `n` points in `R^d` where a known minority of the
//! points are outliers. Generators draw inliers from an isotropic Gaussian and
//! outliers from one of the anomaly laws in [`ContaminationKind`], with an
//! exact outlier count of `round(tau * n)`.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand_distr::{Cauchy, Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::scalar::Real;

/// Point cloud with inlier/outlier labels. Points are stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    points: Vec<T>,
    d: usize,
    inlier_mask: Vec<bool>,
    tau: f64,
}

impl<T: Real> Sample<T> {
    /// Builds a sample from row-major coordinates and a label per point.
    ///
    /// `tau` is set to the realised outlier fraction.
    pub fn new(points: Vec<T>, d: usize, inlier_mask: Vec<bool>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if points.len() % d != 0 {
            return Err(Error::invalid(format!(
                "{} coordinates cannot be split into points of dimension {d}",
                points.len()
            )));
        }
        let n = points.len() / d;
        if n == 0 {
            return Err(Error::invalid("sample must contain at least one point"));
        }
        if inlier_mask.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: inlier_mask.len() });
        }
        if let Some(pos) = points.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coordinate {} of point {}", pos % d, pos / d)));
        }
        let n_out = inlier_mask.iter().filter(|&&b| !b).count();
        if 2 * n_out >= n {
            return Err(Error::invalid(format!(
                "{n_out} outliers out of {n} points: outliers must be a strict minority"
            )));
        }
        Ok(Sample { points, d, inlier_mask, tau: n_out as f64 / n as f64 })
    }

    /// Sample in which every point is an inlier.
    pub fn clean(points: Vec<T>, d: usize) -> Result<Self> {
        let n = if d == 0 { 0 } else { points.len() / d };
        Self::new(points, d, vec![true; n])
    }

    pub fn n(&self) -> usize {
        self.inlier_mask.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.points.chunks_exact(self.d)
    }

    /// Flat row-major coordinates.
    pub fn coords(&self) -> &[T] {
        &self.points
    }

    pub fn inlier_mask(&self) -> &[bool] {
        &self.inlier_mask
    }

    pub fn n_outliers(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| !b).count()
    }

    /// New sample holding the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut points = Vec::with_capacity(indices.len() * self.d);
        let mut mask = Vec::with_capacity(indices.len());
        for &i in indices {
            points.extend_from_slice(self.point(i));
            mask.push(self.inlier_mask[i]);
        }
        Self::new(points, self.d, mask)
    }

    /// The inlier points only.
    pub fn inliers(&self) -> Result<Self> {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| self.inlier_mask[i]).collect();
        self.select(&idx)
    }

    pub fn mean(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.d];
        for p in self.points() {
            for (a, &v) in acc.iter_mut().zip(p) {
                *a += v;
            }
        }
        let n = T::of_usize(self.n());
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Writes `x0,...,x{d-1},is_inlier` CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (0..self.d).map(|j| format!("x{j}")).collect();
        writeln!(out, "{},is_inlier", header.join(","))?;
        for (p, &inlier) in self.points().zip(&self.inlier_mask) {
            for v in p {
                write!(out, "{:.16e},", v.to_f64_lossy())?;
            }
            writeln!(out, "{}", u8::from(inlier))?;
        }
        Ok(())
    }

    /// Reads the format produced by [`Sample::write_csv`]. The `is_inlier`
    /// column is optional; when absent every point is an inlier.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    let trimmed = line.trim();
                    if !trimmed.is_empty() && !trimmed.starts_with('#') {
                        break line;
                    }
                }
                None => return Err(Error::Parse("empty point file".into())),
            }
        };
        let columns: Vec<&str> = header.split(',').map(str::trim).collect();
        let has_label = columns.last() == Some(&"is_inlier");
        let d = columns.len() - usize::from(has_label);
        for (j, name) in columns[..d].iter().enumerate() {
            if *name != format!("x{j}") {
                return Err(Error::Parse(format!("unexpected column {name:?} at position {j}")));
            }
        }
        let mut points = Vec::new();
        let mut mask = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != columns.len() {
                return Err(Error::Parse(format!(
                    "row {} has {} fields, expected {}",
                    lineno + 2,
                    fields.len(),
                    columns.len()
                )));
            }
            for f in &fields[..d] {
                let v: f64 = f
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: bad number {f:?}", lineno + 2)))?;
                points.push(T::of(v));
            }
            mask.push(if has_label {
                match fields[d] {
                    "1" | "true" => true,
                    "0" | "false" => false,
                    other => {
                        return Err(Error::Parse(format!("row {}: bad label {other:?}", lineno + 2)))
                    }
                }
            } else {
                true
            });
        }
        Self::new(points, d, mask)
    }
}

/// Law of the inlier points: isotropic Gaussian `N(mean, std^2 I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InlierSpec {
    pub mean: Vec<f64>,
    pub std: f64,
    pub n: usize,
}

impl InlierSpec {
    pub fn gaussian(mean: Vec<f64>, n: usize) -> Self {
        InlierSpec { mean, std: 1.0, n }
    }

    pub fn standard(d: usize, n: usize) -> Self {
        Self::gaussian(vec![0.0; d], n)
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContaminationKind {
    None,
    /// Uniform on the box `[low, high]`: isolated outliers.
    IsolatedUniform { low: Vec<f64>, high: Vec<f64> },
    /// Independent standard Cauchy per axis, translated by `shift`:
    /// aggregated heavy-tailed outliers.
    AggregateCauchyShift { shift: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContaminationSpec {
    pub kind: ContaminationKind,
    pub tau: f64,
}

impl ContaminationSpec {
    pub fn none() -> Self {
        ContaminationSpec { kind: ContaminationKind::None, tau: 0.0 }
    }

    /// Uniform outliers on `[-50, 50]^d`.
    pub fn isolated(d: usize, tau: f64) -> Self {
        ContaminationSpec {
            kind: ContaminationKind::IsolatedUniform { low: vec![-50.0; d], high: vec![50.0; d] },
            tau,
        }
    }

    /// Standard Cauchy outliers centred at `(25, ..., 25)`.
    pub fn aggregate(d: usize, tau: f64) -> Self {
        ContaminationSpec {
            kind: ContaminationKind::AggregateCauchyShift { shift: vec![25.0; d] },
            tau,
        }
    }

    pub fn outlier_count(&self, n: usize) -> usize {
        match self.kind {
            ContaminationKind::None => 0,
            _ => (self.tau * n as f64).round() as usize,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if !(0.0..0.5).contains(&self.tau) {
            return Err(Error::invalid(format!("tau = {} must lie in [0, 0.5)", self.tau)));
        }
        match &self.kind {
            ContaminationKind::None => Ok(()),
            ContaminationKind::IsolatedUniform { low, high } => {
                if low.len() != d || high.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: low.len().min(high.len()) });
                }
                if low.iter().zip(high).any(|(l, h)| !(l < h)) {
                    return Err(Error::invalid("uniform box requires low < high on every axis"));
                }
                Ok(())
            }
            ContaminationKind::AggregateCauchyShift { shift } => {
                if shift.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, got: shift.len() });
                }
                Ok(())
            }
        }
    }
}

/// Draws `n - round(tau n)` inliers and `round(tau n)` outliers, then shuffles.
pub fn generate_sample<T: Real>(
    inliers: &InlierSpec,
    contamination: &ContaminationSpec,
    seed: u64,
) -> Result<Sample<T>> {
    let n = inliers.n;
    let d = inliers.d();
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(inliers.std > 0.0 && inliers.std.is_finite()) {
        return Err(Error::invalid("inlier standard deviation must be positive"));
    }
    contamination.validate(d)?;
    let n_out = contamination.outlier_count(n);
    if 2 * n_out >= n {
        return Err(Error::invalid(format!(
            "round(tau * n) = {n_out} outliers is not a strict minority of {n}"
        )));
    }

    let mut rng = rng_from_seed(seed);
    let normal = Normal::new(0.0, inliers.std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rows: Vec<(Vec<f64>, bool)> = Vec::with_capacity(n);
    for _ in 0..n - n_out {
        let p = inliers.mean.iter().map(|&m| m + normal.sample(&mut rng)).collect();
        rows.push((p, true));
    }
    match &contamination.kind {
        ContaminationKind::None => {}
        ContaminationKind::IsolatedUniform { low, high } => {
            let axes: Vec<Uniform<f64>> =
                low.iter().zip(high).map(|(&l, &h)| Uniform::new(l, h)).collect();
            for _ in 0..n_out {
                rows.push((axes.iter().map(|u| u.sample(&mut rng)).collect(), false));
            }
        }
        ContaminationKind::AggregateCauchyShift { shift } => {
            let cauchy = Cauchy::new(0.0, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
            for _ in 0..n_out {
                rows.push((shift.iter().map(|&s| s + cauchy.sample(&mut rng)).collect(), false));
            }
        }
    }
    rows.shuffle(&mut rng);

    let mut points = Vec::with_capacity(n * d);
    let mut mask = Vec::with_capacity(n);
    for (p, inlier) in rows {
        points.extend(p.into_iter().map(T::of));
        mask.push(inlier);
    }
    Sample::new(points, d, mask)
}

/// W1 between `N(0, I_2)` and `N((5, 5), I_2)`, i.e. `sqrt(50)`.
pub fn true_w1_reference() -> f64 {
    gaussian_mean_shift_w1(&[0.0, 0.0], &[5.0, 5.0])
}

/// W1 between two translates of the same law is the norm of the translation.
pub fn gaussian_mean_shift_w1(mean_a: &[f64], mean_b: &[f64]) -> f64 {
    mean_a.iter().zip(mean_b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Which toy dataset of the experiments to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Dataset {
    /// Uniform `[-50, 50]^2` outliers.
    D1,
    /// Cauchy outliers shifted to `(25, 25)`.
    D2,
}

impl Dataset {
    pub fn contamination(self, tau: f64) -> ContaminationSpec {
        match self {
            Dataset::D1 => ContaminationSpec::isolated(2, tau),
            Dataset::D2 => ContaminationSpec::aggregate(2, tau),
        }
    }
}

impl std::str::FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(Dataset::D1),
            "d2" => Ok(Dataset::D2),
            _ => Err(Error::invalid(format!("unknown dataset {s:?} (expected d1 or d2)"))),
        }
    }
}

impl std::fmt::Display for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Dataset::D1 => "D1",
            Dataset::D2 => "D2",
        })
    }
}

/// The pair `(X, Y)`: `X` standard Gaussian with `tau` outliers from the
/// dataset's anomaly law, `Y ~ N((5, 5), I_2)` clean. Only `X` is contaminated.
pub fn toy_pair<T: Real>(dataset: Dataset, n: usize, tau: f64, seed: u64) -> Result<(Sample<T>, Sample<T>)> {
    let contamination = if tau == 0.0 { ContaminationSpec::none() } else { dataset.contamination(tau) };
    let x = generate_sample(&InlierSpec::standard(2, n), &contamination, crate::rng::derive_seed(seed, 1))?;
    let y = generate_sample(
        &InlierSpec::gaussian(vec![5.0, 5.0], n),
        &ContaminationSpec::none(),
        crate::rng::derive_seed(seed, 2),
    )?;
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_gaussian_has_expected_mean() {
        let s: Sample<f64> =
            generate_sample(&InlierSpec::gaussian(vec![5.0, 5.0], 500), &ContaminationSpec::none(), 7).unwrap();
        assert_eq!(s.n(), 500);
        assert!(s.inlier_mask().iter().all(|&b| b));
        let tol = 3.0 / (500f64).sqrt();
        for m in s.mean() {
            assert!((m - 5.0).abs() < tol, "mean {m}");
        }
    }

    #[test]
    fn isolated_uniform_outlier_count() {
        let s: Sample<f64> =
            generate_sample(&InlierSpec::standard(2, 500), &ContaminationSpec::isolated(2, 0.1), 3).unwrap();
        assert_eq!(s.n_outliers(), 50);
        assert_eq!(s.inlier_mask().iter().filter(|&&b| b).count(), 450);
        for (p, &inl) in s.points().zip(s.inlier_mask()) {
            if !inl {
                assert!(p.iter().all(|v| (-50.0..50.0).contains(v)));
            }
        }
    }

    #[test]
    fn cauchy_outliers_cluster_near_shift() {
        // Median of outlier coordinates, pooled over seeds, lies near 25.
        let mut inside = 0;
        for seed in 0..20 {
            let s: Sample<f64> =
                generate_sample(&InlierSpec::standard(2, 500), &ContaminationSpec::aggregate(2, 0.04), seed)
                    .unwrap();
            assert_eq!(s.n_outliers(), 20);
            for axis in 0..2 {
                let mut v: Vec<f64> = s
                    .points()
                    .zip(s.inlier_mask())
                    .filter(|(_, &inl)| !inl)
                    .map(|(p, _)| p[axis])
                    .collect();
                v.sort_by(f64::total_cmp);
                let med = (v[9] + v[10]) / 2.0;
                if (15.0..=35.0).contains(&med) {
                    inside += 1;
                }
            }
        }
        assert_eq!(inside, 40);
    }

    #[test]
    fn outliers_are_shuffled_among_inliers() {
        let s: Sample<f64> =
            generate_sample(&InlierSpec::standard(2, 500), &ContaminationSpec::isolated(2, 0.1), 11).unwrap();
        let tail_outliers = s.inlier_mask()[450..].iter().filter(|&&b| !b).count();
        assert!(tail_outliers < 50);
    }

    #[test]
    fn generation_is_reproducible() {
        let spec = ContaminationSpec::aggregate(2, 0.2);
        let a: Sample<f64> = generate_sample(&InlierSpec::standard(2, 100), &spec, 42).unwrap();
        let b: Sample<f64> = generate_sample(&InlierSpec::standard(2, 100), &spec, 42).unwrap();
        let c: Sample<f64> = generate_sample(&InlierSpec::standard(2, 100), &spec, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_invalid_specs() {
        let inl = InlierSpec::standard(2, 10);
        assert!(generate_sample::<f64>(&inl, &ContaminationSpec::isolated(2, 0.5), 0).is_err());
        assert!(generate_sample::<f64>(&InlierSpec::standard(2, 0), &ContaminationSpec::none(), 0).is_err());
        let bad_box = ContaminationSpec {
            kind: ContaminationKind::IsolatedUniform { low: vec![1.0, 0.0], high: vec![0.0, 1.0] },
            tau: 0.1,
        };
        assert!(generate_sample::<f64>(&inl, &bad_box, 0).is_err());
        // round(0.45 * 10) = 5 is not a strict minority of 10
        assert!(generate_sample::<f64>(&inl, &ContaminationSpec::isolated(2, 0.45), 0).is_err());
    }

    #[test]
    fn sample_invariants_enforced() {
        assert!(Sample::<f64>::new(vec![1.0, 2.0, 3.0], 2, vec![true]).is_err());
        assert!(Sample::<f64>::new(vec![1.0, f64::NAN], 2, vec![true]).is_err());
        assert!(Sample::<f64>::new(vec![1.0, 2.0], 1, vec![false, true]).is_err());
        assert!(Sample::<f64>::new(vec![], 2, vec![]).is_err());
    }

    #[test]
    fn reference_values() {
        assert!((true_w1_reference() - 50f64.sqrt()).abs() < 1e-15);
        assert_eq!(gaussian_mean_shift_w1(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(gaussian_mean_shift_w1(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s: Sample<f64> =
            generate_sample(&InlierSpec::standard(3, 40), &ContaminationSpec::aggregate(3, 0.1), 5).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x0,x1,x2,is_inlier\n"));
        let back = Sample::<f64>::read_csv(&buf[..]).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn csv_without_labels_is_all_inliers() {
        let back = Sample::<f64>::read_csv("x0,x1\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(back.n(), 2);
        assert_eq!(back.n_outliers(), 0);
        assert!(Sample::<f64>::read_csv("a,b\n1,2\n".as_bytes()).is_err());
        assert!(Sample::<f64>::read_csv("".as_bytes()).is_err());
    }
}
