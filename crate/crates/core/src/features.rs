//! Reference subtraction, time binning and standardisation of reservoir
//! responses.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::reservoir::ResponseRecord;
use crate::{Error, Real, Result};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_FEATURE_WINDOW: (f64, f64) = (10.0, 25.0);

/// Variance below which a feature is centred but not rescaled.
const MIN_VARIANCE: f64 = 1e-12;
/// Slack, in units of the bin width, when placing samples on bin edges.
const EDGE_SLACK: f64 = 1e-9;

/// Perturbed minus reference occupations, `(n_nodes, n_times)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedSeries<T> {
    pub times: Vec<T>,
    pub values: Array2<T>,
    /// Perturbed and reference errors added in quadrature.
    pub standard_errors: Array2<T>,
}

impl<T: Real> CorrectedSeries<T> {
    /// Wrap a raw signal (no error estimate).
    pub fn from_values(times: Vec<T>, values: Array2<T>) -> Result<Self> {
        if values.ncols() != times.len() {
            return Err(Error::invalid("signal length does not match the time grid"));
        }
        let standard_errors = Array2::zeros(values.raw_dim());
        Ok(Self {
            times,
            values,
            standard_errors,
        })
    }
}

pub fn subtract_reference<T: Real>(
    perturbed: &ResponseRecord<T>,
    reference: &ResponseRecord<T>,
) -> Result<CorrectedSeries<T>> {
    if perturbed.times != reference.times
        || perturbed.occupations.dim() != reference.occupations.dim()
    {
        return Err(Error::invalid(
            "perturbed and reference records have different shapes or time grids",
        ));
    }
    let values = &perturbed.occupations - &reference.occupations;
    let standard_errors = ndarray::Zip::from(&perturbed.standard_errors)
        .and(&reference.standard_errors)
        .map_collect(|&a, &b| (a * a + b * b).sqrt());
    Ok(CorrectedSeries {
        times: perturbed.times.clone(),
        values,
        standard_errors,
    })
}

/// Node-major binned feature vector `[node1 bins.., node2 bins.., ..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector<T> {
    pub values: Vec<T>,
    pub n_nodes: usize,
    pub n_bins: usize,
    pub window: (T, T),
    pub bin_width: T,
}

impl<T: Real> FeatureVector<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, node: usize) -> &[T] {
        &self.values[node * self.n_bins..(node + 1) * self.n_bins]
    }
}

/// Bin index of every time sample, or `None` outside the window. Bins are
/// `[t_k, t_k + dt)`; a sample on `t_end` joins the last bin.
fn bin_assignment<T: Real>(times: &[T], window: (T, T), n_bins: usize) -> Vec<Option<usize>> {
    let width = (window.1 - window.0) / T::from_usize(n_bins).unwrap();
    let slack = T::lit(EDGE_SLACK);
    let k = T::from_usize(n_bins).unwrap();
    times
        .iter()
        .map(|&t| {
            let u = (t - window.0) / width;
            if u < -slack || u > k + slack {
                None
            } else {
                let b = (u + slack).floor().to_usize().unwrap_or(0);
                Some(b.min(n_bins - 1))
            }
        })
        .collect()
}

pub fn bin_features<T: Real>(
    series: &CorrectedSeries<T>,
    window: (T, T),
    n_bins: usize,
) -> Result<FeatureVector<T>> {
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be at least 1"));
    }
    if !(window.0 < window.1) {
        return Err(Error::invalid("feature window must have t_start < t_end"));
    }
    let (first, last) = match (series.times.first(), series.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::invalid("empty time series")),
    };
    let tol = (window.1 - window.0) * T::lit(EDGE_SLACK);
    if window.0 < first - tol || window.1 > last + tol {
        return Err(Error::invalid(
            "feature window extends beyond the recorded times",
        ));
    }
    let assignment = bin_assignment(&series.times, window, n_bins);
    let mut counts = vec![0usize; n_bins];
    for b in assignment.iter().flatten() {
        counts[*b] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!(
            "bin {empty} has no samples; window and bin count are too fine for the time step"
        )));
    }
    let n_nodes = series.values.nrows();
    let mut values = vec![T::zero(); n_nodes * n_bins];
    for (node, row) in series.values.axis_iter(Axis(0)).enumerate() {
        let out = &mut values[node * n_bins..(node + 1) * n_bins];
        for (&v, b) in row.iter().zip(&assignment) {
            if let Some(b) = b {
                out[*b] += v;
            }
        }
        for (o, &c) in out.iter_mut().zip(&counts) {
            *o = *o / T::from_usize(c).unwrap();
        }
    }
    Ok(FeatureVector {
        values,
        n_nodes,
        n_bins,
        window,
        bin_width: (window.1 - window.0) / T::from_usize(n_bins).unwrap(),
    })
}

/// Per-component affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    /// Population standard deviation, or 1 for near-constant components.
    pub scale: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    /// Fit on the rows of `data`.
    pub fn fit_rows(data: &Array2<T>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::invalid(
                "standardiser needs at least two training rows",
            ));
        }
        let n = T::from_usize(data.nrows()).unwrap();
        let mean: Array1<T> = data.sum_axis(Axis(0)) / n;
        let centred = data - &mean;
        let var: Array1<T> = (&centred * &centred).sum_axis(Axis(0)) / n;
        let floor = T::lit(MIN_VARIANCE);
        let scale = var
            .iter()
            .map(|&v| if v < floor { T::one() } else { v.sqrt() })
            .collect();
        Ok(Self {
            mean: mean.to_vec(),
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: ArrayView1<T>) -> Array1<T> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn apply_rows(&self, data: &Array2<T>) -> Array2<T> {
        let mean = ArrayView1::from(&self.mean[..]);
        let scale = ArrayView1::from(&self.scale[..]);
        (data - &mean) / scale
    }

    pub fn invert_rows(&self, data: &Array2<T>) -> Array2<T> {
        let mean = ArrayView1::from(&self.mean[..]);
        let scale = ArrayView1::from(&self.scale[..]);
        data * &scale + mean
    }

    pub fn apply_vector(&self, fv: &FeatureVector<T>) -> Result<FeatureVector<T>> {
        if fv.len() != self.dim() {
            return Err(Error::invalid(format!(
                "feature vector has {} entries, scaler expects {}",
                fv.len(),
                self.dim()
            )));
        }
        Ok(FeatureVector {
            values: self.apply(ArrayView1::from(&fv.values[..])).to_vec(),
            ..fv.clone()
        })
    }
}

/// Stack feature vectors as rows.
pub fn feature_matrix<T: Real>(features: &[FeatureVector<T>]) -> Result<Array2<T>> {
    let dim = features.first().map_or(0, FeatureVector::len);
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::invalid("feature vectors have different lengths"));
    }
    let flat: Vec<T> = features
        .iter()
        .flat_map(|f| f.values.iter().copied())
        .collect();
    Array2::from_shape_vec((features.len(), dim), flat).map_err(|e| Error::invalid(e.to_string()))
}

pub fn fit_standardizer<T: Real>(train: &[FeatureVector<T>]) -> Result<Standardizer<T>> {
    Standardizer::fit_rows(&feature_matrix(train)?)
}

pub fn apply_standardizer<T: Real>(
    scaler: &Standardizer<T>,
    fv: &FeatureVector<T>,
) -> Result<FeatureVector<T>> {
    scaler.apply_vector(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..=n).map(|k| k as f64 * dt).collect()
    }

    fn record(values: Array2<f64>, times: Vec<f64>) -> ResponseRecord<f64> {
        let zeros = Array2::zeros(values.raw_dim());
        ResponseRecord {
            times,
            standard_errors: zeros.clone(),
            imag_occupations: zeros.clone(),
            imag_standard_errors: zeros,
            occupations: values,
            n_trajectories: 1,
            diverged_count: 0,
        }
    }

    #[test]
    fn subtracting_reference() {
        let t = grid(10, 0.1);
        let base = Array2::from_shape_fn((2, 11), |(i, j)| (i * 11 + j) as f64 * 0.01);
        let same = subtract_reference(
            &record(base.clone(), t.clone()),
            &record(base.clone(), t.clone()),
        )
        .unwrap();
        assert!(same.values.iter().all(|&v| v == 0.0));
        let shifted = subtract_reference(
            &record(&base + 0.3, t.clone()),
            &record(base.clone(), t.clone()),
        )
        .unwrap();
        assert!(shifted.values.iter().all(|&v| (v - 0.3).abs() < 1e-12));
        let other = grid(10, 0.2);
        assert!(subtract_reference(&record(base.clone(), t), &record(base, other)).is_err());
    }

    #[test]
    fn constant_signal_bins() {
        let t = grid(100, 0.25);
        let s = CorrectedSeries::from_values(t, Array2::from_elem((2, 101), 0.7)).unwrap();
        for k in [1, 3, 10] {
            let f = bin_features(&s, (0.0, 25.0), k).unwrap();
            assert_eq!(f.len(), 2 * k);
            assert!(f.values.iter().all(|&v| (v - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn ramp_bins_match_brute_force() {
        let t = grid(1000, 0.001);
        let s = CorrectedSeries::from_values(
            t.clone(),
            Array2::from_shape_vec((1, 1001), t.clone()).unwrap(),
        )
        .unwrap();
        let f = bin_features(&s, (0.0, 1.0), 2).unwrap();
        // [0, 0.5) holds 0..=499, [0.5, 1] holds 500..=1000
        let lo: f64 = t[..500].iter().sum::<f64>() / 500.0;
        let hi: f64 = t[500..].iter().sum::<f64>() / 501.0;
        assert!((f.values[0] - lo).abs() < 1e-12 && (f.values[1] - hi).abs() < 1e-12);
        assert!((f.values[0] - 0.25).abs() < 0.001 && (f.values[1] - 0.75).abs() < 0.001);
    }

    #[test]
    fn node_major_ordering() {
        let t = grid(5, 1.0);
        let vals = array![
            [1.0, 1.0, 2.0, 2.0, 3.0, 3.0],
            [4.0, 4.0, 5.0, 5.0, 6.0, 6.0]
        ];
        let s = CorrectedSeries::from_values(t, vals).unwrap();
        let f = bin_features(&s, (0.0, 5.0), 3).unwrap();
        assert_eq!(f.values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(f.node(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn one_bin_per_sample_reproduces_signal() {
        let t: Vec<f64> = (0..=300).map(|k| 10.0 + k as f64 * 0.05).collect();
        let vals =
            Array2::from_shape_fn((2, 301), |(i, j)| ((i + 1) as f64 * j as f64 * 0.37).sin());
        let s = CorrectedSeries::from_values(t, vals.clone()).unwrap();
        // bins slightly narrower than the step, so sample k lands in bin k
        let f = bin_features(&s, (10.0, 25.0), 301).unwrap();
        for node in 0..2 {
            for (k, &v) in f.node(node).iter().enumerate() {
                assert!((v - vals[[node, k]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_bins_are_errors() {
        let t = grid(4, 1.0);
        let s = CorrectedSeries::from_values(t, Array2::zeros((1, 5))).unwrap();
        assert!(bin_features(&s, (0.0, 4.0), 9).is_err());
        assert!(bin_features(&s, (0.0, 8.0), 2).is_err());
        assert!(bin_features(&s, (0.0, 4.0), 0).is_err());
    }

    #[test]
    fn standardizer_cases() {
        let train = array![[0.0, 5.0], [2.0, 5.0]];
        let sc = Standardizer::fit_rows(&train).unwrap();
        assert_eq!(sc.mean, vec![1.0, 5.0]);
        assert_eq!(sc.scale, vec![1.0, 1.0]);
        let z = sc.apply(array![1.0, 6.0].view());
        assert_eq!(z.to_vec(), vec![0.0, 1.0]);
        let x = array![[0.3, -2.0], [1e3, 7.5_f64]];
        let back = sc.invert_rows(&sc.apply_rows(&x));
        assert!((back - &x).iter().all(|v| v.abs() < 1e-12));
        assert!(Standardizer::fit_rows(&array![[1.0, 2.0]]).is_err());
    }
}
