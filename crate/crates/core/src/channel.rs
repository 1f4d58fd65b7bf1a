//! Spatial correlation across the ports, its truncated eigen-spectrum, and
//! the distribution of the best-port SNR over the retained modes.
//!
//! The post-selection SNR is modelled as the maximum of `M` independent
//! exponential modes with means `gbar * lambda_n`. Its CDF is the product
//! `prod_n (1 - exp(-x / (gbar lambda_n)))`; expanding the product gives a
//! signed sum of exponentials over all non-empty subsets of modes, each with
//! aggregate decay rate `xi_s = sum_{j in s} 1 / lambda_j`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{bessel_j0, NeumaierSum};

/// Largest rank for which the subset table may be enumerated (2^24 - 1 rows).
pub const MAX_RANK: usize = 24;

const CLAMP_TOL: f64 = 1e-10;
const NEGATIVE_TOL: f64 = 1e-6;

/// Geometry and truncation rule for the port covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub n_ports: usize,
    /// Aperture length in wavelengths.
    pub aperture: f64,
    /// Large-scale fading power per port.
    pub sigma2: f64,
    pub energy_fraction: f64,
    pub rank_cap: usize,
}

impl CorrelationSpec {
    pub fn new(n_ports: usize, aperture: f64) -> Result<Self> {
        let spec = Self {
            n_ports,
            aperture,
            sigma2: 1.0,
            energy_fraction: 0.99,
            rank_cap: 20,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_sigma2(mut self, sigma2: f64) -> Result<Self> {
        self.sigma2 = sigma2;
        self.validate().map(|_| self)
    }

    pub fn with_energy_fraction(mut self, fraction: f64) -> Result<Self> {
        self.energy_fraction = fraction;
        self.validate().map(|_| self)
    }

    pub fn with_rank_cap(mut self, cap: usize) -> Result<Self> {
        self.rank_cap = cap;
        self.validate().map(|_| self)
    }

    /// Same geometry with a different number of ports.
    pub fn with_ports(mut self, n_ports: usize) -> Result<Self> {
        self.n_ports = n_ports;
        self.validate().map(|_| self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_ports < 1 {
            return bad("n_ports must be at least 1".into());
        }
        if !(self.aperture > 0.0 && self.aperture.is_finite()) {
            return bad(format!("aperture must be positive, got {}", self.aperture));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            return bad(format!(
                "energy_fraction must lie in (0, 1], got {}",
                self.energy_fraction
            ));
        }
        if !(1..=MAX_RANK).contains(&self.rank_cap) {
            return bad(format!(
                "rank_cap must lie in [1, {MAX_RANK}], got {}",
                self.rank_cap
            ));
        }
        Ok(())
    }
}

/// Jakes covariance: `sigma2 * J0(2 pi |m - n| W / (N - 1))`.
pub fn build_covariance(spec: &CorrelationSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let n = spec.n_ports;
    if n == 1 {
        return Ok(DMatrix::from_element(1, 1, spec.sigma2));
    }
    let step = 2.0 * PI * spec.aperture / (n - 1) as f64;
    // Toeplitz: one Bessel evaluation per lag
    let lags = (0..n)
        .map(|d| bessel_j0(step * d as f64).map(|v| spec.sigma2 * v))
        .collect::<Result<Vec<_>>>()?;
    let mut j = DMatrix::from_fn(n, n, |r, c| lags[r.abs_diff(c)]);
    for i in 0..n {
        j[(i, i)] = spec.sigma2;
    }
    Ok(j)
}

/// One row of the inclusion–exclusion table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetRate {
    /// `(-1)^(|s|+1)`.
    pub sign: f64,
    /// Aggregate decay rate `sum_{j in s} 1 / lambda_j`.
    pub xi: f64,
}

/// Truncated eigen-spectrum and its subset table; immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralChannel {
    eigenvalues: Vec<f64>,
    total_energy: f64,
    port_power: f64,
    subsets: Vec<SubsetRate>,
    truncation_shortfall: bool,
}

impl SpectralChannel {
    /// Builds a channel directly from retained eigenvalues, e.g. for
    /// synthetic spectra. `port_power` is the per-port fading power of the
    /// single-port reference link.
    pub fn from_eigenvalues(eigenvalues: &[f64], port_power: f64) -> Result<Self> {
        let total: f64 = eigenvalues.iter().sum();
        Self::assemble(eigenvalues.to_vec(), total, port_power, false)
    }

    fn assemble(
        mut eigenvalues: Vec<f64>,
        total_energy: f64,
        port_power: f64,
        truncation_shortfall: bool,
    ) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Model("no positive eigenvalues retained".into()));
        }
        if eigenvalues.len() > MAX_RANK {
            return Err(Error::InvalidConfig(format!(
                "rank {} exceeds the enumeration limit {MAX_RANK}",
                eigenvalues.len()
            )));
        }
        if let Some(bad) = eigenvalues.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Domain(format!(
                "eigenvalue {bad} is not positive and finite"
            )));
        }
        if !(port_power > 0.0 && port_power.is_finite()) {
            return Err(Error::Domain(format!(
                "port power {port_power} must be positive"
            )));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let subsets = subset_table(&eigenvalues);
        Ok(Self {
            eigenvalues,
            total_energy,
            port_power,
            subsets,
            truncation_shortfall,
        })
    }

    /// Retained eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Effective rank M (the diversity order).
    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Trace of the full covariance, `N sigma2`.
    pub fn total_energy(&self) -> f64 {
        self.total_energy
    }

    pub fn port_power(&self) -> f64 {
        self.port_power
    }

    pub fn subsets(&self) -> &[SubsetRate] {
        &self.subsets
    }

    /// Set when `rank_cap` stopped truncation before the energy target.
    pub fn truncation_shortfall(&self) -> bool {
        self.truncation_shortfall
    }

    /// Geometric mean of the retained eigenvalues.
    pub fn array_gain(&self) -> f64 {
        let m = self.rank() as f64;
        (self.eigenvalues.iter().map(|l| l.ln()).sum::<f64>() / m).exp()
    }

    /// CDF of the best-port SNR, product form.
    pub fn cdf(&self, gbar: f64, x: f64) -> Result<f64> {
        check_gbar(gbar)?;
        if !(x >= 0.0) {
            return Err(Error::Domain(format!(
                "snr_cdf: x = {x} must be nonnegative"
            )));
        }
        Ok(product_cdf(&self.eigenvalues, gbar, x))
    }

    /// CDF through the inclusion–exclusion expansion. Equal to [`cdf`] in
    /// exact arithmetic; kept for cross-checking.
    ///
    /// [`cdf`]: SpectralChannel::cdf
    pub fn cdf_expansion(&self, gbar: f64, x: f64) -> Result<f64> {
        check_gbar(gbar)?;
        if !(x >= 0.0) {
            return Err(Error::Domain(format!(
                "snr_cdf: x = {x} must be nonnegative"
            )));
        }
        let mut acc = NeumaierSum::new();
        acc.add(1.0);
        for s in &self.subsets {
            acc.add(-s.sign * (-s.xi * x / gbar).exp());
        }
        Ok(acc.value())
    }

    /// PDF of the best-port SNR.
    ///
    /// Evaluated as the derivative of the product form,
    /// `sum_n c_n e^{-c_n x} prod_{m != n} (1 - e^{-c_m x})`, whose terms are
    /// all nonnegative. This equals the subset expansion exactly but keeps
    /// full relative accuracy where the density is tiny.
    pub fn pdf(&self, gbar: f64, x: f64) -> Result<f64> {
        check_gbar(gbar)?;
        if !(x >= 0.0) {
            return Err(Error::Domain(format!(
                "snr_pdf: x = {x} must be nonnegative"
            )));
        }
        Ok(product_pdf(&self.eigenvalues, gbar, x))
    }

    /// PDF through the subset expansion with compensated summation.
    pub fn pdf_expansion(&self, gbar: f64, x: f64) -> Result<f64> {
        check_gbar(gbar)?;
        if !(x >= 0.0) {
            return Err(Error::Domain(format!(
                "snr_pdf: x = {x} must be nonnegative"
            )));
        }
        let mut acc = NeumaierSum::new();
        for s in &self.subsets {
            let rate = s.xi / gbar;
            acc.add(s.sign * rate * (-rate * x).exp());
        }
        let v = acc.value();
        Ok(if v < 0.0 && v > -1e-12 { 0.0 } else { v })
    }

    /// Mean best-port SNR, `gbar * sum sign / xi`.
    pub fn mean(&self, gbar: f64) -> Result<f64> {
        check_gbar(gbar)?;
        let mut acc = NeumaierSum::new();
        for s in &self.subsets {
            acc.add(s.sign / s.xi);
        }
        Ok(gbar * acc.value())
    }
}

pub(crate) fn check_gbar(gbar: f64) -> Result<()> {
    if gbar > 0.0 && gbar.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "average SNR {gbar} must be positive and finite"
        )))
    }
}

#[inline]
pub(crate) fn product_cdf(eigenvalues: &[f64], gbar: f64, x: f64) -> f64 {
    eigenvalues
        .iter()
        .map(|l| -(-x / (gbar * l)).exp_m1())
        .product()
}

pub(crate) fn product_pdf(eigenvalues: &[f64], gbar: f64, x: f64) -> f64 {
    let m = eigenvalues.len();
    let mut factors = [0.0f64; MAX_RANK];
    let mut densities = [0.0f64; MAX_RANK];
    for (i, l) in eigenvalues.iter().enumerate() {
        let c = 1.0 / (gbar * l);
        let e = (-c * x).exp();
        factors[i] = -(-c * x).exp_m1();
        densities[i] = c * e;
    }
    // prefix/suffix products of the CDF factors
    let mut prefix = [1.0f64; MAX_RANK + 1];
    for i in 0..m {
        prefix[i + 1] = prefix[i] * factors[i];
    }
    let mut suffix = 1.0;
    let mut total = 0.0;
    for i in (0..m).rev() {
        total += densities[i] * prefix[i] * suffix;
        suffix *= factors[i];
    }
    total
}

fn subset_table(eigenvalues: &[f64]) -> Vec<SubsetRate> {
    let m = eigenvalues.len();
    let inv: Vec<f64> = eigenvalues.iter().map(|l| 1.0 / l).collect();
    let count = (1usize << m) - 1;
    let mut xi = vec![0.0f64; count + 1];
    let mut table = Vec::with_capacity(count);
    for mask in 1..=count {
        let low = mask.trailing_zeros() as usize;
        xi[mask] = xi[mask & (mask - 1)] + inv[low];
        let sign = if mask.count_ones() % 2 == 1 {
            1.0
        } else {
            -1.0
        };
        table.push(SubsetRate { sign, xi: xi[mask] });
    }
    table
}

/// Full (untruncated) spectrum of the covariance, with eigenvectors when
/// physical-mode sampling needs them.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalChannel {
    /// All N eigenvalues, descending, small negatives clamped to zero.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `eigenvalues`.
    pub eigenvectors: Option<DMatrix<f64>>,
}

/// Eigen-decomposes `j` and truncates the spectrum per `spec`.
pub fn spectral_decompose(
    j: &DMatrix<f64>,
    spec: &CorrelationSpec,
) -> Result<(SpectralChannel, PhysicalChannel)> {
    spec.validate()?;
    check_square(j, spec)?;
    let eig = SymmetricEigen::try_new(j.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let n = j.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let raw: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }

    let norm = j.norm();
    for (k, &lambda) in raw.iter().enumerate() {
        let v = vectors.column(k);
        let residual = (j * v - v * lambda).norm();
        if residual > 1e-9 * norm.max(spec.sigma2) {
            return Err(Error::Numerical(format!(
                "eigenpair {k} residual {residual:e} exceeds tolerance"
            )));
        }
    }

    let full = clamp_spectrum(raw, spec.sigma2)?;
    let spectral = truncate(&full, spec)?;
    Ok((
        spectral,
        PhysicalChannel {
            eigenvalues: full,
            eigenvectors: Some(vectors),
        },
    ))
}

/// Eigenvalue-only path: builds the covariance and returns the truncated
/// spectral channel.
pub fn spectral_channel(spec: &CorrelationSpec) -> Result<SpectralChannel> {
    let j = build_covariance(spec)?;
    let mut values: Vec<f64> = j.symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "symmetric eigensolver produced non-finite values".into(),
        ));
    }
    values.sort_by(|a, b| b.total_cmp(a));
    let full = clamp_spectrum(values, spec.sigma2)?;
    truncate(&full, spec)
}

fn check_square(j: &DMatrix<f64>, spec: &CorrelationSpec) -> Result<()> {
    if j.nrows() != j.ncols() || j.nrows() != spec.n_ports {
        return Err(Error::InvalidConfig(format!(
            "covariance is {}x{}, expected {}x{}",
            j.nrows(),
            j.ncols(),
            spec.n_ports,
            spec.n_ports
        )));
    }
    if j.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("covariance has non-finite entries".into()));
    }
    Ok(())
}

fn clamp_spectrum(mut values: Vec<f64>, sigma2: f64) -> Result<Vec<f64>> {
    for v in values.iter_mut() {
        if *v < -NEGATIVE_TOL * sigma2 {
            return Err(Error::Model(format!(
                "covariance has eigenvalue {v:e}; it must be positive semi-definite"
            )));
        }
        if *v < CLAMP_TOL * sigma2 && *v <= 0.0 {
            *v = 0.0;
        }
    }
    Ok(values)
}

fn truncate(full: &[f64], spec: &CorrelationSpec) -> Result<SpectralChannel> {
    let trace = spec.n_ports as f64 * spec.sigma2;
    let target = spec.energy_fraction * trace * (1.0 - 1e-12);
    let mut kept = Vec::new();
    let mut acc = 0.0;
    for &v in full.iter().filter(|v| **v > 0.0) {
        if acc >= target || kept.len() == spec.rank_cap {
            break;
        }
        kept.push(v);
        acc += v;
    }
    let shortfall = acc < target;
    SpectralChannel::assemble(kept, trace, spec.sigma2, shortfall)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ch(eigs: &[f64]) -> SpectralChannel {
        SpectralChannel::from_eigenvalues(eigs, 1.0).unwrap()
    }

    #[test]
    fn covariance_entries() {
        let spec = CorrelationSpec::new(2, 0.7).unwrap();
        let j = build_covariance(&spec).unwrap();
        assert_eq!(j[(0, 0)], 1.0);
        assert_eq!(j[(1, 1)], 1.0);
        assert_eq!(j[(0, 1)], bessel_j0(2.0 * PI * 0.7).unwrap());

        let spec = CorrelationSpec::new(1, 3.0)
            .unwrap()
            .with_sigma2(2.5)
            .unwrap();
        let j = build_covariance(&spec).unwrap();
        assert_eq!(j.shape(), (1, 1));
        assert_eq!(j[(0, 0)], 2.5);

        let spec = CorrelationSpec::new(5, 0.5).unwrap();
        let j = build_covariance(&spec).unwrap();
        assert!((j[(0, 2)] - 0.472_001_215_768_235_5).abs() < 1e-12);
        assert_eq!(j, j.transpose());
    }

    #[test]
    fn spec_validation() {
        assert!(CorrelationSpec::new(0, 1.0).is_err());
        assert!(CorrelationSpec::new(3, 0.0).is_err());
        assert!(CorrelationSpec::new(3, -1.0).is_err());
        let s = CorrelationSpec::new(3, 1.0).unwrap();
        assert!(s.with_sigma2(0.0).is_err());
        assert!(s.with_energy_fraction(0.0).is_err());
        assert!(s.with_energy_fraction(1.2).is_err());
        assert!(s.with_rank_cap(0).is_err());
        assert!(s.with_rank_cap(25).is_err());
    }

    #[test]
    fn scalar_decomposition() {
        let spec = CorrelationSpec::new(1, 1.0)
            .unwrap()
            .with_sigma2(2.0)
            .unwrap();
        let j = build_covariance(&spec).unwrap();
        let (sc, pc) = spectral_decompose(&j, &spec).unwrap();
        assert_eq!(sc.eigenvalues(), &[2.0]);
        assert_eq!(sc.subsets(), &[SubsetRate { sign: 1.0, xi: 0.5 }]);
        assert_eq!(pc.eigenvalues, vec![2.0]);
    }

    #[test]
    fn two_port_eigenvalues() {
        let spec = CorrelationSpec::new(2, 0.3)
            .unwrap()
            .with_energy_fraction(1.0)
            .unwrap();
        let rho = bessel_j0(2.0 * PI * 0.3).unwrap();
        let j = build_covariance(&spec).unwrap();
        let (_, pc) = spectral_decompose(&j, &spec).unwrap();
        assert!((pc.eigenvalues[0] - (1.0 + rho.abs())).abs() < 1e-12);
        assert!((pc.eigenvalues[1] - (1.0 - rho.abs())).abs() < 1e-12);
    }

    #[test]
    fn subset_table_shape() {
        let c = ch(&[0.5, 2.0, 1.0]);
        assert_eq!(c.eigenvalues(), &[2.0, 1.0, 0.5]);
        assert_eq!(c.subsets().len(), 7);
        let min_xi = c
            .subsets()
            .iter()
            .map(|s| s.xi)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min_xi, 0.5);
        let sign_sum: f64 = c.subsets().iter().map(|s| s.sign).sum();
        assert_eq!(sign_sum, 1.0);
    }

    #[test]
    fn cdf_pdf_fixed_values() {
        let c = ch(&[1.0]);
        assert_eq!(c.cdf(1.0, 0.0).unwrap(), 0.0);
        assert!((c.cdf(1.0, 2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        assert!((c.pdf(1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(c.cdf(1.0, -1.0).is_err());
        assert!(c.pdf(1.0, -1.0).is_err());
        assert!(c.cdf(0.0, 1.0).is_err());

        let c = ch(&[1.0, 1.0]);
        let e = (-1f64).exp();
        assert!((c.pdf(1.0, 1.0).unwrap() - 2.0 * e * (1.0 - e)).abs() < 1e-15);
        assert!((c.pdf_expansion(1.0, 1.0).unwrap() - 2.0 * e * (1.0 - e)).abs() < 1e-15);
    }

    #[test]
    fn means() {
        assert!((ch(&[1.0]).mean(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((ch(&[1.0, 1.0]).mean(1.0).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_spectra() {
        assert!(SpectralChannel::from_eigenvalues(&[], 1.0).is_err());
        assert!(SpectralChannel::from_eigenvalues(&[1.0, 0.0], 1.0).is_err());
        assert!(SpectralChannel::from_eigenvalues(&[1.0; 25], 1.0).is_err());
    }

    #[test]
    fn indefinite_matrix_is_a_model_error() {
        let spec = CorrelationSpec::new(2, 1.0).unwrap();
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            spectral_decompose(&j, &spec),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn rank_cap_sets_shortfall() {
        let spec = CorrelationSpec::new(40, 5.0)
            .unwrap()
            .with_energy_fraction(1.0)
            .unwrap()
            .with_rank_cap(4)
            .unwrap();
        let c = spectral_channel(&spec).unwrap();
        assert_eq!(c.rank(), 4);
        assert!(c.truncation_shortfall());
    }
}
