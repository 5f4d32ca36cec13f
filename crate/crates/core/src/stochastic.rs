//! Random injection models and their samplers.
//!
//! Two families are supported for the stochastic injections `P`:
//!
//! * Gaussian `N(mu, Sigma)`.
//! * Independent Laplace marginals with location `mu_i` and scale
//!   `epsilon * alpha_i`, sampled as `mu_i + epsilon * alpha_i * (E1 - E2)`
//!   with `E1, E2` iid standard exponential. The variance is
//!   `2 (epsilon alpha_i)^2`.
//!
//! Samplers consume their stream row by row, so the first `n` rows of a
//! sample of size `N > n` equal a sample of size `n` from the same stream.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use sha2::{Digest, Sha256};

use crate::dc_model::DcModel;
use crate::error::{Error, Result};
use crate::rng::{StreamKey, TAG_COVARIANCE, TAG_INJECTIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpecKind {
    Gaussian,
    Laplace,
}

impl SpecKind {
    pub fn name(self) -> &'static str {
        match self {
            SpecKind::Gaussian => "gaussian",
            SpecKind::Laplace => "laplace",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianSpec {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                actual: covariance.nrows(),
                context: "covariance must be d x d",
            });
        }
        let asymmetry = (&covariance - covariance.transpose()).amax();
        if asymmetry > 1e-12 * covariance.amax().max(1.0) {
            return Err(Error::Spec(format!("covariance is not symmetric ({asymmetry:e})")));
        }
        let factor = Cholesky::new(covariance.clone())
            .ok_or_else(|| Error::Spec("covariance is not positive definite".into()))?
            .unpack();
        Ok(GaussianSpec {
            mean,
            covariance,
            factor,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone)]
pub struct LaplaceSpec {
    mean: DVector<f64>,
    scale: DVector<f64>,
    epsilon: f64,
}

impl LaplaceSpec {
    pub fn new(mean: DVector<f64>, scale: DVector<f64>, epsilon: f64) -> Result<Self> {
        if scale.len() != mean.len() {
            return Err(Error::Dimension {
                expected: mean.len(),
                actual: scale.len(),
                context: "Laplace scale vector",
            });
        }
        if let Some(bad) = scale.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::Spec(format!("Laplace scale must be positive, got {bad}")));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Spec(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(LaplaceSpec {
            mean,
            scale,
            epsilon,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The scales `alpha`, before multiplying by `epsilon`.
    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `Var(P_i) = 2 (epsilon alpha_i)^2`.
    pub fn variances(&self) -> DVector<f64> {
        self.scale.map(|a| 2.0 * (self.epsilon * a).powi(2))
    }
}

/// Either injection model.
#[derive(Debug, Clone)]
pub enum InjectionSpec {
    Gaussian(GaussianSpec),
    Laplace(LaplaceSpec),
}

impl InjectionSpec {
    pub fn kind(&self) -> SpecKind {
        match self {
            InjectionSpec::Gaussian(_) => SpecKind::Gaussian,
            InjectionSpec::Laplace(_) => SpecKind::Laplace,
        }
    }

    pub fn mean(&self) -> &DVector<f64> {
        match self {
            InjectionSpec::Gaussian(g) => g.mean(),
            InjectionSpec::Laplace(l) => l.mean(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean().len()
    }

    pub fn sample(&self, n: usize, key: StreamKey<'_>) -> Result<SampleSet> {
        match self {
            InjectionSpec::Gaussian(g) => sample_gaussian_stream(g, n, key),
            InjectionSpec::Laplace(l) => sample_laplace_stream(l, n, key),
        }
    }
}

/// A covariance matrix together with the ridge that was added, if any, to
/// make it positive definite.
#[derive(Debug, Clone)]
pub struct CovarianceBuild {
    pub covariance: DMatrix<f64>,
    pub ridge: Option<f64>,
}

/// Covariance of the case-study injection model, in p.u.^2.
///
/// The diagonal is `variance_factor * |nominal_mw_i|` (MW^2). Off-diagonal
/// entries are copied from `A A^T`, where `A` is `d x d` with iid
/// `N(0, offdiag_variance)` entries drawn row-major from the
/// `(seed, "covariance", 0)` stream. Everything is divided by `base_mva^2`.
/// If the result is not positive definite, the smallest ridge `tau * I` with
/// `tau` in `1e-8, 1e-7, ...` (p.u.^2) that makes it so is added.
pub fn paper_covariance(
    nominal_mw: &[f64],
    variance_factor: f64,
    offdiag_variance: f64,
    base_mva: f64,
    seed: u64,
) -> Result<CovarianceBuild> {
    if !(offdiag_variance >= 0.0) || !(variance_factor >= 0.0) {
        return Err(Error::Spec(format!(
            "variances must be non-negative (factor {variance_factor}, off-diagonal {offdiag_variance})"
        )));
    }
    if !(base_mva > 0.0) {
        return Err(Error::Spec(format!("base MVA must be positive, got {base_mva}")));
    }
    let d = nominal_mw.len();
    let sd = offdiag_variance.sqrt();
    let mut rng = StreamKey::new(seed, TAG_COVARIANCE, 0).rng();
    let a = DMatrix::from_row_iterator(
        d,
        d,
        (0..d * d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)),
    );
    let aat = &a * a.transpose();

    let scale = base_mva * base_mva;
    let mut sigma = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            variance_factor * nominal_mw[i].abs() / scale
        } else {
            0.5 * (aat[(i, j)] + aat[(j, i)]) / scale
        }
    });

    if Cholesky::new(sigma.clone()).is_some() {
        return Ok(CovarianceBuild {
            covariance: sigma,
            ridge: None,
        });
    }
    for exponent in -8..=4 {
        let tau = 10f64.powi(exponent);
        let candidate = &sigma + DMatrix::identity(d, d) * tau;
        if Cholesky::new(candidate.clone()).is_some() {
            sigma = candidate;
            return Ok(CovarianceBuild {
                covariance: sigma,
                ridge: Some(tau),
            });
        }
    }
    Err(Error::Spec(
        "covariance could not be repaired to positive definite".into(),
    ))
}

/// Parameters of the case-study injection models built from a DC model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseStudyParams {
    /// Injection variance as a multiple of nominal generation (MW^2 per MW).
    pub variance_factor: f64,
    /// Variance of the entries of `A` (MW^2).
    pub offdiag_variance: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for CaseStudyParams {
    fn default() -> Self {
        CaseStudyParams {
            variance_factor: 5.0,
            offdiag_variance: 25.0,
            epsilon: 1.0,
            seed: 0,
        }
    }
}

/// Gaussian model centred on the nominal injections with
/// [`paper_covariance`] built from each stochastic bus's nominal generation.
pub fn case_study_gaussian(model: &DcModel, params: &CaseStudyParams) -> Result<(GaussianSpec, Option<f64>)> {
    let base = model.base_mva();
    let nominal_mw: Vec<f64> = model.stochastic_generation().iter().map(|g| g * base).collect();
    let build = paper_covariance(
        &nominal_mw,
        params.variance_factor,
        params.offdiag_variance,
        base,
        params.seed,
    )?;
    let spec = GaussianSpec::new(model.nominal_stochastic().clone(), build.covariance)?;
    Ok((spec, build.ridge))
}

/// Laplace model with the same means and marginal variances as
/// [`case_study_gaussian`]: `alpha_i = sqrt(Var(P_i) / 2)`.
pub fn case_study_laplace(model: &DcModel, params: &CaseStudyParams) -> Result<LaplaceSpec> {
    let base = model.base_mva();
    let scale = model
        .stochastic_generation()
        .map(|g| (params.variance_factor * (g * base).abs() / (base * base) / 2.0).sqrt());
    // Laplace variance is 2 (eps alpha)^2, so alpha absorbs 1/eps.
    let scale = scale / params.epsilon;
    LaplaceSpec::new(model.nominal_stochastic().clone(), scale, params.epsilon)
}

/// `n` iid injection observations (rows) drawn from one keyed stream.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub observations: DMatrix<f64>,
    pub seed: u64,
    pub stream_index: u64,
    pub kind: Option<SpecKind>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.observations.ncols()
    }

    /// The first `n` observations as an owned matrix.
    pub fn prefix(&self, n: usize) -> DMatrix<f64> {
        self.observations.rows(0, n.min(self.len())).into_owned()
    }

    /// SHA-256 over the raw bits of the first `n` rows, truncated to 64 bits.
    pub fn checksum(&self, n: usize) -> u64 {
        let mut hasher = Sha256::new();
        for i in 0..n.min(self.len()) {
            for j in 0..self.dim() {
                hasher.update(self.observations[(i, j)].to_bits().to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(head)
    }

    /// Write as CSV with header `t,p_1,...,p_d`, values in MW.
    pub fn write_csv(&self, path: impl AsRef<Path>, base_mva: f64) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dim()).map(|i| format!("p_{i}")))
            .collect();
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for (t, row) in self.observations.row_iter().enumerate() {
            write!(out, "{}", t + 1).map_err(io)?;
            for value in row.iter() {
                write!(out, ",{}", value * base_mva).map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Read a CSV written by [`SampleSet::write_csv`] (MW) back into p.u.
    pub fn read_csv(path: impl AsRef<Path>, base_mva: f64) -> Result<SampleSet> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let header = reader.headers()?.clone();
        if header.get(0) != Some("t") || header.len() < 2 {
            return Err(Error::Argument(format!(
                "{}: expected header `t,p_1,...,p_d`",
                path.display()
            )));
        }
        let d = header.len() - 1;
        let mut values = Vec::new();
        let mut n = 0;
        for record in reader.records() {
            let record = record?;
            for field in record.iter().skip(1) {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Argument(format!("{}: invalid number {field:?}", path.display()))
                })?;
                values.push(v / base_mva);
            }
            n += 1;
        }
        Ok(SampleSet {
            observations: DMatrix::from_row_slice(n, d, &values),
            seed: 0,
            stream_index: 0,
            kind: None,
        })
    }
}

pub fn sample_gaussian(spec: &GaussianSpec, n: usize, seed: u64) -> Result<SampleSet> {
    sample_gaussian_stream(spec, n, StreamKey::new(seed, TAG_INJECTIONS, 0))
}

pub fn sample_laplace(spec: &LaplaceSpec, n: usize, seed: u64) -> Result<SampleSet> {
    sample_laplace_stream(spec, n, StreamKey::new(seed, TAG_INJECTIONS, 0))
}

pub fn sample_gaussian_stream(spec: &GaussianSpec, n: usize, key: StreamKey<'_>) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    let d = spec.dim();
    let mut rng = key.rng();
    let mut observations = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(d);
    for t in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let draw = &spec.mean + &spec.factor * &z;
        observations.set_row(t, &draw.transpose());
    }
    Ok(SampleSet {
        observations,
        seed: key.seed,
        stream_index: key.index,
        kind: Some(SpecKind::Gaussian),
    })
}

pub fn sample_laplace_stream(spec: &LaplaceSpec, n: usize, key: StreamKey<'_>) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    let d = spec.dim();
    let mut rng = key.rng();
    let mut observations = DMatrix::zeros(n, d);
    for t in 0..n {
        for i in 0..d {
            let e1: f64 = rng.sample(Exp1);
            let e2: f64 = rng.sample(Exp1);
            observations[(t, i)] = spec.mean[i] + spec.epsilon * spec.scale[i] * (e1 - e2);
        }
    }
    Ok(SampleSet {
        observations,
        seed: key.seed,
        stream_index: key.index,
        kind: Some(SpecKind::Laplace),
    })
}
