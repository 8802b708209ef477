//! Finite-dimensional simulation: data generation, the linear and spectral
//! estimators, sign calibration, the combined estimator and overlaps.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::LinkModel;
use crate::preprocess::{check_alpha, Preprocessor};
use crate::theory::Combiner;

/// One draw of the mixed model.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n x d`, rows `a_i ~ N(0, I_d)`.
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    /// `true` when the observation comes from `x1_star`.
    pub eta: Vec<bool>,
    pub x1_star: DVector<f64>,
    pub x2_star: DVector<f64>,
    pub alpha: f64,
    pub delta_realized: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn d(&self) -> usize {
        self.a.ncols()
    }

    /// Writes `y, eta` rows with the seed and configuration as a header
    /// comment. The design is regenerable from the seed and is not written.
    pub fn write_csv(&self, path: &Path, model: &LinkModel) -> Result<()> {
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(
            f,
            "# model={} sigma={} alpha={} d={} n={} seed={}",
            model.name(),
            model.sigma(),
            self.alpha,
            self.d(),
            self.n(),
            self.seed
        )
        .map_err(io)?;
        writeln!(f, "y,eta").map_err(io)?;
        for (y, e) in self.y.iter().zip(&self.eta) {
            writeln!(f, "{y},{}", u8::from(*e)).map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = v.norm();
    v /= norm;
    v
}

/// Draws `n = round(δ d)` observations. The stream is consumed in a fixed
/// order (signals, design, labels, noise) so equal seeds give equal data.
pub fn generate_dataset(
    d: usize,
    delta: f64,
    alpha: f64,
    model: &LinkModel,
    seed: u64,
) -> Result<Dataset> {
    if d < 2 {
        return Err(Error::Argument(format!("d must be at least 2, got {d}")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Argument(format!("delta must be positive, got {delta}")));
    }
    check_alpha(alpha)?;
    let n = (delta * d as f64).round() as usize;
    if n < 2 {
        return Err(Error::Argument(format!("n = round(delta d) = {n} is below 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1_star = random_unit(d, &mut rng);
    let x2_star = random_unit(d, &mut rng);
    let mut a = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let eta: Vec<bool> = (0..n).map(|_| rng.random_bool(alpha)).collect();
    let g1 = &a * &x1_star;
    let g2 = &a * &x2_star;
    let y = DVector::from_fn(n, |i, _| {
        let g = if eta[i] { g1[i] } else { g2[i] };
        model.sample_y(g, &mut rng)
    });
    Ok(Dataset { a, y, eta, x1_star, x2_star, alpha, delta_realized: n as f64 / d as f64, seed })
}

/// `(1/n) A^T L(y)`.
pub fn linear_estimate(ds: &Dataset, l: &Preprocessor) -> DVector<f64> {
    let ly = ds.y.map(|v| l.eval(v));
    ds.a.tr_mul(&ly) / ds.n() as f64
}

/// `D = (1/n) A^T diag(T(y)) A`.
pub fn spectral_matrix(ds: &Dataset, t: &Preprocessor) -> DMatrix<f64> {
    let z = ds.y.map(|v| t.eval(v));
    let mut weighted = ds.a.transpose();
    for (mut col, zi) in weighted.column_iter_mut().zip(z.iter()) {
        col *= *zi;
    }
    let mut dm = weighted * &ds.a / ds.n() as f64;
    // exact symmetry
    for i in 0..dm.nrows() {
        for j in 0..i {
            let v = 0.5 * (dm[(i, j)] + dm[(j, i)]);
            dm[(i, j)] = v;
            dm[(j, i)] = v;
        }
    }
    dm
}

/// Top eigenpairs of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEstimate {
    pub v1: DVector<f64>,
    pub v2: DVector<f64>,
    pub lam1: f64,
    pub lam2: f64,
    pub lam3: f64,
}

/// Leading two unit eigenvectors and three eigenvalues of `m`. Each vector
/// is signed so that its first nonzero coordinate is positive.
pub fn top_eigenpairs(m: DMatrix<f64>) -> Result<SpectralEstimate> {
    let d = m.nrows();
    if d < 3 || m.ncols() != d {
        return Err(Error::Eigen(format!("need a square matrix of order >= 3, got {}x{}", d, m.ncols())));
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigen("symmetric QL iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let pick = |k: usize| {
        let mut v = eig.eigenvectors.column(order[k]).into_owned();
        let n = v.norm();
        v /= n;
        if let Some(first) = v.iter().find(|x| **x != 0.0) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        v
    };
    Ok(SpectralEstimate {
        v1: pick(0),
        v2: pick(1),
        lam1: eig.eigenvalues[order[0]],
        lam2: eig.eigenvalues[order[1]],
        lam3: eig.eigenvalues[order[2]],
    })
}

pub fn spectral_estimate(ds: &Dataset, t: &Preprocessor) -> Result<SpectralEstimate> {
    top_eigenpairs(spectral_matrix(ds, t))
}

/// Sign that aligns `v` with the truth. With ground truth available
/// (`predicted_corr = None`) `reference` is the signal; otherwise it is the
/// linear estimate and the sign of `<v, reference>` is matched to the sign
/// of the predicted correlation.
pub fn calibrate_signs(v: &DVector<f64>, reference: &DVector<f64>, predicted_corr: Option<f64>) -> f64 {
    let s = if v.dot(reference) < 0.0 { -1.0 } else { 1.0 };
    match predicted_corr {
        None => s,
        Some(p) if p < 0.0 => -s,
        Some(_) => s,
    }
}

/// `x * sqrt(d) / |x|`, zero stays zero.
pub fn rescale_to_sqrt_d(x: &DVector<f64>) -> DVector<f64> {
    let n = x.norm();
    if n == 0.0 {
        return x.clone();
    }
    x * ((x.len() as f64).sqrt() / n)
}

/// `(ξ x_lin + ζ_c x_spec) / (1 - ν^2)` for inputs already rescaled to
/// norm `sqrt(d)`.
pub fn combined_estimate(x_lin: &DVector<f64>, x_spec: &DVector<f64>, c: &Combiner) -> DVector<f64> {
    (x_lin * c.xi + x_spec * c.zeta_c) / (1.0 - c.nu * c.nu)
}

/// `|<v, x>| / (|v| |x|)`, zero if either vector is zero.
pub fn overlap(v: &DVector<f64>, x: &DVector<f64>) -> f64 {
    let nv = v.norm();
    let nx = x.norm();
    if nv == 0.0 || nx == 0.0 {
        return 0.0;
    }
    (v.dot(x) / (nv * nx)).abs()
}

/// All estimators for one dataset and one spectral matrix.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub x_lin: DVector<f64>,
    pub v1: DVector<f64>,
    pub v2: DVector<f64>,
    pub lam1: f64,
    pub lam2: f64,
    pub lam3: f64,
    pub x_comb_1: DVector<f64>,
    pub x_comb_2: DVector<f64>,
    /// `[lin_1, lin_2, spec_1, spec_2, comb_1, comb_2]`
    pub overlaps: [f64; 6],
    pub signs: [f64; 2],
}

/// Runs the linear, spectral and combined estimators. Spectral signs are
/// calibrated against the ground truth.
pub fn estimate_all(
    ds: &Dataset,
    l: &Preprocessor,
    t: &Preprocessor,
    combiners: [&Combiner; 2],
) -> Result<EstimationResult> {
    let x_lin = linear_estimate(ds, l);
    let sp = spectral_estimate(ds, t)?;
    let signs = [
        calibrate_signs(&sp.v1, &ds.x1_star, None),
        calibrate_signs(&sp.v2, &ds.x2_star, None),
    ];
    let lin_r = rescale_to_sqrt_d(&x_lin);
    let x_comb_1 = combined_estimate(&lin_r, &rescale_to_sqrt_d(&(&sp.v1 * signs[0])), combiners[0]);
    let x_comb_2 = combined_estimate(&lin_r, &rescale_to_sqrt_d(&(&sp.v2 * signs[1])), combiners[1]);
    let overlaps = [
        overlap(&x_lin, &ds.x1_star),
        overlap(&x_lin, &ds.x2_star),
        overlap(&sp.v1, &ds.x1_star),
        overlap(&sp.v2, &ds.x2_star),
        overlap(&x_comb_1, &ds.x1_star),
        overlap(&x_comb_2, &ds.x2_star),
    ];
    Ok(EstimationResult {
        x_lin,
        v1: sp.v1,
        v2: sp.v2,
        lam1: sp.lam1,
        lam2: sp.lam2,
        lam3: sp.lam3,
        x_comb_1,
        x_comb_2,
        overlaps,
        signs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::QuadratureSpec;
    use crate::preprocess::{optimal_linear, optimal_spectral};
    use crate::theory::combo_coefficients;
    use approx::assert_abs_diff_eq;

    fn mlr0() -> LinkModel {
        LinkModel::mixed_linear_regression(0.0).unwrap()
    }

    #[test]
    fn dataset_construction() {
        let ds = generate_dataset(100, 2.0, 0.6, &mlr0(), 3).unwrap();
        assert_eq!(ds.n(), 200);
        assert_eq!(ds.d(), 100);
        assert_abs_diff_eq!(ds.x1_star.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ds.x2_star.norm(), 1.0, epsilon = 1e-12);
        let frac = ds.eta.iter().filter(|e| **e).count() as f64 / 200.0;
        assert!((frac - 0.6).abs() <= 4.0 * (0.24f64 / 200.0).sqrt());
        for i in 0..ds.n() {
            let x = if ds.eta[i] { &ds.x1_star } else { &ds.x2_star };
            assert_eq!(ds.y[i], ds.a.row(i).dot(&x.transpose()));
        }
    }

    #[test]
    fn dataset_is_reproducible() {
        let m = LinkModel::mixed_phase_retrieval(0.5).unwrap();
        let a = generate_dataset(50, 3.0, 0.7, &m, 11).unwrap();
        let b = generate_dataset(50, 3.0, 0.7, &m, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(50, 3.0, 0.7, &m, 12).unwrap();
        assert_ne!(a.y, c.y);
    }

    #[test]
    fn dataset_argument_errors() {
        assert!(generate_dataset(1, 2.0, 0.6, &mlr0(), 0).is_err());
        assert!(generate_dataset(10, 0.1, 0.6, &mlr0(), 0).is_err());
        assert!(generate_dataset(10, 2.0, 0.4, &mlr0(), 0).is_err());
    }

    #[test]
    fn linear_estimate_constant_maps() {
        let ds = generate_dataset(400, 4.0, 0.6, &mlr0(), 5).unwrap();
        let zero = linear_estimate(&ds, &Preprocessor::constant(0.0));
        assert!(zero.iter().all(|v| *v == 0.0));
        let ones = linear_estimate(&ds, &Preprocessor::constant(1.0));
        assert!((ones.norm() - 0.5).abs() < 0.05, "{}", ones.norm());
    }

    #[test]
    fn spectral_estimate_is_orthonormal_and_sorted() {
        let ds = generate_dataset(120, 3.0, 0.6, &mlr0(), 9).unwrap();
        let t = optimal_spectral(&mlr0(), 0.6, 1, &QuadratureSpec::default()).unwrap();
        let dm = spectral_matrix(&ds, &t);
        assert_eq!(dm, dm.transpose());
        let sp = top_eigenpairs(dm.clone()).unwrap();
        assert_abs_diff_eq!(sp.v1.norm(), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sp.v2.norm(), 1.0, epsilon = 1e-10);
        assert!(sp.v1.dot(&sp.v2).abs() < 1e-10);
        assert!(sp.lam1 >= sp.lam2 && sp.lam2 >= sp.lam3);
        let scale = dm.norm();
        for (v, l) in [(&sp.v1, sp.lam1), (&sp.v2, sp.lam2)] {
            assert!((&dm * v - v * l).norm() <= 1e-8 * scale);
            let first = v.iter().find(|x| **x != 0.0).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn signs_and_overlap() {
        let x = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let neg = -&x;
        assert_eq!(calibrate_signs(&x, &x, None), 1.0);
        assert_eq!(calibrate_signs(&neg, &x, None), -1.0);
        assert_eq!(calibrate_signs(&neg, &x, Some(0.4)), -1.0);
        assert_eq!(calibrate_signs(&neg, &x, Some(-0.4)), 1.0);
        assert_abs_diff_eq!(overlap(&x, &x), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(overlap(&neg, &x), 1.0, epsilon = 1e-15);
        let perp = DVector::from_vec(vec![2.0, -1.0, 0.0]);
        assert_eq!(overlap(&perp, &x), 0.0);
        assert_eq!(overlap(&DVector::zeros(3), &x), 0.0);
    }

    #[test]
    fn combination_reductions() {
        let a = DVector::from_vec(vec![1.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let spec_only = Combiner { nu: 0.0, xi: 0.0, zeta_c: 1.0, overlap: 1.0 };
        let lin_only = Combiner { nu: 0.0, xi: 1.0, zeta_c: 0.0, overlap: 1.0 };
        assert_eq!(combined_estimate(&a, &b, &spec_only), b);
        assert_eq!(combined_estimate(&a, &b, &lin_only), a);
    }

    #[test]
    fn estimate_all_runs() {
        let spec = QuadratureSpec::default();
        let m = mlr0();
        let ds = generate_dataset(200, 4.0, 0.6, &m, 1).unwrap();
        let l = optimal_linear(&m, &spec).unwrap();
        let t = optimal_spectral(&m, 0.6, 1, &spec).unwrap();
        let c = combo_coefficients(0.5, 0.6, 0.1).unwrap();
        let r = estimate_all(&ds, &l, &t, [&c, &c]).unwrap();
        assert!(r.overlaps.iter().all(|o| (0.0..=1.0).contains(o)));
        assert!(r.signs.iter().all(|s| s.abs() == 1.0));
        assert!(r.lam1 >= r.lam2 && r.lam2 >= r.lam3);
    }

    #[test]
    fn dataset_csv_dump() {
        let ds = generate_dataset(10, 2.0, 0.6, &mlr0(), 4).unwrap();
        let dir = std::env::temp_dir().join(format!("mixglm-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("ds.csv");
        ds.write_csv(&p, &mlr0()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2 + 20);
        assert!(text.contains("seed=4"));
        let bad = dir.join("missing").join("ds.csv");
        assert!(matches!(ds.write_csv(&bad, &mlr0()), Err(Error::Io { .. })));
        std::fs::remove_dir_all(&dir).ok();
    }
}
