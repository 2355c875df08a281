use crate::error::{Error, Result};
use crate::grid::{FieldSample, GridField, Provenance};

/// Fields `R_1, ..., R_N` with `Σ_n R_n(s)² = 1` at every in-domain `s`,
/// and `Σ_n R_n(s) = 0` when `zero_sum` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSample {
    sample: FieldSample,
    zero_sum: bool,
}

impl ResidualSample {
    /// Wraps fields that are already standardized. Checks the identities to
    /// `tol`; the zero-sum half only if `zero_sum` is claimed.
    pub fn new(fields: Vec<GridField>, zero_sum: bool, tol: f64) -> Result<Self> {
        let sample = FieldSample::new(fields, Provenance::StandardizedResidual)?;
        let r = ResidualSample { sample, zero_sum };
        r.check(tol)?;
        Ok(r)
    }

    pub(crate) fn from_sample_unchecked(sample: FieldSample, zero_sum: bool) -> Self {
        ResidualSample { sample, zero_sum }
    }

    pub fn sample(&self) -> &FieldSample {
        &self.sample
    }

    pub fn fields(&self) -> &[GridField] {
        self.sample.fields()
    }

    pub fn len(&self) -> usize {
        self.sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.is_empty()
    }

    /// Whether `Σ_n R_n = 0` is part of the contract for this sample.
    pub fn zero_sum(&self) -> bool {
        self.zero_sum
    }

    /// Largest violations `(max |Σ R_n|, max |Σ R_n² - 1|)` over the domain.
    pub fn identity_errors(&self) -> (f64, f64) {
        let t = self.sample.template();
        let mut worst = (0.0f64, 0.0f64);
        for s in (0..t.len()).filter(|&s| t.in_domain(s)) {
            let (sum, sq) = self
                .fields()
                .iter()
                .map(|f| f.values()[s])
                .fold((0.0, 0.0), |(a, b), r| (a + r, b + r * r));
            worst.0 = worst.0.max(sum.abs());
            worst.1 = worst.1.max((sq - 1.0).abs());
        }
        worst
    }

    fn check(&self, tol: f64) -> Result<()> {
        let (sum, sq) = self.identity_errors();
        if sq > tol || (self.zero_sum && sum > tol) {
            return Err(Error::InvalidArgument(format!(
                "not standardized: |ΣR| up to {sum:e}, |ΣR²-1| up to {sq:e}"
            )));
        }
        Ok(())
    }

    /// `scale · R_n` for every `n`, as a plain sample.
    pub fn scaled(&self, scale: f64) -> FieldSample {
        let fields = self
            .fields()
            .iter()
            .map(|f| {
                GridField::from_parts_unchecked(
                    f.shape().to_vec(),
                    f.values().iter().map(|v| scale * v).collect(),
                    f.mask().map(<[bool]>::to_vec),
                )
            })
            .collect();
        FieldSample::new(fields, Provenance::Raw).expect("same geometry")
    }
}

/// `R_n = (f_n - f̄) / sqrt(Σ_n (f_n - f̄)²)` pointwise.
pub fn standardize(sample: &FieldSample) -> Result<ResidualSample> {
    if sample.len() < 2 {
        return Err(Error::SampleSize {
            needed: 2,
            got: sample.len(),
        });
    }
    let n = sample.len() as f64;
    let t = sample.template();
    let mut centered: Vec<Vec<f64>> = vec![vec![0.0; t.len()]; sample.len()];
    for s in (0..t.len()).filter(|&s| t.in_domain(s)) {
        let mean = sample.iter().map(|f| f.values()[s]).sum::<f64>() / n;
        for (k, f) in sample.iter().enumerate() {
            centered[k][s] = f.values()[s] - mean;
        }
    }
    let raw_scale: Vec<f64> = (0..t.len())
        .map(|s| sample.iter().map(|f| f.values()[s].abs()).fold(0.0, f64::max))
        .collect();
    normalize_pointwise(sample, centered, &raw_scale, true)
}

/// `R_n = f_n / sqrt(Σ_n f_n²)` pointwise, for samples whose mean is known
/// to be zero. The zero-sum identity does not hold.
pub fn normalize_known_mean(sample: &FieldSample) -> Result<ResidualSample> {
    if sample.len() < 2 {
        return Err(Error::SampleSize {
            needed: 2,
            got: sample.len(),
        });
    }
    let t = sample.template();
    let columns: Vec<Vec<f64>> = sample.iter().map(|f| f.values().to_vec()).collect();
    let raw_scale: Vec<f64> = (0..t.len())
        .map(|s| sample.iter().map(|f| f.values()[s].abs()).fold(0.0, f64::max))
        .collect();
    normalize_pointwise(sample, columns, &raw_scale, false)
}

/// Divides each location of `columns` (one vector per field) by its
/// Euclidean norm across fields. `raw_scale` guards against norms that are
/// pure rounding noise.
pub(crate) fn normalize_pointwise(
    like: &FieldSample,
    mut columns: Vec<Vec<f64>>,
    raw_scale: &[f64],
    zero_sum: bool,
) -> Result<ResidualSample> {
    let t = like.template();
    for s in (0..t.len()).filter(|&s| t.in_domain(s)) {
        let ss: f64 = columns.iter().map(|c| c[s] * c[s]).sum();
        let norm = ss.sqrt();
        if !(norm > 1e-13 * raw_scale[s]) || norm == 0.0 {
            return Err(Error::DegenerateLocation(s));
        }
        for c in columns.iter_mut() {
            c[s] /= norm;
        }
    }
    let fields = columns
        .into_iter()
        .map(|values| {
            GridField::from_parts_unchecked(t.shape().to_vec(), values, t.mask().map(<[bool]>::to_vec))
        })
        .collect();
    let sample = FieldSample::new(fields, Provenance::StandardizedResidual)?;
    Ok(ResidualSample::from_sample_unchecked(sample, zero_sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn sample_of(rows: Vec<Vec<f64>>, shape: Vec<usize>) -> FieldSample {
        FieldSample::raw(rows.into_iter().map(|v| GridField::new(shape.clone(), v).unwrap()).collect())
            .unwrap()
    }

    #[test]
    fn known_mean_normalization() {
        let r = normalize_known_mean(&sample_of(vec![vec![3.0, 1.0], vec![4.0, 1.0]], vec![2])).unwrap();
        assert!(!r.zero_sum());
        assert_eq!(r.fields()[0].values(), &[0.6, 1.0 / 2f64.sqrt()]);
        assert_eq!(r.fields()[1].values(), &[0.8, 1.0 / 2f64.sqrt()]);
        assert!(normalize_known_mean(&sample_of(vec![vec![1.0]], vec![1])).is_err());
    }

    #[test]
    fn two_antisymmetric_fields() {
        let f1 = vec![0.5, -2.0, 3.0, 1e-3];
        let f2: Vec<f64> = f1.iter().map(|v| -v).collect();
        let r = standardize(&sample_of(vec![f1.clone(), f2], vec![4])).unwrap();
        for (s, &v) in f1.iter().enumerate() {
            let want = v.signum() / 2f64.sqrt();
            assert!((r.fields()[0].values()[s] - want).abs() < 1e-15);
        }
        assert_eq!(r.sample().provenance(), Provenance::StandardizedResidual);
    }

    #[test]
    fn identities_hold_on_random_samples() {
        let mut rng = crate::rng::SeedStream::new(1).rng(0);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..100).map(|_| 3.0 + 10.0 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let r = standardize(&sample_of(rows, vec![10, 10])).unwrap();
        let (sum, sq) = r.identity_errors();
        assert!(sum < 1e-10 && sq < 1e-10);
        assert!(r.zero_sum());
    }

    #[test]
    fn constant_location_is_degenerate() {
        let rows = vec![vec![1.0, 0.1, 2.0]; 3];
        let mut rows2 = rows.clone();
        rows2[1][0] = 5.0;
        rows2[2][2] = -1.0;
        assert!(matches!(
            standardize(&sample_of(rows2, vec![3])),
            Err(Error::DegenerateLocation(1))
        ));
        assert!(matches!(standardize(&sample_of(rows, vec![3])), Err(Error::DegenerateLocation(0))));
    }

    #[test]
    fn masked_points_are_ignored() {
        let mask = vec![true, false, true];
        let fields = vec![
            GridField::with_mask(vec![3], vec![1.0, 7.0, 2.0], mask.clone()).unwrap(),
            GridField::with_mask(vec![3], vec![3.0, 7.0, 0.0], mask).unwrap(),
        ];
        let r = standardize(&FieldSample::raw(fields).unwrap()).unwrap();
        assert_eq!(r.fields()[0].mask(), Some(&[true, false, true][..]));
        assert!(r.identity_errors().1 < 1e-15);
    }

    #[test]
    fn too_small_and_wrapping() {
        let one = sample_of(vec![vec![1.0, 2.0]], vec![2]);
        assert!(matches!(standardize(&one), Err(Error::SampleSize { needed: 2, got: 1 })));
        let ok = vec![
            GridField::new(vec![1], vec![0.6]).unwrap(),
            GridField::new(vec![1], vec![0.8]).unwrap(),
        ];
        assert!(ResidualSample::new(ok.clone(), false, 1e-12).is_ok());
        assert!(ResidualSample::new(ok, true, 1e-12).is_err());
    }
}
