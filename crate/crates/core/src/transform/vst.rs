//! The eight variance stabilising transformations, applied to scaled prices.

use serde::{Deserialize, Serialize};

use super::TransformError;
use crate::stats::{norm_cdf, norm_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VstKind {
    /// Clipping at +-3.
    ThreeSigma,
    /// Logarithmic damping beyond +-3.
    ThreeSigmaLog,
    Logistic,
    Arcsinh,
    BoxCox,
    Poly,
    /// Mirror logarithm.
    Mlog,
    /// Probability integral transform through an empirical CDF.
    Pit,
}

impl VstKind {
    pub const ALL: [VstKind; 8] = [
        VstKind::ThreeSigma,
        VstKind::ThreeSigmaLog,
        VstKind::Logistic,
        VstKind::Arcsinh,
        VstKind::BoxCox,
        VstKind::Poly,
        VstKind::Mlog,
        VstKind::Pit,
    ];
}

/// Which algebraic form of the BoxCox (`lambda = 0`), poly and mlog
/// transforms to use.
///
/// `Literal` evaluates the formulas verbatim: poly as
/// `sgn(p)[(|p|/c + 1)^lambda - (1/c)^lambda]^(1/(lambda - 1))`, mlog as
/// `sgn(p)[log(|p|/c + 1) + log c]` and BoxCox at `lambda = 0` as
/// `log(|p| + 1)`. These are neither monotone nor invertible everywhere:
/// literal poly is undefined for `|p| <= 1 - c` and literal mlog maps
/// small positive and negative inputs onto overlapping ranges. Where that
/// bites, [`VstParams::transform`] and [`VstParams::inverse`] return
/// [`TransformError::Domain`].
///
/// `Monotone` swaps in sign-symmetric, strictly increasing forms with exact
/// inverses: poly `sgn(p)[(|p| + a)^lambda - a^lambda]` with
/// `a = (c/lambda)^(1/(lambda-1))` (slope `c` at the origin), mlog
/// `sgn(p) log(c|p| + 1)` and BoxCox(0) `sgn(p) log(|p| + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Formula {
    #[default]
    Literal,
    Monotone,
}

/// Reference distribution `G` of the probability integral transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PitReference {
    #[default]
    Normal,
    Logistic,
}

impl PitReference {
    fn cdf(self, y: f64) -> f64 {
        match self {
            PitReference::Normal => norm_cdf(y),
            PitReference::Logistic => 1.0 / (1.0 + (-y).exp()),
        }
    }

    fn quantile(self, u: f64) -> f64 {
        match self {
            PitReference::Normal => norm_quantile(u),
            PitReference::Logistic => (u / (1.0 - u)).ln(),
        }
    }
}

/// Piecewise-linear empirical CDF through the order statistics.
///
/// Knot `i` sits at the `i`-th distinct sample value with probability equal
/// to its (tie-averaged) rank over `n + 1`; outside the sample range the CDF
/// is clamped to the first and last knot, which keeps `G^-1` finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    xs: Vec<f64>,
    us: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn fit(sample: &[f64]) -> Result<Self, TransformError> {
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(TransformError::NonFinite);
        }
        let mut v = sample.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mut xs = Vec::new();
        let mut us = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            let rank = (i + j + 2) as f64 / 2.0;
            xs.push(v[i]);
            us.push(rank / (n + 1) as f64);
            i = j + 1;
        }
        if xs.len() < 2 {
            return Err(TransformError::Scale("PIT needs at least two distinct values".into()));
        }
        Ok(Self { xs, us })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        interpolate(&self.xs, &self.us, x)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        interpolate(&self.us, &self.xs, u)
    }
}

fn interpolate(from: &[f64], to: &[f64], x: f64) -> f64 {
    let last = from.len() - 1;
    if x <= from[0] {
        return to[0];
    }
    if x >= from[last] {
        return to[last];
    }
    let hi = from.partition_point(|v| *v <= x);
    let lo = hi - 1;
    if from[lo] == x {
        return to[lo];
    }
    let t = (x - from[lo]) / (from[hi] - from[lo]);
    to[lo] + t * (to[hi] - to[lo])
}

/// Parameters (and, for the PIT, fitted state) of one transformation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VstParams {
    pub kind: VstKind,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default)]
    pub formula: Formula,
    #[serde(default)]
    pub pit_reference: PitReference,
    #[serde(default)]
    pub pit_cdf: Option<EmpiricalCdf>,
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl VstParams {
    /// Parameters with the default hyper-parameters: BoxCox `lambda = 0.5`,
    /// poly `lambda = 0.125, c = 0.33`, mlog `c = 0.33`.
    pub fn new(kind: VstKind) -> Self {
        let (lambda, c) = match kind {
            VstKind::BoxCox => (0.5, 0.0),
            VstKind::Poly => (0.125, 0.33),
            VstKind::Mlog => (0.0, 0.33),
            _ => (0.0, 0.0),
        };
        Self { kind, lambda, c, formula: Formula::Literal, pit_reference: PitReference::Normal, pit_cdf: None }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_formula(mut self, formula: Formula) -> Self {
        self.formula = formula;
        self
    }

    pub fn with_pit_reference(mut self, reference: PitReference) -> Self {
        self.pit_reference = reference;
        self
    }

    pub fn validate(&self) -> Result<(), TransformError> {
        let bad = |msg: String| Err(TransformError::Param(msg));
        match self.kind {
            VstKind::BoxCox if !(self.lambda.is_finite() && self.lambda >= 0.0) => {
                bad(format!("BoxCox lambda {} must be >= 0", self.lambda))
            }
            VstKind::Poly if !(self.lambda.is_finite() && self.lambda > 0.0) || self.lambda == 1.0 => {
                bad(format!("poly lambda {} must be positive and != 1", self.lambda))
            }
            VstKind::Poly | VstKind::Mlog if !(self.c.is_finite() && self.c > 0.0) => {
                bad(format!("c {} must be > 0", self.c))
            }
            _ => Ok(()),
        }
    }

    /// Fit data-dependent state (the PIT's empirical CDF); a no-op otherwise.
    pub fn fit(&mut self, scaled: &[f64]) -> Result<(), TransformError> {
        self.validate()?;
        if self.kind == VstKind::Pit {
            self.pit_cdf = Some(EmpiricalCdf::fit(scaled)?);
        }
        Ok(())
    }

    fn pit(&self) -> Result<&EmpiricalCdf, TransformError> {
        self.pit_cdf.as_ref().ok_or(TransformError::NotFitted)
    }

    /// Monotone poly constants `(c/lambda)^(1/(lambda-1))` and
    /// `(c/lambda)^(lambda/(lambda-1))`.
    fn poly_shifts(&self) -> (f64, f64) {
        let base = self.c / self.lambda;
        let e = 1.0 / (self.lambda - 1.0);
        (base.powf(e), base.powf(self.lambda * e))
    }

    pub fn transform(&self, p: f64) -> Result<f64, TransformError> {
        if !p.is_finite() {
            return Err(TransformError::NonFinite);
        }
        let a = p.abs();
        let s = sgn(p);
        let y = match self.kind {
            VstKind::ThreeSigma => {
                if a > 3.0 {
                    3.0 * s
                } else {
                    p
                }
            }
            VstKind::ThreeSigmaLog => {
                if a > 3.0 {
                    s * ((a - 2.0).ln() + 3.0)
                } else {
                    p
                }
            }
            VstKind::Logistic => 1.0 / (1.0 + (-p).exp()),
            VstKind::Arcsinh => p.asinh(),
            VstKind::BoxCox => {
                self.validate()?;
                if self.lambda > 0.0 {
                    s * ((a + 1.0).powf(self.lambda) - 1.0) / self.lambda
                } else {
                    match self.formula {
                        Formula::Monotone => s * a.ln_1p(),
                        Formula::Literal => a.ln_1p(),
                    }
                }
            }
            VstKind::Poly => {
                self.validate()?;
                match self.formula {
                    Formula::Monotone => {
                        let (shift, offset) = self.poly_shifts();
                        s * ((a + shift).powf(self.lambda) - offset)
                    }
                    Formula::Literal => {
                        let inner = (a / self.c + 1.0).powf(self.lambda) - (1.0 / self.c).powf(self.lambda);
                        if !(inner > 0.0) {
                            return Err(TransformError::Domain(format!(
                                "literal poly undefined at p = {p} (needs |p| > 1 - c)"
                            )));
                        }
                        s * inner.powf(1.0 / (self.lambda - 1.0))
                    }
                }
            }
            VstKind::Mlog => {
                self.validate()?;
                match self.formula {
                    Formula::Monotone => s * (self.c * a).ln_1p(),
                    Formula::Literal => s * ((a / self.c).ln_1p() + self.c.ln()),
                }
            }
            VstKind::Pit => {
                let u = self.pit()?.cdf(p);
                self.pit_reference.quantile(u)
            }
        };
        if y.is_finite() {
            Ok(y)
        } else {
            Err(TransformError::Domain(format!("transform of {p} is not finite")))
        }
    }

    /// Inverse transformation. The clipping transform is inverted as the
    /// identity: values clipped at +-3 come back as +-3.
    pub fn inverse(&self, y: f64) -> Result<f64, TransformError> {
        if !y.is_finite() {
            return Err(TransformError::NonFinite);
        }
        let a = y.abs();
        let s = sgn(y);
        let p = match self.kind {
            VstKind::ThreeSigma => y,
            VstKind::ThreeSigmaLog => {
                if a > 3.0 {
                    s * ((a - 3.0).exp() + 2.0)
                } else {
                    y
                }
            }
            VstKind::Logistic => {
                if !(y > 0.0 && y < 1.0) {
                    return Err(TransformError::Domain(format!("logistic inverse needs y in (0, 1), got {y}")));
                }
                (y / (1.0 - y)).ln()
            }
            VstKind::Arcsinh => y.sinh(),
            VstKind::BoxCox => {
                self.validate()?;
                if self.lambda > 0.0 {
                    let base = self.lambda * a + 1.0;
                    s * (base.powf(1.0 / self.lambda) - 1.0)
                } else {
                    match self.formula {
                        Formula::Monotone => s * a.exp_m1(),
                        Formula::Literal => {
                            if y < 0.0 {
                                return Err(TransformError::Domain("literal BoxCox(0) output is >= 0".into()));
                            }
                            // The sign of p is lost; the non-negative preimage is returned.
                            y.exp_m1()
                        }
                    }
                }
            }
            VstKind::Poly => {
                self.validate()?;
                match self.formula {
                    Formula::Monotone => {
                        let (shift, offset) = self.poly_shifts();
                        s * ((a + offset).powf(1.0 / self.lambda) - shift)
                    }
                    Formula::Literal => {
                        if a == 0.0 {
                            return Err(TransformError::Domain("literal poly never reaches 0".into()));
                        }
                        let inner = a.powf(self.lambda - 1.0);
                        let base = inner + (1.0 / self.c).powf(self.lambda);
                        s * self.c * (base.powf(1.0 / self.lambda) - 1.0)
                    }
                }
            }
            VstKind::Mlog => {
                self.validate()?;
                match self.formula {
                    Formula::Monotone => s * a.exp_m1() / self.c,
                    Formula::Literal => {
                        // y = sgn(p) log(|p| + c): both signs may explain y.
                        let pos = y.exp() - self.c;
                        let neg = -((-y).exp() - self.c);
                        let pos_ok = pos > 0.0 || (pos == 0.0 && y == 0.0);
                        let neg_ok = neg < 0.0 || (neg == 0.0 && y == 0.0);
                        match (pos_ok, neg_ok) {
                            (true, false) => pos,
                            (false, true) => neg,
                            (true, true) if (pos - neg).abs() < 1e-12 => 0.0,
                            (true, true) => {
                                return Err(TransformError::Domain(format!(
                                    "literal mlog inverse of {y} is ambiguous"
                                )))
                            }
                            (false, false) if y == 0.0 => 0.0,
                            (false, false) => {
                                return Err(TransformError::Domain(format!("literal mlog cannot produce {y}")))
                            }
                        }
                    }
                }
            }
            VstKind::Pit => {
                let u = self.pit_reference.cdf(y);
                self.pit()?.quantile(u)
            }
        };
        if p.is_finite() {
            Ok(p)
        } else {
            Err(TransformError::Domain(format!("inverse of {y} is not finite")))
        }
    }
}

/// Elementwise transform.
pub fn vst_transform(params: &VstParams, values: &[f64]) -> Result<Vec<f64>, TransformError> {
    values.iter().map(|&p| params.transform(p)).collect()
}

/// Elementwise inverse.
pub fn vst_inverse(params: &VstParams, values: &[f64]) -> Result<Vec<f64>, TransformError> {
    values.iter().map(|&y| params.inverse(y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(kind: VstKind, p: f64) -> f64 {
        VstParams::new(kind).transform(p).unwrap()
    }

    #[test]
    fn clipping_examples() {
        assert_eq!(t(VstKind::ThreeSigma, 4.0), 3.0);
        assert_eq!(t(VstKind::ThreeSigma, -4.0), -3.0);
        assert_eq!(t(VstKind::ThreeSigma, 2.0), 2.0);
        // 3 + log(2)
        assert!((t(VstKind::ThreeSigmaLog, 4.0) - 3.693_147_180_559_945).abs() < 1e-12);
        assert!((t(VstKind::ThreeSigmaLog, -4.0) + 3.693_147_180_559_945).abs() < 1e-12);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(t(VstKind::Logistic, 0.0), 0.5);
        assert_eq!(t(VstKind::Arcsinh, 0.0), 0.0);
        // log(1 + sqrt 2)
        assert!((t(VstKind::Arcsinh, 1.0) - 0.881_373_587_019_543).abs() < 1e-12);
        let bc0 = VstParams::new(VstKind::BoxCox).with_lambda(0.0);
        assert!((bc0.transform(std::f64::consts::E - 1.0).unwrap() - 1.0).abs() < 1e-12);
        let bc = VstParams::new(VstKind::BoxCox);
        // ((3 + 1)^0.5 - 1) / 0.5 = 2
        assert!((bc.transform(3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!((bc.transform(-3.0).unwrap() + 2.0).abs() < 1e-12);
        let mlog1 = VstParams::new(VstKind::Mlog).with_c(1.0);
        assert_eq!(mlog1.transform(0.0).unwrap(), 0.0);
        assert_eq!(mlog1.with_formula(Formula::Monotone).transform(0.0).unwrap(), 0.0);
    }

    #[test]
    fn formulas_agree_where_they_should() {
        // With c = 1 literal mlog is sgn(p) log(|p| + 1), the monotone form.
        let tab = VstParams::new(VstKind::Mlog).with_c(1.0);
        let std = tab.clone().with_formula(Formula::Monotone);
        for p in [-3.0, -0.5, 0.2, 4.0] {
            assert!((std.transform(p).unwrap() - tab.transform(p).unwrap()).abs() < 1e-12);
        }
        // Literal poly: direct evaluation and its inverse on its domain.
        let poly = VstParams::new(VstKind::Poly);
        let p = 2.0f64;
        let expected = ((p / 0.33 + 1.0).powf(0.125) - (1.0f64 / 0.33).powf(0.125)).powf(1.0 / (0.125 - 1.0));
        assert!((poly.transform(p).unwrap() - expected).abs() < 1e-12);
        assert!((poly.inverse(poly.transform(-p).unwrap()).unwrap() + p).abs() < 1e-9);
        assert!(matches!(poly.transform(0.1), Err(TransformError::Domain(_))));
        // Monotone poly has slope c at the origin.
        let sp = VstParams::new(VstKind::Poly).with_formula(Formula::Monotone);
        let slope = (sp.transform(1e-7).unwrap() - sp.transform(-1e-7).unwrap()) / 2e-7;
        assert!((slope - 0.33).abs() < 1e-6);
        let tab_mlog = VstParams::new(VstKind::Mlog);
        assert!(matches!(tab_mlog.inverse(0.1), Err(TransformError::Domain(_))));
    }

    #[test]
    fn parameter_validation() {
        assert!(matches!(
            VstParams::new(VstKind::Poly).with_lambda(1.0).transform(1.0),
            Err(TransformError::Param(_))
        ));
        assert!(VstParams::new(VstKind::BoxCox).with_lambda(-0.5).validate().is_err());
        assert!(VstParams::new(VstKind::Mlog).with_c(0.0).validate().is_err());
        assert!(matches!(VstParams::new(VstKind::Logistic).inverse(1.2), Err(TransformError::Domain(_))));
        assert!(matches!(VstParams::new(VstKind::Pit).transform(0.0), Err(TransformError::NotFitted)));
    }

    #[test]
    fn round_trips_and_monotonicity() {
        let grid: Vec<f64> = (0..=1000).map(|i| -5.0 + i as f64 * 0.01).collect();
        for kind in VstKind::ALL {
            if kind == VstKind::Pit {
                continue;
            }
            let params = VstParams::new(kind).with_formula(Formula::Monotone);
            let mut last = f64::NEG_INFINITY;
            for &p in &grid {
                let y = params.transform(p).unwrap();
                assert!(y >= last, "{kind:?} not monotone at {p}");
                last = y;
                if kind != VstKind::ThreeSigma || p.abs() <= 3.0 {
                    assert!((params.inverse(y).unwrap() - p).abs() <= 1e-8, "{kind:?} at {p}");
                }
                if kind == VstKind::ThreeSigma {
                    assert!(y.abs() <= 3.0);
                }
            }
        }
    }

    #[test]
    fn literal_defaults_are_not_invertible_near_zero() {
        let poly = VstParams::new(VstKind::Poly);
        assert!(matches!(poly.transform(0.0), Err(TransformError::Domain(_))));
        assert!(matches!(poly.transform(0.5), Err(TransformError::Domain(_))));
        // Literal poly decreases in |p| once defined: not order preserving.
        assert!(poly.transform(1.0).unwrap() > poly.transform(2.0).unwrap());
        let mlog = VstParams::new(VstKind::Mlog);
        // sgn(p) log(|p| + 0.33) is negative for small positive p.
        assert!(mlog.transform(0.1).unwrap() < 0.0 && mlog.transform(-0.1).unwrap() > 0.0);
        assert!(matches!(mlog.inverse(0.0), Err(TransformError::Domain(_))));
        // Once |y| > -log c only one sign explains y and the inverse is exact.
        assert!(matches!(mlog.inverse(mlog.transform(-1.5).unwrap()), Err(TransformError::Domain(_))));
        for p in [-4.0, -3.0, 3.0, 5.0] {
            assert!((mlog.inverse(mlog.transform(p).unwrap()).unwrap() - p).abs() < 1e-12);
        }
    }

    #[test]
    fn pit_round_trip_and_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sample: Vec<f64> = (0..500).map(|_| rng.gen_range(-2.0f64..6.0).powi(3)).collect();
        for reference in [PitReference::Normal, PitReference::Logistic] {
            let mut params = VstParams::new(VstKind::Pit).with_pit_reference(reference);
            params.fit(&sample).unwrap();
            let mut out = Vec::new();
            for &p in &sample {
                let y = params.transform(p).unwrap();
                assert!((params.inverse(y).unwrap() - p).abs() <= 1e-9 * (1.0 + p.abs()));
                out.push(y);
            }
            // Kolmogorov-Smirnov distance of the transformed sample to G.
            out.sort_by(f64::total_cmp);
            let n = out.len() as f64;
            let ks = out
                .iter()
                .enumerate()
                .map(|(i, &y)| {
                    let g = reference.cdf(y);
                    (g - i as f64 / n).abs().max(((i + 1) as f64 / n - g).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks <= 2.0 / n.sqrt(), "ks {ks}");
        }
    }

    #[test]
    fn pit_with_ties() {
        let mut params = VstParams::new(VstKind::Pit);
        params.fit(&[1.0, 2.0, 2.0, 3.0, 5.0]).unwrap();
        for p in [1.0, 2.0, 3.0, 5.0] {
            let y = params.transform(p).unwrap();
            assert!((params.inverse(y).unwrap() - p).abs() < 1e-12);
        }
        // Outside the sample range values are clamped to the extreme knots.
        assert_eq!(params.transform(-10.0).unwrap(), params.transform(1.0).unwrap());
    }
}
