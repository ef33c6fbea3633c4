//! Tabulated radial functions sampled on a logarithmic axis.

/// Values and `d/d(log r)` derivatives at increasing radii, interpolated by
/// cubic Hermite segments in `log r`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTable {
    log_r: Vec<f64>,
    value: Vec<f64>,
    slope: Vec<f64>,
}

impl RadialTable {
    pub fn new(log_r: Vec<f64>, value: Vec<f64>, slope: Vec<f64>) -> Self {
        assert!(log_r.len() >= 2 && log_r.len() == value.len() && log_r.len() == slope.len());
        debug_assert!(log_r.windows(2).all(|w| w[0] < w[1]));
        RadialTable {
            log_r,
            value,
            slope,
        }
    }

    pub fn r_min(&self) -> f64 {
        self.log_r[0].exp()
    }

    pub fn r_max(&self) -> f64 {
        self.log_r[self.log_r.len() - 1].exp()
    }

    pub fn len(&self) -> usize {
        self.log_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_r.is_empty()
    }

    pub fn log_r(&self) -> &[f64] {
        &self.log_r
    }

    pub fn values(&self) -> &[f64] {
        &self.value
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slope
    }

    /// Interpolates at `log r = t`; `t` must lie in the tabulated range.
    pub fn eval_log(&self, t: f64) -> f64 {
        let n = self.log_r.len();
        let k = match self.log_r.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(k) => return self.value[k],
            Err(0) => 0,
            Err(k) if k >= n => n - 2,
            Err(k) => k - 1,
        };
        let (t0, t1) = (self.log_r[k], self.log_r[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.value[k]
            + h10 * h * self.slope[k]
            + h01 * self.value[k + 1]
            + h11 * h * self.slope[k + 1]
    }

    /// Rescales the radial axis `r -> r / s` and shifts values by `shift`.
    pub fn rescaled(&self, s: f64, shift: f64) -> Self {
        let ls = s.ln();
        RadialTable {
            log_r: self.log_r.iter().map(|t| t - ls).collect(),
            value: self.value.iter().map(|v| v + shift).collect(),
            slope: self.slope.clone(),
        }
    }
}
