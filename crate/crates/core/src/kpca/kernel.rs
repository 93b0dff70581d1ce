use crate::error::{Error, Result};

/// Highest polynomial degree accepted; larger orders make the pre-image
/// iteration unstable.
pub const MAX_POLY_DEGREE: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kernel {
    /// `k(x, y) = c + (x . y)^degree`
    Polynomial { degree: u32, c: f64 },
    /// `k(x, y) = exp(-|x - y|^2 / sigma)`
    Gaussian { sigma: f64 },
}

impl Kernel {
    pub fn linear() -> Self {
        Kernel::Polynomial { degree: 1, c: 0.0 }
    }

    pub fn polynomial(degree: u32) -> Self {
        Kernel::Polynomial { degree, c: 0.0 }
    }

    /// Degree-one polynomial kernels give an exact, iteration-free pre-image.
    pub fn is_linear(&self) -> bool {
        matches!(self, Kernel::Polynomial { degree: 1, .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Polynomial { degree, c } => {
                if degree == 0 || degree > MAX_POLY_DEGREE {
                    return Err(Error::invalid(format!(
                        "polynomial degree must lie in 1..={MAX_POLY_DEGREE}, got {degree}"
                    )));
                }
                if !(c.is_finite() && c >= 0.0) {
                    return Err(Error::invalid("polynomial offset must be finite and non-negative"));
                }
            }
            Kernel::Gaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::invalid("gaussian width must be finite and positive"));
                }
            }
        }
        Ok(())
    }

    /// Kernel value on slices of equal length; no checks.
    #[inline]
    pub(crate) fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Polynomial { degree, c } => c + dot(x, y).powi(degree as i32),
            Kernel::Gaussian { sigma } => (-sq_dist(x, y) / sigma).exp(),
        }
    }

    /// Pre-image weight and its derivative. For polynomials these are
    /// `w(t) = sum_{j=1}^d j t^{j-1}` and `w'(t)` in the inner product `t`;
    /// for the gaussian, `w` is the kernel value itself.
    #[inline]
    pub(crate) fn poly_weight(degree: u32, t: f64) -> (f64, f64) {
        let (mut w, mut dw) = (0.0, 0.0);
        let mut tp = 1.0; // t^(j-1)
        let mut tpm = 0.0; // t^(j-2)
        for j in 1..=degree {
            let jf = j as f64;
            w += jf * tp;
            dw += jf * (jf - 1.0) * tpm;
            tpm = tp;
            tp *= t;
        }
        (w, dw)
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Kernel::Polynomial { degree: 1, c } if c == 0.0 => f.write_str("linear"),
            Kernel::Polynomial { degree, c } if c == 0.0 => write!(f, "polynomial {degree}"),
            Kernel::Polynomial { degree, c } => write!(f, "polynomial {degree} {c:?}"),
            Kernel::Gaussian { sigma } => write!(f, "gaussian {sigma:?}"),
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    /// Accepts `linear`, `polynomial <d> [c]` and `gaussian <sigma>`.
    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.split_whitespace().collect();
        let num = |i: usize| -> Result<f64> {
            toks.get(i)
                .ok_or_else(|| Error::invalid(format!("kernel spec {s:?} is incomplete")))?
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("kernel spec {s:?}: {e}")))
        };
        let k = match toks.first().copied() {
            Some("linear") if toks.len() == 1 => Kernel::linear(),
            Some("polynomial") if (2..=3).contains(&toks.len()) => {
                let degree = toks[1]
                    .parse::<u32>()
                    .map_err(|e| Error::invalid(format!("kernel spec {s:?}: {e}")))?;
                let c = if toks.len() == 3 { num(2)? } else { 0.0 };
                Kernel::Polynomial { degree, c }
            }
            Some("gaussian") if toks.len() == 2 => Kernel::Gaussian { sigma: num(1)? },
            _ => return Err(Error::invalid(format!("unrecognized kernel spec {s:?}"))),
        };
        k.validate()?;
        Ok(k)
    }
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn kernel_eval(kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64> {
    kernel.validate()?;
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "kernel arguments",
            expected: x.len(),
            got: y.len(),
        });
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("kernel argument"));
    }
    Ok(kernel.apply(x, y))
}
