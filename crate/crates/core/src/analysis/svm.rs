use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::renderer::LocalGaussianSet;

/// A unit normal in code space with the offset of its separating hyperplane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentDirection {
    pub name: String,
    pub direction: Vec<f64>,
    /// Signed distance of the hyperplane along `direction`.
    pub bias: f64,
    pub accuracy: f64,
}

impl LatentDirection {
    /// Signed distance of `code` to the hyperplane.
    pub fn score(&self, code: &[f64]) -> Result<f64> {
        ensure_len("latent code", self.direction.len(), code.len())?;
        Ok(self.direction.iter().zip(code).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }

    pub fn validate(&self) -> Result<()> {
        let norm = self.direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 || !self.bias.is_finite() {
            return Err(Error::InvalidArgument(format!("direction norm {norm} is not unit")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    /// L2 penalty on the weight vector.
    pub reg_strength: f64,
    pub iterations: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            reg_strength: 1e-3,
            iterations: 5000,
        }
    }
}

/// Linear SVM by full-batch sub-gradient descent on the regularized hinge
/// loss with a 1/(λt) step, returning the average of the second half of the
/// iterates. The bias is not regularized.
pub fn svm_direction(name: &str, codes: &[Vec<f64>], labels: &[bool], cfg: &SvmConfig) -> Result<LatentDirection> {
    ensure_len("svm labels", codes.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::InvalidArgument("svm needs both classes".into()));
    }
    if !(cfg.reg_strength > 0.0) || cfg.iterations == 0 {
        return Err(Error::InvalidArgument("svm needs positive regularization and iterations".into()));
    }
    let d = codes[0].len();
    for c in codes {
        ensure_len("latent code", d, c.len())?;
    }
    let n = codes.len() as f64;
    let lambda = cfg.reg_strength;
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; d];
    let mut b_avg = 0.0;
    let half = cfg.iterations / 2;
    let mut gw = vec![0.0; d];
    for t in 1..=cfg.iterations {
        let eta = 1.0 / (lambda * t as f64);
        gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = lambda * wi);
        let mut gb = 0.0;
        for (x, &yi) in codes.iter().zip(&y) {
            let margin = yi * (dot(&w, x) + b);
            if margin < 1.0 {
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g -= yi * xi / n;
                }
                gb -= yi / n;
            }
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= eta * g;
        }
        b -= eta * gb;
        if t > half {
            for (a, wi) in w_avg.iter_mut().zip(&w) {
                *a += wi;
            }
            b_avg += b;
        }
    }
    let norm = dot(&w_avg, &w_avg).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidArgument("svm weight vector vanished".into()));
    }
    let direction: Vec<f64> = w_avg.iter().map(|x| x / norm).collect();
    let bias = b_avg / norm;
    let correct = codes
        .iter()
        .zip(labels)
        .filter(|(x, &l)| (dot(&direction, x) + bias > 0.0) == l)
        .count();
    Ok(LatentDirection {
        name: name.to_string(),
        direction,
        bias,
        accuracy: correct as f64 / n,
    })
}

/// `code + magnitude * direction`.
pub fn edit_latent(code: &[f64], dir: &LatentDirection, magnitude: f64) -> Result<Vec<f64>> {
    ensure_len("latent code", dir.direction.len(), code.len())?;
    Ok(code.iter().zip(&dir.direction).map(|(z, d)| z + magnitude * d).collect())
}

/// Mean local displacement length over scalp-bound Gaussians.
pub fn scalp_extent(avatar: &LocalGaussianSet, scalp_mask: &[bool]) -> Result<f64> {
    ensure_len("scalp mask", avatar.len(), scalp_mask.len())?;
    let (sum, n) = avatar
        .mu
        .iter()
        .zip(scalp_mask)
        .filter(|(_, &s)| s)
        .fold((0.0, 0usize), |(s, n), (m, _)| (s + dot(m, m).sqrt(), n + 1));
    if n == 0 {
        return Err(Error::InvalidArgument("no scalp-bound Gaussians".into()));
    }
    Ok(sum / n as f64)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
