//! Coarse (one number) and fine (sliding-window series) distances between
//! two aligned, equal-length segments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window used when none is given.
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseMode {
    /// `Σ sqrt((r_j - q_j)^2)`, i.e. the sum of absolute deviations.
    #[default]
    AbsoluteSum,
    /// `sqrt(Σ (r_j - q_j)^2)`.
    Euclidean,
}

fn check_equal(q: &[f64], r: &[f64]) -> Result<()> {
    if q.len() != r.len() {
        return Err(Error::UnequalLengths {
            query: q.len(),
            reference: r.len(),
        });
    }
    if q.is_empty() {
        return Err(Error::EmptySeries);
    }
    Ok(())
}

/// Sum of per-sample absolute deviations between `q` and `r`.
pub fn coarse_distance(q: &[f64], r: &[f64]) -> Result<f64> {
    coarse_distance_with(q, r, CoarseMode::AbsoluteSum)
}

pub fn coarse_distance_with(q: &[f64], r: &[f64], mode: CoarseMode) -> Result<f64> {
    check_equal(q, r)?;
    let pairs = q.iter().zip(r);
    Ok(match mode {
        CoarseMode::AbsoluteSum => pairs.map(|(a, b)| (b - a).abs()).sum(),
        CoarseMode::Euclidean => pairs.map(|(a, b)| (b - a) * (b - a)).sum::<f64>().sqrt(),
    })
}

/// Windowed deviation series `s_i = 1 - Σ_{j=i}^{i+w-1} |r_j - q_j|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineDistanceSeries {
    pub window: usize,
    pub values: Vec<f64>,
}

impl FineDistanceSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with header `i,s_i`, 1-based index.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,s_i\n");
        for (i, s) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{:?}\n", i + 1, s));
        }
        out
    }
}

/// Sliding-window distance of length `n - w + 1`. Values below zero are kept.
pub fn fine_distance(q: &[f64], r: &[f64], w: usize) -> Result<FineDistanceSeries> {
    check_equal(q, r)?;
    if w == 0 {
        return Err(Error::ZeroWindow);
    }
    let n = q.len();
    if w > n {
        return Err(Error::WindowTooLarge { window: w, len: n });
    }
    let dev: Vec<f64> = q.iter().zip(r).map(|(a, b)| (b - a).abs()).collect();
    let mut sum: f64 = dev[..w].iter().sum();
    let mut values = Vec::with_capacity(n - w + 1);
    values.push(1.0 - sum);
    for i in w..n {
        sum += dev[i] - dev[i - w];
        values.push(1.0 - sum);
    }
    Ok(FineDistanceSeries { window: w, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_examples() {
        assert_eq!(coarse_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(coarse_distance(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(
            coarse_distance_with(&[0.0, 0.0], &[3.0, 4.0], CoarseMode::Euclidean).unwrap(),
            5.0
        );
        assert!(matches!(
            coarse_distance(&[1.0], &[1.0, 2.0]),
            Err(Error::UnequalLengths { .. })
        ));
    }

    #[test]
    fn fine_examples() {
        let f = fine_distance(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert_eq!(f.values, vec![0.0, 1.0, 0.0]);
        assert_eq!(f.window, 2);

        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        for w in 1..=5 {
            let f = fine_distance(&x, &x, w).unwrap();
            assert_eq!(f.len(), 5 - w + 1);
            assert!(f.values.iter().all(|&s| s == 1.0));
        }
    }

    #[test]
    fn fine_window_errors() {
        assert!(matches!(
            fine_distance(&[0.0; 3], &[0.0; 3], 4),
            Err(Error::WindowTooLarge { window: 4, len: 3 })
        ));
        assert!(matches!(fine_distance(&[0.0; 3], &[0.0; 3], 0), Err(Error::ZeroWindow)));
    }

    #[test]
    fn large_windows_go_negative() {
        let f = fine_distance(&[0.0; 20], &[1.0; 20], 10).unwrap();
        assert!(f.values.iter().all(|&s| s == -9.0));
    }

    #[test]
    fn fine_csv_layout() {
        let f = fine_distance(&[0.0; 3], &[0.5, 0.0, 0.0], 2).unwrap();
        assert_eq!(f.to_csv(), "i,s_i\n1,0.5\n2,1.0\n");
    }
}
