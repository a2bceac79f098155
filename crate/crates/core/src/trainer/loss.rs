use ndarray::Array2;

use crate::error::{Error, Result};

/// Batch loss split into its two mean-squared-error terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLoss {
    pub total: f64,
    pub angle_mse: f64,
    pub speed_mse: f64,
}

/// Sum of the per-target batch MSEs in normalized space. `pred` and
/// `target` are (batch, 2) with angle in column 0 and speed in column 1.
pub fn joint_loss(pred: &Array2<f64>, target: &Array2<f64>) -> Result<JointLoss> {
    if pred.dim() != target.dim() || pred.ncols() != 2 || pred.nrows() == 0 {
        return Err(Error::validation(format!(
            "prediction shape {:?} does not match target shape {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.iter().chain(target.iter()).any(|v| !v.is_finite()) {
        return Err(Error::numeric("joint_loss", "non-finite prediction or target"));
    }
    let n = pred.nrows() as f64;
    let mut sa = 0.0;
    let mut ss = 0.0;
    for (p, t) in pred.outer_iter().zip(target.outer_iter()) {
        sa += (p[0] - t[0]).powi(2);
        ss += (p[1] - t[1]).powi(2);
    }
    let angle_mse = sa / n;
    let speed_mse = ss / n;
    Ok(JointLoss {
        total: angle_mse + speed_mse,
        angle_mse,
        speed_mse,
    })
}

/// Gradient of [`joint_loss`] with respect to `pred`.
pub fn joint_loss_grad(pred: &Array2<f64>, target: &Array2<f64>) -> Array2<f64> {
    let n = pred.nrows() as f64;
    (pred - target) * (2.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_prediction_is_zero() {
        let p = array![[0.3, -1.0], [2.0, 0.5]];
        assert_eq!(joint_loss(&p, &p).unwrap().total, 0.0);
    }

    #[test]
    fn unit_angle_error() {
        let l = joint_loss(&array![[1.0, 0.0]], &array![[0.0, 0.0]]).unwrap();
        assert_eq!(l.total, 1.0);
        assert_eq!(l.angle_mse, 1.0);
        assert_eq!(l.speed_mse, 0.0);
    }

    #[test]
    fn three_pairs_match_hand_computation() {
        let p = array![[0.5, 1.25], [-0.75, 0.0], [2.0, -1.5]];
        let t = array![[0.0, 1.0], [0.25, 0.5], [1.5, -1.0]];
        // angle: (0.25 + 1.0 + 0.25) / 3, speed: (0.0625 + 0.25 + 0.25) / 3
        let expected = 1.5 / 3.0 + 0.5625 / 3.0;
        let l = joint_loss(&p, &t).unwrap();
        assert!((l.total - expected).abs() < 1e-12);
        assert!((l.angle_mse + l.speed_mse - l.total).abs() < 1e-12);
    }

    #[test]
    fn non_finite_is_numeric_error() {
        let err = joint_loss(&array![[f64::NAN, 0.0]], &array![[0.0, 0.0]]).unwrap_err();
        assert_eq!(err.class(), "numeric");
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let p = array![[0.5, 1.25], [-0.75, 0.0]];
        let t = array![[0.0, 1.0], [0.25, 0.5]];
        let g = joint_loss_grad(&p, &t);
        let h = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let mut up = p.clone();
                up[[i, j]] += h;
                let mut dn = p.clone();
                dn[[i, j]] -= h;
                let fd = (joint_loss(&up, &t).unwrap().total - joint_loss(&dn, &t).unwrap().total) / (2.0 * h);
                assert!((fd - g[[i, j]]).abs() < 1e-8);
            }
        }
    }
}
