//! Constant-velocity Kalman filter over `[cx, cy, w, h, vcx, vcy, vw, vh]`.

use crate::linalg::Matrix;

pub const STATE_DIM: usize = 8;

/// Noise settings. Process noise is `diag(q_pos^2 x4, q_vel^2 x4)`,
/// measurement noise `diag(r^2 x4)`, and new tracks start with
/// `diag(p0_pos x4, p0_vel x4)` covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanModel {
    pub q_pos: f64,
    pub q_vel: f64,
    pub r: f64,
    pub p0_pos: f64,
    pub p0_vel: f64,
}

impl Default for KalmanModel {
    fn default() -> Self {
        Self {
            q_pos: 1.0,
            q_vel: 0.1,
            r: 1.0,
            p0_pos: 10.0,
            p0_vel: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: [f64; STATE_DIM],
    pub cov: Matrix,
}

impl KalmanModel {
    pub fn initiate(&self, measurement: [f64; 4]) -> KalmanState {
        let mut mean = [0.0; STATE_DIM];
        mean[..4].copy_from_slice(&measurement);
        let mut cov = Matrix::zeros(STATE_DIM, STATE_DIM);
        for i in 0..4 {
            cov[(i, i)] = self.p0_pos;
            cov[(i + 4, i + 4)] = self.p0_vel;
        }
        KalmanState { mean, cov }
    }

    fn transition() -> Matrix {
        let mut f = Matrix::identity(STATE_DIM);
        for i in 0..4 {
            f[(i, i + 4)] = 1.0;
        }
        f
    }

    pub fn predict(&self, state: &KalmanState) -> KalmanState {
        let f = Self::transition();
        let mut mean = [0.0; STATE_DIM];
        for (i, m) in mean.iter_mut().enumerate() {
            *m = (0..STATE_DIM).map(|j| f[(i, j)] * state.mean[j]).sum();
        }
        let mut cov = f.matmul(&state.cov).matmul(&f.transpose());
        for i in 0..4 {
            cov[(i, i)] += self.q_pos * self.q_pos;
            cov[(i + 4, i + 4)] += self.q_vel * self.q_vel;
        }
        KalmanState {
            mean,
            cov: symmetrize(&cov),
        }
    }

    /// Measurement update with the Joseph-form covariance.
    pub fn update(&self, state: &KalmanState, measurement: [f64; 4]) -> KalmanState {
        let p = &state.cov;
        // H selects the first four state entries.
        let mut s = Matrix::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                s[(i, j)] = p[(i, j)];
            }
            s[(i, i)] += self.r * self.r;
        }
        let s_inv = s.spd_inverse().expect("innovation covariance is SPD");
        // K = P H^T S^-1 (8x4)
        let mut pht = Matrix::zeros(STATE_DIM, 4);
        for i in 0..STATE_DIM {
            for j in 0..4 {
                pht[(i, j)] = p[(i, j)];
            }
        }
        let k = pht.matmul(&s_inv);
        let innovation: Vec<f64> = (0..4).map(|i| measurement[i] - state.mean[i]).collect();
        let mut mean = state.mean;
        for (i, m) in mean.iter_mut().enumerate() {
            *m += (0..4).map(|j| k[(i, j)] * innovation[j]).sum::<f64>();
        }
        let mut i_kh = Matrix::identity(STATE_DIM);
        for i in 0..STATE_DIM {
            for j in 0..4 {
                i_kh[(i, j)] -= k[(i, j)];
            }
        }
        let mut krk = k.matmul(&k.transpose());
        krk = krk.scale(self.r * self.r);
        let cov = i_kh.matmul(p).matmul(&i_kh.transpose()).add(&krk);
        KalmanState {
            mean,
            cov: symmetrize(&cov),
        }
    }
}

fn symmetrize(m: &Matrix) -> Matrix {
    m.add(&m.transpose()).scale(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;

    #[test]
    fn predict_static_grows_covariance() {
        let km = KalmanModel::default();
        let s = km.initiate([5.0, 6.0, 2.0, 3.0]);
        let p = km.predict(&s);
        assert_eq!(&p.mean[..4], &[5.0, 6.0, 2.0, 3.0]);
        assert!(p.cov.trace() > s.cov.trace());
    }

    #[test]
    fn predict_moves_with_velocity() {
        let km = KalmanModel::default();
        let mut s = km.initiate([5.0, 0.0, 1.0, 1.0]);
        s.mean[4] = 1.0;
        assert_eq!(km.predict(&s).mean[0], 6.0);
    }

    #[test]
    fn zero_innovation_update() {
        let km = KalmanModel::default();
        let s = km.predict(&km.initiate([5.0, 6.0, 2.0, 3.0]));
        let u = km.update(&s, [5.0, 6.0, 2.0, 3.0]);
        for i in 0..STATE_DIM {
            assert!((u.mean[i] - s.mean[i]).abs() < 1e-9);
        }
        assert!(u.cov.trace() < s.cov.trace());
    }

    #[test]
    fn covariance_stays_psd() {
        let km = KalmanModel::default();
        let mut s = km.initiate([0.0, 0.0, 10.0, 20.0]);
        for t in 0..50 {
            s = km.predict(&s);
            s = km.update(&s, [t as f64 * 1.5, 0.3 * t as f64, 10.0, 20.0]);
            assert!(s.cov.max_abs_diff(&s.cov.transpose()) == 0.0);
            assert!(symmetric_eigenvalues(&s.cov)[0] >= -1e-9);
        }
    }
}
