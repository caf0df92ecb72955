use serde::{Deserialize, Serialize};

use super::PhotometricError;
use crate::imaging::ColorTriple;
use crate::sim::Mat3;

/// Global channel-crosstalk estimate: capture ≈ matrix · drive + offset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixingFit {
    pub matrix: Mat3,
    pub offset: [f64; 3],
    /// Root-mean-square residual of the fit over all probe samples.
    pub residual_rms: f64,
}

/// Solve `a x = b` for a 4x4 system by Gaussian elimination with partial
/// pivoting. `None` when a pivot collapses (rank-deficient system).
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let mut pivot = col;
        for row in col + 1..4 {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Least-squares fit of a global 3x3 mixing matrix plus offset from
/// `(drive, capture)` probe pairs. Needs at least four probes whose drives
/// span the color cube affinely; the canonical probe set is the six
/// full-drive primaries and secondaries (R, G, B, C, M, Y).
pub fn fit_mixing_matrix(
    pairs: &[(ColorTriple, ColorTriple)],
) -> Result<MixingFit, PhotometricError> {
    if pairs.len() < 4 {
        return Err(PhotometricError::NeedProbes { got: pairs.len() });
    }
    // Shared normal matrix over augmented drives [d, 1].
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [[0.0f64; 4]; 3];
    for (drive, capture) in pairs {
        let d = [drive.values[0], drive.values[1], drive.values[2], 1.0];
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += d[i] * d[j];
            }
            for c in 0..3 {
                atb[c][i] += d[i] * capture.values[c];
            }
        }
    }
    let mut matrix = Mat3::identity();
    let mut offset = [0.0; 3];
    for c in 0..3 {
        let x = solve4(ata, atb[c]).ok_or(PhotometricError::RankDeficient)?;
        matrix.0[c] = [x[0], x[1], x[2]];
        offset[c] = x[3];
    }
    let mut sq = 0.0;
    for (drive, capture) in pairs {
        let pred = matrix.mul_vec(drive.values);
        for c in 0..3 {
            let r = pred[c] + offset[c] - capture.values[c];
            sq += r * r;
        }
    }
    let residual_rms = (sq / (pairs.len() * 3) as f64).sqrt();
    Ok(MixingFit {
        matrix,
        offset,
        residual_rms,
    })
}

/// Full-drive primary and secondary probe colors.
pub const PROBE_DRIVES: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
];
