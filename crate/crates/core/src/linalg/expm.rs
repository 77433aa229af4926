use nalgebra::DMatrix;

use super::{ensure_square_finite, norm1};
use crate::error::{MphError, Result};

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with diagonal Padé approximants.
///
/// The approximant degree is the smallest of 3, 5, 7, 9 whose backward-error
/// bound covers the 1-norm; otherwise degree 13 is used after scaling by
/// `2^-s`, with `s` chosen from the 1-norm.
pub fn matrix_exponential(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_square_finite(a, "matrix_exponential input")?;
    let out = matrix_exponential_unchecked(a);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(MphError::Numerical(
            "matrix exponential overflowed".to_string(),
        ));
    }
    Ok(out)
}

/// Same as [`matrix_exponential`] without the input checks. Callers must
/// pass a finite square matrix.
pub fn matrix_exponential_unchecked(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = norm1(a);
    let ident = DMatrix::<f64>::identity(n, n);
    if norm == 0.0 {
        return ident;
    }

    if norm <= THETA_9 {
        let a2 = a * a;
        let (u, v) = if norm <= THETA_3 {
            pade_low(a, &a2, &ident, &B3)
        } else if norm <= THETA_5 {
            pade_low(a, &a2, &ident, &B5)
        } else if norm <= THETA_7 {
            pade_low(a, &a2, &ident, &B7)
        } else {
            pade_low(a, &a2, &ident, &B9)
        };
        return solve_pade(&u, &v);
    }

    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = a * 2f64.powi(-s);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &B13;

    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u_poly = &a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1];
    let u = &scaled * u_poly;
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let mut r = solve_pade(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Odd/even split of a low-degree Padé numerator, using only even powers.
fn pade_low(
    a: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    ident: &DMatrix<f64>,
    b: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut odd = ident * b[1];
    let mut even = ident * b[0];
    let mut power = ident.clone();
    let mut k = 2;
    while k < b.len() {
        power = &power * a2;
        even += &power * b[k];
        if k + 1 < b.len() {
            odd += &power * b[k + 1];
        }
        k += 2;
    }
    (a * odd, even)
}

fn solve_pade(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .unwrap_or_else(|| DMatrix::from_element(u.nrows(), u.ncols(), f64::NAN))
}
