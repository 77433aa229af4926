//! Adaptive Gauss-Kronrod (7/15) integration of vector-valued integrands.

use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

struct Piece {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> Vec<f64>>(f: &mut F, a: f64, b: f64) -> Piece {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let center = f(c);
    let dim = center.len();
    let mut k: Vec<f64> = center.iter().map(|v| v * WGK[7]).collect();
    let mut g: Vec<f64> = center.iter().map(|v| v * WG[3]).collect();
    for j in 0..7 {
        let lo = f(c - h * XGK[j]);
        let hi = f(c + h * XGK[j]);
        for q in 0..dim {
            let s = lo[q] + hi[q];
            k[q] += WGK[j] * s;
            if j % 2 == 1 {
                g[q] += WG[j / 2] * s;
            }
        }
    }
    let mut error = 0.0f64;
    for q in 0..dim {
        k[q] *= h;
        g[q] *= h;
        error = error.max((k[q] - g[q]).abs());
    }
    Piece { a, b, value: k, error }
}

/// Integrates `f` over `[a, b]` until the summed Kronrod/Gauss gap drops
/// below `max(abs_tol, rel_tol·|I|)` in every component, or `max_pieces`
/// subintervals are in use. Returns the estimate and the error bound.
pub fn integrate<F: FnMut(f64) -> Vec<f64>>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_pieces: usize,
) -> (Vec<f64>, f64) {
    let mut heap = BinaryHeap::new();
    heap.push(kronrod(&mut f, a, b));
    loop {
        let dim = heap.peek().map(|p| p.value.len()).unwrap_or(0);
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for p in heap.iter() {
            for q in 0..dim {
                total[q] += p.value[q];
            }
            err += p.error;
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err <= abs_tol.max(rel_tol * scale) || heap.len() >= max_pieces {
            return (total, err);
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(Piece { error: 0.0, ..worst });
            continue;
        }
        heap.push(kronrod(&mut f, worst.a, mid));
        heap.push(kronrod(&mut f, mid, worst.b));
    }
}

/// Integrates `f` over `[0, ∞)` through `x = s/(1-s)`.
pub fn integrate_half_line<F: FnMut(f64) -> Vec<f64>>(
    mut f: F,
    abs_tol: f64,
    rel_tol: f64,
    max_pieces: usize,
) -> (Vec<f64>, f64) {
    integrate(
        |s| {
            let one_minus = 1.0 - s;
            let x = s / one_minus;
            let jac = 1.0 / (one_minus * one_minus);
            let mut v = f(x);
            for e in &mut v {
                *e = if e.is_finite() { *e * jac } else { 0.0 };
            }
            v
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
        max_pieces,
    )
}
