use nalgebra::DMatrix;

/// Kronecker product `A ⊗ B`.
pub fn kron_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Kronecker sum `A ⊕ B = A ⊗ I + I ⊗ B` of two square matrices.
pub fn kron_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ia = DMatrix::<f64>::identity(a.nrows(), a.nrows());
    let ib = DMatrix::<f64>::identity(b.nrows(), b.nrows());
    a.kronecker(&ib) + ia.kronecker(b)
}

/// Left-folded Kronecker sum `A_1 ⊕ A_2 ⊕ … ⊕ A_d`.
///
/// # Panics
/// Panics on an empty slice.
pub fn kron_power_sum(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let (first, rest) = mats.split_first().expect("kron_power_sum needs a matrix");
    rest.iter().fold(first.clone(), |acc, m| kron_sum(&acc, m))
}
