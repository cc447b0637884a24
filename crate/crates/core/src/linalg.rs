use nalgebra::{DMatrix, DVector, SVD};

/// Thin SVD with singular values in descending order.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

pub fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    let svd = SVD::new(a.clone(), true, true);
    ThinSvd {
        u: svd.u.expect("u requested"),
        singular_values: svd.singular_values,
        v_t: svd.v_t.expect("v_t requested"),
    }
}

/// Euclidean norms of the columns of `a`.
pub fn column_norms(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(a.ncols(), a.column_iter().map(|c| c.norm()))
}

/// Infinity norm (max absolute row sum).
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}
