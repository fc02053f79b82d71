use std::sync::Arc;

use mwlab_core::diagnostics::{
    constants_report, critical_index, reverse_holder_check, rhi_endpoint,
};
use mwlab_core::dyadic::CubeWindow;
use mwlab_core::linalg::CMatrix;
use mwlab_core::weights::{MatrixWeight, Quadrature};

#[test]
fn probe() {
    let quad = Quadrature::gauss(3, 2, 10).unwrap();
    for a in [[0.5, 1.5], [1.0, 1.0]] {
        let w = MatrixWeight::<f64>::anisotropic_product(2, 1, a.to_vec()).unwrap();
        let r = critical_index(&w).unwrap();
        println!("a={a:?} analytic={:?} bracket={:?} evals={}", r.analytic, r.bracket, r.evaluations);
    }
    let rot = CMatrix::from_real_rows(&[
        &[0.7f64.cos(), -(0.7f64.sin())],
        &[0.7f64.sin(), 0.7f64.cos()],
    ])
    .unwrap();
    let menu: Vec<(&str, MatrixWeight<f64>)> = vec![
        ("identity1", MatrixWeight::identity(1, 2).unwrap()),
        ("identity2", MatrixWeight::identity(2, 2).unwrap()),
        ("power1", MatrixWeight::power_isotropic(1, 2, 0.7).unwrap()),
        ("power2", MatrixWeight::power_isotropic(2, 2, 1.2).unwrap()),
        ("aniso", MatrixWeight::anisotropic_product(2, 2, vec![0.5, 1.5]).unwrap()),
        ("conj", MatrixWeight::conjugated_diagonal(1, vec![0.4, 1.3], rot).unwrap()),
    ];
    for (name, w) in &menu {
        let win = CubeWindow::new(w.n(), -1, 1, 2, false).unwrap();
        let cr = constants_report(w, 2.0, &win, 3, &quad).unwrap();
        let r_end = rhi_endpoint(cr.fujii_sc, w.n());
        let rhi = reverse_holder_check(w, 2.0, &win, &[r_end], &quad).unwrap();
        println!(
            "{name}: sc={:.4} r_end={:.4} worst_ratio={:.4} ap={:.4} apinfty={:.4}",
            cr.fujii_sc, r_end, rhi.worst_ratio, cr.ap, cr.apinfty
        );
        assert!(cr.apinfty <= cr.ap);
    }
}
