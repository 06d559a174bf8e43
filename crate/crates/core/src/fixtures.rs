//! The standard test inclusions.

use std::sync::Arc;

use crate::algebra::{make_algebra, AlgebraElement, TraceVector};
use crate::expectation::{from_density, trace_expectation, ConditionalExpectation};
use crate::inclusion::{build_inclusion, Inclusion};
use crate::linalg::{c, CMat, CVec};

/// `ℂ ⊂ M₂`, `Λ = [2]`.
pub fn f1() -> Arc<Inclusion> {
    fixture(&[1], "C", &[2], "M2", &[vec![2]])
}

/// `ℂ ⊕ ℂ ⊂ M₂` as diagonal matrices, `Λ = [1, 1]ᵀ`.
pub fn f2() -> Arc<Inclusion> {
    fixture(&[1, 1], "C2", &[2], "M2", &[vec![1], vec![1]])
}

/// `ℂ ⊂ ℂ ⊕ ℂ`, `Λ = [1, 1]`.
pub fn f3() -> Arc<Inclusion> {
    fixture(&[1], "C", &[1, 1], "C2", &[vec![1, 1]])
}

/// `ℂ ⊂ M₂ ⊕ M₃`, `Λ = [2, 3]`.
pub fn f4() -> Arc<Inclusion> {
    fixture(&[1], "C", &[2, 3], "M2+M3", &[vec![2, 3]])
}

/// `M₂ = M₂`.
pub fn f5() -> Arc<Inclusion> {
    fixture(&[2], "M2", &[2], "M2", &[vec![1]])
}

pub fn all() -> Vec<Arc<Inclusion>> {
    vec![f1(), f2(), f3(), f4(), f5()]
}

pub fn by_name(name: &str) -> Option<Arc<Inclusion>> {
    match name.to_ascii_uppercase().as_str() {
        "F1" => Some(f1()),
        "F2" => Some(f2()),
        "F3" => Some(f3()),
        "F4" => Some(f4()),
        "F5" => Some(f5()),
        _ => None,
    }
}

/// The trace-preserving expectation for the block-uniform trace.
pub fn trace_of(inc: &Arc<Inclusion>) -> ConditionalExpectation {
    trace_expectation(inc, &TraceVector::uniform(inc.m())).expect("trace expectation of a fixture")
}

/// `E_p` on F3: `(a, b) ↦ p·a + (1−p)·b`.
pub fn f3_expectation(p: f64) -> ConditionalExpectation {
    let f3 = f3();
    let h = AlgebraElement::block_scalars(f3.m(), &[c(2.0 * p), c(2.0 * (1.0 - p))]);
    from_density(&f3, &TraceVector::uniform(f3.m()), &h).expect("0 < p < 1")
}

/// `E_ρ = Tr(ρ ·)` on F1 with `ρ = diag(p, 1−p)`.
pub fn f1_expectation(p: f64) -> ConditionalExpectation {
    let f1 = f1();
    let rho = CMat::from_diagonal(&CVec::from_vec(vec![c(2.0 * p), c(2.0 * (1.0 - p))]));
    let h = AlgebraElement::from_blocks(f1.m(), vec![rho]).expect("2×2 block");
    from_density(&f1, &TraceVector::uniform(f1.m()), &h).expect("0 < p < 1")
}

/// Builds a canonical inclusion; panics on invalid data.
pub fn fixture(n: &[usize], nl: &str, m: &[usize], ml: &str, lambda: &[Vec<usize>]) -> Arc<Inclusion> {
    let n = make_algebra(n, nl).expect("fixture algebra");
    let m = make_algebra(m, ml).expect("fixture algebra");
    Arc::new(build_inclusion(&n, &m, lambda).expect("fixture inclusion"))
}
