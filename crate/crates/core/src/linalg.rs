//! Dense complex matrix helpers: spin operators, tensor products, Hermitian
//! exponentials and Lindblad superoperators.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Spin operators (I_x, I_y, I_z) for spin s = twice_s/2 in the |m = s, …, −s⟩ basis.
pub fn spin_ops(twice_s: usize) -> [CMat; 3] {
    let s = twice_s as f64 / 2.0;
    let n = twice_s + 1;
    let m = |i: usize| s - i as f64;
    let mut ip = CMat::zeros(n, n);
    let mut iz = CMat::zeros(n, n);
    for i in 0..n {
        iz[(i, i)] = real(m(i));
        if i > 0 {
            // ⟨m+1|I+|m⟩
            let mm = m(i);
            ip[(i - 1, i)] = real((s * (s + 1.0) - mm * (mm + 1.0)).sqrt());
        }
    }
    let im = ip.adjoint();
    let ix = (&ip + &im) * real(0.5);
    let iy = (&ip - &im) * C64::new(0.0, -0.5);
    [ix, iy, iz]
}

/// Pauli matrices (σ_x, σ_y, σ_z).
pub fn paulis() -> [CMat; 3] {
    let [x, y, z] = spin_ops(1);
    [x * real(2.0), y * real(2.0), z * real(2.0)]
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Embeds `op` acting on subsystem `index` of a register with dimensions `dims`.
pub fn embed(op: &CMat, index: usize, dims: &[usize]) -> CMat {
    let before: usize = dims[..index].iter().product();
    let after: usize = dims[index + 1..].iter().product();
    kron(&kron(&identity(before), op), &identity(after))
}

/// Embeds a product of two single-subsystem operators.
pub fn embed_pair(a: &CMat, i: usize, b: &CMat, j: usize, dims: &[usize]) -> CMat {
    let mut out = identity(1);
    for (k, &d) in dims.iter().enumerate() {
        let f = if k == i {
            a.clone()
        } else if k == j {
            b.clone()
        } else {
            identity(d)
        };
        out = kron(&out, &f);
    }
    out
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// max |U†U − 1|.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    max_abs(&(u.adjoint() * u - identity(n)))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * real(0.5)
}

/// Eigendecomposition of a Hermitian generator, reusable for any time step.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn new(h: &CMat) -> Self {
        let eig = hermitian_part(h).symmetric_eigen();
        Self { values: eig.eigenvalues.iter().copied().collect(), vectors: eig.eigenvectors }
    }

    /// exp(−i H t).
    pub fn propagator(&self, t: f64) -> CMat {
        let v = &self.vectors;
        let mut scaled = v.clone();
        for (j, e) in self.values.iter().enumerate() {
            let ph = C64::from_polar(1.0, -e * t);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= ph;
            }
        }
        scaled * v.adjoint()
    }
}

/// exp(−i H t) for Hermitian H.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    if h.nrows() == 0 {
        return h.clone();
    }
    HermitianEigen::new(h).propagator(t)
}

/// General matrix exponential (scaling and squaring with Padé approximants).
pub fn expm(m: &CMat) -> CMat {
    m.clone().exp()
}

/// Column-stacking vectorisation.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVec, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

/// Lindblad generator acting on column-stacked density matrices:
/// dρ/dt = −i[H, ρ] + Σ (L ρ L† − ½{L†L, ρ}).
pub fn lindbladian(h: &CMat, jumps: &[CMat]) -> CMat {
    let n = h.nrows();
    let id = identity(n);
    let mut sup = (kron(&id, h) - kron(&h.transpose(), &id)) * (-I);
    for l in jumps {
        let ldl = l.adjoint() * l;
        sup += kron(&l.conjugate(), l);
        sup -= kron(&id, &ldl) * real(0.5);
        sup -= kron(&ldl.transpose(), &id) * real(0.5);
    }
    sup
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_part(m).symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Integer power by repeated squaring.
pub fn matrix_power(m: &CMat, mut n: u64) -> CMat {
    let mut result = identity(m.nrows());
    let mut base = m.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = &result * &base;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_half_commutator() {
        let [x, y, z] = spin_ops(1);
        let c = &x * &y - &y * &x;
        assert!(max_abs(&(c - z * I)) < 1e-15);
    }

    #[test]
    fn spin_one_casimir() {
        let [x, y, z] = spin_ops(2);
        let cas = &x * &x + &y * &y + &z * &z;
        assert!(max_abs(&(cas - identity(3) * real(2.0))) < 1e-14);
    }

    #[test]
    fn hermitian_exponential_matches_pade() {
        let [x, _, z] = spin_ops(2);
        let h = x * real(0.7) + z * real(-1.3);
        let a = expm_hermitian(&h, 2.1);
        let b = expm(&(h * C64::new(0.0, -2.1)));
        assert!(max_abs(&(a.clone() - b)) < 1e-12);
        assert!(unitarity_defect(&a) < 1e-14);
    }

    #[test]
    fn embed_places_operator() {
        let [_, _, z] = spin_ops(1);
        let full = embed(&z, 1, &[3, 2, 2]);
        assert_eq!(full.nrows(), 12);
        // |0,1,0⟩ has index 2 and I_z = −1/2 on the middle spin
        assert!((full[(2, 2)] - real(-0.5)).norm() < 1e-15);
    }

    #[test]
    fn lindbladian_preserves_trace() {
        let [x, _, z] = spin_ops(1);
        let l = &x * real(0.3) + &z * real(0.2);
        let sup = lindbladian(&(z.clone() * real(1.0)), &[l]);
        let rho = CMat::from_diagonal(&CVec::from_vec(vec![real(0.25), real(0.75)]));
        let out = unvec(&(expm(&(sup * real(0.8))) * vec_of(&rho)), 2);
        assert!((out.trace() - ONE).norm() < 1e-13);
    }

    #[test]
    fn power_by_squaring() {
        let [x, _, _] = spin_ops(1);
        let u = expm_hermitian(&x, 0.1);
        let p = matrix_power(&u, 37);
        assert!(max_abs(&(p - expm_hermitian(&x, 3.7))) < 1e-13);
        assert!(max_abs(&(matrix_power(&u, 0) - identity(2))) < 1e-15);
    }
}
