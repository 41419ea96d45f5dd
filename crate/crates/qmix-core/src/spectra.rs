//! Hermitian eigendecompositions, spectral windows, empirical spectral
//! measures, and spectral measures at vectors.
//!
//! Everything downstream (quantum moments, counting bounds) consumes the
//! full orthonormal eigenbasis, so decompositions are dense; real symbols
//! take the cheaper symmetric path. Eigenvalues come back ascending, and
//! each eigenvector is normalized by the sign/phase of its first
//! significant component so reruns are deterministic.
//!
//! Eigenvector statistics inside degenerate clusters depend on the chosen
//! basis; `rerandomize_degenerate` applies Haar rotations within clusters
//! to probe exactly that dependence.

use ndarray::{s, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::action::SchreierOperator;
use crate::linalg::{eigh_complex, eigh_real};
use crate::{Complex, Error, Result};

/// An orthonormal eigenbasis; real when the operator was real symmetric.
#[derive(Clone, Debug)]
pub enum Basis {
    Real(Array2<f64>),
    Complex(Array2<Complex>),
}

impl Basis {
    pub fn dim(&self) -> usize {
        match self {
            Basis::Real(m) => m.nrows(),
            Basis::Complex(m) => m.nrows(),
        }
    }

    /// Column α as a complex vector.
    pub fn column(&self, alpha: usize) -> Vec<Complex> {
        match self {
            Basis::Real(m) => m.column(alpha).iter().map(|&v| Complex::new(v, 0.0)).collect(),
            Basis::Complex(m) => m.column(alpha).to_vec(),
        }
    }
}

/// Ascending eigenvalues with their orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub basis: Basis,
}

/// A closed spectral interval [lo, hi].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Self {
        Window { lo, hi }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Λ_I as a contiguous index range (eigenvalues are sorted).
    pub fn indices(&self, sys: &EigenSystem) -> std::ops::Range<usize> {
        let lo = sys.eigenvalues.partition_point(|&v| v < self.lo);
        let hi = sys.eigenvalues.partition_point(|&v| v <= self.hi);
        lo..hi
    }
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// |Λ_I| for a closed interval.
    pub fn count(&self, window: Window) -> usize {
        window.indices(self).len()
    }

    /// μ_{P_N}(I) = |Λ_I| / (N·r).
    pub fn measure_mass(&self, window: Window) -> f64 {
        self.count(window) as f64 / self.dim() as f64
    }

    /// Weights |⟨φ_α, ψ⟩|² of the spectral measure at a unit vector.
    pub fn spectral_measure_at(&self, psi: &[Complex]) -> Result<Vec<f64>> {
        let dim = self.dim();
        if psi.len() != dim {
            return Err(Error::Argument("vector length mismatch".into()));
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-14 {
            return Err(Error::Argument("zero vector has no spectral measure".into()));
        }
        let weights: Vec<f64> = match &self.basis {
            Basis::Real(m) => (0..dim)
                .map(|alpha| {
                    let col = m.column(alpha);
                    let mut acc = Complex::new(0.0, 0.0);
                    for (a, b) in col.iter().zip(psi) {
                        acc += a * b;
                    }
                    acc.norm_sqr() / (norm * norm)
                })
                .collect(),
            Basis::Complex(m) => (0..dim)
                .map(|alpha| {
                    let col = m.column(alpha);
                    let mut acc = Complex::new(0.0, 0.0);
                    for (a, b) in col.iter().zip(psi) {
                        acc += a.conj() * b;
                    }
                    acc.norm_sqr() / (norm * norm)
                })
                .collect(),
        };
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Validation(format!(
                "spectral weights sum to {total}, basis not complete"
            )));
        }
        Ok(weights)
    }

    /// k-th moment ⟨ψ, Pᵏψ⟩ of the spectral measure at ψ.
    pub fn moment_at(&self, psi: &[Complex], k: usize) -> Result<f64> {
        let w = self.spectral_measure_at(psi)?;
        Ok(w
            .iter()
            .zip(&self.eigenvalues)
            .map(|(wi, li)| wi * li.powi(k as i32))
            .sum())
    }
}

/// Fixes the phase of each eigenvector column: the first component larger
/// than 1e-8 of the column maximum is rotated to the positive real axis.
fn normalize_real(m: &mut Array2<f64>) {
    for mut col in m.columns_mut() {
        let maxabs = col.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        if let Some(lead) = col.iter().find(|v| v.abs() > 1e-8 * maxabs) {
            if *lead < 0.0 {
                col.mapv_inplace(|v| -v);
            }
        }
    }
}

fn normalize_complex(m: &mut Array2<Complex>) {
    for mut col in m.columns_mut() {
        let maxabs = col.iter().fold(0.0f64, |a, v| a.max(v.norm()));
        if let Some(lead) = col.iter().find(|v| v.norm() > 1e-8 * maxabs) {
            let phase = lead.conj() / lead.norm();
            col.mapv_inplace(|v| v * phase);
        }
    }
}

/// Full dense eigendecomposition of a Hermitian Schreier operator.
pub fn eigendecompose(op: &SchreierOperator) -> Result<EigenSystem> {
    let scale = op
        .matrix
        .vals
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let defect = op.matrix.hermitian_defect();
    if defect > 1e-10 * scale {
        return Err(Error::Validation(format!(
            "operator asymmetry {defect} exceeds tolerance"
        )));
    }
    match op.matrix.to_dense_real() {
        Some(dense) => {
            let (vals, mut vecs) = eigh_real(&dense)?;
            normalize_real(&mut vecs);
            Ok(EigenSystem {
                eigenvalues: vals,
                basis: Basis::Real(vecs),
            })
        }
        None => {
            let dense = op.matrix.to_dense();
            let (vals, mut vecs) = eigh_complex(&dense)?;
            normalize_complex(&mut vecs);
            Ok(EigenSystem {
                eigenvalues: vals,
                basis: Basis::Complex(vecs),
            })
        }
    }
}

/// Groups eigenvalue indices into clusters separated by gaps > `gap_tol`.
pub fn degenerate_clusters(eigenvalues: &[f64], gap_tol: f64) -> Vec<std::ops::Range<usize>> {
    let mut clusters = Vec::new();
    let mut start = 0;
    for i in 1..=eigenvalues.len() {
        if i == eigenvalues.len() || eigenvalues[i] - eigenvalues[i - 1] > gap_tol {
            clusters.push(start..i);
            start = i;
        }
    }
    clusters
}

/// Haar-random orthogonal matrix: Gram–Schmidt on a Gaussian with positive
/// pivot convention.
fn haar_orthogonal(rng: &mut ChaCha8Rng, m: usize) -> Array2<f64> {
    let mut a = Array2::from_shape_fn((m, m), |_| gaussian(rng));
    gram_schmidt_real(&mut a);
    a
}

fn haar_unitary(rng: &mut ChaCha8Rng, m: usize) -> Array2<Complex> {
    let mut a = Array2::from_shape_fn((m, m), |_| Complex::new(gaussian(rng), gaussian(rng)));
    gram_schmidt_complex(&mut a);
    a
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller.
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u.ln()).sqrt() * v.cos()
}

fn gram_schmidt_real(a: &mut Array2<f64>) {
    let m = a.ncols();
    for j in 0..m {
        for k in 0..j {
            let proj: f64 = (0..m).map(|i| a[(i, k)] * a[(i, j)]).sum();
            for i in 0..m {
                a[(i, j)] -= proj * a[(i, k)];
            }
        }
        let norm: f64 = (0..m).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>().sqrt();
        for i in 0..m {
            a[(i, j)] /= norm;
        }
    }
}

fn gram_schmidt_complex(a: &mut Array2<Complex>) {
    let m = a.ncols();
    for j in 0..m {
        for k in 0..j {
            let proj: Complex = (0..m).map(|i| a[(i, k)].conj() * a[(i, j)]).sum();
            for i in 0..m {
                let t = proj * a[(i, k)];
                a[(i, j)] -= t;
            }
        }
        let norm: f64 = (0..m).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..m {
            a[(i, j)] /= norm;
        }
    }
}

/// Rotates each degenerate cluster (eigenvalue gap ≤ `gap_tol`) by a Haar
/// random orthogonal/unitary block: same spectral projectors, new basis.
pub fn rerandomize_degenerate(
    sys: &EigenSystem,
    gap_tol: f64,
    rng: &mut ChaCha8Rng,
) -> EigenSystem {
    let clusters = degenerate_clusters(&sys.eigenvalues, gap_tol);
    let basis = match &sys.basis {
        Basis::Real(m) => {
            let mut out = m.clone();
            for cl in &clusters {
                let w = cl.len();
                if w < 2 {
                    continue;
                }
                let u = haar_orthogonal(rng, w);
                let block = out.slice(s![.., cl.start..cl.end]).to_owned();
                let rotated = block.dot(&u);
                out.slice_mut(s![.., cl.start..cl.end]).assign(&rotated);
            }
            Basis::Real(out)
        }
        Basis::Complex(m) => {
            let mut out = m.clone();
            for cl in &clusters {
                let w = cl.len();
                if w < 2 {
                    continue;
                }
                let u = haar_unitary(rng, w);
                let block = out.slice(s![.., cl.start..cl.end]).to_owned();
                let rotated = block.dot(&u);
                out.slice_mut(s![.., cl.start..cl.end]).assign(&rotated);
            }
            Basis::Complex(out)
        }
    };
    EigenSystem {
        eigenvalues: sys.eigenvalues.clone(),
        basis,
    }
}

/// Eigenvalues of the (ℤ/Mℤ)^d torus walk Σ_i (g_i + g_i⁻¹): one value
/// Σ_i 2cos(2πk_i/M) per mode k, in the little-endian point encoding.
pub fn torus_eigenvalues(m: usize, d: usize) -> Vec<f64> {
    let n = m.pow(d as u32);
    (0..n)
        .map(|idx| {
            let mut v = idx;
            let mut sum = 0.0;
            for _ in 0..d {
                let k = v % m;
                v /= m;
                sum += 2.0 * (std::f64::consts::TAU * k as f64 / m as f64).cos();
            }
            sum
        })
        .collect()
}

/// The analytic real eigenbasis of the torus walk: cosine/sine pairs per
/// mode orbit {k, −k}, self-paired modes as pure cosines. Sorted ascending
/// by eigenvalue, same order convention as `eigendecompose`.
pub fn torus_cos_sin_eigensystem(m: usize, d: usize) -> EigenSystem {
    let n = m.pow(d as u32);
    let raw = torus_eigenvalues(m, d);
    let digits = |idx: usize| {
        let mut v = idx;
        let mut out = Vec::with_capacity(d);
        for _ in 0..d {
            out.push(v % m);
            v /= m;
        }
        out
    };
    let neg = |k: &[usize]| -> usize {
        let mut idx = 0;
        for (i, &ki) in k.iter().enumerate() {
            idx += ((m - ki) % m) * m.pow(i as u32);
        }
        idx
    };
    let tau = std::f64::consts::TAU;
    let mut columns: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);
    for kidx in 0..n {
        let k = digits(kidx);
        let knegidx = neg(&k);
        let lam = raw[kidx];
        if knegidx == kidx {
            // Self-paired mode: cos(2πk·x/M) takes values ±1.
            let mut col = Vec::with_capacity(n);
            for x in 0..n {
                let xd = digits(x);
                let phase: f64 = k
                    .iter()
                    .zip(&xd)
                    .map(|(&ki, &xi)| tau * (ki * xi) as f64 / m as f64)
                    .sum();
                col.push(phase.cos());
            }
            let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in col.iter_mut() {
                *v /= norm;
            }
            columns.push((lam, col));
        } else if kidx < knegidx {
            // Orbit {k, −k}: a cosine and a sine column.
            let mut cos_col = Vec::with_capacity(n);
            let mut sin_col = Vec::with_capacity(n);
            for x in 0..n {
                let xd = digits(x);
                let phase: f64 = k
                    .iter()
                    .zip(&xd)
                    .map(|(&ki, &xi)| tau * (ki * xi) as f64 / m as f64)
                    .sum();
                cos_col.push(phase.cos());
                sin_col.push(phase.sin());
            }
            for col in [&mut cos_col, &mut sin_col] {
                let norm: f64 = col.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in col.iter_mut() {
                    *v /= norm;
                }
            }
            columns.push((lam, cos_col));
            columns.push((lam, sin_col));
        }
    }
    columns.sort_by(|(a, _), (b, _)| a.partial_cmp(b).unwrap());
    let mut vecs = Array2::zeros((n, n));
    let mut vals = Vec::with_capacity(n);
    for (j, (lam, col)) in columns.into_iter().enumerate() {
        vals.push(lam);
        for (i, v) in col.into_iter().enumerate() {
            vecs[(i, j)] = v;
        }
    }
    normalize_real(&mut vecs);
    EigenSystem {
        eigenvalues: vals,
        basis: Basis::Real(vecs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{random_matching_action, representation_matrix, torus_action};
    use crate::algebra::{convolve, AlgebraElement};
    use crate::group::{GeneratingSet, GroupElement};
    use crate::linalg::matmul_real;
    use crate::rng::master_rng;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn walk_symbol(spec: &crate::group::GroupSpec) -> AlgebraElement {
        let s = GeneratingSet::standard(spec);
        AlgebraElement::indicator(spec, &s)
    }

    #[test]
    fn identity_spectrum() {
        let a = torus_action(4, 1);
        let p = AlgebraElement::identity(a.spec().clone(), 1);
        let op = representation_matrix(&a, &p).unwrap();
        let sys = eigendecompose(&op).unwrap();
        for v in &sys.eigenvalues {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn torus_spectrum_closed_form() {
        for (m, d) in [(5usize, 1usize), (4, 2), (3, 2)] {
            let a = torus_action(m, d);
            let p = walk_symbol(a.spec());
            let op = representation_matrix(&a, &p).unwrap();
            let sys = eigendecompose(&op).unwrap();
            let mut expect = torus_eigenvalues(m, d);
            expect.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (got, want) in sys.eigenvalues.iter().zip(&expect) {
                assert!(
                    (got - want).abs() < 1e-10,
                    "M={m} d={d}: eigenvalue {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn analytic_torus_basis_is_eigenbasis() {
        for (m, d) in [(5usize, 1usize), (4, 2), (6, 1)] {
            let sys = torus_cos_sin_eigensystem(m, d);
            let a = torus_action(m, d);
            let p = walk_symbol(a.spec());
            let op = representation_matrix(&a, &p).unwrap();
            let dense = op.matrix.to_dense_real().unwrap();
            let vecs = match &sys.basis {
                Basis::Real(v) => v.clone(),
                _ => unreachable!(),
            };
            let n = sys.dim();
            // P·V = V·diag(λ).
            let pv = matmul_real(&dense, &vecs);
            for j in 0..n {
                for i in 0..n {
                    let want = sys.eigenvalues[j] * vecs[(i, j)];
                    assert!(
                        (pv[(i, j)] - want).abs() < 1e-10,
                        "M={m} d={d}: residual at ({i},{j})"
                    );
                }
            }
            // Orthonormality.
            let gram = matmul_real(&vecs.t().to_owned(), &vecs);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn window_counting() {
        let a = torus_action(4, 1);
        let p = walk_symbol(a.spec());
        let sys = eigendecompose(&representation_matrix(&a, &p).unwrap()).unwrap();
        // Spectrum {-2, 0, 0, 2}.
        assert_eq!(sys.count(Window::new(f64::NEG_INFINITY, f64::INFINITY)), 4);
        assert_eq!(sys.count(Window::new(5.0, 6.0)), 0);
        assert_eq!(sys.count(Window::new(-0.5, 0.5)), 2);
        // The numerical zeros sit within 1e-12 of 0, so a closed interval
        // with a padded left endpoint catches both of them plus the 2.
        assert_eq!(sys.count(Window::new(-1e-9, 2.1)), 3);
        assert!((sys.measure_mass(Window::new(-0.5, 0.5)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kesten_mckay_mass() {
        // 3-regular random Schreier graph via matchings; compare the
        // empirical mass of [-1,1] with the Kesten–McKay integral.
        let action = random_matching_action(2000, 3, 7).unwrap();
        let p = walk_symbol(action.spec());
        let sys = eigendecompose(&representation_matrix(&action, &p).unwrap()).unwrap();
        let mass = sys.measure_mass(Window::new(-1.0, 1.0));
        // Simpson quadrature of d√(4(d-1)-x²)/(2π(d²-x²)) over [-1,1].
        let d = 3.0f64;
        let f = |x: f64| d * (4.0 * (d - 1.0) - x * x).sqrt() / (2.0 * std::f64::consts::PI * (d * d - x * x));
        let steps = 2000;
        let h = 2.0 / steps as f64;
        let mut integral = f(-1.0) + f(1.0);
        for i in 1..steps {
            let x = -1.0 + i as f64 * h;
            integral += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        integral *= h / 3.0;
        assert!(
            (mass - integral).abs() < 0.05,
            "mass {mass} vs Kesten–McKay {integral}"
        );
    }

    #[test]
    fn spectral_measure_at_eigenvector() {
        let a = torus_action(5, 1);
        let p = walk_symbol(a.spec());
        let sys = eigendecompose(&representation_matrix(&a, &p).unwrap()).unwrap();
        let phi = sys.basis.column(2);
        let w = sys.spectral_measure_at(&phi).unwrap();
        for (alpha, &wa) in w.iter().enumerate() {
            // Degenerate eigenvalues may share weight; compare through the
            // eigenvalue instead of the index.
            if (sys.eigenvalues[alpha] - sys.eigenvalues[2]).abs() > 1e-9 {
                assert!(wa < 1e-12, "weight {wa} at alpha={alpha}");
            }
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn torus_walk_moments_are_walk_counts() {
        // μ^{δ_0} moments = closed walks of length k on Z (M large enough
        // that k ≤ 6 walks cannot wrap): 0, 2, 0, 6, 0, 20 for k = 1..6.
        let a = torus_action(13, 1);
        let p = walk_symbol(a.spec());
        let sys = eigendecompose(&representation_matrix(&a, &p).unwrap()).unwrap();
        let mut psi = vec![c(0.0, 0.0); 13];
        psi[0] = c(1.0, 0.0);
        let expect = [1.0, 0.0, 2.0, 0.0, 6.0, 0.0, 20.0];
        for (k, want) in expect.iter().enumerate() {
            let got = sys.moment_at(&psi, k).unwrap();
            assert!((got - want).abs() < 1e-9, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn average_of_point_measures_is_empirical() {
        let a = torus_action(4, 1);
        let p = walk_symbol(a.spec());
        let sys = eigendecompose(&representation_matrix(&a, &p).unwrap()).unwrap();
        // Averaged k-th moment over all δ_x = (1/N)Tr P^k = mean of λ^k.
        for k in 0..5 {
            let mut avg = 0.0;
            for x in 0..4 {
                let mut psi = vec![c(0.0, 0.0); 4];
                psi[x] = c(1.0, 0.0);
                avg += sys.moment_at(&psi, k).unwrap();
            }
            avg /= 4.0;
            let tr: f64 = sys.eigenvalues.iter().map(|l| l.powi(k as i32)).sum::<f64>() / 4.0;
            assert!((avg - tr).abs() < 1e-10);
        }
    }

    #[test]
    fn trace_of_polynomial_matches_eigenvalue_sum() {
        let a = random_matching_action(60, 3, 2).unwrap();
        let p = walk_symbol(a.spec());
        let op = representation_matrix(&a, &p).unwrap();
        let sys = eigendecompose(&op).unwrap();
        let mut rng = master_rng(41);
        let coeffs: Vec<f64> = (0..21).map(|_| rng.gen_range(-0.5..0.5)).collect();
        // Tr f(P) via the symbol: N·(f(p))_e + corrections on fixed points;
        // compute instead directly from the dense matrix by Horner.
        let dense = op.matrix.to_dense_real().unwrap();
        let n = dense.nrows();
        let mut acc = Array2::<f64>::eye(n) * *coeffs.last().unwrap();
        for &cf in coeffs.iter().rev().skip(1) {
            acc = matmul_real(&acc, &dense);
            for i in 0..n {
                acc[(i, i)] += cf;
            }
        }
        let lhs: f64 = (0..n).map(|i| acc[(i, i)]).sum();
        let rhs: f64 = sys
            .eigenvalues
            .iter()
            .map(|&l| coeffs.iter().rev().fold(0.0, |h, &cf| h * l + cf))
            .sum();
        assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn walk_moment_identity_at_good_points() {
        // ⟨δ_x, P^k δ_x⟩ = (p^k)_e for x outside Bad(k), k ≤ 6 ⇒ radius 3.
        let action = crate::action::random_free_action(400, 2, 9);
        let spec = action.spec().clone();
        let s = GeneratingSet::standard(&spec);
        let p = AlgebraElement::indicator(&spec, &s);
        let op = representation_matrix(&action, &p).unwrap();
        let sys = eigendecompose(&op).unwrap();
        let bad = crate::action::bad_flags(&action, &s, 3).unwrap();
        let good = (0..400).find(|&x| !bad[x]).expect("a good point exists");
        let mut pk = AlgebraElement::identity(spec.clone(), 1);
        for k in 1..=6usize {
            pk = convolve(&pk, &p).unwrap();
            let want = pk.coefficient(&GroupElement::identity())[(0, 0)].re;
            let mut psi = vec![c(0.0, 0.0); 400];
            psi[good] = c(1.0, 0.0);
            let got = sys.moment_at(&psi, k).unwrap();
            assert!((got - want).abs() < 1e-8, "k={k}: {got} vs {want}");
        }
    }

    #[test]
    fn weyl_rank_one_perturbation() {
        let a = torus_action(6, 1);
        let p = walk_symbol(a.spec());
        let op = representation_matrix(&a, &p).unwrap();
        let mut dense = op.matrix.to_dense_real().unwrap();
        let (base, _) = crate::linalg::eigh_real(&dense).unwrap();
        let eps = 1e-3;
        dense[(0, 0)] += eps;
        let (shifted, _) = crate::linalg::eigh_real(&dense).unwrap();
        for (b, s) in base.iter().zip(&shifted) {
            assert!((b - s).abs() <= eps + 1e-12);
        }
    }

    #[test]
    fn degenerate_rotation_preserves_eigenspaces() {
        let a = torus_action(8, 1);
        let p = walk_symbol(a.spec());
        let op = representation_matrix(&a, &p).unwrap();
        let sys = eigendecompose(&op).unwrap();
        let mut rng = master_rng(55);
        let rot = rerandomize_degenerate(&sys, 1e-9, &mut rng);
        let dense = op.matrix.to_dense_real().unwrap();
        let vecs = match &rot.basis {
            Basis::Real(v) => v.clone(),
            _ => unreachable!(),
        };
        let pv = matmul_real(&dense, &vecs);
        let n = sys.dim();
        for j in 0..n {
            for i in 0..n {
                let want = rot.eigenvalues[j] * vecs[(i, j)];
                assert!((pv[(i, j)] - want).abs() < 1e-9, "rotated residual");
            }
        }
        // Orthonormality preserved.
        let gram = matmul_real(&vecs.t().to_owned(), &vecs);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-10);
            }
        }
        // The rotation actually changed the degenerate columns.
        let orig = match &sys.basis {
            Basis::Real(v) => v.clone(),
            _ => unreachable!(),
        };
        let diff = (&vecs - &orig).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(diff > 1e-3, "Haar rotation should move the basis");
    }

    #[test]
    fn zero_vector_rejected() {
        let a = torus_action(3, 1);
        let p = walk_symbol(a.spec());
        let sys = eigendecompose(&representation_matrix(&a, &p).unwrap()).unwrap();
        let psi = vec![c(0.0, 0.0); 3];
        assert!(sys.spectral_measure_at(&psi).is_err());
    }
}
