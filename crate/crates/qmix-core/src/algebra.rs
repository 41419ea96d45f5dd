//! Finitely supported group-algebra elements p = Σ_g p_g g with scalar or
//! r×r block coefficients.
//!
//! Convolution realizes operator products at the symbol level: if λ is the
//! left-regular representation then λ(p)λ(q) = λ(pq) with
//! (pq)_g = Σ_h p_h q_{h⁻¹g}, and the involution (p*)_g = (p_{g⁻¹})†
//! matches the operator adjoint. Polynomial functional calculus f(p) is
//! Horner's scheme in this algebra; the support of f(p) grows inside the
//! ball of radius deg(f)·diam(p), so every step prunes blocks below
//! 1e-14 of the running ℓ¹ norm to keep numerically-zero fringe from
//! going exponentially dense.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::group::{ball, inverse, multiply, word_length, GeneratingSet, GroupElement, GroupSpec};
use crate::{Complex, Error, Result};

/// Frobenius norm of a block.
pub fn block_norm(b: &Array2<Complex>) -> f64 {
    b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// A finitely supported element of the group algebra M_r(ℂ)[Γ].
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraElement {
    spec: GroupSpec,
    r: usize,
    support: BTreeMap<GroupElement, Array2<Complex>>,
}

/// ℓ¹ and ℓ² norms together with the support diameter (≥ 1 by convention).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub diam: usize,
}

impl AlgebraElement {
    pub fn zero(spec: GroupSpec, r: usize) -> Self {
        assert!(r >= 1, "block size must be at least 1");
        AlgebraElement {
            spec,
            r,
            support: BTreeMap::new(),
        }
    }

    /// δ_e ⊗ I_r, the multiplicative identity.
    pub fn identity(spec: GroupSpec, r: usize) -> Self {
        let mut p = AlgebraElement::zero(spec, r);
        let eye = Array2::<f64>::eye(r).mapv(|v| Complex::new(v, 0.0));
        p.support.insert(GroupElement::identity(), eye);
        p
    }

    /// Builds from (element, block) terms, summing duplicates and pruning.
    pub fn from_terms(
        spec: GroupSpec,
        r: usize,
        terms: Vec<(GroupElement, Array2<Complex>)>,
    ) -> Result<Self> {
        let mut p = AlgebraElement::zero(spec, r);
        for (g, b) in terms {
            if b.nrows() != r || b.ncols() != r {
                return Err(Error::Argument(format!(
                    "block is {}x{}, expected {r}x{r}",
                    b.nrows(),
                    b.ncols()
                )));
            }
            p.add_block(g, &b);
        }
        p.prune();
        Ok(p)
    }

    /// Scalar (r = 1) element from (element, coefficient) terms.
    pub fn scalar(spec: GroupSpec, terms: Vec<(GroupElement, Complex)>) -> Self {
        let terms = terms
            .into_iter()
            .map(|(g, c)| (g, Array2::from_elem((1, 1), c)))
            .collect();
        AlgebraElement::from_terms(spec, 1, terms).expect("1x1 blocks")
    }

    /// Indicator of a generating set: Σ_{s∈S} δ_s (scalar coefficients 1).
    pub fn indicator(spec: &GroupSpec, s: &GeneratingSet) -> Self {
        let terms = s
            .elements
            .iter()
            .map(|g| (g.clone(), Complex::new(1.0, 0.0)))
            .collect();
        AlgebraElement::scalar(spec.clone(), terms)
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn block_size(&self) -> usize {
        self.r
    }

    pub fn support(&self) -> impl Iterator<Item = (&GroupElement, &Array2<Complex>)> {
        self.support.iter()
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// The coefficient block of g (zero block if g is outside the support).
    pub fn coefficient(&self, g: &GroupElement) -> Array2<Complex> {
        self.support
            .get(g)
            .cloned()
            .unwrap_or_else(|| Array2::zeros((self.r, self.r)))
    }

    fn add_block(&mut self, g: GroupElement, b: &Array2<Complex>) {
        match self.support.get_mut(&g) {
            Some(existing) => *existing += b,
            None => {
                self.support.insert(g, b.clone());
            }
        }
    }

    /// Drops blocks below 1e-14 of the ℓ¹ norm.
    fn prune(&mut self) {
        let l1: f64 = self.support.values().map(block_norm).sum();
        let tol = 1e-14 * l1;
        self.support.retain(|_, b| block_norm(b) > tol);
    }

    pub fn add(&self, other: &AlgebraElement) -> Result<AlgebraElement> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (g, b) in &other.support {
            out.add_block(g.clone(), b);
        }
        out.prune();
        Ok(out)
    }

    pub fn scale(&self, c: Complex) -> AlgebraElement {
        let mut out = self.clone();
        for b in out.support.values_mut() {
            *b *= c;
        }
        out.prune();
        out
    }

    fn check_compatible(&self, other: &AlgebraElement) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::Argument("elements live over different groups".into()));
        }
        if self.r != other.r {
            return Err(Error::Argument(format!(
                "block sizes differ: {} vs {}",
                self.r, other.r
            )));
        }
        Ok(())
    }

    /// Checks p_{g⁻¹} = (p_g)† entrywise within `tol`.
    pub fn is_self_adjoint(&self, tol: f64) -> bool {
        for (g, b) in &self.support {
            let ginv = inverse(&self.spec, g);
            let other = self.coefficient(&ginv);
            let diff = &other - &b.t().mapv(|z| z.conj());
            if block_norm(&diff) > tol {
                return false;
            }
        }
        true
    }
}

/// Convolution product: (pq)_g = Σ_h p_h q_{h⁻¹g}.
pub fn convolve(p: &AlgebraElement, q: &AlgebraElement) -> Result<AlgebraElement> {
    p.check_compatible(q)?;
    let mut out = AlgebraElement::zero(p.spec.clone(), p.r);
    for (g, pb) in &p.support {
        for (h, qb) in &q.support {
            let gh = multiply(&p.spec, g, h);
            out.add_block(gh, &pb.dot(qb));
        }
    }
    out.prune();
    Ok(out)
}

/// Involution: (p*)_g = (p_{g⁻¹})†.
pub fn star(p: &AlgebraElement) -> AlgebraElement {
    let mut out = AlgebraElement::zero(p.spec.clone(), p.r);
    for (g, b) in &p.support {
        let ginv = inverse(&p.spec, g);
        out.support.insert(ginv, b.t().mapv(|z| z.conj()).to_owned());
    }
    out
}

/// f(p) for a real polynomial f = Σ coeffs[k]·Xᵏ, by Horner's scheme.
pub fn apply_polynomial(coeffs: &[f64], p: &AlgebraElement) -> AlgebraElement {
    let id = AlgebraElement::identity(p.spec.clone(), p.r);
    let mut acc = match coeffs.last() {
        Some(&c) => id.scale(Complex::new(c, 0.0)),
        None => return AlgebraElement::zero(p.spec.clone(), p.r),
    };
    for &c in coeffs.iter().rev().skip(1) {
        acc = convolve(&acc, p).expect("same spec and block size");
        acc = acc
            .add(&id.scale(Complex::new(c, 0.0)))
            .expect("same spec and block size");
    }
    acc
}

/// ℓ¹ = Σ‖p_g‖₂, ℓ² = √(Σ‖p_g‖₂²), and the support diameter in Cay(Γ,S)
/// (at least 1 by convention).
pub fn norms(p: &AlgebraElement, s: &GeneratingSet) -> Result<Norms> {
    let mut l1 = 0.0;
    let mut l2sq = 0.0;
    for b in p.support.values() {
        let n = block_norm(b);
        l1 += n;
        l2sq += n * n;
    }
    let keys: Vec<&GroupElement> = p.support.keys().collect();
    let mut diam = 0;
    for (i, g) in keys.iter().enumerate() {
        let ginv = inverse(&p.spec, g);
        for h in &keys[i + 1..] {
            let d = word_length(&p.spec, &multiply(&p.spec, &ginv, h), s)?;
            diam = diam.max(d);
        }
    }
    Ok(Norms {
        l1,
        l2: l2sq.sqrt(),
        diam: diam.max(1),
    })
}

/// Upper bound C·√(Σ_g ‖p_g‖₂²(|g|+1)^{C₁'}) for the operator norm of the
/// left-regular image of p, valid when the group has rapid decay with these
/// constants. Word length is taken in the standard generators.
pub fn rd_norm_bound(p: &AlgebraElement, c1_prime: f64, c: f64) -> f64 {
    let sum: f64 = p
        .support
        .iter()
        .map(|(g, b)| {
            let n = block_norm(b);
            n * n * ((g.len() + 1) as f64).powf(c1_prime)
        })
        .sum();
    c * sum.sqrt()
}

/// Enumerates elements of `ball(spec, s, radius)` as the index set used by
/// dense symbol vectors (position 0 is the identity).
pub fn ball_index(spec: &GroupSpec, s: &GeneratingSet, radius: usize) -> Vec<GroupElement> {
    ball(spec, s, radius).into_iter().map(|(g, _)| g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{reduce, FiniteFactor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn random_scalar_element(
        rng: &mut ChaCha8Rng,
        spec: &GroupSpec,
        terms: usize,
        max_len: usize,
    ) -> AlgebraElement {
        let gc = spec.gen_count() as u32;
        let mut list = Vec::new();
        for _ in 0..terms {
            let len = rng.gen_range(0..=max_len);
            let w: Vec<u32> = (0..len).map(|_| rng.gen_range(0..gc)).collect();
            let g = reduce(spec, &w).unwrap();
            list.push((g, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))));
        }
        AlgebraElement::scalar(spec.clone(), list)
    }

    /// Naive convolution oracle: triple loop over supports without pruning
    /// tricks, used to cross-check the production path.
    fn convolve_oracle(p: &AlgebraElement, q: &AlgebraElement) -> BTreeMap<GroupElement, Complex> {
        let mut out: BTreeMap<GroupElement, Complex> = BTreeMap::new();
        for (g, pb) in p.support() {
            for (h, qb) in q.support() {
                let gh = multiply(p.spec(), g, h);
                *out.entry(gh).or_insert(c(0.0, 0.0)) += pb[(0, 0)] * qb[(0, 0)];
            }
        }
        out.retain(|_, v| v.norm() > 1e-13);
        out
    }

    #[test]
    fn identity_is_neutral() {
        let spec = GroupSpec::free_group(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_scalar_element(&mut rng, &spec, 6, 4);
        let id = AlgebraElement::identity(spec.clone(), 1);
        assert_eq!(convolve(&p, &id).unwrap(), p);
        assert_eq!(convolve(&id, &p).unwrap(), p);
    }

    #[test]
    fn lattice_square_binomial() {
        // Z, p = g + g^-1: p^2 = g^2 + 2e + g^-2.
        let spec = GroupSpec::integer_lattice(1);
        let g = reduce(&spec, &[0]).unwrap();
        let ginv = reduce(&spec, &[1]).unwrap();
        let p = AlgebraElement::scalar(spec.clone(), vec![(g, c(1.0, 0.0)), (ginv, c(1.0, 0.0))]);
        let p2 = convolve(&p, &p).unwrap();
        assert_eq!(p2.support_len(), 3);
        let e = GroupElement::identity();
        assert_eq!(p2.coefficient(&e)[(0, 0)], c(2.0, 0.0));
        let g2 = reduce(&spec, &[0, 0]).unwrap();
        assert_eq!(p2.coefficient(&g2)[(0, 0)], c(1.0, 0.0));
    }

    #[test]
    fn free_group_length_two_returns() {
        // F_2, p = 1_S: (p^2)_e counts words s·t = e over S^2, which is 4.
        let spec = GroupSpec::free_group(2);
        let s = GeneratingSet::standard(&spec);
        let p = AlgebraElement::indicator(&spec, &s);
        let p2 = convolve(&p, &p).unwrap();
        assert_eq!(p2.coefficient(&GroupElement::identity())[(0, 0)], c(4.0, 0.0));
        // Independent count through group ops alone.
        let mut count = 0;
        for a in &s.elements {
            for b in &s.elements {
                if multiply(&spec, a, b).is_identity() {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 4);
    }

    #[test]
    fn star_basics() {
        let spec = GroupSpec::free_group(1);
        let g = reduce(&spec, &[0]).unwrap();
        let ginv = reduce(&spec, &[1]).unwrap();
        // p = i·g → p* = -i·g^-1.
        let p = AlgebraElement::scalar(spec.clone(), vec![(g.clone(), c(0.0, 1.0))]);
        let ps = star(&p);
        assert_eq!(ps.coefficient(&ginv)[(0, 0)], c(0.0, -1.0));
        assert_eq!(ps.coefficient(&g)[(0, 0)], c(0.0, 0.0));
        // Real symmetric p is fixed by star.
        let q = AlgebraElement::scalar(
            spec.clone(),
            vec![(g, c(2.0, 0.0)), (ginv, c(2.0, 0.0))],
        );
        assert_eq!(star(&q), q);
        assert!(q.is_self_adjoint(0.0));
    }

    #[test]
    fn star_is_involutive_on_blocks() {
        let spec = GroupSpec::free_group(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = 3;
        let mut terms = Vec::new();
        for _ in 0..5 {
            let len = rng.gen_range(0..=3);
            let w: Vec<u32> = (0..len).map(|_| rng.gen_range(0..4)).collect();
            let g = reduce(&spec, &w).unwrap();
            let b = Array2::from_shape_fn((r, r), |_| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            terms.push((g, b));
        }
        let p = AlgebraElement::from_terms(spec, r, terms).unwrap();
        assert_eq!(star(&star(&p)), p, "star must be exactly involutive");
    }

    #[test]
    fn polynomial_basics() {
        let spec = GroupSpec::integer_lattice(1);
        let g = reduce(&spec, &[0]).unwrap();
        let ginv = reduce(&spec, &[1]).unwrap();
        let p = AlgebraElement::scalar(
            spec.clone(),
            vec![(g.clone(), c(1.0, 0.0)), (ginv.clone(), c(1.0, 0.0))],
        );
        // f = 1 → δ_e; f = X → p.
        assert_eq!(
            apply_polynomial(&[1.0], &p),
            AlgebraElement::identity(spec.clone(), 1)
        );
        assert_eq!(apply_polynomial(&[0.0, 1.0], &p), p);
        // f = X^2 - 2 → g^2 + g^-2 (Chebyshev-style cancellation of e).
        let f_p = apply_polynomial(&[-2.0, 0.0, 1.0], &p);
        let g2 = multiply(&spec, &g, &g);
        let ginv2 = multiply(&spec, &ginv, &ginv);
        let expect = AlgebraElement::scalar(
            spec,
            vec![(g2, c(1.0, 0.0)), (ginv2, c(1.0, 0.0))],
        );
        assert_eq!(f_p, expect);
    }

    #[test]
    fn norm_examples() {
        let spec = GroupSpec::free_group(2);
        let s = GeneratingSet::standard(&spec);
        let id = AlgebraElement::identity(spec.clone(), 1);
        let n = norms(&id, &s).unwrap();
        assert_eq!((n.l1, n.l2, n.diam), (1.0, 1.0, 1));
        let p = AlgebraElement::indicator(&spec, &s);
        let n = norms(&p, &s).unwrap();
        assert!((n.l1 - 4.0).abs() < 1e-15, "l1={}", n.l1);
        assert!((n.l2 - 2.0).abs() < 1e-15, "l2={}", n.l2);
        assert_eq!(n.diam, 2, "distance between s and s^-1");
    }

    #[test]
    fn rd_bound_examples() {
        let spec = GroupSpec::free_group(2);
        let s = GeneratingSet::standard(&spec);
        let id = AlgebraElement::identity(spec.clone(), 1);
        assert!((rd_norm_bound(&id, 3.0, 1.0) - 1.0).abs() < 1e-15);
        // F_2, p = 1_S, C1'=3, C=1: sqrt(4·2^3) = sqrt(32).
        let p = AlgebraElement::indicator(&spec, &s);
        let bound = rd_norm_bound(&p, 3.0, 1.0);
        assert!((bound - 32f64.sqrt()).abs() < 1e-12, "bound={bound}");
        // The true operator norm is the Kesten value 2·sqrt(2d-1).
        let kesten = 2.0 * 3f64.sqrt();
        assert!(bound >= kesten);
    }

    #[test]
    fn rd_bound_dominates_l2_fuzzed() {
        let spec = GroupSpec::free_group(2);
        let s = GeneratingSet::standard(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let p = random_scalar_element(&mut rng, &spec, 5, 4);
            let n = norms(&p, &s).unwrap();
            assert!(rd_norm_bound(&p, 3.0, 1.0) >= n.l2 - 1e-12);
        }
    }

    #[test]
    fn convolution_algebra_laws_fuzzed() {
        let specs = vec![
            GroupSpec::free_group(2),
            GroupSpec::integer_lattice(2),
            GroupSpec::free_product(vec![FiniteFactor::cyclic(3), FiniteFactor::cyclic(3)])
                .unwrap(),
        ];
        for spec in specs {
            let mut rng = ChaCha8Rng::seed_from_u64(29);
            for _ in 0..60 {
                let p = random_scalar_element(&mut rng, &spec, 4, 3);
                let q = random_scalar_element(&mut rng, &spec, 4, 3);
                let r = random_scalar_element(&mut rng, &spec, 4, 3);
                // Associativity to 1e-12.
                let pq_r = convolve(&convolve(&p, &q).unwrap(), &r).unwrap();
                let p_qr = convolve(&p, &convolve(&q, &r).unwrap()).unwrap();
                let mut keys: Vec<GroupElement> =
                    pq_r.support().map(|(g, _)| g.clone()).collect();
                keys.extend(p_qr.support().map(|(g, _)| g.clone()));
                for g in keys {
                    let d = (pq_r.coefficient(&g)[(0, 0)] - p_qr.coefficient(&g)[(0, 0)]).norm();
                    assert!(d < 1e-12, "associativity off by {d}");
                }
                // Distributivity.
                let lhs = convolve(&p, &q.add(&r).unwrap()).unwrap();
                let rhs = convolve(&p, &q).unwrap().add(&convolve(&p, &r).unwrap()).unwrap();
                for (g, b) in lhs.support() {
                    assert!((b[(0, 0)] - rhs.coefficient(g)[(0, 0)]).norm() < 1e-12);
                }
                // star(pq) = star(q)star(p).
                let l = star(&convolve(&p, &q).unwrap());
                let rr = convolve(&star(&q), &star(&p)).unwrap();
                for (g, b) in l.support() {
                    assert!((b[(0, 0)] - rr.coefficient(g)[(0, 0)]).norm() < 1e-12);
                }
                // Submultiplicative l1.
                let s = GeneratingSet::standard(&spec);
                let n_pq = norms(&convolve(&p, &q).unwrap(), &s).unwrap();
                let n_p = norms(&p, &s).unwrap();
                let n_q = norms(&q, &s).unwrap();
                assert!(n_pq.l1 <= n_p.l1 * n_q.l1 + 1e-10);
                // Against the naive oracle.
                let oracle = convolve_oracle(&p, &q);
                let prod = convolve(&p, &q).unwrap();
                for (g, v) in &oracle {
                    assert!((prod.coefficient(g)[(0, 0)] - v).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn polynomial_multiplicativity_fuzzed() {
        // apply_polynomial(f·h, p) = f(p)·h(p) for self-adjoint p.
        let spec = GroupSpec::free_group(2);
        let g0 = reduce(&spec, &[0]).unwrap();
        let g0i = reduce(&spec, &[2]).unwrap();
        let g1 = reduce(&spec, &[1]).unwrap();
        let g1i = reduce(&spec, &[3]).unwrap();
        let p = AlgebraElement::scalar(
            spec.clone(),
            vec![
                (g0, c(1.0, 0.0)),
                (g0i, c(1.0, 0.0)),
                (g1, c(0.5, 0.0)),
                (g1i, c(0.5, 0.0)),
            ],
        );
        assert!(p.is_self_adjoint(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let f: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            // Coefficient convolution for the product polynomial.
            let mut fh = vec![0.0; f.len() + h.len() - 1];
            for (i, a) in f.iter().enumerate() {
                for (j, b) in h.iter().enumerate() {
                    fh[i + j] += a * b;
                }
            }
            let lhs = apply_polynomial(&fh, &p);
            let rhs = convolve(&apply_polynomial(&f, &p), &apply_polynomial(&h, &p)).unwrap();
            for (g, b) in lhs.support() {
                let d = (b[(0, 0)] - rhs.coefficient(g)[(0, 0)]).norm();
                assert!(d < 1e-12, "f·h mismatch {d}");
            }
        }
    }

    #[test]
    fn mismatched_elements_rejected() {
        let p = AlgebraElement::identity(GroupSpec::free_group(2), 1);
        let q = AlgebraElement::identity(GroupSpec::free_group(3), 1);
        assert!(convolve(&p, &q).is_err());
        let r2 = AlgebraElement::identity(GroupSpec::free_group(2), 2);
        assert!(convolve(&p, &r2).is_err());
    }
}
