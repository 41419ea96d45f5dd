//! Observables on Schreier modules, quantum moments, and the quantum
//! ergodicity and mixing statistics.
//!
//! An observable K on ℂʳ⊗ℂᴺ is T-local when K(x,y) = 0 unless x = t.y for
//! some t ∈ T; it is determined by kernels via K(x,y) = Σ_{t: x=t.y} k_t(x).
//! Its averaged symbol k_{N,g} = (1/N)Σ_x K(g.x,x) yields the centering
//! operator ⟨K⟩ = ρ_N(k_N).
//!
//! The quantum moments of a Hermitian matrix with eigenpairs (λ_α, φ_α):
//!   L_{IJ}(K)    = (1/|Λ_I|) Σ_{α∈Λ_I} Σ_{β∈Λ_J} |⟨φ_β, Kφ_α⟩|²,
//!   L^{τ,η}_I(K) = (1/|Λ_I|) Σ_{α,β∈Λ_I, |λ_β−λ_α−τ|≤η} |⟨φ_β, Kφ_α⟩|²,
//! both 0 when Λ_I is empty. L_{IJ} is basis independent; L^{τ,η}_I is not.
//! The quantum ergodicity statistic averages |⟨φ_α,(K−⟨K⟩)φ_α⟩|² over Λ_I;
//! the mixing statistic is L_{J₁J₂} of the centered observable over energy
//! windows J_i = [E_i−η, E_i+η].

use std::f64::consts::TAU;

use ndarray::{s, Array2};
use rand::Rng;

use crate::action::{representation_matrix, PermutationAction};
use crate::algebra::AlgebraElement;
use crate::group::GroupElement;
use crate::linalg::{adjoint_times, eigh_complex, matmul_real};
use crate::rng::sub_rng;
use crate::sparse::{add, Csr};
use crate::spectra::{Basis, EigenSystem, Window};
use crate::{Complex, Error, Result};

/// Entry law for random diagonal observables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObservableLaw {
    /// Independent uniform signs ±1.
    Signs,
    /// Independent uniform points of the closed unit disc.
    UniformDisc,
}

/// A T-local observable, stored either as a diagonal or as per-t kernels.
#[derive(Clone, Debug)]
pub enum ObservableKind {
    /// Multiplication operator: value at flattened index i·N + x.
    Diagonal(Vec<Complex>),
    /// Kernels k_t: per reduced t, one r×r block per point x.
    TLocal(Vec<(GroupElement, Vec<Array2<Complex>>)>),
}

#[derive(Clone, Debug)]
pub struct Observable {
    pub kind: ObservableKind,
    pub block_size: usize,
    pub points: usize,
}

impl Observable {
    pub fn diagonal(values: Vec<Complex>, block_size: usize, points: usize) -> Result<Self> {
        if values.len() != block_size * points {
            return Err(Error::Argument(format!(
                "diagonal length {} does not match {}·{}",
                values.len(),
                block_size,
                points
            )));
        }
        Ok(Observable {
            kind: ObservableKind::Diagonal(values),
            block_size,
            points,
        })
    }

    pub fn t_local(
        terms: Vec<(GroupElement, Vec<Array2<Complex>>)>,
        block_size: usize,
        points: usize,
    ) -> Result<Self> {
        for (t, kern) in &terms {
            if kern.len() != points {
                return Err(Error::Argument("kernel length must equal point count".into()));
            }
            if kern
                .iter()
                .any(|b| b.nrows() != block_size || b.ncols() != block_size)
            {
                return Err(Error::Argument("kernel blocks must be r×r".into()));
            }
            if terms.iter().filter(|(u, _)| u == t).count() != 1 {
                return Err(Error::Argument("locality set has a repeated element".into()));
            }
        }
        Ok(Observable {
            kind: ObservableKind::TLocal(terms),
            block_size,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.block_size * self.points
    }

    /// The locality set T ({e} for diagonal observables).
    pub fn locality_set(&self) -> Vec<GroupElement> {
        match &self.kind {
            ObservableKind::Diagonal(_) => vec![GroupElement::identity()],
            ObservableKind::TLocal(terms) => terms.iter().map(|(t, _)| t.clone()).collect(),
        }
    }

    /// Assembles K as a sparse matrix on ℂʳ⊗ℂᴺ under the given action.
    pub fn matrix(&self, action: &PermutationAction) -> Result<Csr> {
        let n = action.point_count();
        if n != self.points {
            return Err(Error::Argument("observable/action size mismatch".into()));
        }
        let r = self.block_size;
        let dim = r * n;
        let mut trips = Vec::new();
        match &self.kind {
            ObservableKind::Diagonal(values) => {
                for (idx, &v) in values.iter().enumerate() {
                    if v != Complex::new(0.0, 0.0) {
                        trips.push((idx, idx, v));
                    }
                }
            }
            ObservableKind::TLocal(terms) => {
                for (t, kern) in terms {
                    let perm = action.permutation_of(t);
                    for y in 0..n {
                        let x = perm[y] as usize;
                        let block = &kern[x];
                        for i in 0..r {
                            for j in 0..r {
                                let v = block[(i, j)];
                                if v != Complex::new(0.0, 0.0) {
                                    trips.push((i * n + x, j * n + y, v));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(Csr::from_triplets(dim, dim, trips))
    }

    /// ‖K‖_{1,∞} = max over point pairs (x,y) of ‖K(x,y)‖₂.
    pub fn sup_norm(&self, action: &PermutationAction) -> Result<f64> {
        let k = self.matrix(action)?;
        Ok(sup_block_norm(&k, self.block_size, self.points))
    }
}

/// max_{x,y} ‖K(x,y)‖₂ for a matrix in the (i,x) → i·n + x layout.
pub fn sup_block_norm(k: &Csr, r: usize, n: usize) -> f64 {
    let mut sums: std::collections::HashMap<(usize, usize), f64> = std::collections::HashMap::new();
    for row in 0..k.nrows {
        let (cols, vals) = k.row(row);
        let x = row % n;
        for (&c, &v) in cols.iter().zip(vals) {
            *sums.entry((x, c % n)).or_insert(0.0) += v.norm_sqr();
        }
    }
    let _ = r;
    sums.values().fold(0.0f64, |a, &s| a.max(s.sqrt()))
}

/// Recovers the canonical kernels of a T-local matrix:
/// a_t(x) = A(x, t⁻¹.x)/m_t(x) with m_t(x) = #{t' ∈ T : t'⁻¹.x = t⁻¹.x}.
/// Errors when the matrix is not T-local (the kernels fail to reassemble it).
pub fn kernels_from_matrix(
    action: &PermutationAction,
    t_set: &[GroupElement],
    a: &Csr,
    block_size: usize,
) -> Result<Observable> {
    let n = action.point_count();
    let dim = block_size * n;
    if a.nrows != dim || a.ncols != dim {
        return Err(Error::Argument("matrix dimension mismatch".into()));
    }
    // Preimage y_t(x) = t⁻¹.x as a permutation table per t.
    let spec = action.spec().clone();
    let mut preimages = Vec::with_capacity(t_set.len());
    for t in t_set {
        let tinv = crate::group::inverse(&spec, t);
        preimages.push(action.permutation_of(&tinv));
    }
    let mut terms = Vec::with_capacity(t_set.len());
    for (ti, t) in t_set.iter().enumerate() {
        let mut kern = Vec::with_capacity(n);
        for x in 0..n {
            let y = preimages[ti][x] as usize;
            let mult = preimages
                .iter()
                .filter(|p| p[x] as usize == y)
                .count() as f64;
            let block = a.block(block_size, n, x, y).mapv(|v| v / mult);
            kern.push(block);
        }
        terms.push((t.clone(), kern));
    }
    let obs = Observable::t_local(terms, block_size, n)?;
    // Reassembly certifies T-locality and the multiplicity split.
    let back = obs.matrix(action)?;
    let diff = add(a, &back.scaled(Complex::new(-1.0, 0.0)));
    let scale = a.vals.iter().map(|v| v.norm()).fold(1.0f64, f64::max);
    if diff.vals.iter().any(|v| v.norm() > 1e-12 * scale) {
        return Err(Error::Validation("matrix is not local to the given set".into()));
    }
    Ok(obs)
}

/// The averaged symbol k_N with k_{N,g} = (1/N)Σ_x K(g.x, x), supported on
/// the locality set of the observable.
pub fn average_symbol(obs: &Observable, action: &PermutationAction) -> Result<AlgebraElement> {
    let n = action.point_count();
    let r = obs.block_size;
    let spec = action.spec().clone();
    match &obs.kind {
        ObservableKind::Diagonal(values) => {
            let mut block = Array2::zeros((r, r));
            for i in 0..r {
                let mean = values[i * n..(i + 1) * n]
                    .iter()
                    .sum::<Complex>()
                    / n as f64;
                block[(i, i)] = mean;
            }
            AlgebraElement::from_terms(spec, r, vec![(GroupElement::identity(), block)])
        }
        ObservableKind::TLocal(_) => {
            let k = obs.matrix(action)?;
            let mut terms = Vec::new();
            for g in obs.locality_set() {
                let perm = action.permutation_of(&g);
                let mut acc = Array2::zeros((r, r));
                for x in 0..n {
                    let gx = perm[x] as usize;
                    acc += &k.block(r, n, gx, x);
                }
                terms.push((g, acc / n as f64));
            }
            AlgebraElement::from_terms(spec, r, terms)
        }
    }
}

/// K − ρ_N(k_N): the observable centered by its averaged symbol.
pub fn centered_matrix(obs: &Observable, action: &PermutationAction) -> Result<Csr> {
    let k = obs.matrix(action)?;
    let symbol = average_symbol(obs, action)?;
    if symbol.support_len() == 0 {
        return Ok(k);
    }
    let avg = representation_matrix(action, &symbol)?;
    Ok(add(&k, &avg.matrix.scaled(Complex::new(-1.0, 0.0))))
}

/// Overlap matrix M[(b,a)] = ⟨φ_{J₀+b}, K φ_{I₀+a}⟩ for index ranges of
/// eigenvectors; real bases multiply through two real GEMMs.
fn overlaps(
    sys: &EigenSystem,
    k: &Csr,
    cols_i: std::ops::Range<usize>,
    cols_j: std::ops::Range<usize>,
) -> Array2<Complex> {
    match &sys.basis {
        Basis::Real(phi) => {
            let kphi = k.apply_columns_real(&phi.slice(s![.., cols_i.clone()]));
            let re = kphi.mapv(|z| z.re);
            let im = kphi.mapv(|z| z.im);
            let phj = phi.slice(s![.., cols_j.clone()]).t().to_owned();
            let mre = matmul_real(&phj, &re);
            let mim = matmul_real(&phj, &im);
            Array2::from_shape_fn((cols_j.len(), cols_i.len()), |(b, a)| {
                Complex::new(mre[(b, a)], mim[(b, a)])
            })
        }
        Basis::Complex(phi) => {
            let kphi = k.apply_columns_complex(&phi.slice(s![.., cols_i]));
            let phj = phi.slice(s![.., cols_j]).to_owned();
            adjoint_times(&phj, &kphi)
        }
    }
}

/// L_{IJ}(K): 0 when Λ_I is empty.
pub fn moment_lij(sys: &EigenSystem, k: &Csr, i: Window, j: Window) -> f64 {
    let idx_i = i.indices(sys);
    let idx_j = j.indices(sys);
    if idx_i.is_empty() {
        return 0.0;
    }
    if idx_j.is_empty() {
        return 0.0;
    }
    let m = overlaps(sys, k, idx_i.clone(), idx_j);
    m.iter().map(|z| z.norm_sqr()).sum::<f64>() / idx_i.len() as f64
}

/// L^{τ,η}_I(K): both α and β range over Λ_I, with |λ_β − λ_α − τ| ≤ η.
pub fn moment_l_tau_eta(sys: &EigenSystem, k: &Csr, i: Window, tau: f64, eta: f64) -> f64 {
    let idx = i.indices(sys);
    if idx.is_empty() {
        return 0.0;
    }
    let m = overlaps(sys, k, idx.clone(), idx.clone());
    let lam = &sys.eigenvalues;
    let mut acc = 0.0;
    for (a_pos, alpha) in idx.clone().enumerate() {
        for (b_pos, beta) in idx.clone().enumerate() {
            if (lam[beta] - lam[alpha] - tau).abs() <= eta {
                acc += m[(b_pos, a_pos)].norm_sqr();
            }
        }
    }
    acc / idx.len() as f64
}

/// The quantum ergodicity statistic over Λ_I: the centered diagonal average
/// (1/|Λ_I|) Σ_{α∈Λ_I} |⟨φ_α, (K − ⟨K⟩) φ_α⟩|².
pub fn qe_statistic(
    sys: &EigenSystem,
    obs: &Observable,
    action: &PermutationAction,
    i: Window,
) -> Result<f64> {
    let kc = centered_matrix(obs, action)?;
    let idx = i.indices(sys);
    if idx.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for alpha in idx.clone() {
        let phi = sys.basis.column(alpha);
        let v = kc.matvec(&phi);
        let mut d = Complex::new(0.0, 0.0);
        for (p, w) in phi.iter().zip(&v) {
            d += p.conj() * w;
        }
        acc += d.norm_sqr();
    }
    Ok(acc / idx.len() as f64)
}

/// The quantum mixing statistic L_{J₁J₂}(K − ⟨K⟩) over the energy windows
/// J_i = [E_i − η, E_i + η].
pub fn qm_statistic(
    sys: &EigenSystem,
    obs: &Observable,
    action: &PermutationAction,
    e1: f64,
    e2: f64,
    eta: f64,
) -> Result<f64> {
    if eta <= 0.0 {
        return Err(Error::Argument("mixing statistic needs η > 0".into()));
    }
    let kc = centered_matrix(obs, action)?;
    Ok(moment_lij(
        sys,
        &kc,
        Window::new(e1 - eta, e1 + eta),
        Window::new(e2 - eta, e2 + eta),
    ))
}

/// Verifies L^{τ,η}_I ≤ max_E L_{J^η_E, J^{2η}_{E+τ} ∩ I} by instantiating
/// the right-hand side on the partition of Λ_I into eigenvalue tiles of
/// width 2η. Returns (lhs, rhs); errors if the inequality fails.
pub fn mixtoergo_check(
    sys: &EigenSystem,
    k: &Csr,
    i: Window,
    tau: f64,
    eta: f64,
) -> Result<(f64, f64)> {
    if eta <= 0.0 {
        return Err(Error::Argument("decomposition bound needs η > 0".into()));
    }
    let lhs = moment_l_tau_eta(sys, k, i, tau, eta);
    let idx = i.indices(sys);
    if idx.is_empty() {
        return Ok((0.0, 0.0));
    }
    let lam = &sys.eigenvalues;
    // Half-open tiles [a + 2jη, a + 2(j+1)η) partition Λ_I exactly; each
    // tile is a contiguous index subrange because eigenvalues are sorted.
    let tile_of = |alpha: usize| -> usize {
        let j = ((lam[alpha] - i.lo) / (2.0 * eta)).floor();
        j.max(0.0) as usize
    };
    let mut rhs: f64 = 0.0;
    let mut start = idx.start;
    while start < idx.end {
        let j = tile_of(start);
        let mut end = start;
        while end < idx.end && tile_of(end) == j {
            end += 1;
        }
        let center = i.lo + (2 * j + 1) as f64 * eta;
        let beta_window = Window::new(
            (center + tau - 2.0 * eta).max(i.lo),
            (center + tau + 2.0 * eta).min(i.hi),
        );
        let beta_idx = beta_window.indices(sys);
        if !beta_idx.is_empty() {
            let m = overlaps(sys, k, start..end, beta_idx);
            let val = m.iter().map(|z| z.norm_sqr()).sum::<f64>() / (end - start) as f64;
            rhs = rhs.max(val);
        }
        start = end;
    }
    let scale = lhs.abs().max(1.0);
    if lhs > rhs + 1e-9 * scale {
        return Err(Error::Validation(format!(
            "decomposition bound violated: {lhs} > {rhs}"
        )));
    }
    Ok((lhs, rhs))
}

/// Empirical covariance σ_N(g) = (1/N) Σ_x (a(x)−⟨a⟩) · conj(a(g.x)−⟨a⟩)
/// of a scalar diagonal observable.
pub fn empirical_covariance(
    obs: &Observable,
    action: &PermutationAction,
    g: &GroupElement,
) -> Result<Complex> {
    let values = match &obs.kind {
        ObservableKind::Diagonal(v) if obs.block_size == 1 => v,
        _ => {
            return Err(Error::Argument(
                "empirical covariance needs a scalar diagonal observable".into(),
            ))
        }
    };
    let n = action.point_count();
    if values.len() != n {
        return Err(Error::Argument("observable/action size mismatch".into()));
    }
    let mean = values.iter().sum::<Complex>() / n as f64;
    let perm = action.permutation_of(g);
    let mut acc = Complex::new(0.0, 0.0);
    for x in 0..n {
        let gx = perm[x] as usize;
        acc += (values[x] - mean) * (values[gx] - mean).conj();
    }
    Ok(acc / n as f64)
}

/// Operator norm of the matricial covariance
/// (1/N) Σ_x conj(a(x)−⟨a⟩) ⊗ (a(g.x)−⟨a⟩) for a block-diagonal observable
/// with per-point vectors a(x) ∈ ℂʳ.
pub fn empirical_covariance_block(
    obs: &Observable,
    action: &PermutationAction,
    g: &GroupElement,
) -> Result<f64> {
    let values = match &obs.kind {
        ObservableKind::Diagonal(v) => v,
        _ => {
            return Err(Error::Argument(
                "matricial covariance needs a diagonal observable".into(),
            ))
        }
    };
    let n = action.point_count();
    let r = obs.block_size;
    let mut mean = vec![Complex::new(0.0, 0.0); r];
    for i in 0..r {
        mean[i] = values[i * n..(i + 1) * n].iter().sum::<Complex>() / n as f64;
    }
    let perm = action.permutation_of(g);
    let mut m = Array2::<Complex>::zeros((r, r));
    for x in 0..n {
        let gx = perm[x] as usize;
        for i in 0..r {
            let a = (values[i * n + x] - mean[i]).conj();
            for j in 0..r {
                let b = values[j * n + gx] - mean[j];
                m[(i, j)] += a * b;
            }
        }
    }
    m /= Complex::new(n as f64, 0.0);
    // Largest singular value via the Gram matrix.
    let gram = adjoint_times(&m, &m);
    let (vals, _) = eigh_complex(&gram)?;
    Ok(vals.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

/// Independent random diagonal observable with ‖a‖∞ ≤ 1.
pub fn iid_observable(n: usize, seed: u64, law: ObservableLaw) -> Observable {
    let mut rng = sub_rng(seed, "iid-observable");
    let values = (0..n)
        .map(|_| match law {
            ObservableLaw::Signs => {
                if rng.gen::<bool>() {
                    Complex::new(1.0, 0.0)
                } else {
                    Complex::new(-1.0, 0.0)
                }
            }
            ObservableLaw::UniformDisc => {
                let radius = rng.gen::<f64>().sqrt();
                let theta = rng.gen_range(0.0..TAU);
                Complex::new(radius * theta.cos(), radius * theta.sin())
            }
        })
        .collect();
    Observable {
        kind: ObservableKind::Diagonal(values),
        block_size: 1,
        points: n,
    }
}

/// The correlated observable built from the cycles of ρ_N(g): on each cycle
/// of length L, value +1 on the first ⌊L/2⌋ sites in traversal order and
/// −1 on the rest. Its covariance at g stays near 1 on long cycles.
pub fn cycle_sign_observable(action: &PermutationAction, g: &GroupElement) -> Result<Observable> {
    let n = action.point_count();
    let perm = action.permutation_of(g);
    let mut values = vec![Complex::new(0.0, 0.0); n];
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut cycle = Vec::new();
        let mut x = start;
        loop {
            seen[x] = true;
            cycle.push(x);
            x = perm[x] as usize;
            if x == start {
                break;
            }
        }
        let plus = cycle.len() / 2;
        for (pos, &site) in cycle.iter().enumerate() {
            values[site] = if pos < plus {
                Complex::new(1.0, 0.0)
            } else {
                Complex::new(-1.0, 0.0)
            };
        }
    }
    Observable::diagonal(values, 1, n)
}

/// Fourier mode observable a(x) = exp(2πi x·u/M) on the (ℤ/Mℤ)^d torus in
/// the little-endian point encoding.
pub fn fourier_observable(m: usize, d: usize, mode: &[usize]) -> Result<Observable> {
    if mode.len() != d {
        return Err(Error::Argument("mode length must equal the dimension".into()));
    }
    let n = m.pow(d as u32);
    let values = (0..n)
        .map(|x| {
            let digits = crate::action::torus_digits(x, m, d);
            let phase: f64 = digits
                .iter()
                .zip(mode)
                .map(|(&xi, &ui)| TAU * (xi * ui) as f64 / m as f64)
                .sum();
            Complex::new(phase.cos(), phase.sin())
        })
        .collect();
    Observable::diagonal(values, 1, n)
}

/// The glued-copies indicator: +1 on the first two copies, −1 on the next
/// two, 0 on everything else (hub included).
pub fn block_indicator_observable(
    copies: usize,
    copy_size: usize,
    points: usize,
) -> Result<Observable> {
    if copies < 4 {
        return Err(Error::Argument("indicator needs at least four copies".into()));
    }
    if points < copies * copy_size + 1 {
        return Err(Error::Argument("point count is smaller than the copies".into()));
    }
    let values = (0..points)
        .map(|x| {
            let c = x / copy_size;
            if x >= copies * copy_size {
                Complex::new(0.0, 0.0)
            } else if c < 2 {
                Complex::new(1.0, 0.0)
            } else if c < 4 {
                Complex::new(-1.0, 0.0)
            } else {
                Complex::new(0.0, 0.0)
            }
        })
        .collect();
    Observable::diagonal(values, 1, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{random_free_action, random_matching_action, torus_action};
    use crate::group::{reduce, GeneratingSet, GroupSpec};
    use crate::linalg::matmul_complex;
    use crate::rng::master_rng;
    use crate::spectra::{eigendecompose, rerandomize_degenerate, torus_cos_sin_eigensystem};

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn walk_symbol(spec: &GroupSpec) -> AlgebraElement {
        let s = GeneratingSet::standard(spec);
        AlgebraElement::indicator(spec, &s)
    }

    fn random_complex_diag(n: usize, seed: u64) -> Observable {
        let mut rng = master_rng(seed);
        let values = (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / 2.0)
            .collect();
        Observable::diagonal(values, 1, n).unwrap()
    }

    /// A complex two-letter local observable with random kernels.
    fn random_t_local(action: &PermutationAction, seed: u64) -> Observable {
        let n = action.point_count();
        let spec = action.spec();
        let mut rng = master_rng(seed);
        let e = GroupElement::identity();
        let g = reduce(spec, &[0]).unwrap();
        let mut terms = Vec::new();
        for t in [e, g] {
            let kern: Vec<Array2<Complex>> = (0..n)
                .map(|_| {
                    Array2::from_shape_fn((1, 1), |_| {
                        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / 2.0
                    })
                })
                .collect();
            terms.push((t, kern));
        }
        Observable::t_local(terms, 1, n).unwrap()
    }

    #[test]
    fn diagonal_average_symbol() {
        let action = torus_action(5, 1);
        // Zero-mean diagonal → zero symbol.
        let mut values = vec![c(1.0, 0.0), c(-1.0, 0.0), c(0.5, 0.0), c(-0.5, 0.0), c(0.0, 0.0)];
        let obs = Observable::diagonal(values.clone(), 1, 5).unwrap();
        let sym = average_symbol(&obs, &action).unwrap();
        assert_eq!(sym.support_len(), 0);
        // Constant c → c·δ_e.
        values = vec![c(0.3, -0.2); 5];
        let obs = Observable::diagonal(values, 1, 5).unwrap();
        let sym = average_symbol(&obs, &action).unwrap();
        assert_eq!(sym.support_len(), 1);
        let b = sym.coefficient(&GroupElement::identity());
        assert!((b[(0, 0)] - c(0.3, -0.2)).norm() < 1e-14);
    }

    #[test]
    fn representation_matrix_has_its_symbol_as_average() {
        // K = ρ_N(p) on a torus: no generator fixes a point, so the
        // canonical kernels recover p and k_N = p exactly.
        let action = torus_action(6, 1);
        let spec = action.spec().clone();
        let p = walk_symbol(&spec);
        let op = representation_matrix(&action, &p).unwrap();
        let t_set: Vec<GroupElement> = p.support().map(|(g, _)| g.clone()).collect();
        let obs = kernels_from_matrix(&action, &t_set, &op.matrix, 1).unwrap();
        let sym = average_symbol(&obs, &action).unwrap();
        for (g, block) in p.support() {
            let got = sym.coefficient(g);
            assert!(
                (got[(0, 0)] - block[(0, 0)]).norm() < 1e-12,
                "coefficient at {:?}",
                g
            );
        }
        assert_eq!(sym.support_len(), p.support_len());
    }

    #[test]
    fn kernel_roundtrip_on_free_action() {
        let action = random_free_action(40, 2, 3);
        let obs = random_t_local(&action, 11);
        let k = obs.matrix(&action).unwrap();
        let back = kernels_from_matrix(&action, &obs.locality_set(), &k, 1).unwrap();
        let k2 = back.matrix(&action).unwrap();
        let d1 = k.to_dense();
        let d2 = k2.to_dense();
        for i in 0..k.nrows {
            for j in 0..k.ncols {
                assert!((d1[(i, j)] - d2[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn locality_violation_detected() {
        let action = torus_action(5, 1);
        let spec = action.spec().clone();
        let g = reduce(&spec, &[0]).unwrap();
        // A matrix with an entry outside the orbit structure of {g}.
        let k = Csr::from_triplets(5, 5, vec![(0, 1, c(1.0, 0.0)), (0, 3, c(1.0, 0.0))]);
        assert!(kernels_from_matrix(&action, &[g], &k, 1).is_err());
    }

    #[test]
    fn identity_observable_moments() {
        let action = random_matching_action(40, 3, 1).unwrap();
        let sys = eigendecompose(
            &representation_matrix(&action, &walk_symbol(action.spec())).unwrap(),
        )
        .unwrap();
        let eye = Csr::from_triplets(
            40,
            40,
            (0..40).map(|i| (i, i, c(1.0, 0.0))).collect(),
        );
        let full = Window::new(f64::NEG_INFINITY, f64::INFINITY);
        assert!((moment_lij(&sys, &eye, full, full) - 1.0).abs() < 1e-12);
        let lo = Window::new(-10.0, 0.0);
        let hi = Window::new(1e-9, 10.0);
        assert!(moment_lij(&sys, &eye, lo, hi).abs() < 1e-20, "disjoint windows");
    }

    #[test]
    fn trace_formula_for_lij() {
        let action = random_free_action(30, 2, 5);
        let sys = eigendecompose(
            &representation_matrix(&action, &walk_symbol(action.spec())).unwrap(),
        )
        .unwrap();
        let obs = random_t_local(&action, 21);
        let k = obs.matrix(&action).unwrap();
        let i = Window::new(-2.0, 0.5);
        let j = Window::new(-0.5, 3.0);
        let lij = moment_lij(&sys, &k, i, j);
        // (1/|Λ_I|)Tr(K·1_I(P)·K*·1_J(P)) through dense projectors.
        let dim = sys.dim();
        let idx_i = i.indices(&sys);
        let proj = |idx: std::ops::Range<usize>| -> Array2<Complex> {
            let mut p = Array2::zeros((dim, dim));
            for alpha in idx {
                let col = sys.basis.column(alpha);
                for a in 0..dim {
                    for b in 0..dim {
                        p[(a, b)] += col[a] * col[b].conj();
                    }
                }
            }
            p
        };
        let pi = proj(idx_i.clone());
        let pj = proj(j.indices(&sys));
        let kd = k.to_dense();
        let kh = kd.t().mapv(|v| v.conj());
        let prod = matmul_complex(&matmul_complex(&kd, &pi), &matmul_complex(&kh, &pj));
        let tr: Complex = (0..dim).map(|a| prod[(a, a)]).sum();
        let want = tr.re / idx_i.len() as f64;
        assert!(
            (lij - want).abs() < 1e-10,
            "moment {lij} vs trace {want}"
        );
    }

    #[test]
    fn completeness_identity() {
        let action = random_matching_action(36, 3, 9).unwrap();
        let sys = eigendecompose(
            &representation_matrix(&action, &walk_symbol(action.spec())).unwrap(),
        )
        .unwrap();
        let obs = random_complex_diag(36, 13);
        let k = obs.matrix(&action).unwrap();
        let i = Window::new(-1.5, 1.5);
        let full = Window::new(f64::NEG_INFINITY, f64::INFINITY);
        let lhs = moment_lij(&sys, &k, i, full);
        let idx = i.indices(&sys);
        let mut rhs = 0.0;
        for alpha in idx.clone() {
            let phi = sys.basis.column(alpha);
            let v = k.matvec(&phi);
            rhs += v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        rhs /= idx.len() as f64;
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn lij_is_basis_independent() {
        // The 8-cycle has honest eigenvalue pairs; rotate inside clusters.
        let action = torus_action(8, 1);
        let sys = eigendecompose(
            &representation_matrix(&action, &walk_symbol(action.spec())).unwrap(),
        )
        .unwrap();
        let obs = random_t_local(&action, 31);
        let k = obs.matrix(&action).unwrap();
        let mut rng = master_rng(77);
        let rot = rerandomize_degenerate(&sys, 1e-9, &mut rng);
        let i = Window::new(-1.9, 0.3);
        let j = Window::new(-0.4, 2.2);
        let a = moment_lij(&sys, &k, i, j);
        let b = moment_lij(&rot, &k, i, j);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn qe_statistic_matches_diagonal_form() {
        let action = random_matching_action(50, 3, 4).unwrap();
        let sys = eigendecompose(
            &representation_matrix(&action, &walk_symbol(action.spec())).unwrap(),
        )
        .unwrap();
        let obs = iid_observable(50, 8, ObservableLaw::Signs);
        let i = Window::new(-2.0, 2.0);
        let got = qe_statistic(&sys, &obs, &action, i).unwrap();
        // Direct eq:QEaN-style evaluation.
        let values = match &obs.kind {
            ObservableKind::Diagonal(v) => v.clone(),
            _ => unreachable!(),
        };
        let mean = values.iter().sum::<Complex>() / 50.0;
        let idx = i.indices(&sys);
        let mut want = 0.0;
        for alpha in idx.clone() {
            let phi = sys.basis.column(alpha);
            let mut d = Complex::new(0.0, 0.0);
            for (x, p) in phi.iter().enumerate() {
                d += p.conj() * values[x] * p;
            }
            want += (d - mean).norm_sqr();
        }
        want /= idx.len() as f64;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn centered_constant_vanishes() {
        let action = torus_action(7, 1);
        let sys = eigendecompose(
            &representation_matrix(&action, &walk_symbol(action.spec())).unwrap(),
        )
        .unwrap();
        let obs = Observable::diagonal(vec![c(0.6, 0.1); 7], 1, 7).unwrap();
        let stat = qe_statistic(&sys, &obs, &action, Window::new(-3.0, 3.0)).unwrap();
        assert!(stat < 1e-18, "constant observable must center away, got {stat}");
    }

    #[test]
    fn decomposition_bound_holds() {
        let action = random_matching_action(60, 3, 17).unwrap();
        let sys = eigendecompose(
            &representation_matrix(&action, &walk_symbol(action.spec())).unwrap(),
        )
        .unwrap();
        let obs = iid_observable(60, 2, ObservableLaw::Signs);
        let kc = centered_matrix(&obs, &action).unwrap();
        for (tau, eta) in [(0.0, 0.3), (0.5, 0.2), (-0.7, 0.45)] {
            let (lhs, rhs) = mixtoergo_check(&sys, &kc, Window::new(-2.2, 2.2), tau, eta).unwrap();
            assert!(lhs <= rhs + 1e-9, "tau={tau}, eta={eta}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn covariance_examples() {
        let action = torus_action(20, 2);
        let spec = action.spec().clone();
        let n = 400;
        // g = e gives the empirical variance ⟨|a|²⟩ − |⟨a⟩|².
        let obs = iid_observable(n, 5, ObservableLaw::Signs);
        let e = GroupElement::identity();
        let var = empirical_covariance(&obs, &action, &e).unwrap();
        let values = match &obs.kind {
            ObservableKind::Diagonal(v) => v.clone(),
            _ => unreachable!(),
        };
        let mean = values.iter().sum::<Complex>() / n as f64;
        let want = values.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64 - mean.norm_sqr();
        assert!((var.re - want).abs() < 1e-12 && var.im.abs() < 1e-14);
        // iid observable decorrelates: |σ| < 3/√N for g ≠ e.
        let g1 = reduce(&spec, &[0]).unwrap();
        let g2 = reduce(&spec, &[1, 1]).unwrap();
        for g in [&g1, &g2] {
            let s = empirical_covariance(&obs, &action, g).unwrap();
            assert!(s.norm() < 3.0 / (n as f64).sqrt(), "|σ|={} too large", s.norm());
        }
        // Bound |σ| ≤ ‖a−⟨a⟩‖∞².
        assert!(empirical_covariance(&obs, &action, &g1).unwrap().norm() <= 4.0);
    }

    #[test]
    fn cycle_sign_stays_correlated() {
        let action = random_free_action(600, 2, 12);
        let spec = action.spec().clone();
        let g = reduce(&spec, &[0]).unwrap();
        let obs = cycle_sign_observable(&action, &g).unwrap();
        let sigma = empirical_covariance(&obs, &action, &g).unwrap();
        // Long cycles dominate: products are +1 except near block edges.
        assert!(sigma.re > 0.8, "σ = {sigma} should be near 1");
    }

    #[test]
    fn fourier_observable_is_correlated() {
        let obs = fourier_observable(16, 1, &[1]).unwrap();
        let action = torus_action(16, 1);
        let spec = action.spec().clone();
        let g = reduce(&spec, &[0]).unwrap();
        // a(x)·conj(a(x+1)) is the constant phase e^{-2πi/16}.
        let sigma = empirical_covariance(&obs, &action, &g).unwrap();
        assert!((sigma.norm() - 1.0).abs() < 1e-12);
        // The mean is the zero Fourier coefficient of a nonzero mode:
        // it vanishes up to rounding in the phase sums.
        let sym = average_symbol(&obs, &action).unwrap();
        let b = sym.coefficient(&GroupElement::identity());
        assert!(b[(0, 0)].norm() < 1e-14);
    }

    #[test]
    fn block_indicator_shape() {
        let obs = block_indicator_observable(4, 10, 41).unwrap();
        let values = match &obs.kind {
            ObservableKind::Diagonal(v) => v.clone(),
            _ => unreachable!(),
        };
        let plus = values.iter().filter(|v| v.re > 0.5).count();
        let minus = values.iter().filter(|v| v.re < -0.5).count();
        let zero = values.iter().filter(|v| v.norm() < 1e-15).count();
        assert_eq!((plus, minus, zero), (20, 20, 1));
        let mean = values.iter().sum::<Complex>();
        assert!(mean.norm() < 1e-14);
    }

    #[test]
    fn block_covariance_matches_scalar_case() {
        let action = torus_action(30, 1);
        let spec = action.spec().clone();
        let obs = iid_observable(30, 3, ObservableLaw::UniformDisc);
        let g = reduce(&spec, &[0]).unwrap();
        let scalar = empirical_covariance(&obs, &action, &g).unwrap();
        let block = empirical_covariance_block(&obs, &action, &g).unwrap();
        assert!((block - scalar.norm()).abs() < 1e-12, "{block} vs {}", scalar.norm());
    }

    #[test]
    fn torus_mixing_failure() {
        // ℤ² box M=20 with the mode-shift observable: the mixing statistic
        // stays macroscopic because a maps eigenvectors to eigenvectors
        // with eigenvalue shifted by at most 2·2π/M.
        let m = 20;
        let sys = torus_cos_sin_eigensystem(m, 2);
        let action = torus_action(m, 2);
        let obs = fourier_observable(m, 2, &[1, 0]).unwrap();
        let stat = qm_statistic(&sys, &obs, &action, 0.5, 0.5, 0.5).unwrap();
        assert!(stat >= 0.4, "mixing statistic {stat} should stay ≥ 0.4");
        // Quantum ergodicity for an iid observable still holds comfortably.
        let iid = iid_observable(400, 6, ObservableLaw::Signs);
        let qe = qe_statistic(&sys, &iid, &action, Window::new(-3.0, 3.0)).unwrap();
        assert!(qe < 0.1, "qe statistic {qe} should be small");
    }
}
