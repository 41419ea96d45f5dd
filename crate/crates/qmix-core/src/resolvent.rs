//! Green functions R^z = (λ(p) − z)⁻¹ of the limiting operators.
//!
//! On tree-like Cayley graphs the resolvent factorizes through first-visit
//! generating functions: with ζ_x^z(y) the generating function of walks from
//! y to x that hit x only at the final step, the diagonal solves
//! R^z(x,x) = 1/(Σ_y p(x,y) ζ_x^z(y) − z) and off-diagonal entries are the
//! diagonal times a product of ζ's along the geodesic. Each model closes
//! this system differently:
//!
//! - `RegularTree(d, w)`: one scalar γ̂ = −1/(z + (d−1)w²γ̂), the resolvent
//!   of the rooted subtree; ζ = −wγ̂ and R(e,e) = −1/(z + dw²γ̂).
//! - `FreeProduct`: nearest-neighbour weights on a free product of finite
//!   groups, each factor acting through its complete graph. Vertex pairs
//!   inside a factor coset are all equivalent, so ζ_x^z(y) collapses to one
//!   scalar ζ_i per factor and the quadratic system
//!   z ζ_i = w_i + w_i(n_i−2) ζ_i + ζ_i Σ_{j≠i} w_j(n_j−1) ζ_j
//!   closes. The physical branch ζ ~ w/z is selected by continuation from
//!   large Im z down the vertical line through the target.
//! - `Lattice(w)`: ℤ^d is not tree-like; entries come from the Fourier side,
//!   R^z(e,n) = (2π)^{−d} ∫ e^{−i⟨n,θ⟩} / (Σ_i 2w_i cos θ_i − z) dθ, by
//!   trapezoid sums on doubling grids (spectrally accurate for Im z ≠ 0).
//! - `TreeLift(base, a)`: the universal covering tree of a finite base
//!   graph, one scalar γ̂_i per directed edge with
//!   γ̂_i = −1/(z + Σ_{j≠i*, tail(j)=head(i)} |a_j|² γ̂_j); R^z(e,e) is the
//!   diagonal r×r block over base vertices and R^z(e,g) has a single
//!   non-zero entry given by the edge-compatible product ζ_{i₁}⋯ζ_{i_ℓ},
//!   zero whenever the base path fails to chain.
//! - `CartesianConvolution`: a finite spectrum {s_k} glued to an inner model
//!   by R(z) = mean_k R_inner(z − s_k), the diagonal resolvent of a
//!   Cartesian product with a finite graph. Only diagonal quantities
//!   (density, AC window checks) are defined for it; entrywise operations
//!   report `Error::Unsupported`.
//!
//! Fixed points are reached by damped iteration (factor 0.5) from the free
//! initialization γ = −1/z, to defining-equation residual below 1e-12, and
//! every solve checks the Herglotz sign Im R^z(e,e)·sign(Im z) > 0. Health
//! diagnostics follow the resolvent identities: the Ward identity
//! Σ_y η |R^z(x,y)|² = Im R^z(x,x), the fourth-moment sum
//! η² Σ_g ‖Im R^z(e,g)‖₂⁴ |g|^{C₁′} with a geometric tail bound from the
//! measured shell contraction, and the boundary density
//! f(E) = lim_{η→0} (1/π) Im R^{E+iη}(e,e) via Richardson extrapolation
//! down an η ladder. Solver state is per z and models stay immutable, so
//! scans over z grids parallelize without sharing.

use crate::action::BaseGraph;
use crate::group::{fp_syllables, lattice_exponents, reduce, FiniteFactor, GroupElement, GroupSpec};
use crate::{Complex, Error, Result};
use ndarray::Array2;
use rustfft::FftPlanner;

/// One free-product factor: a finite group of the given order acting through
/// its complete graph (all non-identity elements carry the same weight).
#[derive(Clone, Debug, PartialEq)]
pub struct FreeFactor {
    pub order: usize,
    pub weight: f64,
}

/// A limiting operator whose Green function is computable in closed
/// recursive form.
#[derive(Clone, Debug, PartialEq)]
pub enum ResolventModel {
    /// Adjacency of the d-regular tree with edge weight w.
    RegularTree { degree: usize, weight: f64 },
    /// Nearest-neighbour operator Σ_i w_i 1_{Γ_i∖{e}} on a free product of
    /// finite groups.
    FreeProduct { factors: Vec<FreeFactor> },
    /// Σ_i w_i (g_i + g_i⁻¹) on ℤ^d, one weight per coordinate.
    Lattice { weights: Vec<f64> },
    /// Weighted adjacency of the universal covering tree of a finite base
    /// multigraph; weights[i] sits on directed edge (u_i, v_i), its
    /// conjugate on the reverse.
    TreeLift { base: BaseGraph, weights: Vec<Complex> },
    /// Diagonal resolvent of H □ G: the inner model convolved with the
    /// finite spectrum of H.
    CartesianConvolution {
        spectrum: Vec<f64>,
        inner: Box<ResolventModel>,
    },
}

/// Damping factor of the fixed-point iteration; near the spectral edge the
/// undamped map slows down and can cycle as η → 0.
const DAMPING: f64 = 0.5;
const MAX_ITER: usize = 100_000;
const RESIDUAL_TOL: f64 = 1e-12;

impl ResolventModel {
    pub fn regular_tree(degree: usize, weight: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Argument("tree degree must be positive".into()));
        }
        if weight == 0.0 {
            return Err(Error::Argument("tree edge weight must be non-zero".into()));
        }
        Ok(ResolventModel::RegularTree { degree, weight })
    }

    pub fn free_product(factors: Vec<FreeFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Argument("free product needs at least one factor".into()));
        }
        for f in &factors {
            if f.order < 2 {
                return Err(Error::Argument("factor order must be at least 2".into()));
            }
            if f.weight == 0.0 {
                return Err(Error::Argument("factor weight must be non-zero".into()));
            }
        }
        Ok(ResolventModel::FreeProduct { factors })
    }

    pub fn lattice(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Argument("lattice needs at least one coordinate".into()));
        }
        if weights.iter().any(|&w| w == 0.0) {
            return Err(Error::Argument("lattice weights must be non-zero".into()));
        }
        Ok(ResolventModel::Lattice { weights })
    }

    pub fn tree_lift(base: BaseGraph, weights: Vec<Complex>) -> Result<Self> {
        if base.edges.is_empty() {
            return Err(Error::Argument("base graph needs at least one edge".into()));
        }
        if weights.len() != base.edges.len() {
            return Err(Error::Argument(format!(
                "need {} weights, got {}",
                base.edges.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|a| a.norm_sqr() == 0.0) {
            return Err(Error::Argument("edge weights must be non-zero".into()));
        }
        Ok(ResolventModel::TreeLift { base, weights })
    }

    pub fn cartesian(spectrum: Vec<f64>, inner: ResolventModel) -> Result<Self> {
        if spectrum.is_empty() {
            return Err(Error::Argument("finite spectrum must be non-empty".into()));
        }
        if !inner.is_scalar() {
            return Err(Error::Argument(
                "cartesian convolution needs a scalar inner model".into(),
            ));
        }
        Ok(ResolventModel::CartesianConvolution {
            spectrum,
            inner: Box::new(inner),
        })
    }

    /// True when R^z(e,e) is a single complex number rather than a block.
    pub fn is_scalar(&self) -> bool {
        match self {
            ResolventModel::TreeLift { .. } => false,
            ResolventModel::CartesianConvolution { inner, .. } => inner.is_scalar(),
            _ => true,
        }
    }

    /// The group whose Cayley graph the model lives on; elements passed to
    /// [`offdiag`] must be in this spec's canonical form.
    pub fn group_spec(&self) -> Result<GroupSpec> {
        match self {
            ResolventModel::RegularTree { degree, .. } => GroupSpec::free_product(vec![
                    complete_cyclic_factor(2);
                    *degree
                ]),
            ResolventModel::FreeProduct { factors } => GroupSpec::free_product(
                factors.iter().map(|f| complete_cyclic_factor(f.order)).collect(),
            ),
            ResolventModel::Lattice { weights } => Ok(GroupSpec::integer_lattice(weights.len())),
            ResolventModel::TreeLift { base, .. } => {
                Ok(GroupSpec::free_group(base.edges.len()))
            }
            ResolventModel::CartesianConvolution { .. } => Err(Error::Unsupported(
                "a cartesian convolution has no single underlying group".into(),
            )),
        }
    }
}

/// Cyclic group of the given order generated by all non-identity elements,
/// so that the factor's Cayley graph is complete.
fn complete_cyclic_factor(order: usize) -> FiniteFactor {
    let table = (0..order)
        .map(|a| (0..order).map(|b| (a + b) % order).collect())
        .collect();
    FiniteFactor::new(table, (1..order).collect()).expect("cyclic table with full generating set")
}

/// R^z(e,e): a scalar for transitive models, the diagonal of the r×r block
/// over base vertices for tree lifts (the block is diagonal because distinct
/// base vertices lie in distinct components of ℂ^r ⊗ ℓ²(F_d)).
#[derive(Clone, Debug, PartialEq)]
pub enum DiagValue {
    Scalar(Complex),
    Diagonal(Vec<Complex>),
}

impl DiagValue {
    pub fn scalar(&self) -> Result<Complex> {
        match self {
            DiagValue::Scalar(v) => Ok(*v),
            DiagValue::Diagonal(d) if d.len() == 1 => Ok(d[0]),
            DiagValue::Diagonal(d) => Err(Error::Argument(format!(
                "diagonal block of size {} is not a scalar",
                d.len()
            ))),
        }
    }

    pub fn entries(&self) -> Vec<Complex> {
        match self {
            DiagValue::Scalar(v) => vec![*v],
            DiagValue::Diagonal(d) => d.clone(),
        }
    }

    pub fn trace(&self) -> Complex {
        self.entries().iter().sum()
    }

    pub fn trace_mean(&self) -> Complex {
        self.trace() / Complex::new(self.entries().len() as f64, 0.0)
    }
}

/// R^z(e,g): a scalar for transitive models, an r×r block (with at most one
/// non-zero entry) for tree lifts.
#[derive(Clone, Debug, PartialEq)]
pub enum OffdiagValue {
    Scalar(Complex),
    Block(Array2<Complex>),
}

impl OffdiagValue {
    pub fn scalar(&self) -> Result<Complex> {
        match self {
            OffdiagValue::Scalar(v) => Ok(*v),
            OffdiagValue::Block(b) if b.nrows() == 1 && b.ncols() == 1 => Ok(b[(0, 0)]),
            OffdiagValue::Block(_) => Err(Error::Argument("block entry is not a scalar".into())),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            OffdiagValue::Scalar(v) => v.norm(),
            OffdiagValue::Block(b) => b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
        }
    }
}

/// Solved first-visit generating functions of a free product at one z:
/// ζ_x^z(y) for x ≠ y in a common factor equals `zeta[factor]` by the
/// complete-graph symmetry, and ζ_x^z(x) = 1.
#[derive(Clone, Debug)]
pub struct ZetaSystem {
    pub zeta: Vec<Complex>,
    pub residual: f64,
    orders: Vec<usize>,
}

impl ZetaSystem {
    /// ζ_x^z(y) for elements x, y of the given factor.
    pub fn zeta_xy(&self, factor: usize, x: usize, y: usize) -> Result<Complex> {
        let n = *self
            .orders
            .get(factor)
            .ok_or_else(|| Error::Argument(format!("no factor {factor}")))?;
        if x >= n || y >= n {
            return Err(Error::Argument(format!(
                "elements ({x},{y}) out of range for order {n}"
            )));
        }
        Ok(if x == y { Complex::new(1.0, 0.0) } else { self.zeta[factor] })
    }
}

/// Grid scan of Im R^z(e,e) (trace of the block for lifts) used to probe
/// for absolutely continuous spectrum on a window.
#[derive(Clone, Debug)]
pub struct AcReport {
    pub min_im: f64,
    pub max_im: f64,
    /// Grid points (E, η) where the Herglotz sign failed.
    pub violations: Vec<(f64, f64)>,
}

/// Truncated fourth-moment sum η² Σ_{0<|g|≤R} ‖Im R^z(e,g)‖₂⁴ |g|^{C₁′}
/// with a geometric tail bound from the measured shell contraction.
#[derive(Clone, Debug)]
pub struct FourthMomentReport {
    pub partial: f64,
    /// None when the measured contraction reaches 1 and no geometric tail
    /// bound is available.
    pub tail: Option<f64>,
    pub contraction: f64,
}

/// Ward identity residual |Σ_{|g|≤R} η ‖R^z(e,g)‖_F² − Im Tr R^z(e,e)|.
#[derive(Clone, Debug)]
pub struct WardReport {
    pub sum: f64,
    pub target: f64,
    pub residual: f64,
    pub tail: Option<f64>,
}

/// Boundary density estimate with the size of the last Richardson
/// correction as its error bar.
#[derive(Clone, Debug)]
pub struct DensityEstimate {
    pub value: f64,
    pub error_bar: f64,
}

fn require_offaxis(z: Complex) -> Result<()> {
    if z.im == 0.0 {
        return Err(Error::Argument("resolvent needs Im z ≠ 0".into()));
    }
    Ok(())
}

fn herglotz_check(label: &str, values: &[Complex], z: Complex) -> Result<()> {
    let s = z.im.signum();
    for v in values {
        if v.im * s <= 0.0 {
            return Err(Error::Solver(format!(
                "Herglotz violation in {label}: Im {v} against Im z = {}",
                z.im
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Regular tree

/// Solves γ̂ = −1/(z + (d−1)w²γ̂) by damped iteration from γ̂ = −1/z.
fn tree_gamma(degree: usize, w: f64, z: Complex) -> Result<Complex> {
    let c = (degree.saturating_sub(1)) as f64 * w * w;
    let mut g = -Complex::new(1.0, 0.0) / z;
    for _ in 0..MAX_ITER {
        let residual = (g * (z + c * g) + 1.0).norm();
        if residual < RESIDUAL_TOL {
            herglotz_check("tree subtree resolvent", &[g], z)?;
            return Ok(g);
        }
        let proposed = -Complex::new(1.0, 0.0) / (z + c * g);
        g = g * DAMPING + proposed * (1.0 - DAMPING);
    }
    Err(Error::Solver(format!(
        "tree fixed point stalled at residual {:.3e}",
        (g * (z + c * g) + 1.0).norm()
    )))
}

/// (R(e,e), ζ) of the d-regular tree with edge weight w.
fn tree_solution(degree: usize, w: f64, z: Complex) -> Result<(Complex, Complex)> {
    let gamma = tree_gamma(degree, w, z)?;
    let diag = -Complex::new(1.0, 0.0) / (z + degree as f64 * w * w * gamma);
    herglotz_check("tree diagonal", &[diag], z)?;
    Ok((diag, -w * gamma))
}

// ---------------------------------------------------------------------------
// Free products of finite groups

/// Defining-equation residual of the per-factor ζ system.
fn free_residual(factors: &[FreeFactor], z: Complex, zeta: &[Complex]) -> f64 {
    let mut worst = 0.0f64;
    for (i, f) in factors.iter().enumerate() {
        let b: Complex = factors
            .iter()
            .zip(zeta)
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, (g, zg))| g.weight * (g.order - 1) as f64 * zg)
            .sum();
        let lhs = zeta[i] * (z - f.weight * (f.order - 2) as f64 - b) - f.weight;
        worst = worst.max(lhs.norm() / (1.0 + f.weight.abs()));
    }
    worst
}

/// One damped solve at fixed z from the supplied starting point.
fn free_zeta_refine(
    factors: &[FreeFactor],
    z: Complex,
    zeta: &mut [Complex],
) -> Result<f64> {
    for _ in 0..MAX_ITER {
        let residual = free_residual(factors, z, zeta);
        if residual < RESIDUAL_TOL {
            return Ok(residual);
        }
        let proposed: Vec<Complex> = factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let b: Complex = factors
                    .iter()
                    .zip(zeta.iter())
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, (g, zg))| g.weight * (g.order - 1) as f64 * zg)
                    .sum();
                f.weight / (z - f.weight * (f.order - 2) as f64 - b)
            })
            .collect();
        for (zi, pi) in zeta.iter_mut().zip(proposed) {
            *zi = *zi * DAMPING + pi * (1.0 - DAMPING);
        }
    }
    Err(Error::Solver(format!(
        "zeta system stalled at residual {:.3e} for z = {z}",
        free_residual(factors, z, zeta)
    )))
}

/// Continuation from z₀ = E + 10i·sign(η) down the vertical line, stepping
/// η geometrically; selects the branch with ζ ~ w/z at infinity.
fn free_zetas(factors: &[FreeFactor], z: Complex) -> Result<(Vec<Complex>, f64)> {
    let sign = z.im.signum();
    let target = z.im.abs();
    let mut eta = target.max(10.0);
    let z0 = Complex::new(z.re, sign * eta);
    let mut zeta: Vec<Complex> = factors.iter().map(|f| f.weight / z0).collect();
    loop {
        let zk = Complex::new(z.re, sign * eta);
        let residual = free_zeta_refine(factors, zk, &mut zeta)?;
        if eta <= target {
            return Ok((zeta, residual));
        }
        eta = (0.6 * eta).max(target);
    }
}

/// R(e,e) = 1/(Σ_i w_i(n_i−1)ζ_i − z).
fn free_diag(factors: &[FreeFactor], zeta: &[Complex], z: Complex) -> Complex {
    let s: Complex = factors
        .iter()
        .zip(zeta)
        .map(|(f, zf)| f.weight * (f.order - 1) as f64 * zf)
        .sum();
    Complex::new(1.0, 0.0) / (s - z)
}

// ---------------------------------------------------------------------------
// Tree lifts

/// Directed-edge table of a base multigraph: edge i covers (tail, head)
/// with weight a_i, edge i+d the reverse with conj(a_i).
struct DirectedEdges {
    tail: Vec<usize>,
    head: Vec<usize>,
    a: Vec<Complex>,
    r: usize,
}

impl DirectedEdges {
    fn new(base: &BaseGraph, weights: &[Complex]) -> DirectedEdges {
        let d = base.edges.len();
        let mut tail = Vec::with_capacity(2 * d);
        let mut head = Vec::with_capacity(2 * d);
        let mut a = Vec::with_capacity(2 * d);
        for (&(u, v), &w) in base.edges.iter().zip(weights) {
            tail.push(u);
            head.push(v);
            a.push(w);
        }
        for (&(u, v), &w) in base.edges.iter().zip(weights) {
            tail.push(v);
            head.push(u);
            a.push(w.conj());
        }
        DirectedEdges { tail, head, a, r: base.r }
    }

    fn count(&self) -> usize {
        self.a.len()
    }

    fn reverse(&self, i: usize) -> usize {
        let d = self.count() / 2;
        (i + d) % (2 * d)
    }
}

/// Solves γ̂_i = −1/(z + Σ_{j≠i*, tail(j)=head(i)} |a_j|² γ̂_j) for all
/// directed edges by damped iteration from γ̂ = −1/z.
fn lift_gammas(edges: &DirectedEdges, z: Complex) -> Result<Vec<Complex>> {
    let m = edges.count();
    let field = |g: &[Complex], i: usize| -> Complex {
        (0..m)
            .filter(|&j| j != edges.reverse(i) && edges.tail[j] == edges.head[i])
            .map(|j| edges.a[j].norm_sqr() * g[j])
            .sum()
    };
    let mut g = vec![-Complex::new(1.0, 0.0) / z; m];
    for _ in 0..MAX_ITER {
        let residual = (0..m)
            .map(|i| (g[i] * (z + field(&g, i)) + 1.0).norm())
            .fold(0.0, f64::max);
        if residual < RESIDUAL_TOL {
            herglotz_check("lift subtree resolvents", &g, z)?;
            return Ok(g);
        }
        let proposed: Vec<Complex> = (0..m)
            .map(|i| -Complex::new(1.0, 0.0) / (z + field(&g, i)))
            .collect();
        for (gi, pi) in g.iter_mut().zip(proposed) {
            *gi = *gi * DAMPING + pi * (1.0 - DAMPING);
        }
    }
    Err(Error::Solver("lift fixed point stalled".into()))
}

/// Diagonal entries R(e,e)_{uu} = −1/(z + Σ_{tail(j)=u} |a_j|² γ̂_j) and the
/// per-edge products ζ_i = −a_i γ̂_i.
fn lift_solution(
    base: &BaseGraph,
    weights: &[Complex],
    z: Complex,
) -> Result<(DirectedEdges, Vec<Complex>, Vec<Complex>)> {
    let edges = DirectedEdges::new(base, weights);
    let gammas = lift_gammas(&edges, z)?;
    let diag: Vec<Complex> = (0..edges.r)
        .map(|u| {
            let s: Complex = (0..edges.count())
                .filter(|&j| edges.tail[j] == u)
                .map(|j| edges.a[j].norm_sqr() * gammas[j])
                .sum();
            -Complex::new(1.0, 0.0) / (z + s)
        })
        .collect();
    herglotz_check("lift diagonal", &diag, z)?;
    let zetas: Vec<Complex> = edges.a.iter().zip(&gammas).map(|(a, g)| -a * g).collect();
    Ok((edges, diag, zetas))
}

// ---------------------------------------------------------------------------
// Lattices

/// Grid caps per dimension; trapezoid errors decay like e^{−cηK}.
fn lattice_grid_cap(d: usize) -> usize {
    match d {
        1 => 1 << 20,
        2 => 2048,
        _ => 256,
    }
}

/// Mean of 1/(Σ_i 2w_i cos(2πm_i/K) − z) over the K^d grid.
fn lattice_diag_at(weights: &[f64], z: Complex, k: usize) -> Complex {
    let d = weights.len();
    let tables: Vec<Vec<f64>> = weights
        .iter()
        .map(|&w| {
            (0..k)
                .map(|m| 2.0 * w * (2.0 * std::f64::consts::PI * m as f64 / k as f64).cos())
                .collect()
        })
        .collect();
    fn go(tables: &[Vec<f64>], axis: usize, partial: f64, z: Complex, acc: &mut Complex) {
        if axis == tables.len() {
            *acc += Complex::new(1.0, 0.0) / (Complex::new(partial, 0.0) - z);
            return;
        }
        for &c in &tables[axis] {
            go(tables, axis + 1, partial + c, z, acc);
        }
    }
    let mut acc = Complex::new(0.0, 0.0);
    go(&tables, 0, 0.0, z, &mut acc);
    acc / (k as f64).powi(d as i32)
}

fn lattice_diag(weights: &[f64], z: Complex) -> Result<Complex> {
    let cap = lattice_grid_cap(weights.len());
    let mut k = 64;
    let mut value = lattice_diag_at(weights, z, k);
    while k < cap {
        k *= 2;
        let next = lattice_diag_at(weights, z, k);
        let delta = (next - value).norm();
        value = next;
        if delta < 1e-12 * (1.0 + value.norm()) {
            herglotz_check("lattice diagonal", &[value], z)?;
            return Ok(value);
        }
    }
    // One last self-consistency estimate at the cap.
    let check = (lattice_diag_at(weights, z, k / 2) - value).norm();
    if check > 1e-8 * (1.0 + value.norm()) {
        return Err(Error::Solver(format!(
            "lattice quadrature not converged at K={k}: delta {check:.3e}"
        )));
    }
    herglotz_check("lattice diagonal", &[value], z)?;
    Ok(value)
}

/// R(e,n) for n = 0..=radius on ℤ (entries are even in n); one forward FFT
/// of the symbol reciprocal per grid size.
fn lattice_entries_1d(w: f64, z: Complex, radius: usize) -> Result<Vec<Complex>> {
    let cap = lattice_grid_cap(1);
    let mut k = (8 * (radius + 1)).next_power_of_two().max(256);
    if k > cap {
        return Err(Error::Argument(format!("radius {radius} too large for 1D grid")));
    }
    let mut planner = FftPlanner::new();
    let compute = |k: usize, planner: &mut FftPlanner<f64>| -> Vec<Complex> {
        let mut buf: Vec<Complex> = (0..k)
            .map(|m| {
                let s = 2.0 * w * (2.0 * std::f64::consts::PI * m as f64 / k as f64).cos();
                Complex::new(1.0, 0.0) / (Complex::new(s, 0.0) - z)
            })
            .collect();
        planner.plan_fft_forward(k).process(&mut buf);
        (0..=radius).map(|n| buf[n] / k as f64).collect()
    };
    let mut entries = compute(k, &mut planner);
    loop {
        if k >= cap {
            return Err(Error::Solver(format!("1D entries not converged at K={k}")));
        }
        k *= 2;
        let next = compute(k, &mut planner);
        let delta = entries
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let scale = next[0].norm();
        entries = next;
        if delta < 1e-12 * (1.0 + scale) {
            return Ok(entries);
        }
    }
}

/// R(e,(n₁,n₂)) for n₁,n₂ = 0..=radius on ℤ² (entries are even in each
/// coordinate): row FFTs along the second axis, then a partial transform
/// over the first.
fn lattice_entries_2d(weights: &[f64], z: Complex, radius: usize) -> Result<Array2<Complex>> {
    let cap = lattice_grid_cap(2);
    let mut k = (8 * (radius + 1)).next_power_of_two().max(128);
    if k > cap {
        return Err(Error::Argument(format!("radius {radius} too large for 2D grid")));
    }
    let (w1, w2) = (weights[0], weights[1]);
    let mut planner = FftPlanner::new();
    let compute = |k: usize, planner: &mut FftPlanner<f64>| -> Array2<Complex> {
        let tau = 2.0 * std::f64::consts::PI / k as f64;
        let c1: Vec<f64> = (0..k).map(|m| 2.0 * w1 * (tau * m as f64).cos()).collect();
        let c2: Vec<f64> = (0..k).map(|m| 2.0 * w2 * (tau * m as f64).cos()).collect();
        let fft = planner.plan_fft_forward(k);
        // rows[m1][n2] for n2 ≤ radius after one FFT per row.
        let mut rows: Vec<Vec<Complex>> = Vec::with_capacity(k);
        let mut buf = vec![Complex::new(0.0, 0.0); k];
        for &s1 in &c1 {
            for (m2, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(1.0, 0.0) / (Complex::new(s1 + c2[m2], 0.0) - z);
            }
            fft.process(&mut buf);
            rows.push(buf[..=radius].to_vec());
        }
        let mut out = Array2::zeros((radius + 1, radius + 1));
        for n1 in 0..=radius {
            let phases: Vec<Complex> = (0..k)
                .map(|m1| Complex::from_polar(1.0, -tau * (n1 * m1 % k) as f64))
                .collect();
            for n2 in 0..=radius {
                let s: Complex = rows.iter().zip(&phases).map(|(row, p)| row[n2] * p).sum();
                out[(n1, n2)] = s / (k as f64 * k as f64);
            }
        }
        out
    };
    let mut entries = compute(k, &mut planner);
    loop {
        if k >= cap {
            return Err(Error::Solver(format!("2D entries not converged at K={k}")));
        }
        k *= 2;
        let next = compute(k, &mut planner);
        let delta = entries
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let scale = next[(0, 0)].norm();
        entries = next;
        if delta < 1e-12 * (1.0 + scale) {
            return Ok(entries);
        }
    }
}

// ---------------------------------------------------------------------------
// Public operations

/// R^z(e,e) from the model's self-consistency system.
pub fn solve_diag(model: &ResolventModel, z: Complex) -> Result<DiagValue> {
    require_offaxis(z)?;
    match model {
        ResolventModel::RegularTree { degree, weight } => {
            let (diag, _) = tree_solution(*degree, *weight, z)?;
            Ok(DiagValue::Scalar(diag))
        }
        ResolventModel::FreeProduct { factors } => {
            let (zeta, _) = free_zetas(factors, z)?;
            let diag = free_diag(factors, &zeta, z);
            herglotz_check("free product diagonal", &[diag], z)?;
            Ok(DiagValue::Scalar(diag))
        }
        ResolventModel::Lattice { weights } => Ok(DiagValue::Scalar(lattice_diag(weights, z)?)),
        ResolventModel::TreeLift { base, weights } => {
            let (_, diag, _) = lift_solution(base, weights, z)?;
            Ok(DiagValue::Diagonal(diag))
        }
        ResolventModel::CartesianConvolution { spectrum, inner } => {
            let mut acc = Complex::new(0.0, 0.0);
            for &s in spectrum {
                acc += solve_diag(inner, z - s)?.scalar()?;
            }
            let value = acc / spectrum.len() as f64;
            herglotz_check("cartesian diagonal", &[value], z)?;
            Ok(DiagValue::Scalar(value))
        }
    }
}

/// All first-visit functions ζ_x^z(y) of a free product, one scalar per
/// factor; other models have no finite ζ system and report `Unsupported`.
pub fn solve_zeta_system(model: &ResolventModel, z: Complex) -> Result<ZetaSystem> {
    require_offaxis(z)?;
    match model {
        ResolventModel::FreeProduct { factors } => {
            let (zeta, residual) = free_zetas(factors, z)?;
            Ok(ZetaSystem {
                zeta,
                residual,
                orders: factors.iter().map(|f| f.order).collect(),
            })
        }
        ResolventModel::RegularTree { degree, weight } => {
            // The tree is the free product of d copies of ℤ₂.
            let factors: Vec<FreeFactor> = (0..*degree)
                .map(|_| FreeFactor { order: 2, weight: *weight })
                .collect();
            let (zeta, residual) = free_zetas(&factors, z)?;
            Ok(ZetaSystem { zeta, residual, orders: vec![2; *degree] })
        }
        _ => Err(Error::Unsupported(
            "zeta systems exist for free products and regular trees only".into(),
        )),
    }
}

/// R^z(e,g) by the product of first-visit functions along the geodesic
/// (edge-compatible Z products for tree lifts, Fourier entries for ℤ^d).
pub fn offdiag(model: &ResolventModel, g: &GroupElement, z: Complex) -> Result<OffdiagValue> {
    require_offaxis(z)?;
    if !matches!(model, ResolventModel::CartesianConvolution { .. }) {
        let spec = model.group_spec()?;
        let red = reduce(&spec, g.word())?;
        if red.word() != g.word() {
            return Err(Error::Argument(
                "element is not in the model group's canonical form".into(),
            ));
        }
    }
    match model {
        ResolventModel::RegularTree { degree, weight } => {
            let (diag, zeta) = tree_solution(*degree, *weight, z)?;
            Ok(OffdiagValue::Scalar(diag * zeta.powu(g.len() as u32)))
        }
        ResolventModel::FreeProduct { factors } => {
            let (zeta, _) = free_zetas(factors, z)?;
            let diag = free_diag(factors, &zeta, z);
            let spec = model.group_spec()?;
            let mut value = diag;
            for (fi, _) in fp_syllables(&spec, g)? {
                value *= zeta[fi];
            }
            Ok(OffdiagValue::Scalar(value))
        }
        ResolventModel::Lattice { weights } => {
            let spec = model.group_spec()?;
            let exp = lattice_exponents(&spec, g)?;
            let n: Vec<usize> = exp.iter().map(|&e| e.unsigned_abs() as usize).collect();
            match weights.len() {
                1 => {
                    let entries = lattice_entries_1d(weights[0], z, n[0])?;
                    Ok(OffdiagValue::Scalar(entries[n[0]]))
                }
                2 => {
                    let entries = lattice_entries_2d(weights, z, n[0] + n[1])?;
                    Ok(OffdiagValue::Scalar(entries[(n[0], n[1])]))
                }
                _ => Err(Error::Unsupported(
                    "lattice entry extraction is implemented for d ≤ 2".into(),
                )),
            }
        }
        ResolventModel::TreeLift { base, weights } => {
            let (edges, diag, zetas) = lift_solution(base, weights, z)?;
            let r = edges.r;
            let mut block = Array2::zeros((r, r));
            if g.is_empty() {
                for (u, &v) in diag.iter().enumerate() {
                    block[(u, u)] = v;
                }
                return Ok(OffdiagValue::Block(block));
            }
            // In the left-regular convention λ(p) = Σ p_t ⊗ λ(t), the (e,g)
            // block collects symbol products over words t₁⋯t_k = g⁻¹, so
            // the walk follows the letters of g⁻¹: the stored word
            // reversed with every letter inverted.
            let path: Vec<usize> =
                g.word().iter().rev().map(|&l| edges.reverse(l as usize)).collect();
            let chains = path.windows(2).all(|p| edges.head[p[0]] == edges.tail[p[1]]);
            if chains {
                let u = edges.tail[path[0]];
                let v = edges.head[*path.last().expect("non-empty path")];
                let mut value = diag[u];
                for &i in &path {
                    value *= zetas[i];
                }
                block[(u, v)] = value;
            }
            Ok(OffdiagValue::Block(block))
        }
        ResolventModel::CartesianConvolution { .. } => Err(Error::Unsupported(
            "cartesian convolutions expose diagonal quantities only".into(),
        )),
    }
}

/// Scans Im R^{E+iη}(e,e) (trace of the block for lifts) over a grid,
/// reporting extremes and any Herglotz-sign violations.
pub fn check_ac(model: &ResolventModel, energies: &[f64], etas: &[f64]) -> Result<AcReport> {
    if energies.is_empty() || etas.is_empty() {
        return Err(Error::Argument("AC check needs non-empty grids".into()));
    }
    let mut min_im = f64::INFINITY;
    let mut max_im = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for &e in energies {
        for &eta in etas {
            let z = Complex::new(e, eta);
            require_offaxis(z)?;
            let v = solve_diag(model, z)?.trace().im;
            min_im = min_im.min(v);
            max_im = max_im.max(v);
            if v * eta.signum() <= 0.0 {
                violations.push((e, eta));
            }
        }
    }
    Ok(AcReport { min_im, max_im, violations })
}

// ---------------------------------------------------------------------------
// Shell sums shared by the Ward and fourth-moment diagnostics

/// 16 |Im a|⁴ written through powers of a, valid for any complex a:
/// |a − ā|⁴ = 6|a|⁴ + 2Re(a⁴) − 8|a|² Re(a²).
fn im_fourth(a: Complex) -> f64 {
    a.im.powi(4)
}

/// Σ over non-backtracking factor sequences of length ℓ of products of the
/// per-syllable weights f(factor); shells[ℓ] indexed from ℓ = 1.
fn free_shell_products(
    factors: &[FreeFactor],
    per_factor: &[Complex],
    radius: usize,
) -> Vec<Complex> {
    let m = factors.len();
    let mult: Vec<Complex> = factors
        .iter()
        .zip(per_factor)
        .map(|(f, &w)| w * (f.order - 1) as f64)
        .collect();
    let mut shells = Vec::with_capacity(radius);
    let mut v: Vec<Complex> = mult.clone();
    shells.push(v.iter().sum());
    for _ in 2..=radius {
        let total: Complex = v.iter().sum();
        let next: Vec<Complex> = (0..m).map(|j| mult[j] * (total - v[j])).collect();
        v = next;
        shells.push(v.iter().sum());
    }
    shells
}

/// Per-edge transfer sums over non-backtracking chained paths in the base
/// graph: start[i]·w[i₂]⋯w[i_ℓ]·end[i_ℓ] summed over paths (i₁,…,i_ℓ).
fn lift_shell_products(
    edges: &DirectedEdges,
    w: &[Complex],
    start: &[Complex],
    end: &[Complex],
    radius: usize,
) -> Vec<Complex> {
    let m = edges.count();
    let mut shells = Vec::with_capacity(radius);
    let mut v: Vec<Complex> = start.to_vec();
    shells.push(v.iter().zip(end).map(|(a, b)| a * b).sum());
    for _ in 2..=radius {
        let next: Vec<Complex> = (0..m)
            .map(|j| {
                let inflow: Complex = (0..m)
                    .filter(|&i| edges.head[i] == edges.tail[j] && j != edges.reverse(i))
                    .map(|i| v[i])
                    .sum();
                w[j] * inflow
            })
            .collect();
        v = next;
        shells.push(v.iter().zip(end).map(|(a, b)| a * b).sum());
    }
    shells
}

/// ‖R^z(e,·)‖_F² summed over each word-length shell 0..=radius, together
/// with the Ward target Im Tr R^z(e,e).
fn ward_shells(model: &ResolventModel, z: Complex, radius: usize) -> Result<(Vec<f64>, f64)> {
    match model {
        ResolventModel::RegularTree { degree, weight } => {
            let (diag, zeta) = tree_solution(*degree, *weight, z)?;
            let d = *degree as f64;
            let q = zeta.norm_sqr();
            let mut shells = vec![diag.norm_sqr()];
            let mut count = 1.0;
            for l in 1..=radius {
                count *= if l == 1 { d } else { d - 1.0 };
                shells.push(count * diag.norm_sqr() * q.powi(l as i32));
            }
            Ok((shells, diag.im))
        }
        ResolventModel::FreeProduct { factors } => {
            let (zeta, _) = free_zetas(factors, z)?;
            let diag = free_diag(factors, &zeta, z);
            let sq: Vec<Complex> = zeta.iter().map(|v| Complex::new(v.norm_sqr(), 0.0)).collect();
            let mut shells = vec![diag.norm_sqr()];
            for s in free_shell_products(factors, &sq, radius) {
                shells.push(diag.norm_sqr() * s.re);
            }
            Ok((shells, diag.im))
        }
        ResolventModel::Lattice { weights } => {
            let target;
            let mut shells = vec![0.0; radius + 1];
            match weights.len() {
                1 => {
                    let entries = lattice_entries_1d(weights[0], z, radius)?;
                    target = entries[0].im;
                    shells[0] = entries[0].norm_sqr();
                    for (n, v) in entries.iter().enumerate().skip(1) {
                        shells[n] = 2.0 * v.norm_sqr();
                    }
                }
                2 => {
                    let entries = lattice_entries_2d(weights, z, radius)?;
                    target = entries[(0, 0)].im;
                    for n1 in 0..=radius {
                        for n2 in 0..=radius - n1 {
                            let mult = (if n1 > 0 { 2.0 } else { 1.0 })
                                * (if n2 > 0 { 2.0 } else { 1.0 });
                            shells[n1 + n2] += mult * entries[(n1, n2)].norm_sqr();
                        }
                    }
                }
                _ => {
                    return Err(Error::Unsupported(
                        "lattice entry extraction is implemented for d ≤ 2".into(),
                    ))
                }
            }
            Ok((shells, target))
        }
        ResolventModel::TreeLift { base, weights } => {
            let (edges, diag, zetas) = lift_solution(base, weights, z)?;
            let m = edges.count();
            let w: Vec<Complex> = zetas.iter().map(|v| Complex::new(v.norm_sqr(), 0.0)).collect();
            let start: Vec<Complex> = (0..m)
                .map(|i| Complex::new(diag[edges.tail[i]].norm_sqr() * zetas[i].norm_sqr(), 0.0))
                .collect();
            let end = vec![Complex::new(1.0, 0.0); m];
            let mut shells = vec![diag.iter().map(|v| v.norm_sqr()).sum::<f64>()];
            for s in lift_shell_products(&edges, &w, &start, &end, radius) {
                shells.push(s.re);
            }
            Ok((shells, diag.iter().map(|v| v.im).sum()))
        }
        ResolventModel::CartesianConvolution { .. } => Err(Error::Unsupported(
            "cartesian convolutions expose diagonal quantities only".into(),
        )),
    }
}

/// Σ ‖Im R^z(e,g)‖₂⁴ over each word-length shell 1..=radius (shell ℓ at
/// index ℓ−1). Im here is the kernel of the operator (R − R*)/2i, whose
/// (e,g) block is (R(e,g) − R(e,g⁻¹)†)/2i.
fn fourth_shells(model: &ResolventModel, z: Complex, radius: usize) -> Result<Vec<f64>> {
    match model {
        ResolventModel::RegularTree { degree, weight } => {
            let (diag, zeta) = tree_solution(*degree, *weight, z)?;
            let d = *degree as f64;
            let mut shells = Vec::with_capacity(radius);
            let mut count = 1.0;
            for l in 1..=radius {
                count *= if l == 1 { d } else { d - 1.0 };
                shells.push(count * im_fourth(diag * zeta.powu(l as u32)));
            }
            Ok(shells)
        }
        ResolventModel::FreeProduct { factors } => {
            let (zeta, _) = free_zetas(factors, z)?;
            let g = free_diag(factors, &zeta, z);
            // R(e,g) = G·Πζ and R(e,g⁻¹) has the same product, so the Im
            // kernel is entrywise: 16|Im a|⁴ = 6|a|⁴ + 2Re(a⁴) − 8|a|²Re(a²).
            let abs4: Vec<Complex> =
                zeta.iter().map(|v| Complex::new(v.norm_sqr().powi(2), 0.0)).collect();
            let pow4: Vec<Complex> = zeta.iter().map(|v| v.powu(4)).collect();
            let mix: Vec<Complex> = zeta.iter().map(|v| v * v * v.norm_sqr()).collect();
            let s_abs = free_shell_products(factors, &abs4, radius);
            let s_pow = free_shell_products(factors, &pow4, radius);
            let s_mix = free_shell_products(factors, &mix, radius);
            let g2 = g.norm_sqr();
            Ok((0..radius)
                .map(|i| {
                    (6.0 * g2 * g2 * s_abs[i].re + 2.0 * (g.powu(4) * s_pow[i]).re
                        - 8.0 * (g2 * g * g * s_mix[i]).re)
                        / 16.0
                })
                .collect())
        }
        ResolventModel::Lattice { weights } => {
            let mut shells = vec![0.0; radius];
            match weights.len() {
                1 => {
                    let entries = lattice_entries_1d(weights[0], z, radius)?;
                    for (n, v) in entries.iter().enumerate().skip(1) {
                        shells[n - 1] = 2.0 * im_fourth(*v);
                    }
                }
                2 => {
                    let entries = lattice_entries_2d(weights, z, radius)?;
                    for n1 in 0..=radius {
                        for n2 in 0..=radius - n1 {
                            if n1 + n2 == 0 {
                                continue;
                            }
                            let mult = (if n1 > 0 { 2.0 } else { 1.0 })
                                * (if n2 > 0 { 2.0 } else { 1.0 });
                            shells[n1 + n2 - 1] += mult * im_fourth(entries[(n1, n2)]);
                        }
                    }
                }
                _ => {
                    return Err(Error::Unsupported(
                        "lattice entry extraction is implemented for d ≤ 2".into(),
                    ))
                }
            }
            Ok(shells)
        }
        ResolventModel::TreeLift { base, weights } => {
            let (edges, diag, zetas) = lift_solution(base, weights, z)?;
            let m = edges.count();
            // The single entry of R(e,g) is a = diag[u₁]·Πζ_{i_k}; the Im
            // kernel combines it with b = conj(diag[v_ℓ]·Πζ_{i_k*}), and
            // |a − b|⁴ expands into six per-edge-factorizable chains.
            let zs: Vec<Complex> = (0..m).map(|i| zetas[edges.reverse(i)]).collect();
            let one = Complex::new(1.0, 0.0);
            let chains: [(Vec<Complex>, Vec<Complex>, Vec<Complex>); 6] = [
                // |a|⁴
                (
                    (0..m).map(|i| Complex::new(zetas[i].norm_sqr().powi(2), 0.0)).collect(),
                    (0..m).map(|i| Complex::new(diag[edges.tail[i]].norm_sqr().powi(2), 0.0)).collect(),
                    vec![one; m],
                ),
                // |b|⁴
                (
                    (0..m).map(|i| Complex::new(zs[i].norm_sqr().powi(2), 0.0)).collect(),
                    vec![one; m],
                    (0..m).map(|i| Complex::new(diag[edges.head[i]].norm_sqr().powi(2), 0.0)).collect(),
                ),
                // |a|²|b|²
                (
                    (0..m).map(|i| Complex::new(zetas[i].norm_sqr() * zs[i].norm_sqr(), 0.0)).collect(),
                    (0..m).map(|i| Complex::new(diag[edges.tail[i]].norm_sqr(), 0.0)).collect(),
                    (0..m).map(|i| Complex::new(diag[edges.head[i]].norm_sqr(), 0.0)).collect(),
                ),
                // a²·conj(b)²
                (
                    (0..m).map(|i| (zetas[i] * zs[i]).powu(2)).collect(),
                    (0..m).map(|i| diag[edges.tail[i]].powu(2)).collect(),
                    (0..m).map(|i| diag[edges.head[i]].powu(2)).collect(),
                ),
                // |a|²·a·conj(b)
                (
                    (0..m).map(|i| zetas[i] * zs[i] * zetas[i].norm_sqr()).collect(),
                    (0..m).map(|i| diag[edges.tail[i]] * diag[edges.tail[i]].norm_sqr()).collect(),
                    (0..m).map(|i| diag[edges.head[i]]).collect(),
                ),
                // |b|²·a·conj(b)
                (
                    (0..m).map(|i| zetas[i] * zs[i] * zs[i].norm_sqr()).collect(),
                    (0..m).map(|i| diag[edges.tail[i]]).collect(),
                    (0..m).map(|i| diag[edges.head[i]] * diag[edges.head[i]].norm_sqr()).collect(),
                ),
            ];
            let mut per_chain: Vec<Vec<Complex>> = Vec::with_capacity(6);
            for (w, s, e) in &chains {
                let start: Vec<Complex> = (0..m).map(|i| s[i] * w[i]).collect();
                per_chain.push(lift_shell_products(&edges, w, &start, e, radius));
            }
            Ok((0..radius)
                .map(|i| {
                    (per_chain[0][i].re + per_chain[1][i].re + 4.0 * per_chain[2][i].re
                        + 2.0 * per_chain[3][i].re
                        - 4.0 * per_chain[4][i].re
                        - 4.0 * per_chain[5][i].re)
                        / 16.0
                })
                .collect())
        }
        ResolventModel::CartesianConvolution { .. } => Err(Error::Unsupported(
            "cartesian convolutions expose diagonal quantities only".into(),
        )),
    }
}

/// Shells that carry weight relative to the peak; parity symmetries (e.g.
/// Im R(e,n) = 0 for odd n at E = 0) leave shells that are zero up to
/// round-off, and those must not enter the rate measurement.
fn significant_shells(shells: &[f64]) -> Vec<(usize, f64)> {
    let peak = shells.iter().cloned().fold(0.0, f64::max);
    shells
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > peak * 1e-9)
        .map(|(i, &v)| (i, v))
        .collect()
}

/// Largest per-step geometric ratio over the trailing significant shells;
/// 0 when fewer than two shells carry weight.
fn measured_contraction(shells: &[f64]) -> f64 {
    let nz = significant_shells(shells);
    let take = nz.len().min(6);
    nz[nz.len() - take..]
        .windows(2)
        .map(|p| (p[1].1 / p[0].1).powf(1.0 / (p[1].0 - p[0].0) as f64))
        .fold(0.0, f64::max)
}

fn geometric_tail(shells: &[f64]) -> (f64, Option<f64>) {
    let c = measured_contraction(shells);
    let last = significant_shells(shells).last().map(|&(_, v)| v).unwrap_or(0.0);
    if c < 1.0 {
        (c, Some(last * c / (1.0 - c)))
    } else {
        (c, None)
    }
}

/// Ward identity on the truncated ball: Σ_{|g|≤R} η ‖R^z(e,g)‖_F² against
/// Im Tr R^z(e,e), with a geometric tail estimate for the remainder.
pub fn ward_check(model: &ResolventModel, z: Complex, radius: usize) -> Result<WardReport> {
    require_offaxis(z)?;
    let eta = z.im;
    let (shells, target_im) = ward_shells(model, z, radius)?;
    let scaled: Vec<f64> = shells.iter().map(|s| eta.abs() * s).collect();
    let sum: f64 = scaled.iter().sum();
    let target = target_im * eta.signum();
    let (_, tail) = geometric_tail(&scaled[1..]);
    Ok(WardReport {
        sum,
        target,
        residual: (sum - target).abs(),
        tail,
    })
}

/// Grows the truncation radius until the geometric tail estimate of the
/// Ward sum drops below `tol`, returning the report and the radius used.
pub fn ward_check_auto(
    model: &ResolventModel,
    z: Complex,
    tol: f64,
) -> Result<(WardReport, usize)> {
    if tol <= 0.0 {
        return Err(Error::Argument("tail tolerance must be positive".into()));
    }
    let cap = radius_cap(model);
    let mut radius = 8;
    loop {
        let report = ward_check(model, z, radius)?;
        let small_enough = matches!(report.tail, Some(t) if t <= 0.5 * tol);
        if small_enough || radius >= cap {
            return Ok((report, radius));
        }
        radius = (radius * 2).min(cap);
    }
}

/// Largest truncation radius the entry extraction supports per model.
fn radius_cap(model: &ResolventModel) -> usize {
    match model {
        ResolventModel::Lattice { weights } if weights.len() == 2 => 64,
        ResolventModel::Lattice { .. } => 2048,
        _ => 4096,
    }
}

/// η² Σ_{0<|g|≤R} ‖Im R^z(e,g)‖₂⁴ |g|^{C₁′} plus a geometric tail bound
/// from the measured shell contraction; `tail` is None (flagged) when the
/// contraction reaches 1.
pub fn fourth_moment(
    model: &ResolventModel,
    z: Complex,
    c1_prime: f64,
    radius: usize,
) -> Result<FourthMomentReport> {
    require_offaxis(z)?;
    if radius == 0 {
        return Err(Error::Argument("fourth moment needs radius ≥ 1".into()));
    }
    let eta2 = z.im * z.im;
    let raw = fourth_shells(model, z, radius)?;
    let scaled: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(i, &v)| eta2 * ((i + 1) as f64).powf(c1_prime) * v)
        .collect();
    let partial: f64 = scaled.iter().sum();
    let (contraction, tail) = geometric_tail(&scaled);
    Ok(FourthMomentReport { partial, tail, contraction })
}

/// Grows the truncation radius until the geometric tail bound drops below
/// 1e-3 of the partial sum, returning the report and the radius used.
pub fn fourth_moment_auto(
    model: &ResolventModel,
    z: Complex,
    c1_prime: f64,
) -> Result<(FourthMomentReport, usize)> {
    let cap = radius_cap(model);
    let mut radius = 32;
    loop {
        let report = fourth_moment(model, z, c1_prime, radius)?;
        let small_enough = matches!(report.tail, Some(t) if t <= 1e-3 * report.partial.max(1e-300));
        if small_enough || radius >= cap {
            return Ok((report, radius));
        }
        radius = (radius * 2).min(cap);
    }
}

/// Richardson extrapolation of (1/π) Im R^{E+iη}(e,e) (trace mean for
/// lifts) down a strictly decreasing η ladder; the error bar is the size
/// of the last Neville correction.
pub fn spectral_density(model: &ResolventModel, e: f64, etas: &[f64]) -> Result<DensityEstimate> {
    if etas.len() < 2 {
        return Err(Error::Argument("density ladder needs at least two η values".into()));
    }
    if etas.windows(2).any(|p| p[1] >= p[0]) || etas.iter().any(|&h| h <= 0.0) {
        return Err(Error::Argument("η ladder must be positive and strictly decreasing".into()));
    }
    let values: Result<Vec<f64>> = etas
        .iter()
        .map(|&h| {
            Ok(solve_diag(model, Complex::new(e, h))?.trace_mean().im / std::f64::consts::PI)
        })
        .collect();
    let values = values?;
    // Neville tableau evaluated at η = 0.
    let n = values.len();
    let mut tableau = values;
    let mut previous = tableau[0];
    for j in 1..n {
        for i in 0..n - j {
            tableau[i] = (etas[i + j] * tableau[i] - etas[i] * tableau[i + 1])
                / (etas[i + j] - etas[i]);
        }
        if j == n - 1 {
            return Ok(DensityEstimate {
                value: tableau[0],
                error_bar: (tableau[0] - previous).abs(),
            });
        }
        previous = tableau[0];
    }
    unreachable!("ladder length validated above");
}
