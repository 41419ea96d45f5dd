//! Permutation representations ρ_N and the finite operators ρ_N(p).
//!
//! An action assigns a permutation of [N] to each generator letter, subject
//! to the defining relations of the group (verified on construction). A
//! block symbol p = Σ_g p_g g then yields the Hermitian operator
//! ρ_N(p) = Σ_g p_g ⊗ ρ_N(g) on ℂʳ ⊗ ℂᴺ, the weighted adjacency operator
//! of the finite model; index (i, x) flattens to i·N + x.
//!
//! Convergence to the infinite limit is tracked through fixed-point
//! diagnostics: Bad_S(n) collects the points fixed by some non-identity
//! element of the ball B_S(2n), and the fraction |Bad_S(n)|/N bounds how
//! far radius-n neighborhoods are from their Cayley-graph counterparts.

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use crate::algebra::AlgebraElement;
use crate::group::{multiply, reduce, FiniteFactor, GeneratingSet, GroupElement, GroupSpec};
use crate::rng::{sub_rng, uniform_matching, uniform_permutation};
#[cfg(test)]
use crate::rng::master_rng;
use crate::sparse::Csr;
use crate::{Complex, Error, Result};

/// A permutation representation ρ_N: one permutation of [N] per generator
/// letter, satisfying the group's defining relations.
#[derive(Clone, Debug, PartialEq)]
pub struct PermutationAction {
    spec: GroupSpec,
    n: usize,
    perms: Vec<Vec<u32>>,
}

impl PermutationAction {
    /// Validates bijectivity and the defining relations: inverse pairs for
    /// free and lattice letters, lattice commutation, Coxeter involutions
    /// and commutations, and full multiplication tables per finite factor.
    pub fn new(spec: GroupSpec, perms: Vec<Vec<u32>>) -> Result<Self> {
        if perms.len() != spec.gen_count() {
            return Err(Error::Validation(format!(
                "expected {} permutations, got {}",
                spec.gen_count(),
                perms.len()
            )));
        }
        let n = perms.first().map_or(0, |p| p.len());
        if n == 0 {
            return Err(Error::Validation("empty action".into()));
        }
        for (i, p) in perms.iter().enumerate() {
            if p.len() != n {
                return Err(Error::Validation(format!("permutation {i} has wrong length")));
            }
            let mut seen = vec![false; n];
            for &v in p {
                if v as usize >= n || seen[v as usize] {
                    return Err(Error::Validation(format!("array {i} is not a bijection")));
                }
                seen[v as usize] = true;
            }
        }
        let action = PermutationAction { spec, n, perms };
        action.check_relations()?;
        Ok(action)
    }

    fn check_relations(&self) -> Result<()> {
        let compose_eq = |a: &[u32], b: &[u32], c: &[u32], d: &[u32]| {
            // a∘b = c∘d pointwise.
            (0..self.n).all(|x| a[b[x] as usize] == c[d[x] as usize])
        };
        let id: Vec<u32> = (0..self.n as u32).collect();
        match &self.spec {
            GroupSpec::FreeGroup { d } | GroupSpec::IntegerLattice { d } => {
                for i in 0..*d {
                    let (s, si) = (&self.perms[i], &self.perms[i + d]);
                    if !(0..self.n).all(|x| si[s[x] as usize] == x as u32) {
                        return Err(Error::Validation(format!(
                            "letters {i} and {} are not inverse",
                            i + d
                        )));
                    }
                }
                if matches!(self.spec, GroupSpec::IntegerLattice { .. }) {
                    for i in 0..*d {
                        for j in (i + 1)..*d {
                            if !compose_eq(&self.perms[i], &self.perms[j], &self.perms[j], &self.perms[i]) {
                                return Err(Error::Validation(format!(
                                    "lattice generators {i},{j} do not commute"
                                )));
                            }
                        }
                    }
                }
            }
            GroupSpec::Racg { commuting } => {
                let k = commuting.len();
                for i in 0..k {
                    if !(0..self.n).all(|x| {
                        self.perms[i][self.perms[i][x] as usize] == x as u32
                    }) {
                        return Err(Error::Validation(format!("generator {i} is not an involution")));
                    }
                }
                for i in 0..k {
                    for j in (i + 1)..k {
                        if commuting[i][j]
                            && !compose_eq(&self.perms[i], &self.perms[j], &self.perms[j], &self.perms[i])
                        {
                            return Err(Error::Validation(format!(
                                "commuting generators {i},{j} do not commute in the action"
                            )));
                        }
                    }
                }
            }
            GroupSpec::FreeProductFinite { factors } => {
                let mut offset = 0;
                for (fi, f) in factors.iter().enumerate() {
                    // Build the permutation of every factor element along
                    // its normal word, then check the full table.
                    let k = f.order();
                    let mut elem_perm: Vec<Vec<u32>> = Vec::with_capacity(k);
                    for e in 0..k {
                        // ρ(e) composed along the element's geodesic word,
                        // letters applied right to left.
                        let mut q = id.clone();
                        for &li in f.elem_word(e).iter().rev() {
                            let gp = &self.perms[offset + li as usize];
                            for x in q.iter_mut() {
                                *x = gp[*x as usize];
                            }
                        }
                        elem_perm.push(q);
                    }
                    for a in 0..k {
                        for b in 0..k {
                            let ab = f.mul(a, b);
                            if !(0..self.n).all(|x| {
                                elem_perm[a][elem_perm[b][x] as usize]
                                    == elem_perm[ab][x]
                            }) {
                                return Err(Error::Validation(format!(
                                    "factor {fi} table broken at ({a},{b})"
                                )));
                            }
                        }
                    }
                    offset += f.gens.len();
                }
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn point_count(&self) -> usize {
        self.n
    }

    pub fn generator_perm(&self, letter: u32) -> &[u32] {
        &self.perms[letter as usize]
    }

    /// g.x along the normal form (letters applied right to left).
    pub fn act(&self, g: &GroupElement, x: usize) -> Result<usize> {
        if x >= self.n {
            return Err(Error::Argument(format!("point {x} out of range 0..{}", self.n)));
        }
        let mut y = x as u32;
        for &l in g.word().iter().rev() {
            y = self.perms[l as usize][y as usize];
        }
        Ok(y as usize)
    }

    /// The full permutation array of g: out[x] = g.x.
    pub fn permutation_of(&self, g: &GroupElement) -> Vec<u32> {
        let mut p: Vec<u32> = (0..self.n as u32).collect();
        for &l in g.word().iter().rev() {
            let gp = &self.perms[l as usize];
            for v in p.iter_mut() {
                *v = gp[*v as usize];
            }
        }
        p
    }

    pub fn fixed_points(&self, g: &GroupElement) -> Vec<usize> {
        self.permutation_of(g)
            .iter()
            .enumerate()
            .filter(|&(x, &y)| x as u32 == y)
            .map(|(x, _)| x)
            .collect()
    }

    /// (1/N)·Tr ρ_N(g) = |Fix(g)|/N.
    pub fn trace_fraction(&self, g: &GroupElement) -> f64 {
        self.fixed_points(g).len() as f64 / self.n as f64
    }
}

/// Ball enumeration cap for the generic bad-set path.
const BALL_CAP: usize = 1_000_000;

/// Flags for Bad_S(n) = ∪_{g ∈ B_S(2n), g≠e} Fix(g).
pub fn bad_flags(action: &PermutationAction, s: &GeneratingSet, n: usize) -> Result<Vec<bool>> {
    let mut bad = vec![false; action.n];
    if n == 0 {
        return Ok(bad);
    }
    // Incremental BFS over B(2n) carrying full permutation arrays.
    let spec = &action.spec;
    let mut seen = std::collections::HashSet::new();
    let e = GroupElement::identity();
    seen.insert(e.clone());
    let id: Vec<u32> = (0..action.n as u32).collect();
    let mut frontier: Vec<(GroupElement, Vec<u32>)> = vec![(e, id)];
    for _depth in 1..=(2 * n) {
        let mut next = Vec::new();
        for (g, pg) in &frontier {
            for s_el in &s.elements {
                let h = multiply(spec, g, s_el);
                if seen.contains(&h) {
                    continue;
                }
                if seen.len() >= BALL_CAP {
                    return Err(Error::Argument(format!(
                        "ball of radius {} exceeds {BALL_CAP} elements",
                        2 * n
                    )));
                }
                seen.insert(h.clone());
                let ps = action.permutation_of(s_el);
                // ρ(g·s) = ρ(g)∘ρ(s).
                let ph: Vec<u32> = (0..action.n).map(|x| pg[ps[x] as usize]).collect();
                for x in 0..action.n {
                    if ph[x] == x as u32 {
                        bad[x] = true;
                    }
                }
                next.push((h, ph));
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(bad)
}

/// Bad_S(n) as a sorted point list.
pub fn bad_set(action: &PermutationAction, s: &GeneratingSet, n: usize) -> Result<Vec<usize>> {
    Ok(bad_flags(action, s, n)?
        .iter()
        .enumerate()
        .filter(|&(_, &b)| b)
        .map(|(x, _)| x)
        .collect())
}

/// Fractions |Bad_S(n)|/N for n = 0..=r_max.
pub fn bs_profile(action: &PermutationAction, s: &GeneratingSet, r_max: usize) -> Result<Vec<f64>> {
    (0..=r_max)
        .map(|n| {
            Ok(bad_flags(action, s, n)?.iter().filter(|&&b| b).count() as f64 / action.n as f64)
        })
        .collect()
}

/// Flags for Bad_S(n) on a free-group action without enumerating B_S(2n).
///
/// In a free group a nontrivial reduced word fixing x is exactly a closed
/// non-backtracking walk at x in the Schreier graph, so the search runs over
/// states (vertex, last letter) instead of ball elements: O(N²d²) total,
/// independent of |B_S(2n)| ~ (2d−1)^{2n}.
pub fn free_bad_flags(action: &PermutationAction, n: usize) -> Result<Vec<bool>> {
    let GroupSpec::FreeGroup { d } = action.spec else {
        return Err(Error::Argument(
            "non-backtracking bad-set search needs a free-group action".into(),
        ));
    };
    let letters = 2 * d;
    let np = action.n;
    let mut bad = vec![false; np];
    if n == 0 {
        return Ok(bad);
    }
    let max_len = 2 * n;
    let inv: Vec<u32> = (0..letters as u32).map(|l| action.spec.gen_inverse(l)).collect();
    // seen[v·letters + a] = x marks state (v, arrived-by-a) visited in the
    // BFS rooted at x; the stamp avoids clearing between roots.
    let mut seen = vec![u32::MAX; np * letters];
    let mut cur: Vec<(u32, u32)> = Vec::new();
    let mut next: Vec<(u32, u32)> = Vec::new();
    for x in 0..np {
        cur.clear();
        let mut found = false;
        for l in 0..letters {
            let v = action.perms[l][x];
            if v as usize == x {
                found = true;
                break;
            }
            seen[v as usize * letters + l] = x as u32;
            cur.push((v, l as u32));
        }
        let mut depth = 1;
        'walk: while !found && depth < max_len && !cur.is_empty() {
            next.clear();
            for &(v, a) in &cur {
                for l in 0..letters {
                    if l as u32 == inv[a as usize] {
                        continue;
                    }
                    let w = action.perms[l][v as usize];
                    if w as usize == x {
                        found = true;
                        break 'walk;
                    }
                    let state = w as usize * letters + l;
                    if seen[state] != x as u32 {
                        seen[state] = x as u32;
                        next.push((w, l as u32));
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
            depth += 1;
        }
        bad[x] = found;
    }
    Ok(bad)
}

/// The finite operator ρ_N(p) with its assembly ingredients.
#[derive(Clone, Debug)]
pub struct SchreierOperator {
    pub action: PermutationAction,
    pub symbol: AlgebraElement,
    pub matrix: Csr,
}

impl SchreierOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }
}

/// Assembles ρ_N(p) = Σ_g p_g ⊗ ρ_N(g): block (x,y) equals Σ_{g: x=g.y} p_g.
pub fn representation_matrix(
    action: &PermutationAction,
    p: &AlgebraElement,
) -> Result<SchreierOperator> {
    if p.spec() != action.spec() {
        return Err(Error::Argument("symbol and action specs differ".into()));
    }
    let n = action.n;
    let r = p.block_size();
    let mut triplets: Vec<(usize, usize, Complex)> = Vec::new();
    for (g, block) in p.support() {
        let pg = action.permutation_of(g);
        for y in 0..n {
            let x = pg[y] as usize;
            for i in 0..r {
                for j in 0..r {
                    let v = block[(i, j)];
                    if v.norm_sqr() > 0.0 {
                        triplets.push((i * n + x, j * n + y, v));
                    }
                }
            }
        }
    }
    let matrix = Csr::from_triplets(n * r, n * r, triplets);
    if p.is_self_adjoint(1e-13) {
        let defect = matrix.hermitian_defect();
        if defect >= 1e-13 * (1.0 + matrix.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)) {
            return Err(Error::Validation(format!(
                "self-adjoint symbol produced asymmetry {defect}"
            )));
        }
    }
    Ok(SchreierOperator {
        action: action.clone(),
        symbol: p.clone(),
        matrix,
    })
}

/// ρ(e_i) = +1 shift in coordinate i on (ℤ/Mℤ)^d; N = M^d, little-endian
/// digit encoding.
pub fn torus_action(m: usize, d: usize) -> PermutationAction {
    assert!(m >= 1 && d >= 1);
    let n: usize = m.pow(d as u32);
    let spec = GroupSpec::integer_lattice(d);
    let mut perms = Vec::with_capacity(2 * d);
    let stride: Vec<usize> = (0..d).map(|i| m.pow(i as u32)).collect();
    for i in 0..d {
        let mut p = vec![0u32; n];
        for (x, v) in p.iter_mut().enumerate() {
            let digit = (x / stride[i]) % m;
            let shifted = (digit + 1) % m;
            *v = (x - digit * stride[i] + shifted * stride[i]) as u32;
        }
        perms.push(p);
    }
    for i in 0..d {
        let mut inv = vec![0u32; n];
        for x in 0..n {
            inv[perms[i][x] as usize] = x as u32;
        }
        perms.push(inv);
    }
    PermutationAction::new(spec, perms).expect("torus shifts satisfy lattice relations")
}

/// Independent uniform permutations per free generator.
pub fn random_free_action(n: usize, d: usize, seed: u64) -> PermutationAction {
    assert!(n >= 1 && d >= 1);
    let spec = GroupSpec::free_group(d);
    let mut perms = Vec::with_capacity(2 * d);
    for i in 0..d {
        let mut rng = sub_rng(seed, &format!("free-gen-{i}"));
        perms.push(uniform_permutation(&mut rng, n));
    }
    for i in 0..d {
        let mut inv = vec![0u32; n];
        for x in 0..n {
            inv[perms[i][x] as usize] = x as u32;
        }
        perms.push(inv);
    }
    PermutationAction::new(spec, perms).expect("free actions have no relations to violate")
}

/// k independent uniform fixed-point-free involutions: an action of
/// ℤ₂ * ⋯ * ℤ₂ (k factors) on an even number of points.
pub fn random_matching_action(n: usize, k: usize, seed: u64) -> Result<PermutationAction> {
    if n % 2 != 0 {
        return Err(Error::Argument("matching actions need even N".into()));
    }
    let spec = GroupSpec::free_product(vec![FiniteFactor::cyclic(2); k])?;
    let mut perms = Vec::with_capacity(k);
    for i in 0..k {
        let mut rng = sub_rng(seed, &format!("matching-gen-{i}"));
        perms.push(uniform_matching(&mut rng, n));
    }
    PermutationAction::new(spec, perms)
}

/// For each finite factor Γ_i with |Γ_i| dividing N: the right-regular
/// action of Γ_i on Γ_i × [N/|Γ_i|], conjugated by an independent uniform
/// permutation of [N]. Fixed-point-free on every g ∈ Γ_i \ {e}.
pub fn finite_factor_random_action(
    factors: Vec<FiniteFactor>,
    n: usize,
    seed: u64,
) -> Result<PermutationAction> {
    let spec = GroupSpec::free_product(factors.clone())?;
    let mut perms = Vec::new();
    for (fi, f) in factors.iter().enumerate() {
        let k = f.order();
        if n % k != 0 {
            return Err(Error::Argument(format!(
                "factor order {k} does not divide N={n}"
            )));
        }
        let mut rng = sub_rng(seed, &format!("factor-{fi}"));
        let pi = uniform_permutation(&mut rng, n);
        let mut pi_inv = vec![0u32; n];
        for x in 0..n {
            pi_inv[pi[x] as usize] = x as u32;
        }
        for &g in &f.gens {
            // Point a + k·m holds the factor element a; ρ(g): a ↦ g·a.
            let mut p = vec![0u32; n];
            for x in 0..n {
                let y = pi_inv[x] as usize;
                let (a, m) = (y % k, y / k);
                let ga = f.mul(g, a);
                p[x] = pi[ga + k * m];
            }
            perms.push(p);
        }
    }
    PermutationAction::new(spec, perms)
}

/// A finite base multigraph on vertices [r]; undirected edges may repeat
/// and may be loops.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseGraph {
    pub r: usize,
    pub edges: Vec<(usize, usize)>,
}

impl BaseGraph {
    pub fn new(r: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if r == 0 {
            return Err(Error::Validation("base graph needs vertices".into()));
        }
        for &(u, v) in &edges {
            if u >= r || v >= r {
                return Err(Error::Validation(format!("edge ({u},{v}) out of range")));
            }
        }
        Ok(BaseGraph { r, edges })
    }

    /// The r-cycle 0-1-⋯-(r-1)-0.
    pub fn cycle(r: usize) -> Self {
        let edges = (0..r).map(|u| (u, (u + 1) % r)).collect();
        BaseGraph::new(r, edges).expect("cycle edges in range")
    }
}

/// One uniform permutation per undirected base edge; the i-th free
/// generator covers directed edge (u_i, v_i) and its inverse (v_i, u_i).
pub fn lift_action(base: &BaseGraph, n: usize, seed: u64) -> PermutationAction {
    let d = base.edges.len();
    let spec = GroupSpec::free_group(d.max(1));
    let mut perms = Vec::with_capacity(2 * d);
    for i in 0..d {
        let mut rng = sub_rng(seed, &format!("lift-edge-{i}"));
        perms.push(uniform_permutation(&mut rng, n));
    }
    for i in 0..d {
        let mut inv = vec![0u32; n];
        for x in 0..n {
            inv[perms[i][x] as usize] = x as u32;
        }
        perms.push(inv);
    }
    PermutationAction::new(spec, perms).expect("free actions have no relations to violate")
}

/// The block symbol p = Σ_i a_i E_{u_i v_i} g_i + conj(a_i) E_{v_i u_i} g_i⁻¹
/// whose finite operator is the weighted adjacency of an N-lift of the base.
pub fn lift_symbol(base: &BaseGraph, weights: &[Complex]) -> Result<AlgebraElement> {
    let d = base.edges.len();
    if weights.len() != d {
        return Err(Error::Argument(format!(
            "need {d} weights, got {}",
            weights.len()
        )));
    }
    let spec = GroupSpec::free_group(d.max(1));
    let r = base.r;
    let mut terms = Vec::new();
    for (i, (&(u, v), &a)) in base.edges.iter().zip(weights).enumerate() {
        let g = reduce(&spec, &[i as u32])?;
        let ginv = reduce(&spec, &[(i + d) as u32])?;
        let mut bf = Array2::zeros((r, r));
        bf[(u, v)] = a;
        terms.push((g, bf));
        let mut bb = Array2::zeros((r, r));
        bb[(v, u)] = a.conj();
        terms.push((ginv, bb));
    }
    AlgebraElement::from_terms(spec, r, terms)
}

/// The degree-d gluing: delete the lexicographically smallest non-loop
/// edge of the base Schreier graph, lay out d/2 copies, add a hub vertex
/// joined to the d endpoints of the deleted edges, and 2-factorize the
/// result back into an action of the free group on d/2 generators.
///
/// Returns the action together with the deleted edge, for run metadata.
pub fn glued_copies_action(
    f_n: &PermutationAction,
    d: usize,
    seed: u64,
) -> Result<(PermutationAction, (usize, usize))> {
    if d % 2 != 0 || d < 4 {
        return Err(Error::Argument("gluing needs even degree d ≥ 4".into()));
    }
    let k = d / 2;
    match f_n.spec() {
        GroupSpec::FreeGroup { d: rank } if *rank == k => {}
        _ => {
            return Err(Error::Argument(
                "base action must be a free-group action of rank d/2".into(),
            ))
        }
    }
    let n = f_n.point_count();
    // Undirected edge multiset of the base Schreier graph: one edge {x, σ_i(x)}
    // per generator i and point x.
    let mut base_edges: Vec<(usize, usize)> = Vec::with_capacity(k * n);
    for i in 0..k {
        let p = f_n.generator_perm(i as u32);
        for x in 0..n {
            base_edges.push((x, p[x] as usize));
        }
    }
    let deleted = base_edges
        .iter()
        .filter(|&&(u, v)| u != v)
        .map(|&(u, v)| (u.min(v), u.max(v)))
        .min()
        .ok_or_else(|| Error::Argument("base graph has only loops".into()))?;
    let del_pos = base_edges
        .iter()
        .position(|&(u, v)| (u.min(v), u.max(v)) == deleted)
        .expect("deleted edge exists");

    // Glued multigraph on k·N + 1 vertices; vertex k·N is the hub.
    let hub = k * n;
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(k * k * n + d);
    for c in 0..k {
        let off = c * n;
        for (pos, &(u, v)) in base_edges.iter().enumerate() {
            if pos == del_pos {
                continue;
            }
            edges.push((off + u, off + v));
        }
        edges.push((hub, c * n + deleted.0));
        edges.push((hub, c * n + deleted.1));
    }
    let perms = two_factorize(hub + 1, &edges, d, seed)?;
    let spec = GroupSpec::free_group(k);
    let mut all = perms;
    let kk = all.len();
    for i in 0..kk {
        let mut inv = vec![0u32; hub + 1];
        for x in 0..=hub {
            inv[all[i][x] as usize] = x as u32;
        }
        all.push(inv);
    }
    Ok((PermutationAction::new(spec, all)?, deleted))
}

/// Decomposes a d-regular multigraph (loops allowed, counting 2 toward the
/// degree) into d/2 permutations: orient the edges along Euler circuits so
/// in- and out-degrees are d/2 everywhere, then split the resulting
/// d/2-regular bipartite graph into perfect matchings.
fn two_factorize(
    nv: usize,
    edges: &[(usize, usize)],
    d: usize,
    seed: u64,
) -> Result<Vec<Vec<u32>>> {
    let k = d / 2;
    // Degree check.
    let mut deg = vec![0usize; nv];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    if deg.iter().any(|&x| x != d) {
        return Err(Error::Validation("glued graph is not d-regular".into()));
    }
    // Euler orientation per connected component (all degrees even).
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
    for (eid, &(u, v)) in edges.iter().enumerate() {
        adj[u].push((v, eid));
        adj[v].push((u, eid));
    }
    let mut used = vec![false; edges.len()];
    let mut cursor = vec![0usize; nv];
    let mut oriented: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
    for start in 0..nv {
        // Hierholzer: walk until stuck, splicing cycles.
        let mut stack = vec![start];
        let mut path = Vec::new();
        while let Some(&v) = stack.last() {
            let mut advanced = false;
            while cursor[v] < adj[v].len() {
                let (w, eid) = adj[v][cursor[v]];
                cursor[v] += 1;
                if !used[eid] {
                    used[eid] = true;
                    stack.push(w);
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                path.push(stack.pop().unwrap());
            }
        }
        // Consecutive path entries (reversed walk) give the orientation.
        for w in path.windows(2) {
            oriented.push((w[1], w[0]));
        }
    }
    debug_assert_eq!(oriented.len(), edges.len());
    // Bipartite multigraph out-side × in-side; every vertex has k out and
    // k in edges, so it splits into k perfect matchings (König).
    let mut remaining: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
    for (eid, &(u, v)) in oriented.iter().enumerate() {
        remaining[u].push((v, eid));
    }
    let mut edge_taken = vec![false; oriented.len()];
    let mut rng = sub_rng(seed, "two-factorize");
    let mut perms = Vec::with_capacity(k);
    for _round in 0..k {
        let matched = bipartite_perfect_matching(nv, &remaining, &edge_taken, &mut rng)?;
        let mut perm = vec![0u32; nv];
        for (u, (v, eid)) in matched.iter().enumerate() {
            perm[u] = *v as u32;
            edge_taken[*eid] = true;
        }
        perms.push(perm);
    }
    Ok(perms)
}

/// Perfect matching in the bipartite out/in graph restricted to untaken
/// edges, by augmenting paths (Kuhn's algorithm with randomized scan order).
fn bipartite_perfect_matching(
    nv: usize,
    out_edges: &[Vec<(usize, usize)>],
    edge_taken: &[bool],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>> {
    // match_right[v] = (u, eid) currently matched into right vertex v.
    let mut match_right: Vec<Option<(usize, usize)>> = vec![None; nv];
    let mut match_left: Vec<Option<(usize, usize)>> = vec![None; nv];
    let mut order: Vec<usize> = (0..nv).collect();
    for i in (1..nv).rev() {
        let j = rand::Rng::gen_range(rng, 0..=i);
        order.swap(i, j);
    }
    fn try_augment(
        u: usize,
        out_edges: &[Vec<(usize, usize)>],
        edge_taken: &[bool],
        visited: &mut [bool],
        match_right: &mut [Option<(usize, usize)>],
        match_left: &mut [Option<(usize, usize)>],
    ) -> bool {
        for &(v, eid) in &out_edges[u] {
            if edge_taken[eid] || visited[v] {
                continue;
            }
            visited[v] = true;
            let free = match match_right[v] {
                None => true,
                Some((u2, _)) => try_augment(
                    u2, out_edges, edge_taken, visited, match_right, match_left,
                ),
            };
            if free {
                match_right[v] = Some((u, eid));
                match_left[u] = Some((v, eid));
                return true;
            }
        }
        false
    }
    for &u in &order {
        if match_left[u].is_none() {
            let mut visited = vec![false; nv];
            if !try_augment(
                u,
                out_edges,
                edge_taken,
                &mut visited,
                &mut match_right,
                &mut match_left,
            ) {
                return Err(Error::Solver(format!(
                    "no perfect matching extending vertex {u}"
                )));
            }
        }
    }
    Ok(match_left
        .into_iter()
        .map(|m| m.expect("perfect matching"))
        .collect())
}

/// Uniform torus point helper for observables: decodes x into digits.
pub fn torus_digits(x: usize, m: usize, d: usize) -> Vec<usize> {
    let mut digits = Vec::with_capacity(d);
    let mut v = x;
    for _ in 0..d {
        digits.push(v % m);
        v /= m;
    }
    digits
}
