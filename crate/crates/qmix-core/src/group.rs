//! Finitely generated groups with computable normal forms, word metric, and
//! ball enumeration.
//!
//! Four families are supported: free groups, free products of finite groups
//! given by multiplication tables, integer lattices, and right-angled Coxeter
//! groups given by their defining diagram. Each has a canonical reduced word
//! per element: free reduction, alternating syllables in per-factor geodesic
//! form, sorted exponent blocks, and the ShortLex-minimal word of the
//! commutation class (Tits: reduced words of an element form a single class
//! under swaps of adjacent commuting letters).
//!
//! Letters are global generator indices. Free groups and lattices use
//! `0..2d` with `i + d` the inverse of `i`; Coxeter generators are their own
//! inverses; free-product letters enumerate the chosen symmetric generating
//! sets of the factors in order.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::{Error, Result};

/// A finite group by multiplication table together with a chosen symmetric
/// generating set, one free-product factor.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteFactor {
    /// Row-major multiplication table: `table[a][b]` is the product `a·b`.
    pub table: Vec<Vec<usize>>,
    /// Generating set as element indices, identity excluded, inverse-closed.
    pub gens: Vec<usize>,
    identity: usize,
    inv: Vec<usize>,
    /// Geodesic word over local generator positions, per element.
    elem_word: Vec<Vec<u32>>,
}

impl FiniteFactor {
    /// Validates the table as a group (associativity, identity, inverses)
    /// and the generating set (non-identity, inverse-closed, generating),
    /// then precomputes geodesic normal words by breadth-first search.
    pub fn new(table: Vec<Vec<usize>>, gens: Vec<usize>) -> Result<Self> {
        let k = table.len();
        if k == 0 {
            return Err(Error::Validation("empty multiplication table".into()));
        }
        for row in &table {
            if row.len() != k || row.iter().any(|&v| v >= k) {
                return Err(Error::Validation("table is not square over 0..k".into()));
            }
        }
        let identity = (0..k)
            .find(|&e| (0..k).all(|x| table[e][x] == x && table[x][e] == x))
            .ok_or_else(|| Error::Validation("table has no identity".into()))?;
        for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(Error::Validation(format!(
                            "table is not associative at ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        let mut inv = vec![usize::MAX; k];
        for a in 0..k {
            match (0..k).find(|&b| table[a][b] == identity && table[b][a] == identity) {
                Some(b) => inv[a] = b,
                None => return Err(Error::Validation(format!("element {a} has no inverse"))),
            }
        }
        if gens.is_empty() {
            return Err(Error::Validation("factor generating set is empty".into()));
        }
        let mut seen_gen = HashSet::new();
        for &g in &gens {
            if g >= k || g == identity {
                return Err(Error::Validation(format!("invalid generator {g}")));
            }
            if !seen_gen.insert(g) {
                return Err(Error::Validation(format!("duplicate generator {g}")));
            }
        }
        for &g in &gens {
            if !gens.contains(&inv[g]) {
                return Err(Error::Validation(format!(
                    "generating set not closed under inversion at {g}"
                )));
            }
        }
        // Geodesic words by BFS; queue order is ShortLex order, so the first
        // word reaching an element is its ShortLex-minimal geodesic.
        let mut elem_word: Vec<Option<Vec<u32>>> = vec![None; k];
        elem_word[identity] = Some(Vec::new());
        let mut queue = VecDeque::from([identity]);
        while let Some(x) = queue.pop_front() {
            let base = elem_word[x].clone().expect("visited");
            for (li, &g) in gens.iter().enumerate() {
                let y = table[x][g];
                if elem_word[y].is_none() {
                    let mut w = base.clone();
                    w.push(li as u32);
                    elem_word[y] = Some(w);
                    queue.push_back(y);
                }
            }
        }
        let elem_word: Vec<Vec<u32>> = elem_word
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::Validation("generating set does not generate the factor".into()))?;
        Ok(FiniteFactor {
            table,
            gens,
            identity,
            inv,
            elem_word,
        })
    }

    /// Cyclic group of order `k` with the symmetric generating set {1, k−1}.
    pub fn cyclic(k: usize) -> Self {
        assert!(k >= 2, "cyclic factor needs order >= 2");
        let table = (0..k).map(|a| (0..k).map(|b| (a + b) % k).collect()).collect();
        let gens = if k == 2 { vec![1] } else { vec![1, k - 1] };
        FiniteFactor::new(table, gens).expect("cyclic table is a group")
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn inverse(&self, a: usize) -> usize {
        self.inv[a]
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    /// Word length of an element in the factor's generating set.
    pub fn elem_length(&self, a: usize) -> usize {
        self.elem_word[a].len()
    }

    /// Geodesic word of an element over local generator positions.
    pub fn elem_word(&self, a: usize) -> &[u32] {
        &self.elem_word[a]
    }
}

/// The group family, carrying everything needed to reduce words.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupSpec {
    /// Free group on `d` generators.
    FreeGroup { d: usize },
    /// Free product of finite groups.
    FreeProductFinite { factors: Vec<FiniteFactor> },
    /// ℤ^d with the standard basis generators.
    IntegerLattice { d: usize },
    /// Right-angled Coxeter group: `commuting[i][j]` iff generators i and j
    /// commute (the defining diagram's adjacency).
    Racg { commuting: Vec<Vec<bool>> },
}

impl GroupSpec {
    pub fn free_group(d: usize) -> Self {
        assert!(d >= 1, "free group needs at least one generator");
        GroupSpec::FreeGroup { d }
    }

    pub fn integer_lattice(d: usize) -> Self {
        assert!(d >= 1, "lattice needs rank at least one");
        GroupSpec::IntegerLattice { d }
    }

    pub fn free_product(factors: Vec<FiniteFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Validation("free product needs at least one factor".into()));
        }
        Ok(GroupSpec::FreeProductFinite { factors })
    }

    /// Validates symmetry and a false diagonal.
    pub fn racg(commuting: Vec<Vec<bool>>) -> Result<Self> {
        let n = commuting.len();
        if n == 0 {
            return Err(Error::Validation("RACG needs at least one generator".into()));
        }
        for (i, row) in commuting.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Validation("adjacency is not square".into()));
            }
            if row[i] {
                return Err(Error::Validation(format!("diagonal entry {i} must be false")));
            }
            for j in 0..n {
                if commuting[i][j] != commuting[j][i] {
                    return Err(Error::Validation(format!("adjacency not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(GroupSpec::Racg { commuting })
    }

    /// Number of global generator letters.
    pub fn gen_count(&self) -> usize {
        match self {
            GroupSpec::FreeGroup { d } | GroupSpec::IntegerLattice { d } => 2 * d,
            GroupSpec::Racg { commuting } => commuting.len(),
            GroupSpec::FreeProductFinite { factors } => {
                factors.iter().map(|f| f.gens.len()).sum()
            }
        }
    }

    /// The letter representing the inverse of letter `k`.
    pub fn gen_inverse(&self, k: u32) -> u32 {
        match self {
            GroupSpec::FreeGroup { d } | GroupSpec::IntegerLattice { d } => {
                let d = *d as u32;
                if k < d {
                    k + d
                } else {
                    k - d
                }
            }
            GroupSpec::Racg { .. } => k,
            GroupSpec::FreeProductFinite { factors } => {
                let (fi, li) = self.fp_letter(k);
                let f = &factors[fi];
                let inv_elem = f.inverse(f.gens[li]);
                let pos = f.gens.iter().position(|&g| g == inv_elem).expect("inverse-closed");
                (self.fp_offset(fi) + pos) as u32
            }
        }
    }

    /// Free product only: offset of factor `fi` in the global letter range.
    fn fp_offset(&self, fi: usize) -> usize {
        match self {
            GroupSpec::FreeProductFinite { factors } => {
                factors[..fi].iter().map(|f| f.gens.len()).sum()
            }
            _ => unreachable!("fp_offset on non-free-product"),
        }
    }

    /// Free product only: (factor index, local generator position) of a letter.
    fn fp_letter(&self, k: u32) -> (usize, usize) {
        match self {
            GroupSpec::FreeProductFinite { factors } => {
                let mut k = k as usize;
                for (fi, f) in factors.iter().enumerate() {
                    if k < f.gens.len() {
                        return (fi, k);
                    }
                    k -= f.gens.len();
                }
                panic!("letter out of range");
            }
            _ => unreachable!("fp_letter on non-free-product"),
        }
    }
}

/// An element in the canonical normal form of its [`GroupSpec`].
///
/// Plain reduced-word data; operations take the spec explicitly. Ordering is
/// ShortLex on the stored word, which is geodesic in every variant.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupElement {
    word: Vec<u32>,
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        shortlex_cmp(&self.word, &other.word)
    }
}

fn shortlex_cmp(a: &[u32], b: &[u32]) -> std::cmp::Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement { word: Vec::new() }
    }

    pub fn is_identity(&self) -> bool {
        self.word.is_empty()
    }

    /// The canonical reduced word as global generator letters.
    pub fn word(&self) -> &[u32] {
        &self.word
    }

    /// Word length in the standard generating set (the canonical word is
    /// geodesic in every supported variant).
    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }
}

/// Reduces a raw letter sequence to the canonical normal form.
///
/// Idempotent: reducing a canonical word returns it unchanged.
pub fn reduce(spec: &GroupSpec, raw: &[u32]) -> Result<GroupElement> {
    let gc = spec.gen_count() as u32;
    if let Some(&bad) = raw.iter().find(|&&l| l >= gc) {
        return Err(Error::Argument(format!(
            "letter {bad} out of range for {gc} generators"
        )));
    }
    let word = match spec {
        GroupSpec::FreeGroup { .. } => free_reduce(spec, raw),
        GroupSpec::IntegerLattice { d } => lattice_reduce(*d, raw),
        GroupSpec::FreeProductFinite { factors } => fp_reduce(spec, factors, raw),
        GroupSpec::Racg { commuting } => racg_reduce(commuting, raw)?,
    };
    Ok(GroupElement { word })
}

fn free_reduce(spec: &GroupSpec, raw: &[u32]) -> Vec<u32> {
    let mut stack: Vec<u32> = Vec::with_capacity(raw.len());
    for &l in raw {
        if stack.last() == Some(&spec.gen_inverse(l)) {
            stack.pop();
        } else {
            stack.push(l);
        }
    }
    stack
}

fn lattice_reduce(d: usize, raw: &[u32]) -> Vec<u32> {
    let mut exp = vec![0i64; d];
    for &l in raw {
        let l = l as usize;
        if l < d {
            exp[l] += 1;
        } else {
            exp[l - d] -= 1;
        }
    }
    let mut word = Vec::new();
    for (i, &e) in exp.iter().enumerate() {
        let letter = if e >= 0 { i as u32 } else { (i + d) as u32 };
        for _ in 0..e.unsigned_abs() {
            word.push(letter);
        }
    }
    word
}

fn fp_reduce(spec: &GroupSpec, factors: &[FiniteFactor], raw: &[u32]) -> Vec<u32> {
    // Stack of syllables (factor, element); same-factor neighbors multiply
    // inside the factor and identity syllables drop out.
    let mut syl: Vec<(usize, usize)> = Vec::new();
    for &l in raw {
        let (fi, li) = spec.fp_letter(l);
        let g = factors[fi].gens[li];
        match syl.last_mut() {
            Some((tf, te)) if *tf == fi => {
                *te = factors[fi].mul(*te, g);
                if *te == factors[fi].identity() {
                    syl.pop();
                }
            }
            _ => syl.push((fi, g)),
        }
    }
    let mut word = Vec::new();
    for (fi, e) in syl {
        let off = spec.fp_offset(fi) as u32;
        for &li in &factors[fi].elem_word[e] {
            word.push(off + li);
        }
    }
    word
}

/// Largest commutation class explored before giving up; desk-scale words
/// stay far below this.
const RACG_CLASS_CAP: usize = 2_000_000;

fn racg_reduce(commuting: &[Vec<bool>], raw: &[u32]) -> Result<Vec<u32>> {
    let mut w: Vec<u32> = raw.to_vec();
    'shorten: loop {
        // Explore the commutation class of w; any adjacent equal pair found
        // anywhere in the class deletes and restarts (Tits: a word is reduced
        // iff no such pair is reachable by swaps alone).
        let mut seen: HashSet<Vec<u32>> = HashSet::new();
        let mut queue: VecDeque<Vec<u32>> = VecDeque::new();
        seen.insert(w.clone());
        queue.push_back(w.clone());
        let mut best = w.clone();
        while let Some(u) = queue.pop_front() {
            if let Some(i) = (0..u.len().saturating_sub(1)).find(|&i| u[i] == u[i + 1]) {
                let mut v = u.clone();
                v.drain(i..i + 2);
                w = v;
                continue 'shorten;
            }
            if shortlex_cmp(&u, &best) == std::cmp::Ordering::Less {
                best = u.clone();
            }
            for i in 0..u.len().saturating_sub(1) {
                let (a, b) = (u[i] as usize, u[i + 1] as usize);
                if a != b && commuting[a][b] {
                    let mut v = u.clone();
                    v.swap(i, i + 1);
                    if !seen.contains(&v) {
                        if seen.len() >= RACG_CLASS_CAP {
                            return Err(Error::Argument(
                                "commutation class too large to normalize".into(),
                            ));
                        }
                        seen.insert(v.clone());
                        queue.push_back(v);
                    }
                }
            }
        }
        return Ok(best);
    }
}

/// Product `a·b` in canonical form.
pub fn multiply(spec: &GroupSpec, a: &GroupElement, b: &GroupElement) -> GroupElement {
    let mut raw = Vec::with_capacity(a.word.len() + b.word.len());
    raw.extend_from_slice(&a.word);
    raw.extend_from_slice(&b.word);
    reduce(spec, &raw).expect("canonical words have valid letters")
}

/// Inverse in canonical form.
pub fn inverse(spec: &GroupSpec, a: &GroupElement) -> GroupElement {
    let raw: Vec<u32> = a.word.iter().rev().map(|&l| spec.gen_inverse(l)).collect();
    reduce(spec, &raw).expect("canonical words have valid letters")
}

/// Exponent vector of a lattice element.
pub fn lattice_exponents(spec: &GroupSpec, a: &GroupElement) -> Result<Vec<i64>> {
    let d = match spec {
        GroupSpec::IntegerLattice { d } => *d,
        _ => return Err(Error::Argument("lattice_exponents needs IntegerLattice".into())),
    };
    let mut exp = vec![0i64; d];
    for &l in &a.word {
        let l = l as usize;
        if l < d {
            exp[l] += 1;
        } else {
            exp[l - d] -= 1;
        }
    }
    Ok(exp)
}

/// Syllable decomposition of a free-product element in canonical form:
/// one (factor index, element index) pair per maximal same-factor letter run.
pub fn fp_syllables(spec: &GroupSpec, a: &GroupElement) -> Result<Vec<(usize, usize)>> {
    let factors = match spec {
        GroupSpec::FreeProductFinite { factors } => factors,
        _ => return Err(Error::Argument("syllables need a free product".into())),
    };
    let gc = spec.gen_count() as u32;
    let mut syl: Vec<(usize, usize)> = Vec::new();
    for &l in a.word() {
        if l >= gc {
            return Err(Error::Argument(format!("letter {l} out of range")));
        }
        let (fi, li) = spec.fp_letter(l);
        let g = factors[fi].gens[li];
        match syl.last_mut() {
            Some((tf, te)) if *tf == fi => *te = factors[fi].mul(*te, g),
            _ => syl.push((fi, g)),
        }
    }
    Ok(syl)
}

/// A set of group elements used as edge labels, with a symmetry flag.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratingSet {
    pub elements: Vec<GroupElement>,
    pub symmetric: bool,
}

impl GeneratingSet {
    /// One length-1 element per global letter; symmetric by construction.
    pub fn standard(spec: &GroupSpec) -> Self {
        let elements = (0..spec.gen_count() as u32)
            .map(|l| reduce(spec, &[l]).expect("letter in range"))
            .collect();
        GeneratingSet {
            elements,
            symmetric: true,
        }
    }

    /// Checks the symmetry flag against actual inverse-closure.
    pub fn validate(&self, spec: &GroupSpec) -> Result<()> {
        if self.symmetric {
            for e in &self.elements {
                let inv = inverse(spec, e);
                if !self.elements.contains(&inv) {
                    return Err(Error::Validation(
                        "generating set flagged symmetric but not inverse-closed".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// All elements at word distance ≤ r from the identity, with their
/// distances, ordered by (distance, ShortLex).
pub fn ball(spec: &GroupSpec, s: &GeneratingSet, r: usize) -> Vec<(GroupElement, usize)> {
    let mut dist: HashMap<GroupElement, usize> = HashMap::new();
    let mut frontier = vec![GroupElement::identity()];
    dist.insert(GroupElement::identity(), 0);
    for depth in 1..=r {
        let mut next = Vec::new();
        for g in &frontier {
            for s_el in &s.elements {
                let h = multiply(spec, g, s_el);
                if !dist.contains_key(&h) {
                    dist.insert(h.clone(), depth);
                    next.push(h);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    let mut out: Vec<(GroupElement, usize)> = dist.into_iter().collect();
    out.sort_by(|(a, da), (b, db)| da.cmp(db).then_with(|| a.cmp(b)));
    out
}

/// Word length of `a` with respect to `s`.
///
/// For the standard generating set this is the canonical word's length; for
/// other sets it falls back to breadth-first search, capped at `max_radius`.
pub fn word_length(spec: &GroupSpec, a: &GroupElement, s: &GeneratingSet) -> Result<usize> {
    if *s == GeneratingSet::standard(spec) {
        return Ok(a.len());
    }
    let max_radius = 24;
    let mut seen: HashSet<GroupElement> = HashSet::new();
    let mut frontier = vec![GroupElement::identity()];
    seen.insert(GroupElement::identity());
    if a.is_identity() {
        return Ok(0);
    }
    for depth in 1..=max_radius {
        let mut next = Vec::new();
        for g in &frontier {
            for s_el in &s.elements {
                let h = multiply(spec, g, s_el);
                if h == *a {
                    return Ok(depth);
                }
                if seen.insert(h.clone()) {
                    next.push(h);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Err(Error::Argument(format!(
        "element not reached within radius {max_radius} of the given set"
    )))
}

/// Witness for one non-commuting pair in a super-flexibility check.
#[derive(Clone, Debug)]
pub struct SuperflexWitness {
    /// The non-commuting pair (s, t).
    pub pair: (usize, usize),
    /// The third generator exchanged with one of the pair.
    pub u: usize,
    /// True if the automorphism fixes s and its neighbors pointwise and
    /// exchanges t and u; false for the mirrored condition fixing t's star
    /// and exchanging s and u.
    pub fixes_s: bool,
    /// The diagram automorphism as a vertex permutation.
    pub phi: Vec<usize>,
}

/// Outcome of [`is_superflexible`].
#[derive(Clone, Debug)]
pub struct SuperflexReport {
    pub superflexible: bool,
    /// One witness per non-commuting pair when the check passes.
    pub witnesses: Vec<SuperflexWitness>,
    /// The first pair with no witness when the check fails.
    pub failing_pair: Option<(usize, usize)>,
}

/// Checks the defining diagram of a RACG for super-flexibility: every
/// non-commuting pair (s,t) admits a third generator u, not commuting with
/// either, and a diagram automorphism that fixes one of s,t together with
/// all its neighbors while exchanging the other with u.
pub fn is_superflexible(spec: &GroupSpec) -> Result<SuperflexReport> {
    let adj = match spec {
        GroupSpec::Racg { commuting } => commuting,
        _ => return Err(Error::Argument("super-flexibility applies to RACG specs".into())),
    };
    let n = adj.len();
    let mut witnesses = Vec::new();
    for s in 0..n {
        for t in (s + 1)..n {
            if adj[s][t] {
                continue;
            }
            let mut found = None;
            'search: for u in 0..n {
                if u == s || u == t || adj[u][s] || adj[u][t] {
                    continue;
                }
                for &fixes_s in &[true, false] {
                    let (fixed, swapped) = if fixes_s { (s, t) } else { (t, s) };
                    let mut forced: Vec<(usize, usize)> = vec![(fixed, fixed), (swapped, u), (u, swapped)];
                    for v in 0..n {
                        if adj[fixed][v] {
                            forced.push((v, v));
                        }
                    }
                    if let Some(phi) = find_automorphism(adj, &forced) {
                        found = Some(SuperflexWitness {
                            pair: (s, t),
                            u,
                            fixes_s,
                            phi,
                        });
                        break 'search;
                    }
                }
            }
            match found {
                Some(w) => witnesses.push(w),
                None => {
                    return Ok(SuperflexReport {
                        superflexible: false,
                        witnesses,
                        failing_pair: Some((s, t)),
                    })
                }
            }
        }
    }
    Ok(SuperflexReport {
        superflexible: true,
        witnesses,
        failing_pair: None,
    })
}

/// Backtracking search for a graph automorphism extending the forced
/// assignments. Diagrams in scope are tiny, so no refinement is needed
/// beyond degree pruning.
fn find_automorphism(adj: &[Vec<bool>], forced: &[(usize, usize)]) -> Option<Vec<usize>> {
    let n = adj.len();
    let deg: Vec<usize> = (0..n).map(|v| adj[v].iter().filter(|&&b| b).count()).collect();
    let mut phi = vec![usize::MAX; n];
    let mut used = vec![false; n];
    for &(v, w) in forced {
        if phi[v] != usize::MAX && phi[v] != w {
            return None;
        }
        if phi[v] == usize::MAX {
            if used[w] || deg[v] != deg[w] {
                return None;
            }
            phi[v] = w;
            used[w] = true;
        }
    }
    fn consistent(adj: &[Vec<bool>], phi: &[usize], v: usize) -> bool {
        for x in 0..adj.len() {
            if phi[x] != usize::MAX && adj[v][x] != adj[phi[v]][phi[x]] {
                return false;
            }
        }
        true
    }
    for &(v, _) in forced {
        if !consistent(adj, &phi, v) {
            return None;
        }
    }
    fn extend(
        adj: &[Vec<bool>],
        deg: &[usize],
        phi: &mut Vec<usize>,
        used: &mut Vec<bool>,
        v: usize,
    ) -> bool {
        let n = adj.len();
        if v == n {
            return true;
        }
        if phi[v] != usize::MAX {
            return extend(adj, deg, phi, used, v + 1);
        }
        for w in 0..n {
            if used[w] || deg[v] != deg[w] {
                continue;
            }
            phi[v] = w;
            used[w] = true;
            if consistent(adj, phi, v) && extend(adj, deg, phi, used, v + 1) {
                return true;
            }
            phi[v] = usize::MAX;
            used[w] = false;
        }
        false
    }
    if extend(adj, &deg, &mut phi, &mut used, 0) {
        Some(phi)
    } else {
        None
    }
}
